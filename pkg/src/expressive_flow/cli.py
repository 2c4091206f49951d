"""Command-line entry point tying the pipeline together.

Exit codes: 0 ok, 2 bad flags, 3 data error, 4 training divergence.
Every subcommand is deterministic given ``--seed`` (``serve`` excepted;
``eval`` reports wall-clock latency measurements alongside otherwise
deterministic metrics). A flat-JSON ``--config`` file supplies defaults;
explicit flags override it.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import evaluate as ev
from .dataset import (
    ClipFormatError,
    EmotionLabel,
    load_clip,
    load_corpus,
    save_corpus,
    window_corpus,
)
from .flowgen import FlowMatchingPolicy, TrainingDiverged, write_loss_csv
from .runtime import Controller
from .server import StudioServer
from .synth import synth_corpus

PRESETS = {
    # desk-scale bundle pinned by the acceptance suite: minutes of CPU
    # training on the 7x10x300 synthetic corpus (batch 128 doubles the
    # optimizer steps per pass at roughly the same wall time)
    "desk": {"epochs": 200, "batch": 128, "lr": 3e-4, "h": 2, "tp": 16,
             "stride": 8, "widths": "32,64,128"},
    # mechanical-viability bundle for the ablation grid
    "smoke": {"epochs": 10, "batch": 64, "lr": 3e-4, "h": 2, "tp": 16,
              "stride": 8, "widths": "16,32,64"},
}


class DataError(click.ClickException):
    exit_code = 3


class DivergenceError(click.ClickException):
    exit_code = 4


def _merge_options(ctx: click.Context, config_path, preset: str | None, names: list[str]) -> dict:
    """Effective option values: explicit flag > config file > preset > default."""
    out = {}
    file_values = {}
    if config_path:
        try:
            file_values = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read config file {config_path}: {e}")
        if not isinstance(file_values, dict):
            raise DataError("config file must hold a flat JSON object")
    preset_values = PRESETS.get(preset, {}) if preset else {}
    for name in names:
        if ctx.get_parameter_source(name) == click.core.ParameterSource.COMMANDLINE:
            out[name] = ctx.params[name]
        elif name in file_values:
            out[name] = file_values[name]
        elif name in preset_values:
            out[name] = preset_values[name]
        else:
            out[name] = ctx.params[name]
    return out


def _parse_widths(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(w) for w in text)
    try:
        widths = tuple(int(w) for w in str(text).split(",") if w.strip())
    except ValueError:
        raise click.BadParameter(f"widths must be comma-separated integers, got {text!r}")
    if not widths:
        raise click.BadParameter("widths must not be empty")
    return widths


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(package_name="expressive-flow")
def main():
    """Emotion-conditioned expressive behavior: synthesize demonstrations,
    train the flow-matching policy, evaluate it, and serve it at 10 Hz."""


@main.command()
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output corpus directory.")
@click.option("--clips-per-emotion", default=10, show_default=True, help="Clips per emotion (7 emotions).")
@click.option("--frames", default=300, show_default=True, help="Frames per clip at 10 Hz.")
@click.option("--seed", default=0, show_default=True, help="Master seed; the corpus is byte-stable per seed.")
def synth(out, clips_per_emotion, frames, seed):
    """Write a synthetic demonstration corpus."""
    if clips_per_emotion < 1 or frames < 1:
        raise click.BadParameter("nothing to generate: need at least 1 clip and 1 frame")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    clips = synth_corpus(clips_per_emotion, frames, seed)
    paths = save_corpus(clips, out)
    total = sum(len(c) for c in clips)
    click.echo(f"wrote {len(paths)} clips / {total} frames to {out}")
    for emotion in EmotionLabel:
        n = sum(1 for c in clips if c.emotion == emotion)
        click.echo(f"  {emotion.value:8s} {n} clips")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False), help="Corpus directory.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Model artifact path (.npz).")
@click.option("--epochs", default=3000, show_default=True)
@click.option("--batch", default=256, show_default=True)
@click.option("--lr", default=1e-4, show_default=True)
@click.option("--H", "h", default=2, show_default=True, help="Observation history length.")
@click.option("--tp", default=16, show_default=True, help="Prediction horizon (frames).")
@click.option("--stride", default=1, show_default=True, help="Window stride over clips.")
@click.option("--widths", default="32,64,128", show_default=True, help="U-Net channel widths.")
@click.option("--seed", default=0, show_default=True)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None,
              help="Hyperparameter bundle; explicit flags still win.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Flat JSON file of defaults; flags override it.")
@click.option("--loss-csv", type=click.Path(dir_okay=False), default=None,
              help="Loss curve CSV path [default: <out>_loss.csv].")
@click.pass_context
def train(ctx, data, out_path, epochs, batch, lr, h, tp, stride, widths, seed, preset,
          config_path, loss_csv):
    """Train the flow-matching policy on a demonstration corpus."""
    opts = _merge_options(ctx, config_path, preset,
                          ["epochs", "batch", "lr", "h", "tp", "stride", "widths", "seed"])
    widths = _parse_widths(opts["widths"])
    try:
        policy = FlowMatchingPolicy(
            horizon=opts["tp"], history=opts["h"], widths=widths, epochs=opts["epochs"],
            batch_size=opts["batch"], learning_rate=opts["lr"], stride=opts["stride"],
            seed=opts["seed"])
        policy.train_config()  # validate the bundle before touching data
        policy.model_config()
    except ValueError as e:
        raise click.BadParameter(str(e))
    try:
        clips = load_corpus(data)
    except ClipFormatError as e:
        raise DataError(str(e))
    if not clips:
        raise DataError(f"no clips found in {data}")
    n_windows = len(window_corpus(clips, opts["h"], opts["tp"], opts["stride"]))
    click.echo(f"training on {len(clips)} clips -> {n_windows} windows "
               f"(H={opts['h']}, Tp={opts['tp']}, stride={opts['stride']}, "
               f"epochs={opts['epochs']}, batch={opts['batch']}, lr={opts['lr']})")
    started = time.perf_counter()

    def progress(epoch, loss):
        if epoch == 0 or (epoch + 1) % max(1, opts["epochs"] // 10) == 0:
            click.echo(f"  epoch {epoch + 1:5d}/{opts['epochs']}  mean loss {loss:.5f}")

    try:
        policy.fit(clips, progress=progress)
    except TrainingDiverged as e:
        raise DivergenceError(str(e))
    except ValueError as e:
        raise DataError(str(e))
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    policy.save(out_path)
    csv_path = loss_csv or str(Path(out_path).with_suffix("")) + "_loss.csv"
    write_loss_csv(policy.loss_curve_, csv_path)
    click.echo(f"saved model to {out_path} (loss {policy.loss_curve_[0]:.4f} -> "
               f"{policy.loss_curve_[-1]:.4f} in {time.perf_counter() - started:.0f}s); "
               f"curve in {csv_path}")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--rollouts", default=10, show_default=True, help="Rollouts per emotion.")
@click.option("--frames", default=120, show_default=True, help="Frames per rollout.")
@click.option("--steps", default=None, type=int, help="Euler steps per sample [default: model setting].")
@click.option("--seed", default=0, show_default=True)
@click.option("--plots", "plots_dir", type=click.Path(file_okay=False), default=None,
              help="Also write loss/DoF plots to this directory (needs matplotlib).")
def eval_cmd(model_path, data, report_path, rollouts, frames, steps, seed, plots_dir):
    """Evaluate a model: emotion separability, per-emotion stats, latency."""
    try:
        policy = FlowMatchingPolicy.from_artifact(model_path)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot load model {model_path}: {e}")
    try:
        clips = load_corpus(data)
    except ClipFormatError as e:
        raise DataError(str(e))
    if not clips:
        raise DataError(f"no clips found in {data}")
    report = ev.evaluate_policy(policy, clips, rollouts_per_emotion=rollouts,
                                frames=frames, seed=seed, steps=steps)
    ev.write_report(report, report_path)
    sep = report["separability"]
    click.echo(f"rollout separability {sep['rollout_accuracy']:.3f} "
               f"(corpus calibration {sep['corpus_accuracy']:.3f}); "
               f"sample latency p95 {report['latency_ms']['p95']:.1f} ms")
    click.echo(f"report written to {report_path}")
    if plots_dir:
        try:
            written = ev.render_plots(report, [], plots_dir)
        except ImportError:
            raise DataError("--plots needs matplotlib (pip install expressive-flow[plots])")
        click.echo(f"plots: {', '.join(str(p) for p in written)}")


@main.command()
@click.option("--port", default=8765, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--models-dir", required=True, type=click.Path(file_okay=False))
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--strict-marks", is_flag=True, default=False,
              help="Persist only frames flagged by record_mark.")
def serve(port, host, models_dir, data_dir, strict_marks):
    """Run the WebSocket back-end (log + infer sessions, GET /status)."""
    try:
        server = StudioServer(models_dir, data_dir, host=host, port=port,
                              strict_marks=strict_marks).start()
    except OSError as e:
        raise click.ClickException(f"cannot bind {host}:{port}: {e}")
    click.echo(f"listening on ws://{host}:{server.port} "
               f"(models: {', '.join(server.list_models()) or 'none'})", err=False)
    sys.stdout.flush()
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        click.echo("shutting down")
    finally:
        server.close()


@main.command()
@click.option("--clip", "clip_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--speed", default=1.0, show_default=True, help="Playback speed multiplier.")
@click.option("--seed", default=0, show_default=True)
def replay(clip_path, model_path, speed, seed):
    """Replay a clip's observations through a local controller, printing actions."""
    if speed <= 0:
        raise click.BadParameter("speed must be positive")
    try:
        clip = load_clip(clip_path)
    except ClipFormatError as e:
        raise DataError(str(e))
    try:
        policy = FlowMatchingPolicy.from_artifact(model_path)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot load model {model_path}: {e}")
    cfg = policy.params_.config
    ctrl = Controller(policy.make_sampler(seed=seed), emotion=clip.emotion,
                      horizon=cfg.horizon, history=cfg.history, obs_dim=cfg.obs_dim)
    emitted = 0
    delay = 0.1 / speed
    for frame in clip.frames:
        act = ctrl.push_observation(frame.obs_vector())
        if act is not None:
            emitted += 1
            click.echo(json.dumps({
                "t_ms": frame.t_ms,
                "head": list(act[0:6]), "hand_l": list(act[6:12]),
                "hand_r": list(act[12:18]), "face": list(act[18:25]),
            }))
        if delay > 1e-4:
            time.sleep(delay)
    m = ctrl.metrics()
    click.echo(f"# {emitted} actions from {len(clip)} frames "
               f"({m['replans']} replans, mean sample {m['mean_sample_ms']:.1f} ms)", err=True)


if __name__ == "__main__":
    main()
