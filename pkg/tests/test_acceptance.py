"""Acceptance suite: one test per release criterion.

Run with ``pytest tests/test_acceptance.py -v`` for the per-criterion
pass/fail lines. The expensive fixtures (synthetic corpus, desk-scale
training run, toy conditional model) are session-scoped and shared.
"""

import json
import math
import re
import subprocess
import sys
import time

import numpy as np
import pytest
from click.testing import CliRunner

from expressive_flow.cli import main as cli_main
from expressive_flow.dataset import (
    EmotionLabel,
    compute_norm_stats,
    load_clip,
    load_corpus,
)
from expressive_flow.evaluate import corpus_separability, evaluate_policy
from expressive_flow.flowgen import (
    ActionChunk,
    Condition,
    FlowMatchingPolicy,
    ModelConfig,
    ModelParams,
    euler_integrate,
    grad_check,
    interpolate,
    sample,
    target_velocity,
)
from expressive_flow.flowgen.autodiff import no_grad
from expressive_flow.flowgen.unet import velocity
from expressive_flow.geometry import Pose
from expressive_flow.retarget import FaceBlend, RetargetConfig, map_face, map_hand
from expressive_flow.runtime import Controller
from expressive_flow.synth import _REST_LEFT, _REST_RIGHT

pytestmark = pytest.mark.acceptance


# ---------------------------------------------------------------------------
# shared expensive fixtures

@pytest.fixture(scope="session")
def acc_corpus_dir(tmp_path_factory):
    """The calibrated synthetic corpus: 7 emotions x 10 clips x 300 frames."""
    out = tmp_path_factory.mktemp("acc_corpus")
    res = CliRunner().invoke(cli_main, ["synth", "--out", str(out),
                                        "--clips-per-emotion", "10",
                                        "--frames", "300", "--seed", "0"])
    assert res.exit_code == 0, res.output
    return out


@pytest.fixture(scope="session")
def desk_model_path(tmp_path_factory, acc_corpus_dir):
    """Desk-preset training run (the expensive fixture, minutes of CPU)."""
    path = tmp_path_factory.mktemp("acc_models") / "desk.npz"
    started = time.perf_counter()
    res = CliRunner().invoke(cli_main, ["train", "--data", str(acc_corpus_dir),
                                        "--out", str(path), "--preset", "desk",
                                        "--seed", "0"])
    assert res.exit_code == 0, res.output
    print(f"\n[desk training took {time.perf_counter() - started:.0f}s]")
    # the desk run must actually optimize, not just complete
    with open(str(path.with_suffix("")) + "_loss.csv") as fh:
        losses = [float(line.split(",")[1]) for line in fh.readlines()[1:]]
    assert losses[-1] < 0.25 * losses[0], (losses[0], losses[-1])
    return path


@pytest.fixture(scope="session")
def desk_policy(desk_model_path):
    return FlowMatchingPolicy.from_artifact(desk_model_path)


@pytest.fixture(scope="session")
def toy_policy():
    """2-label, 2-D two-Gaussian task: modes at (+-2, 0), sigma = 0.2."""
    rng = np.random.default_rng(123)
    windows = []
    for label, mode in ((0, (-2.0, 0.0)), (1, (2.0, 0.0))):
        pts = np.asarray(mode) + 0.2 * rng.standard_normal((3000, 2))
        for p in pts:
            windows.append((Condition.from_label(label, 2, np.zeros((1, 0))),
                            ActionChunk(p[None, :])))
    policy = FlowMatchingPolicy(horizon=1, history=1, widths=(64,), epochs=150,
                                batch_size=256, learning_rate=1e-3, n_classes=2,
                                obs_dim=0, action_dim=2, seed=0)
    started = time.perf_counter()
    policy.fit_windows(windows)
    print(f"\n[toy training took {time.perf_counter() - started:.0f}s, "
          f"loss {policy.loss_curve_[0]:.3f} -> {policy.loss_curve_[-1]:.3f}]")
    return policy


def toy_batch_sample(policy, label: int, n: int, steps: int, seed: int) -> np.ndarray:
    """Integrate the learned field for n chunks at once (same math as
    sample(); batching is covered by the loop-vs-batch oracle)."""
    params = policy.params_
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((n, 1, 2))
    raw = np.zeros((n, 2))
    raw[:, label] = 1.0

    def field(x, t):
        with no_grad():
            return velocity(params, x, np.full(n, t), raw).data

    xn = euler_integrate(field, x0, steps)
    return params.norm.denormalize_act(xn[:, 0, :])


# ---------------------------------------------------------------------------
# criteria

class TestC1MappingExactness:
    TOL = 1e-12

    def test_c1_mapping_exactness(self):
        assert map_face(FaceBlend(c_eye=1.0)).s_eye == pytest.approx(0.1, abs=self.TOL)
        d = map_face(FaceBlend(h_chin=1.0, h_brow=0.0))
        assert d.r_ear == pytest.approx(-math.pi / 2, abs=self.TOL)
        assert d.r_eye == pytest.approx(math.pi / 6, abs=self.TOL)
        cfg = RetargetConfig()
        sat = map_face(FaceBlend(theta_x=2 * cfg.theta_max, theta_y=-2 * cfg.theta_max), cfg)
        assert sat.p_eye_x == pytest.approx(-1.0, abs=self.TOL)
        assert sat.p_eye_y == pytest.approx(1.0, abs=self.TOL)
        hand = map_hand(Pose((0.2, 0.0, 0.3)), Pose.identity(), RetargetConfig(scale=1.5))
        assert np.abs(hand.position - (0.3, 0.0, 0.45)).max() < self.TOL


class TestC2GradientCorrectness:
    def test_c2_gradient_correctness(self):
        cfg = ModelConfig()  # the full model: D_a=25, Tp=16, H=2, D_o=27
        params = ModelParams.init(cfg, seed=0, zero_head=False)
        rng = np.random.default_rng(1)
        batch = [
            (ActionChunk(rng.standard_normal((cfg.horizon, cfg.action_dim))),
             Condition.from_label(int(rng.integers(7)), 7,
                                  rng.standard_normal((cfg.history, cfg.obs_dim))))
            for _ in range(2)
        ]
        worst = 0.0
        for seed in (0, 1, 2):
            err = grad_check(params, batch, coords=200, eps=1e-5, seed=seed)
            worst = max(worst, err)
        print(f"\n[c2 max relative gradient error {worst:.3e}]")
        assert worst < 1e-4


class TestC3FlowIdentities:
    def test_c3_flow_identities(self, toy_policy):
        rng = np.random.default_rng(2)
        x0 = ActionChunk(rng.standard_normal((16, 25)))
        x1 = ActionChunk(rng.standard_normal((16, 25)))
        assert np.array_equal(interpolate(x0, x1, 0.0).values, x0.values)
        assert np.array_equal(interpolate(x0, x1, 1.0).values, x1.values)
        for t in (0.25, 0.5, 0.9):
            assert np.allclose(interpolate(x0, x1, t).values,
                               x0.values + t * target_velocity(x0, x1).values, atol=1e-15)

        c = rng.standard_normal((16, 25))
        start = rng.standard_normal((16, 25))
        for steps in (1, 7, 100):
            assert np.allclose(euler_integrate(lambda x, t: c, start, steps),
                               start + c, atol=1e-12)

        cond = Condition.from_label(1, 2, np.zeros((1, 0)))
        shared_x0 = np.random.default_rng(3).standard_normal((1, 2))
        outs = {
            steps: sample(toy_policy.params_, cond, steps,
                          np.random.default_rng(0), x0=shared_x0).values
            for steps in (10, 100, 200)
        }
        d10 = np.linalg.norm(outs[10] - outs[200])
        d100 = np.linalg.norm(outs[100] - outs[200])
        print(f"\n[c3 self-convergence d(10,200)={d10:.4f} d(100,200)={d100:.4f}]")
        assert d100 < d10


class TestC4ToyConditionalGeneration:
    def test_c4_toy_two_gaussians(self, toy_policy):
        sigma = 0.2
        for label, mode in ((0, np.array([-2.0, 0.0])), (1, np.array([2.0, 0.0]))):
            pts = toy_batch_sample(toy_policy, label, n=1000, steps=10, seed=40 + label)
            dist = np.linalg.norm(pts - mode, axis=1)
            frac = float(np.mean(dist <= 3 * sigma))
            print(f"\n[c4 label {label}: {100 * frac:.1f}% within 3 sigma]")
            assert frac >= 0.95


class TestC5EmotionPolicyProxy:
    def test_c5_emotion_conditioned_policy(self, desk_policy, acc_corpus_dir):
        clips = load_corpus(acc_corpus_dir)
        stats = compute_norm_stats(clips)
        calibration = corpus_separability(clips, stats)
        assert calibration >= 0.95, f"corpus calibration {calibration}"
        started = time.perf_counter()
        report = evaluate_policy(desk_policy, clips, rollouts_per_emotion=10,
                                 frames=120, seed=1)
        acc = report["separability"]["rollout_accuracy"]
        print(f"\n[c5 rollout accuracy {acc:.3f}, calibration {calibration:.3f}, "
              f"eval took {time.perf_counter() - started:.0f}s]")
        print(json.dumps(report["separability"]["confusion"]))
        assert acc >= 0.80

    def test_c5c_gaze_follows_dragged_target(self, desk_policy):
        # steering property the studio relies on: moving the target to the
        # other side flips the generated eye-position sign
        params = desk_policy.params_
        base = np.concatenate([np.zeros(6), _REST_LEFT, np.zeros(3),
                               _REST_RIGHT, np.zeros(3)])
        gaze = {}
        for name, tx in (("left", -0.4), ("right", 0.4)):
            obs = np.concatenate([base, [tx, 0.55, 0.15], np.zeros(6)])
            cond = Condition(EmotionLabel.CURIOUS.onehot(), np.stack([obs, obs]))
            chunks = [sample(params, cond, 10, np.random.default_rng(10 + k)).values
                      for k in range(4)]
            gaze[name] = float(np.mean([c[:, 23] for c in chunks]))  # p_eye_x
        print(f"\n[c5c mean p_eye_x: target left {gaze['left']:.3f}, "
              f"right {gaze['right']:.3f}]")
        assert gaze["left"] < 0 < gaze["right"]

    def test_c5b_conditioning_effectiveness(self, desk_policy):
        # changing only the emotion one-hot must move the output far more
        # than re-drawing the source noise does
        params = desk_policy.params_
        rest = np.concatenate([np.zeros(6), _REST_LEFT, np.zeros(3),
                               _REST_RIGHT, np.zeros(3), [0.0, 0.55, 0.15], np.zeros(6)])
        history = np.stack([rest, rest])
        per_emotion = []
        for e in EmotionLabel:
            cond = Condition(e.onehot(), history)
            draws = [sample(params, cond, 10, np.random.default_rng(100 + k)).values
                     for k in range(4)]
            per_emotion.append(np.stack(draws))
        means = np.stack([d.mean(axis=0) for d in per_emotion])  # (7, Tp, D_a)
        across = []
        for i in range(len(means)):
            for j in range(i + 1, len(means)):
                across.append(np.abs(means[i] - means[j]).mean())
        within = []
        for d in per_emotion:
            m = d.mean(axis=0)
            within.append(np.abs(d - m).mean())
        ratio = float(np.mean(across) / np.mean(within))
        print(f"\n[c5b emotion shift / seed jitter ratio {ratio:.1f}x]")
        assert ratio > 10.0


class TestC6RealTimeBudget:
    def test_c6_sampling_latency_p95(self, desk_policy):
        cond = Condition(EmotionLabel.CURIOUS.onehot(),
                         np.zeros((2, 27)))
        rng = np.random.default_rng(0)
        sample(desk_policy.params_, cond, 10, rng)  # warm caches
        times = []
        for _ in range(200):
            t0 = time.perf_counter()
            sample(desk_policy.params_, cond, 10, rng)
            times.append((time.perf_counter() - t0) * 1000.0)
        p95 = float(np.percentile(times, 95))
        print(f"\n[c6 sampling p95 {p95:.1f} ms over 200 calls]")
        assert p95 < 100.0

    def test_c6_no_overruns_in_60s_session(self, desk_policy):
        ctrl = Controller(desk_policy.make_sampler(seed=0), EmotionLabel.HAPPY,
                          horizon=16, history=2, exec_horizon=8, tick_budget_ms=100.0)
        rest = np.concatenate([np.zeros(18), [0.0, 0.5, 0.1], np.zeros(6)])
        for i in range(600):  # 60 s at 10 Hz
            ctrl.push_observation(rest + 0.001 * i)
        m = ctrl.metrics()
        print(f"\n[c6 60s session: {m['replans']} replans, {m['overruns']} overruns, "
              f"mean sample {m['mean_sample_ms']:.1f} ms]")
        assert m["overruns"] == 0
        assert m["frames"] == 599  # H=2 -> one warm-up frame


class TestC7ClosedLoopContract:
    def test_c7_closed_loop_contract(self):
        calls = []

        def stub(cond):
            calls.append(cond)
            return ActionChunk(np.full((16, 25), float(len(calls))))

        ctrl = Controller(stub, EmotionLabel.SAD, horizon=16, history=2, exec_horizon=8)
        emitted = []
        for i in range(41):  # N = 40 post-warm-up observations
            a = ctrl.push_observation(np.full(27, float(i)))
            if a is not None:
                emitted.append(a)
        assert len(emitted) == 40
        assert ctrl.replans == math.ceil(40 / 8)

        # emotion switch must reach the sampler within Ta frames
        ctrl.set_emotion(EmotionLabel.ANGRY)
        frames = 0
        while calls[-1].onehot[EmotionLabel.ANGRY.index] != 1.0:
            frames += 1
            ctrl.push_observation(np.zeros(27))
            assert frames <= 8
        print(f"\n[c7 switch visible after {frames} frame(s)]")


class TestC8ProtocolRoundTrip:
    def test_c8_protocol_round_trip(self, tmp_path, desk_model_path):
        from websockets.sync.client import connect

        models_dir = desk_model_path.parent
        data_dir = tmp_path / "logged"
        proc = subprocess.Popen(
            [sys.executable, "-m", "expressive_flow.cli", "serve", "--port", "0",
             "--models-dir", str(models_dir), "--data-dir", str(data_dir)],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
        try:
            line = proc.stdout.readline()
            port = int(re.search(r"ws://[\d.]+:(\d+)", line).group(1))

            sent = []
            with connect(f"ws://127.0.0.1:{port}", close_timeout=2) as ws:
                ws.send(json.dumps({"type": "hello", "seq": 0, "t_ms": 0, "mode": "log",
                                    "emotion": "curious", "clip": "roundtrip.jsonl"}))
                next_tick = time.perf_counter()
                for i in range(300):  # 10 Hz pacing
                    msg = {"type": "obs", "seq": i + 1, "t_ms": (i + 1) * 100,
                           "head": [0.0, 0.0, 0.0, 0.0, 0.0, round(0.001 * i, 6)],
                           "hand_l": [-0.25, 0.3, 0.0, 0.0, 0.0, 0.0],
                           "hand_r": [0.25, 0.3, 0.0, 0.0, 0.0, 0.0],
                           "face": [0.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0],
                           "target": [0.0, 0.5, 0.1]}
                    ws.send(json.dumps(msg))
                    sent.append(msg)
                    next_tick += 0.1
                    delay = next_tick - time.perf_counter()
                    if delay > 0:
                        time.sleep(delay)
            time.sleep(0.5)

            clip = load_clip(data_dir / "roundtrip.jsonl")
            assert len(clip.frames) == 300
            ts = [f.t_ms for f in clip.frames]
            assert ts == sorted(ts) and len(set(ts)) == 300
            for frame, msg in zip(clip.frames[::37], sent[::37]):
                assert frame.head.to_vec6().tolist() == msg["head"]
                assert frame.face.to_vec().tolist() == msg["face"]

            # specified error codes
            with connect(f"ws://127.0.0.1:{port}", close_timeout=2) as ws:
                ws.send(json.dumps({"type": "hello", "seq": 0, "t_ms": 0, "mode": "log",
                                    "emotion": "calm"}))
                ws.send("this is not json")
                err = json.loads(ws.recv(timeout=2))
                assert err["type"] == "error" and err["code"] == "BAD_SCHEMA"
            with connect(f"ws://127.0.0.1:{port}", close_timeout=2) as ws:
                ws.send(json.dumps({"type": "hello", "seq": 10, "t_ms": 0, "mode": "log",
                                    "emotion": "calm"}))
                ws.send(json.dumps({"type": "record_mark", "seq": 4, "t_ms": 1}))
                err = json.loads(ws.recv(timeout=2))
                assert err["code"] == "SEQ_ORDER"

            # infer round trip against the desk model: p95 obs->act under 100 ms
            with connect(f"ws://127.0.0.1:{port}", close_timeout=2) as ws:
                ws.send(json.dumps({"type": "hello", "seq": 0, "t_ms": 0, "mode": "infer",
                                    "emotion": "fear", "model": "desk", "seed": 7}))
                lat = []
                for i in range(40):
                    obs = {"type": "obs", "seq": i + 1, "t_ms": (i + 1) * 100,
                           "head": [0.0] * 6, "hand_l": [-0.25, 0.3, 0, 0, 0, 0],
                           "hand_r": [0.25, 0.3, 0, 0, 0, 0],
                           "face": [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
                           "target": [0.0, 0.5, 0.1]}
                    t0 = time.perf_counter()
                    ws.send(json.dumps(obs))
                    if i >= 1:  # H=2 warm-up
                        act = json.loads(ws.recv(timeout=2))
                        assert act["type"] == "act"
                        lat.append((time.perf_counter() - t0) * 1000.0)
                p95 = float(np.percentile(lat, 95))
                print(f"\n[c8 infer obs->act p95 {p95:.1f} ms]")
                assert p95 < 100.0
        finally:
            proc.terminate()
            proc.wait(timeout=10)


@pytest.fixture(scope="session")
def smoke_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke_corpus")
    res = CliRunner().invoke(cli_main, ["synth", "--out", str(out),
                                        "--clips-per-emotion", "2",
                                        "--frames", "80", "--seed", "9"])
    assert res.exit_code == 0, res.output
    return out


class TestC9AblationGrid:
    @pytest.mark.parametrize("history", [1, 2, 4, 16])
    @pytest.mark.parametrize("horizon", [16, 32])
    def test_c9_ablation_grid(self, smoke_corpus, tmp_path, history, horizon):
        out = tmp_path / f"h{history}_tp{horizon}.npz"
        res = CliRunner().invoke(cli_main, [
            "train", "--data", str(smoke_corpus), "--out", str(out), "--preset", "smoke",
            "--H", str(history), "--tp", str(horizon), "--seed", "0"])
        assert res.exit_code == 0, res.output
        policy = FlowMatchingPolicy.from_artifact(out)
        cfg = policy.params_.config
        assert (cfg.history, cfg.horizon) == (history, horizon)
        assert np.all(np.isfinite(policy.params_.flat))
