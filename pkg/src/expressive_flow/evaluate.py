"""Automated evaluation of a trained policy against the synthetic corpus.

The headline proxy is emotion separability: nearest-centroid
classification of generated closed-loop rollouts against per-emotion
archetype centroids, with the corpus itself providing the calibration
ceiling. Distances run in normalized action space so face DoFs and
hand positions weigh comparably.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dataset import ACT_DIM, OBS_DIM, EmotionLabel
from .flowgen import FlowMatchingPolicy
from .flowgen.types import NormStats
from .runtime import Controller
from .synth import DEFAULT_BOUNDS, _REST_LEFT, _REST_RIGHT, mouse_trajectory

REPORT_SCHEMA = "expressive-flow/eval/v1"


def emotion_centroids(clips, stats: NormStats) -> np.ndarray:
    """(n_emotions, ACT_DIM) mean normalized action vector per emotion."""
    cents = np.zeros((len(EmotionLabel), ACT_DIM))
    for e in EmotionLabel:
        means = [stats.normalize_act(c.mean_action()) for c in clips if c.emotion == e]
        if not means:
            raise ValueError(f"corpus has no clips for emotion {e.value!r}")
        cents[e.index] = np.mean(means, axis=0)
    return cents


def classify(vec_norm: np.ndarray, centroids: np.ndarray) -> int:
    return int(np.argmin(np.linalg.norm(centroids - vec_norm, axis=1)))


def corpus_separability(clips, stats: NormStats, train_frac: float = 0.7) -> float:
    """Held-out nearest-centroid accuracy of the corpus itself.

    The first ``train_frac`` clips per emotion build the centroids; the
    rest are classified. This calibrates what the rollout metric can
    reach at best.
    """
    train, held = [], []
    for e in EmotionLabel:
        mine = [c for c in clips if c.emotion == e]
        k = max(1, int(round(train_frac * len(mine))))
        if len(mine) < 2:
            raise ValueError(f"need >= 2 clips per emotion to hold out, got {len(mine)}")
        k = min(k, len(mine) - 1)
        train += mine[:k]
        held += mine[k:]
    cents = emotion_centroids(train, stats)
    hits = sum(
        classify(stats.normalize_act(c.mean_action()), cents) == c.emotion.index
        for c in held)
    return hits / len(held)


def closed_loop_rollout(policy: FlowMatchingPolicy, emotion: EmotionLabel, target_seed: int,
                        frames: int = 120, sample_seed: int = 0, steps: int | None = None,
                        bounds=DEFAULT_BOUNDS) -> dict:
    """Run the controller against a fresh target path, feeding predicted
    actions back as the next observation's robot state."""
    cfg = policy.params_.config
    ctrl = Controller(
        policy.make_sampler(seed=sample_seed, steps=steps),
        emotion=emotion,
        horizon=cfg.horizon,
        history=cfg.history,
        obs_dim=cfg.obs_dim,
    )
    warmup = cfg.history - 1
    _, targets = mouse_trajectory(target_seed, (frames + warmup) / 10.0, bounds)
    # rest state: neutral head, wrists at their rest positions
    pose_state = np.concatenate([np.zeros(6), _REST_LEFT, np.zeros(3), _REST_RIGHT, np.zeros(3)])
    actions = []
    for i in range(frames + warmup):
        obs = np.concatenate([pose_state, targets[i], np.zeros(OBS_DIM - 21)])
        act = ctrl.push_observation(obs)
        if act is None:
            continue
        actions.append(act)
        pose_state = act[:18]  # head + hands become the next robot state
    m = ctrl.metrics()
    m["actions"] = np.array(actions)
    m["sample_ms"] = list(ctrl.sample_ms)
    return m


def evaluate_policy(policy: FlowMatchingPolicy, clips, rollouts_per_emotion: int = 10,
                    frames: int = 120, seed: int = 0, steps: int | None = None) -> dict:
    """Full evaluation report (see REPORT_SCHEMA); deterministic per seed
    except for the wall-clock latency section."""
    stats = policy.params_.norm
    cents = emotion_centroids(clips, stats)
    confusion = np.zeros((len(EmotionLabel), len(EmotionLabel)), dtype=int)
    per_emotion = {}
    latencies: list[float] = []
    replans = overruns = 0
    for e in EmotionLabel:
        means = []
        hits = 0
        for k in range(rollouts_per_emotion):
            roll = closed_loop_rollout(
                policy, e, target_seed=seed * 100_000 + e.index * 1000 + k + 500,
                frames=frames, sample_seed=seed * 7919 + e.index * 101 + k,
                steps=steps)
            mean_act = stats.normalize_act(roll["actions"].mean(axis=0))
            pred = classify(mean_act, cents)
            confusion[e.index, pred] += 1
            hits += pred == e.index
            means.append(roll["actions"].mean(axis=0))
            latencies.extend(roll["sample_ms"])
            replans += roll["replans"]
            overruns += roll["overruns"]
        per_emotion[e.value] = {
            "rollouts": rollouts_per_emotion,
            "accuracy": hits / rollouts_per_emotion,
            "mean_action": np.mean(means, axis=0).tolist(),
        }
    total = confusion.sum()
    accuracy = float(np.trace(confusion)) / total if total else 0.0
    return {
        "schema": REPORT_SCHEMA,
        "separability": {
            "rollout_accuracy": accuracy,
            "corpus_accuracy": corpus_separability(clips, stats),
            "confusion": confusion.tolist(),
            "emotions": [e.value for e in EmotionLabel],
        },
        "per_emotion": per_emotion,
        "latency_ms": {
            "n": len(latencies),
            "mean": float(np.mean(latencies)) if latencies else 0.0,
            "p50": float(np.percentile(latencies, 50)) if latencies else 0.0,
            "p95": float(np.percentile(latencies, 95)) if latencies else 0.0,
        },
        "closed_loop": {"replans": int(replans), "overruns": int(overruns)},
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")


def render_plots(report: dict, curve, out_dir) -> list[Path]:
    """Loss-curve and per-emotion mean-DoF plots as static PNGs."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if curve:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(curve)
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean loss")
        ax.set_yscale("log")
        fig.tight_layout()
        p = out_dir / "loss_curve.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)

    face_labels = ["vertax_low", "vertax_up", "r_eye", "r_ear", "s_eye", "p_eye_x", "p_eye_y"]
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.11
    xs = np.arange(len(face_labels))
    for i, (emotion, stats) in enumerate(report["per_emotion"].items()):
        face = np.asarray(stats["mean_action"])[18:25]
        ax.bar(xs + (i - 3) * width, face, width, label=emotion)
    ax.set_xticks(xs, face_labels, rotation=30)
    ax.set_ylabel("mean commanded DoF")
    ax.legend(fontsize=7, ncol=4)
    fig.tight_layout()
    p = out_dir / "face_dofs.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)
    return written
