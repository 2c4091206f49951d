"""Training loop for the flow-matching policy: Adam over the flat
parameter vector, deterministic given the config seed."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .flow import batch_arrays, loss_and_grad_arrays
from .unet import ModelConfig, ModelParams


class TrainingDiverged(RuntimeError):
    """Raised when the loss or the parameters stop being finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run."""

    epochs: int = 3000
    batch_size: int = 256
    learning_rate: float = 1e-4
    horizon: int = 16          # Tp
    history: int = 2           # H
    inference_steps: int = 10
    seed: int = 0
    widths: tuple = (32, 64, 128)

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        for name in ("epochs", "batch_size", "horizon", "history", "inference_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not (self.learning_rate >= 0 and np.isfinite(self.learning_rate)):
            raise ValueError(f"learning_rate must be finite and >= 0, got {self.learning_rate}")
        levels = len(self.widths) - 1
        if self.horizon % (2 ** levels):
            raise ValueError(
                f"prediction horizon {self.horizon} must be divisible by "
                f"{2 ** levels} ({levels} U-Net downsamplings)"
            )


class Adam:
    """Adaptive moment estimation on a flat parameter vector."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, flat: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        flat -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train(params: ModelParams, windows, cfg: TrainConfig,
          progress=None) -> tuple[ModelParams, list[float]]:
    """Optimize ``params`` on windowed (Condition, ActionChunk) pairs.

    Returns the trained params (updated in place) and the per-epoch mean
    loss curve. Fully deterministic for a fixed ``cfg.seed``: one generator
    drives the epoch shuffles and the per-batch (t, x0) draws in a fixed
    order.
    """
    if not windows:
        raise ValueError("training needs at least one window")
    mcfg = params.config
    if (mcfg.horizon, mcfg.history) != (cfg.horizon, cfg.history):
        raise ValueError(
            f"model is configured for (Tp={mcfg.horizon}, H={mcfg.history}), "
            f"train config says (Tp={cfg.horizon}, H={cfg.history})"
        )
    # train() receives (cond, chunk) pairs as produced by windowing
    x1, cond_raw = batch_arrays(params, [(chunk, cond) for cond, chunk in windows])
    n = x1.shape[0]
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(params.size, cfg.learning_rate)
    curve: list[float] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            sel = perm[start : start + cfg.batch_size]
            t = rng.uniform(size=sel.size)
            x0 = rng.standard_normal((sel.size, mcfg.horizon, mcfg.action_dim))
            loss, grad = loss_and_grad_arrays(params, x1[sel], cond_raw[sel], t, x0)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            opt.step(params.flat, grad)
            losses.append(loss)
        mean = float(np.mean(losses))
        curve.append(mean)
        if progress is not None:
            progress(epoch, mean)
    if not np.all(np.isfinite(params.flat)):
        raise TrainingDiverged("non-finite parameters after training")
    return params, curve


def write_loss_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(curve):
            writer.writerow([epoch, repr(loss)])
