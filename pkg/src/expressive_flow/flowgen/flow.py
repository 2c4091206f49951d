"""Conditional flow matching over action chunks.

The model learns a velocity field that transports Gaussian noise onto the
demonstrated action distribution along straight-line paths: the training
pair interpolates ``x_t = t*x1 + (1-t)*x0`` and regresses the constant
target velocity ``x1 - x0``. Sampling integrates the learned field with
explicit Euler steps from t=0 to t=1.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .types import ActionChunk, Condition
from .unet import ModelParams, velocity


def interpolate(x0: ActionChunk, x1: ActionChunk, t: float) -> ActionChunk:
    """Linear interpolation t*x1 + (1-t)*x0 along the flow path."""
    if x0.values.shape != x1.values.shape:
        raise ValueError(f"chunk shapes differ: {x0.values.shape} vs {x1.values.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"flow time must lie in [0, 1], got {t}")
    return ActionChunk(t * x1.values + (1.0 - t) * x0.values)


def target_velocity(x0: ActionChunk, x1: ActionChunk) -> ActionChunk:
    """The regression target x1 - x0 (independent of flow time)."""
    if x0.values.shape != x1.values.shape:
        raise ValueError(f"chunk shapes differ: {x0.values.shape} vs {x1.values.shape}")
    return ActionChunk(x1.values - x0.values)


def cond_to_raw(params: ModelParams, cond: Condition) -> np.ndarray:
    """Flatten a condition into the network's raw conditioning vector.

    The observation history is normalized with the model's stored stats;
    the emotion one-hot passes through untouched.
    """
    cfg = params.config
    if cond.onehot.shape != (cfg.n_classes,):
        raise ValueError(f"onehot must have {cfg.n_classes} entries, got {cond.onehot.shape}")
    if cond.history.shape != (cfg.history, cfg.obs_dim):
        raise ValueError(
            f"history must be {(cfg.history, cfg.obs_dim)}, got {cond.history.shape}")
    hist = params.norm.normalize_obs(cond.history)
    return np.concatenate([cond.onehot, hist.reshape(-1)])


def forward(params: ModelParams, x_t: ActionChunk, t: float, cond: Condition) -> ActionChunk:
    """Velocity-field prediction for a single chunk in normalized space."""
    cfg = params.config
    if x_t.values.shape != (cfg.horizon, cfg.action_dim):
        raise ValueError(
            f"chunk must be {(cfg.horizon, cfg.action_dim)}, got {x_t.values.shape}")
    raw = cond_to_raw(params, cond)
    with no_grad():
        v = velocity(params, x_t.values[None], np.array([t]), raw[None])
    return ActionChunk(v.data[0])


def batch_arrays(params: ModelParams, batch) -> tuple[np.ndarray, np.ndarray]:
    """Stack (x1, cond) pairs into normalized training arrays."""
    if not batch:
        raise ValueError("batch must not be empty")
    x1 = np.stack([params.norm.normalize_act(chunk.values) for chunk, _ in batch])
    raw = np.stack([cond_to_raw(params, cond) for _, cond in batch])
    return x1, raw


def loss_given(params: ModelParams, x1: np.ndarray, cond_raw: np.ndarray,
               t: np.ndarray, x0: np.ndarray) -> float:
    """Flow-matching loss for fixed draws of (t, x0); no gradient."""
    xt = t[:, None, None] * x1 + (1.0 - t[:, None, None]) * x0
    with no_grad():
        v = velocity(params, xt, t, cond_raw)
    diff = v.data - (x1 - x0)
    return float((diff * diff).sum() / x1.shape[0])


def loss_and_grad_arrays(params: ModelParams, x1: np.ndarray, cond_raw: np.ndarray,
                         t: np.ndarray, x0: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss plus the exact reverse-mode gradient w.r.t. the flat params."""
    xt = t[:, None, None] * x1 + (1.0 - t[:, None, None]) * x0
    tensors = params.bank.tensors()
    v = velocity(params, xt, t, cond_raw, tensors)
    diff = ad.sub(v, Tensor(x1 - x0))
    loss = ad.scale(ad.sum_all(ad.mul(diff, diff)), 1.0 / x1.shape[0])
    loss.backward()
    return float(loss.data), params.bank.grad_flat(tensors)


def sample_noise(rng: np.random.Generator, params: ModelParams) -> np.ndarray:
    cfg = params.config
    return rng.standard_normal((cfg.horizon, cfg.action_dim))


def fm_loss_and_grad(params: ModelParams, batch, rng: np.random.Generator
                     ) -> tuple[float, np.ndarray]:
    """Monte-Carlo flow-matching objective on a batch of (x1, cond) pairs.

    Per item draws t ~ U[0, 1] and a Gaussian source sample x0, forms the
    interpolant, and returns the mean squared velocity error together with
    its gradient over the flat parameter vector.
    """
    x1, cond_raw = batch_arrays(params, batch)
    t = rng.uniform(size=x1.shape[0])
    x0 = rng.standard_normal(x1.shape)
    return loss_and_grad_arrays(params, x1, cond_raw, t, x0)


def euler_integrate(field, x0: np.ndarray, steps: int) -> np.ndarray:
    """Explicit Euler from t=0 to t=1 with fixed step 1/steps."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    x = np.array(x0, dtype=float)
    dt = 1.0 / steps
    for k in range(steps):
        x = x + dt * field(x, k * dt)
    return x


def sample(params: ModelParams, cond: Condition, steps: int, rng: np.random.Generator,
           x0: np.ndarray | None = None) -> ActionChunk:
    """Draw one action chunk by integrating the learned velocity field.

    Starts from x0 ~ N(0, I) in normalized action space (or the explicit
    ``x0`` override) and returns the terminal state denormalized through
    the model's stored stats.
    """
    raw = cond_to_raw(params, cond)[None]
    if x0 is None:
        x0 = sample_noise(rng, params)

    def field(x, t):
        with no_grad():
            v = velocity(params, x[None], np.array([t]), raw)
        return v.data[0]

    xn = euler_integrate(field, x0, steps)
    return ActionChunk(params.norm.denormalize_act(xn))


def grad_check(params: ModelParams, batch, coords: int, eps: float = 1e-5,
               seed: int = 0, atol: float = 1e-8) -> float:
    """Worst relative error between reverse-mode and central-difference
    gradients over ``coords`` random flat coordinates.

    The stochastic draws (t, x0) are frozen once, so both routes see the
    exact same loss surface. Coordinates where both gradients sit below
    ``atol`` count as exact (the difference is finite-difference noise).
    """
    if coords <= 0:
        return 0.0
    x1, cond_raw = batch_arrays(params, batch)
    rng = np.random.default_rng(seed)
    t = rng.uniform(size=x1.shape[0])
    x0 = rng.standard_normal(x1.shape)
    _, grad = loss_and_grad_arrays(params, x1, cond_raw, t, x0)

    n = params.size
    idx = rng.choice(n, size=min(coords, n), replace=False)
    flat = params.flat
    worst = 0.0
    for i in idx:
        keep = flat[i]
        flat[i] = keep + eps
        up = loss_given(params, x1, cond_raw, t, x0)
        flat[i] = keep - eps
        down = loss_given(params, x1, cond_raw, t, x0)
        flat[i] = keep
        fd = (up - down) / (2.0 * eps)
        denom = max(abs(grad[i]), abs(fd))
        if denom > atol:
            worst = max(worst, abs(grad[i] - fd) / denom)
    return worst
