"""Value types shared by the generative model and the data pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _finite_array(values, name: str, ndim: int) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


@dataclass(frozen=True)
class ActionChunk:
    """A horizon x action_dim block of predicted robot actions."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _finite_array(self.values, "chunk values", 2))

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    @property
    def action_dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Condition:
    """What the velocity field is conditioned on.

    ``onehot`` selects the emotion (exactly one bit set); ``history`` holds
    the last H observation vectors, oldest first, in raw (unnormalized)
    units.
    """

    onehot: np.ndarray
    history: np.ndarray

    def __post_init__(self):
        oh = _finite_array(self.onehot, "onehot", 1)
        hist = _finite_array(self.history, "history", 2)
        if not (np.all((oh == 0.0) | (oh == 1.0)) and oh.sum() == 1.0):
            raise ValueError(f"onehot must have exactly one bit set, got {oh}")
        object.__setattr__(self, "onehot", oh)
        object.__setattr__(self, "history", hist)

    @classmethod
    def from_label(cls, index: int, n_classes: int, history) -> "Condition":
        oh = np.zeros(n_classes)
        oh[index] = 1.0
        return cls(oh, np.asarray(history, dtype=float))


class NormStats:
    """Per-dimension min/max used to map vectors onto [-1, 1].

    Dimensions with max == min are flagged constant: they normalize to 0
    and denormalize back to the constant.
    """

    def __init__(self, obs_min, obs_max, act_min, act_max):
        self.obs_min = np.asarray(obs_min, dtype=float)
        self.obs_max = np.asarray(obs_max, dtype=float)
        self.act_min = np.asarray(act_min, dtype=float)
        self.act_max = np.asarray(act_max, dtype=float)
        for lo, hi, name in ((self.obs_min, self.obs_max, "obs"),
                             (self.act_min, self.act_max, "act")):
            if lo.shape != hi.shape or lo.ndim != 1:
                raise ValueError(f"{name} min/max must be matching 1-D arrays")
            if np.any(hi < lo):
                raise ValueError(f"{name} max must be >= min per dimension")

    def normalize_obs(self, v: np.ndarray) -> np.ndarray:
        return minmax_normalize(v, self.obs_min, self.obs_max)

    def denormalize_obs(self, v: np.ndarray) -> np.ndarray:
        return minmax_denormalize(v, self.obs_min, self.obs_max)

    def normalize_act(self, v: np.ndarray) -> np.ndarray:
        return minmax_normalize(v, self.act_min, self.act_max)

    def denormalize_act(self, v: np.ndarray) -> np.ndarray:
        return minmax_denormalize(v, self.act_min, self.act_max)

    @classmethod
    def identity(cls, obs_dim: int, act_dim: int) -> "NormStats":
        return cls(-np.ones(obs_dim), np.ones(obs_dim), -np.ones(act_dim), np.ones(act_dim))


def minmax_normalize(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Map [lo, hi] onto [-1, 1] per dimension; constant dims go to 0."""
    v = np.asarray(v, dtype=float)
    span = hi - lo
    safe = np.where(span == 0.0, 1.0, span)
    out = 2.0 * (v - lo) / safe - 1.0
    return np.where(span == 0.0, 0.0, out)


def minmax_denormalize(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`minmax_normalize`; constant dims return the constant."""
    v = np.asarray(v, dtype=float)
    return np.where(hi - lo == 0.0, lo, (v + 1.0) / 2.0 * (hi - lo) + lo)
