"""Estimator-style front door to the flow-matching model.

`FlowMatchingPolicy` follows the scikit-learn contract: hyperparameters
go into ``__init__`` verbatim, ``fit`` learns from demonstration clips
and returns ``self``, fitted state lands in trailing-underscore
attributes, and ``get_params``/``set_params`` make it composable with
the wider ecosystem.
"""

from __future__ import annotations

import inspect

import numpy as np

from .flow import sample as flow_sample
from .types import ActionChunk, Condition, NormStats
from .training import TrainConfig, train
from .unet import ModelConfig, ModelParams


class NotFittedError(RuntimeError):
    """The policy has no trained parameters yet."""


class FlowMatchingPolicy:
    """Emotion-conditioned action-chunk generator.

    Parameters mirror the training protocol: prediction horizon ``horizon``
    (Tp), observation history ``history`` (H), U-Net channel ``widths``,
    and the optimization settings. ``fit`` windows the given clips,
    computes normalization stats, and trains the velocity field;
    ``sample`` draws denormalized action chunks for a condition.
    """

    def __init__(self, horizon=16, history=2, widths=(32, 64, 128), epochs=3000,
                 batch_size=256, learning_rate=1e-4, inference_steps=10, stride=1,
                 seed=0, n_classes=7, obs_dim=27, action_dim=25):
        self.horizon = horizon
        self.history = history
        self.widths = widths
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.inference_steps = inference_steps
        self.stride = stride
        self.seed = seed
        self.n_classes = n_classes
        self.obs_dim = obs_dim
        self.action_dim = action_dim

    # -- scikit-learn plumbing ------------------------------------------------

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [n for n in sig.parameters if n != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {n: getattr(self, n) for n in self._param_names()}

    def set_params(self, **params) -> "FlowMatchingPolicy":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for FlowMatchingPolicy")
            setattr(self, key, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"FlowMatchingPolicy({args})"

    # -- configuration --------------------------------------------------------

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            action_dim=self.action_dim,
            horizon=self.horizon,
            n_classes=self.n_classes,
            history=self.history,
            obs_dim=self.obs_dim,
            widths=tuple(self.widths),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            horizon=self.horizon,
            history=self.history,
            inference_steps=self.inference_steps,
            seed=self.seed,
            widths=tuple(self.widths),
        )

    @property
    def is_fitted(self) -> bool:
        return getattr(self, "params_", None) is not None

    def _require_fitted(self) -> ModelParams:
        if not self.is_fitted:
            raise NotFittedError("call fit() or load an artifact first")
        return self.params_

    # -- fitting ---------------------------------------------------------------

    def fit(self, clips, progress=None) -> "FlowMatchingPolicy":
        """Window demonstration clips and train the velocity field."""
        from ..dataset import compute_norm_stats, window_corpus

        clips = list(clips)
        if not clips:
            raise ValueError("fit() needs at least one demonstration clip")
        windows = window_corpus(clips, self.history, self.horizon, self.stride)
        return self.fit_windows(windows, stats=compute_norm_stats(clips), progress=progress)

    def fit_windows(self, windows, stats: NormStats | None = None,
                    progress=None) -> "FlowMatchingPolicy":
        """Train directly on (Condition, ActionChunk) pairs.

        Without explicit ``stats``, per-dimension min/max are derived from
        the windows themselves.
        """
        windows = list(windows)
        if not windows:
            raise ValueError("fit_windows() needs at least one pair")
        if stats is None:
            stats = _stats_from_windows(windows)
        params = ModelParams.init(self.model_config(), seed=self.seed)
        params.norm = stats
        params, curve = train(params, windows, self.train_config(), progress=progress)
        self.params_ = params
        self.loss_curve_ = curve
        return self

    # -- inference ---------------------------------------------------------------

    def sample(self, condition: Condition, rng=None, steps: int | None = None,
               x0: np.ndarray | None = None) -> ActionChunk:
        """Draw one action chunk (raw units) for a condition."""
        params = self._require_fitted()
        if rng is None:
            rng = np.random.default_rng(self.seed)
        return flow_sample(params, condition, steps or self.inference_steps, rng, x0=x0)

    def make_sampler(self, seed: int = 0, steps: int | None = None):
        """A stateful `cond -> ActionChunk` callable for the controller."""
        params = self._require_fitted()
        rng = np.random.default_rng(seed)
        n_steps = steps or self.inference_steps

        def sampler(condition: Condition) -> ActionChunk:
            return flow_sample(params, condition, n_steps, rng)

        return sampler

    # -- persistence ------------------------------------------------------------

    def save(self, path) -> None:
        self._require_fitted().save(path)

    @classmethod
    def from_artifact(cls, path) -> "FlowMatchingPolicy":
        """Rehydrate a fitted policy from a model artifact file."""
        params = ModelParams.load(path)
        cfg = params.config
        policy = cls(
            horizon=cfg.horizon,
            history=cfg.history,
            widths=cfg.widths,
            n_classes=cfg.n_classes,
            obs_dim=cfg.obs_dim,
            action_dim=cfg.action_dim,
        )
        policy.params_ = params
        policy.loss_curve_ = []
        return policy


def _stats_from_windows(windows) -> NormStats:
    acts = np.concatenate([chunk.values for _, chunk in windows])
    hists = np.concatenate([cond.history for cond, _ in windows])
    if hists.shape[1]:
        obs_min, obs_max = hists.min(axis=0), hists.max(axis=0)
    else:
        obs_min = np.zeros(0)
        obs_max = np.zeros(0)
    return NormStats(obs_min, obs_max, acts.min(axis=0), acts.max(axis=0))
