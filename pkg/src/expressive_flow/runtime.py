"""Closed-loop controller: receding-horizon execution of sampled chunks.

Every 100 ms tick pushes one observation. The controller keeps the last H
observations, samples a Tp-step chunk when its execution budget runs out,
serves Ta of those steps, then replans. Callers serialize
``push_observation``; one controller belongs to one session.
"""

from __future__ import annotations

import time
from collections import deque

import numpy as np

from .flowgen.types import Condition

DEFAULT_TICK_MS = 100.0


class Controller:
    """State machine around a chunk sampler.

    ``sampler`` is any ``Condition -> ActionChunk`` callable (the policy's
    ``make_sampler`` or a stub). ``exec_horizon`` (Ta) defaults to half the
    prediction horizon. With ``tick_budget_ms`` set, a sampling call that
    overruns the tick is logged and the previous action is repeated instead
    of the late chunk's first step.
    """

    def __init__(self, sampler, emotion, horizon: int, history: int,
                 exec_horizon: int | None = None, n_classes: int = 7,
                 obs_dim: int = 27, tick_budget_ms: float | None = None,
                 flush_on_switch: bool = True):
        if horizon < 1 or history < 1:
            raise ValueError("horizon and history must be >= 1")
        exec_horizon = horizon // 2 if exec_horizon is None else exec_horizon
        if not 1 <= exec_horizon <= horizon:
            raise ValueError(f"exec_horizon must lie in [1, {horizon}], got {exec_horizon}")
        self.sampler = sampler
        self.horizon = horizon
        self.history_len = history
        self.exec_horizon = exec_horizon
        self.n_classes = n_classes
        self.obs_dim = obs_dim
        self.tick_budget_ms = tick_budget_ms
        self.flush_on_switch = flush_on_switch
        self.emotion_index = self._emotion_index(emotion)
        self._history = deque(maxlen=history)
        self._pending = deque()
        self._served_since_plan = 0
        self._last_action = None
        self.frames_executed = 0
        self.replans = 0
        self.overruns = 0
        self.sample_ms: list[float] = []

    def _emotion_index(self, emotion) -> int:
        idx = int(getattr(emotion, "index", emotion))
        if not 0 <= idx < self.n_classes:
            raise ValueError(f"emotion index {idx} outside [0, {self.n_classes})")
        return idx

    @property
    def warmed_up(self) -> bool:
        return len(self._history) >= self.history_len

    def set_emotion(self, emotion) -> None:
        """Steer the next replan; flushing makes the switch take effect
        within Ta frames."""
        idx = self._emotion_index(emotion)
        if idx == self.emotion_index:
            return
        self.emotion_index = idx
        if self.flush_on_switch:
            self._pending.clear()

    def push_observation(self, obs) -> np.ndarray | None:
        """Feed one observation vector; returns the action to execute, or
        None during warm-up."""
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (self.obs_dim,):
            raise ValueError(f"observation must have shape ({self.obs_dim},), got {obs.shape}")
        if not np.all(np.isfinite(obs)):
            raise ValueError("observation must be finite")
        self._history.append(obs)
        if not self.warmed_up:
            return None

        overrun = False
        if not self._pending or self._served_since_plan >= self.exec_horizon:
            onehot = np.zeros(self.n_classes)
            onehot[self.emotion_index] = 1.0
            cond = Condition(onehot, np.stack(self._history))
            start = time.perf_counter()
            chunk = self.sampler(cond)
            elapsed_ms = (time.perf_counter() - start) * 1000.0
            self.replans += 1
            self.sample_ms.append(elapsed_ms)
            if chunk.values.shape[0] != self.horizon:
                raise ValueError(
                    f"sampler returned a {chunk.values.shape[0]}-step chunk, "
                    f"expected {self.horizon}")
            self._pending = deque(np.array(chunk.values))
            self._served_since_plan = 0
            if self.tick_budget_ms is not None and elapsed_ms > self.tick_budget_ms:
                self.overruns += 1
                overrun = True

        action = self._pending.popleft()
        self._served_since_plan += 1
        if overrun and self._last_action is not None:
            action = self._last_action
        self._last_action = action
        self.frames_executed += 1
        return action

    def metrics(self) -> dict:
        """Snapshot for the server status endpoint."""
        return {
            "frames": self.frames_executed,
            "replans": self.replans,
            "overruns": self.overruns,
            "mean_sample_ms": float(np.mean(self.sample_ms)) if self.sample_ms else 0.0,
        }
