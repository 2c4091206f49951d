"""FiLM-conditioned temporal U-Net over action chunks.

The network maps (interpolated chunk, flow time, condition) to a velocity
of the same shape. Two strided-conv downsamplings and nearest-neighbor
upsamplings with concatenated skips by default; a single-entry ``widths``
collapses it to a residual stack so horizon-1 problems (the toy
conditional task) run through the same code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import (
    ParamBank,
    ParamDef,
    mlp2,
    mlp2_defs,
    resblock,
    resblock_defs,
    sinusoidal_embedding,
)
from .types import NormStats

ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and conditioning dimensions of the velocity field."""

    action_dim: int = 25
    horizon: int = 16            # Tp, frames predicted per chunk
    n_classes: int = 7
    history: int = 2             # H, observation frames in the condition
    obs_dim: int = 27
    widths: tuple = (32, 64, 128)
    groups: int = 8
    kernel: int = 3
    time_emb_dim: int = 64
    obs_emb_dim: int = 128
    blocks_per_level: int = 2

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        for name in ("action_dim", "horizon", "n_classes", "history", "obs_dim",
                     "groups", "kernel", "time_emb_dim", "obs_emb_dim", "blocks_per_level"):
            v = getattr(self, name)
            if name == "obs_dim":
                if v < 0:
                    raise ValueError("obs_dim must be >= 0")
            elif v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if not self.widths:
            raise ValueError("widths must not be empty")
        if self.kernel % 2 == 0:
            raise ValueError("kernel must be odd")
        if self.horizon % (2 ** self.levels):
            raise ValueError(
                f"horizon {self.horizon} must be divisible by {2 ** self.levels} "
                f"({self.levels} downsampling levels)"
            )

    @property
    def levels(self) -> int:
        return len(self.widths) - 1

    @property
    def cond_dim(self) -> int:
        return self.time_emb_dim + self.obs_emb_dim

    @property
    def raw_cond_dim(self) -> int:
        return self.n_classes + self.history * self.obs_dim

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        d = json.loads(text)
        d["widths"] = tuple(d["widths"])
        return cls(**d)


def build_defs(cfg: ModelConfig) -> list[ParamDef]:
    """Parameter layout, in the fixed order that defines flat indexing."""
    defs = []
    defs += mlp2_defs("time_mlp", cfg.time_emb_dim, cfg.time_emb_dim, cfg.time_emb_dim)
    defs += mlp2_defs("obs_mlp", cfg.raw_cond_dim, cfg.obs_emb_dim, cfg.obs_emb_dim)
    c = cfg.action_dim
    for i, w in enumerate(cfg.widths[:-1]):
        for b in range(cfg.blocks_per_level):
            defs += resblock_defs(f"down{i}.block{b}", c if b == 0 else w, w,
                                  cfg.kernel, cfg.cond_dim)
        defs += [
            ParamDef(f"down{i}.pool.w", (w, w, cfg.kernel), "fan_in"),
            ParamDef(f"down{i}.pool.b", (w,), "zeros"),
        ]
        c = w
    wmid = cfg.widths[-1]
    for b in range(cfg.blocks_per_level):
        defs += resblock_defs(f"mid.block{b}", c if b == 0 else wmid, wmid,
                              cfg.kernel, cfg.cond_dim)
    c = wmid
    for i in reversed(range(cfg.levels)):
        w = cfg.widths[i]
        for b in range(cfg.blocks_per_level):
            defs += resblock_defs(f"up{i}.block{b}", c + w if b == 0 else w, w,
                                  cfg.kernel, cfg.cond_dim)
        c = w
    defs += [
        ParamDef("head.w", (cfg.action_dim, c, cfg.kernel), "fan_in"),
        ParamDef("head.b", (cfg.action_dim,), "zeros"),
    ]
    return defs


class ModelParams:
    """All weights of the velocity field, flat-indexable, plus the
    normalization stats the sampler needs to leave normalized space."""

    def __init__(self, config: ModelConfig, bank: ParamBank, norm: NormStats | None = None):
        self.config = config
        self.bank = bank
        self.norm = norm if norm is not None else NormStats.identity(
            config.obs_dim, config.action_dim)

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, zero_head: bool = True) -> "ModelParams":
        rng = np.random.default_rng(seed)
        return cls(config, ParamBank.initialized(build_defs(config), rng, zero_head=zero_head))

    @property
    def flat(self) -> np.ndarray:
        return self.bank.flat

    @property
    def size(self) -> int:
        return self.bank.size

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.bank.copy(), self.norm)

    def save(self, path) -> None:
        np.savez(
            path,
            format_version=np.int64(ARTIFACT_VERSION),
            config_json=np.bytes_(self.config.to_json().encode()),
            params_flat=self.flat,
            obs_min=self.norm.obs_min,
            obs_max=self.norm.obs_max,
            act_min=self.norm.act_min,
            act_max=self.norm.act_max,
        )

    @classmethod
    def load(cls, path) -> "ModelParams":
        with np.load(path) as z:
            version = int(z["format_version"])
            if version != ARTIFACT_VERSION:
                raise ValueError(f"unsupported model artifact version {version}")
            config = ModelConfig.from_json(bytes(z["config_json"]).decode())
            bank = ParamBank(build_defs(config), z["params_flat"])
            norm = NormStats(z["obs_min"], z["obs_max"], z["act_min"], z["act_max"])
        return cls(config, bank, norm)


def velocity(params: ModelParams, x: np.ndarray, t: np.ndarray, cond_raw: np.ndarray,
             tensors: dict[str, Tensor] | None = None) -> Tensor:
    """Predicted velocity for a batch.

    ``x`` is (B, Tp, D_a) in normalized action space, ``t`` is (B,) flow
    times, ``cond_raw`` is (B, n_classes + H * D_o) with the history part
    already normalized. Pass ``tensors`` (from ``params.bank.tensors()``)
    to collect gradients afterwards.
    """
    cfg = params.config
    B = x.shape[0]
    if x.shape != (B, cfg.horizon, cfg.action_dim):
        raise ValueError(f"chunk batch must be {(B, cfg.horizon, cfg.action_dim)}, got {x.shape}")
    if cond_raw.shape != (B, cfg.raw_cond_dim):
        raise ValueError(f"condition batch must be {(B, cfg.raw_cond_dim)}, got {cond_raw.shape}")
    p = tensors if tensors is not None else params.bank.tensors()

    te = mlp2(Tensor(sinusoidal_embedding(t, cfg.time_emb_dim)), p, "time_mlp")
    oe = mlp2(Tensor(np.asarray(cond_raw, dtype=float)), p, "obs_mlp")
    cond = ad.concat([te, oe], axis=1)

    # channels-first (C, B, T) internally; see conv1d
    h = Tensor(np.ascontiguousarray(np.asarray(x, dtype=float).transpose(2, 0, 1)))
    skips = []
    for i, w in enumerate(cfg.widths[:-1]):
        for b in range(cfg.blocks_per_level):
            h = resblock(h, cond, p, f"down{i}.block{b}", w, cfg.groups)
        skips.append(h)
        h = ad.conv1d(h, p[f"down{i}.pool.w"], p[f"down{i}.pool.b"], stride=2)
    for b in range(cfg.blocks_per_level):
        h = resblock(h, cond, p, f"mid.block{b}", cfg.widths[-1], cfg.groups)
    for i in reversed(range(cfg.levels)):
        h = ad.upsample_nearest(h, 2)
        h = ad.concat([h, skips[i]], axis=0)
        for b in range(cfg.blocks_per_level):
            h = resblock(h, cond, p, f"up{i}.block{b}", cfg.widths[i], cfg.groups)
    v = ad.conv1d(h, p["head.w"], p["head.b"])
    return ad.permute(v, (1, 2, 0))
