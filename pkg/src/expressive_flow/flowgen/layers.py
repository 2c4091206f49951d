"""Building blocks for the velocity-field network.

Parameters live in one flat float64 vector; every named weight is a numpy
view into it, so flat indexing (gradient checking, Adam) and structured
access (the forward pass) always agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class ParamDef:
    name: str
    shape: tuple
    init: str  # "fan_in" | "zeros" | "ones"

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1


class ParamBank:
    """Flat parameter vector plus named views into it."""

    def __init__(self, defs: list[ParamDef], flat: np.ndarray):
        total = sum(d.size for d in defs)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (total,):
            raise ValueError(f"flat vector has {flat.shape}, specs need ({total},)")
        self.defs = list(defs)
        self.flat = flat
        self.views = {}
        off = 0
        for d in defs:
            self.views[d.name] = self.flat[off : off + d.size].reshape(d.shape)
            off += d.size

    @classmethod
    def initialized(cls, defs: list[ParamDef], rng: np.random.Generator,
                    zero_head: bool = True) -> "ParamBank":
        chunks = []
        for d in defs:
            if d.init == "zeros" or (zero_head and d.name.startswith("head.")):
                chunks.append(np.zeros(d.size))
            elif d.init == "ones":
                chunks.append(np.ones(d.size))
            else:
                fan_in = d.shape[0] if len(d.shape) == 2 else int(np.prod(d.shape[1:]))
                bound = 1.0 / math.sqrt(max(fan_in, 1))
                chunks.append(rng.uniform(-bound, bound, size=d.size))
        return cls(defs, np.concatenate(chunks) if chunks else np.zeros(0))

    @property
    def size(self) -> int:
        return self.flat.size

    def tensors(self) -> dict[str, Tensor]:
        return {name: Tensor(view, requires_grad=True) for name, view in self.views.items()}

    def grad_flat(self, tensors: dict[str, Tensor]) -> np.ndarray:
        out = np.zeros_like(self.flat)
        off = 0
        for d in self.defs:
            g = tensors[d.name].grad
            if g is not None:
                out[off : off + d.size] = g.reshape(-1)
            off += d.size
        return out

    def copy(self) -> "ParamBank":
        return ParamBank(self.defs, self.flat.copy())


def effective_groups(channels: int, preferred: int) -> int:
    """Largest divisor of ``channels`` not exceeding ``preferred``."""
    g = min(preferred, channels)
    while channels % g:
        g -= 1
    return g


def sinusoidal_embedding(t: np.ndarray, dim: int, max_freq: float = 1000.0) -> np.ndarray:
    """Embed flow time t in [0, 1] with geometrically spaced frequencies."""
    if dim % 2:
        raise ValueError("embedding dim must be even")
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, math.log(max_freq), half))
    args = np.asarray(t, dtype=float).reshape(-1, 1) * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def mlp2(x: Tensor, p: dict[str, Tensor], prefix: str) -> Tensor:
    """Two-layer MLP with a SiLU in between."""
    h = ad.silu(ad.linear(x, p[f"{prefix}.0.w"], p[f"{prefix}.0.b"]))
    return ad.linear(h, p[f"{prefix}.1.w"], p[f"{prefix}.1.b"])


def mlp2_defs(prefix: str, d_in: int, d_hidden: int, d_out: int) -> list[ParamDef]:
    return [
        ParamDef(f"{prefix}.0.w", (d_in, d_hidden), "fan_in"),
        ParamDef(f"{prefix}.0.b", (d_hidden,), "zeros"),
        ParamDef(f"{prefix}.1.w", (d_hidden, d_out), "fan_in"),
        ParamDef(f"{prefix}.1.b", (d_out,), "zeros"),
    ]


def resblock_defs(prefix: str, c_in: int, c_out: int, kernel: int, cond_dim: int) -> list[ParamDef]:
    defs = [
        ParamDef(f"{prefix}.conv.w", (c_out, c_in, kernel), "fan_in"),
        ParamDef(f"{prefix}.conv.b", (c_out,), "zeros"),
        ParamDef(f"{prefix}.gn.g", (c_out,), "ones"),
        ParamDef(f"{prefix}.gn.b", (c_out,), "zeros"),
        ParamDef(f"{prefix}.film.w", (cond_dim, 2 * c_out), "fan_in"),
        ParamDef(f"{prefix}.film.b", (2 * c_out,), "zeros"),
    ]
    if c_in != c_out:
        defs += [
            ParamDef(f"{prefix}.skip.w", (c_out, c_in, 1), "fan_in"),
            ParamDef(f"{prefix}.skip.b", (c_out,), "zeros"),
        ]
    return defs


def resblock(h: Tensor, cond: Tensor, p: dict[str, Tensor], prefix: str,
             c_out: int, groups: int) -> Tensor:
    """conv -> group norm -> FiLM -> SiLU, with an additive shortcut.

    Feature maps are channels-first (C, B, T); the FiLM projection emits
    per-sample (gamma, beta) pairs from the condition embedding.
    """
    y = ad.conv1d(h, p[f"{prefix}.conv.w"], p[f"{prefix}.conv.b"])
    y = ad.group_norm(y, p[f"{prefix}.gn.g"], p[f"{prefix}.gn.b"],
                      effective_groups(c_out, groups))
    gb = ad.linear(cond, p[f"{prefix}.film.w"], p[f"{prefix}.film.b"])  # (B, 2*C)
    B = gb.data.shape[0]
    gamma = ad.reshape(ad.permute(ad.narrow(gb, 1, 0, c_out), (1, 0)), (c_out, B, 1))
    beta = ad.reshape(ad.permute(ad.narrow(gb, 1, c_out, c_out), (1, 0)), (c_out, B, 1))
    y = ad.add(ad.mul(y, ad.add_scalar(gamma, 1.0)), beta)
    y = ad.silu(y)
    if f"{prefix}.skip.w" in p:
        h = ad.conv1d(h, p[f"{prefix}.skip.w"], p[f"{prefix}.skip.b"])
    return ad.add(y, h)
