"""Operator-to-robot retargeting.

Maps the operator's head/controller poses and the handful of facial
blend-shape channels that matter for perceived emotion onto the robot
command space: head orientation, two scaled end-effector poses, and the
seven facial degrees of freedom (eyelid control vertices, eye rotation,
ear rotation, eye scale, eye position on the face plane).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, express_in_frame

FACE_BLEND_ORDER = ("c_eye", "d_lip", "h_brow", "h_chin", "theta_x", "theta_y")
FACE_DOF_ORDER = (
    "vertax_low_y",
    "vertax_up_y",
    "r_eye",
    "r_ear",
    "s_eye",
    "p_eye_x",
    "p_eye_y",
)


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, float(x)))


@dataclass(frozen=True)
class FaceBlend:
    """Blend-shape activations in [0, 1] plus gaze angles in radians.

    Face trackers emit transient out-of-range blend values; those are
    clamped at construction rather than rejected so a live pipeline never
    faults.
    """

    c_eye: float = 0.0   # eye closedness
    d_lip: float = 0.0   # lip-corner dimple
    h_brow: float = 0.0  # brow lower
    h_chin: float = 0.0  # chin raise
    theta_x: float = 0.0
    theta_y: float = 0.0

    def __post_init__(self):
        for name in ("c_eye", "d_lip", "h_brow", "h_chin"):
            object.__setattr__(self, name, _clamp(getattr(self, name), 0.0, 1.0))
        for name in ("theta_x", "theta_y"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    def to_vec(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FACE_BLEND_ORDER], dtype=float)

    @classmethod
    def from_vec(cls, vec) -> "FaceBlend":
        a = np.asarray(vec, dtype=float)
        if a.shape != (6,):
            raise ValueError(f"face blend vector must have shape (6,), got {a.shape}")
        return cls(*a)


@dataclass(frozen=True)
class FaceDofs:
    """The robot's seven facial degrees of freedom.

    Invariants: eyelid control vertices never cross (low <= up, both in
    [-1, 1]), eye scale stays in [0.1, 1], eye position components stay in
    [-1, 1]. The strict constructor raises on violations; use
    :meth:`clamped` when synthesizing values that may sit outside range.
    """

    vertax_low_y: float = 0.0
    vertax_up_y: float = 0.0
    r_eye: float = 0.0
    r_ear: float = 0.0
    s_eye: float = 1.0
    p_eye_x: float = 0.0
    p_eye_y: float = 0.0

    def __post_init__(self):
        # 1e-9 slack absorbs float spill at the boundaries (e.g. 1 - 0.9*1.0);
        # accepted values are snapped into the exact range
        eps = 1e-9
        vals = [float(getattr(self, n)) for n in FACE_DOF_ORDER]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("face DoFs must be finite")
        if self.vertax_low_y > self.vertax_up_y + eps:
            raise ValueError(
                f"eyelid vertices cross: low={self.vertax_low_y} > up={self.vertax_up_y}"
            )
        for name, lo, hi in (
            ("vertax_low_y", -1.0, 1.0),
            ("vertax_up_y", -1.0, 1.0),
            ("s_eye", 0.1, 1.0),
            ("p_eye_x", -1.0, 1.0),
            ("p_eye_y", -1.0, 1.0),
        ):
            v = float(getattr(self, name))
            if v < lo - eps or v > hi + eps:
                raise ValueError(f"{name} must lie in [{lo}, {hi}], got {v}")
            object.__setattr__(self, name, _clamp(v, lo, hi))
        if self.vertax_low_y > self.vertax_up_y:
            object.__setattr__(self, "vertax_low_y", self.vertax_up_y)

    @classmethod
    def clamped(cls, vertax_low_y=0.0, vertax_up_y=0.0, r_eye=0.0, r_ear=0.0,
                s_eye=1.0, p_eye_x=0.0, p_eye_y=0.0) -> "FaceDofs":
        """Construct with every invariant enforced by clamping."""
        a = _clamp(vertax_low_y, -1.0, 1.0)
        b = _clamp(vertax_up_y, -1.0, 1.0)
        return cls(
            vertax_low_y=min(a, b),
            vertax_up_y=max(a, b),
            r_eye=float(r_eye),
            r_ear=float(r_ear),
            s_eye=_clamp(s_eye, 0.1, 1.0),
            p_eye_x=_clamp(p_eye_x, -1.0, 1.0),
            p_eye_y=_clamp(p_eye_y, -1.0, 1.0),
        )

    @classmethod
    def neutral(cls) -> "FaceDofs":
        return cls()

    def to_vec(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FACE_DOF_ORDER], dtype=float)

    @classmethod
    def from_vec(cls, vec) -> "FaceDofs":
        a = np.asarray(vec, dtype=float)
        if a.shape != (7,):
            raise ValueError(f"face DoF vector must have shape (7,), got {a.shape}")
        return cls(*a)


@dataclass(frozen=True)
class RetargetConfig:
    """Hand position scale and the gaze clamp angle."""

    scale: float = 1.5
    theta_max: float = math.pi / 4.0

    def __post_init__(self):
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not (self.theta_max > 0.0 and math.isfinite(self.theta_max)):
            raise ValueError(f"theta_max must be positive, got {self.theta_max}")


def map_head(operator_head: Pose) -> Pose:
    """Robot head command: operator head orientation, translation discarded."""
    return Pose((0.0, 0.0, 0.0), operator_head.rotvec)


def map_hand(controller: Pose, operator_head: Pose, cfg: RetargetConfig = RetargetConfig()) -> Pose:
    """End-effector command from a controller pose.

    The controller pose is expressed in the operator's head frame; its
    position is scaled by ``cfg.scale`` (reach compensation) while the
    orientation is matched directly.
    """
    rel = express_in_frame(controller, operator_head)
    return Pose(cfg.scale * rel.position, rel.rotvec)


def map_face(blend: FaceBlend, cfg: RetargetConfig = RetargetConfig()) -> FaceDofs:
    """Map blend-shape channels and gaze onto the seven facial DoFs.

    The eyelid pair is resolved as a mutual anti-crossing constraint: the
    raw lower value (lip dimple) and raw upper value (-(chin+brow)/2) are
    sorted so the lower control vertex never rises above the upper one.
    """
    raw_low = blend.d_lip
    raw_up = -(blend.h_chin + blend.h_brow) / 2.0
    return FaceDofs(
        vertax_low_y=min(raw_low, raw_up),
        vertax_up_y=max(raw_low, raw_up),
        r_eye=(blend.h_chin + blend.h_brow) * math.pi / 6.0,
        r_ear=(math.pi / 2.0) * (-blend.h_chin + blend.h_brow),
        s_eye=1.0 - 0.9 * blend.c_eye,
        p_eye_x=_clamp(-blend.theta_x / cfg.theta_max, -1.0, 1.0),
        p_eye_y=_clamp(-blend.theta_y / cfg.theta_max, -1.0, 1.0),
    )
