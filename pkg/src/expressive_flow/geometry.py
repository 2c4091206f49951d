"""Rigid-body pose algebra: position plus rotation-vector orientation.

A pose is six numbers on the wire: ``[px, py, pz, rx, ry, rz]`` with the
rotation vector (axis * angle, radians) canonicalized to magnitude in
``[0, pi]``. Composition runs through unit quaternions so long chains do
not drift.
"""

from __future__ import annotations

import numpy as np

_TINY = 1e-12


def _check_vec3(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite, got {a}")
    return a


class Rotation:
    """Unit quaternion ``(w, x, y, z)``; scalar part kept non-negative."""

    __slots__ = ("q",)

    def __init__(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (4,):
            raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
        n = float(np.linalg.norm(q))
        if not np.isfinite(n) or n < _TINY:
            raise ValueError("quaternion must be finite and non-zero")
        q = q / n
        if q[0] < 0.0:
            q = -q
        q.setflags(write=False)
        self.q = q

    @classmethod
    def identity(cls) -> "Rotation":
        return cls((1.0, 0.0, 0.0, 0.0))

    @classmethod
    def from_rotvec(cls, rotvec) -> "Rotation":
        v = _check_vec3(rotvec, "rotvec")
        theta = float(np.linalg.norm(v))
        if theta < 1e-8:
            # sin(t/2)/t ~= 1/2 - t^2/48 for small t
            k = 0.5 - theta * theta / 48.0
            return cls(np.concatenate(([np.cos(theta / 2.0)], k * v)))
        return cls(np.concatenate(([np.cos(theta / 2.0)], np.sin(theta / 2.0) / theta * v)))

    def as_rotvec(self) -> np.ndarray:
        w = self.q[0]
        xyz = self.q[1:]
        s = float(np.linalg.norm(xyz))
        if s < 1e-9:
            return 2.0 * xyz  # w ~= 1, first-order
        # w >= 0 makes atan2 land in [0, pi/2], so the angle is in [0, pi]
        theta = 2.0 * float(np.arctan2(s, w))
        return xyz * (theta / s)

    def __mul__(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.q
        w2, x2, y2, z2 = other.q
        return Rotation((
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ))

    def inverse(self) -> "Rotation":
        w, x, y, z = self.q
        return Rotation((w, -x, -y, -z))

    def rotate(self, vec) -> np.ndarray:
        """Rotate a 3-vector."""
        v = np.asarray(vec, dtype=float)
        u = self.q[1:]
        t = 2.0 * np.cross(u, v)
        return v + self.q[0] * t + np.cross(u, t)

    def norm(self) -> float:
        return float(np.linalg.norm(self.q))

    def __repr__(self) -> str:
        return f"Rotation(q={self.q.tolist()})"


def _wrap_rotvec(v: np.ndarray) -> np.ndarray:
    """Canonicalize a rotation vector to magnitude in [0, pi].

    In-range inputs pass through bit-exact; only wrap-around cases are
    rewritten (angle mod 2pi, axis flipped past pi).
    """
    theta = float(np.linalg.norm(v))
    if theta <= np.pi:
        return v
    wrapped = np.fmod(theta, 2.0 * np.pi)
    axis = v / theta
    if wrapped > np.pi:
        return axis * -(2.0 * np.pi - wrapped)
    return axis * wrapped


class Pose:
    """Position (meters) + axis-angle orientation (radians)."""

    __slots__ = ("position", "rotvec")

    def __init__(self, position=(0.0, 0.0, 0.0), rotvec=(0.0, 0.0, 0.0)):
        p = _check_vec3(position, "position")
        r = _wrap_rotvec(_check_vec3(rotvec, "rotvec"))
        p.setflags(write=False)
        r.setflags(write=False)
        self.position = p
        self.rotvec = r

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_vec6(cls, vec) -> "Pose":
        a = np.asarray(vec, dtype=float)
        if a.shape != (6,):
            raise ValueError(f"pose vector must have shape (6,), got {a.shape}")
        return cls(a[:3], a[3:])

    def to_vec6(self) -> np.ndarray:
        return np.concatenate((self.position, self.rotvec))

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_rotvec(self.rotvec)

    def allclose(self, other: "Pose", tol: float = 1e-9) -> bool:
        if not np.allclose(self.position, other.position, atol=tol, rtol=0.0):
            return False
        # compare as quaternions to be robust at the +/-pi seam
        dq = self.rotation.q - other.rotation.q
        return bool(np.linalg.norm(dq) < tol)

    def __repr__(self) -> str:
        return f"Pose(position={self.position.tolist()}, rotvec={self.rotvec.tolist()})"


def compose(a: Pose, b: Pose) -> Pose:
    """Rigid transform a∘b (apply b, then a)."""
    ra = a.rotation
    return Pose(a.position + ra.rotate(b.position), (ra * b.rotation).as_rotvec())


def inverse(a: Pose) -> Pose:
    ri = a.rotation.inverse()
    return Pose(-ri.rotate(a.position), ri.as_rotvec())


def express_in_frame(p: Pose, frame: Pose) -> Pose:
    """Re-express pose ``p`` relative to ``frame``: compose(inverse(frame), p)."""
    return compose(inverse(frame), p)
