"""Scripted synthetic demonstrations.

Stands in for human teleoperation recordings at desk scale: a smooth
random "mouse" target path plus one behavior archetype per emotion. Every
archetype parameter lives in the :data:`ARCHETYPES` table below; the
clips it generates are deliberately separable so downstream evaluation
has a calibrated signal.

Archetype fields:

==============  ============================================================
track           first-order tracking coefficient per 100 ms tick; high
                values lock head/hands onto the target quickly
gaze_gain       how strongly eye position follows the target direction
face            (vertax_low, vertax_up, r_eye, r_ear, s_eye) resting bias
head_pitch      resting head pitch offset, radians (droop / perk)
head_yaw        resting head yaw offset, radians (disengaged look-away)
arm_reach       0 = wrists at rest, 1 = on the target; negative retracts
arm_lift        vertical offset of both wrists, meters
arm_spread      sustained sideways posture: +widens the wrists apart,
                -huddles them inward, meters
wrist_roll      sustained wrist rotation about the vertical sway axis,
                radians (palms in for fear, flared for anger)
sway_amp/hz     hand oscillation (tremble, bounce, slow circling)
poke_hz         > 0 adds a periodic sharp reach pulse of the right hand
                toward the target (the "poke")
noise           seeded jitter standard deviation
==============  ============================================================

The per-emotion postures are deliberately far apart and the jitter is
kept small relative to them: the corpus calibrates the downstream
separability and conditioning metrics, so the conditional behavior given
a short history must be close to deterministic per emotion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import DemoClip, EmotionLabel, Frame
from .geometry import Pose
from .retarget import FaceDofs

RATE_HZ = 10
DEFAULT_BOUNDS = ((-0.5, 0.25, 0.0), (0.5, 0.85, 0.35))
_REST_LEFT = np.array([-0.25, 0.30, 0.0])
_REST_RIGHT = np.array([0.25, 0.30, 0.0])
_MAX_AXIS_SPEED = 0.45  # m/s per axis; keeps 10 Hz steps well under 0.15 m


@dataclass(frozen=True)
class Archetype:
    track: float
    gaze_gain: float
    face: tuple
    head_pitch: float
    head_yaw: float
    arm_reach: float
    arm_lift: float
    arm_spread: float
    wrist_roll: float
    sway_amp: float
    sway_hz: float
    poke_hz: float
    noise: float


ARCHETYPES: dict[EmotionLabel, Archetype] = {
    EmotionLabel.HAPPY: Archetype(
        track=0.50, gaze_gain=0.9, face=(0.50, 0.70, 0.10, math.pi / 3, 0.95),
        head_pitch=0.08, head_yaw=0.0, arm_reach=0.30, arm_lift=0.18,
        arm_spread=0.08, wrist_roll=0.45,
        sway_amp=0.04, sway_hz=0.9, poke_hz=0.0, noise=0.006),
    EmotionLabel.SAD: Archetype(
        track=0.10, gaze_gain=0.25, face=(-0.35, -0.15, 0.45, -math.pi / 3, 0.50),
        head_pitch=-0.30, head_yaw=-0.20, arm_reach=0.05, arm_lift=-0.22,
        arm_spread=-0.06, wrist_roll=-0.70,
        sway_amp=0.012, sway_hz=0.25, poke_hz=0.0, noise=0.005),
    EmotionLabel.ANGRY: Archetype(
        track=0.70, gaze_gain=1.0, face=(-0.60, -0.35, math.pi / 3, -math.pi / 5, 0.75),
        head_pitch=0.0, head_yaw=0.0, arm_reach=0.55, arm_lift=0.02,
        arm_spread=0.16, wrist_roll=0.80,
        sway_amp=0.035, sway_hz=1.6, poke_hz=0.0, noise=0.008),
    EmotionLabel.FEAR: Archetype(
        track=0.80, gaze_gain=1.0, face=(0.10, 0.85, 0.05, -math.pi / 2, 1.0),
        head_pitch=0.12, head_yaw=0.0, arm_reach=-0.45, arm_lift=0.06,
        arm_spread=-0.14, wrist_roll=-1.20,
        sway_amp=0.012, sway_hz=2.2, poke_hz=0.0, noise=0.006),
    EmotionLabel.BORED: Archetype(
        track=0.06, gaze_gain=0.15, face=(-0.05, 0.10, 0.20, -math.pi / 6, 0.35),
        head_pitch=-0.15, head_yaw=0.35, arm_reach=0.0, arm_lift=-0.10,
        arm_spread=0.10, wrist_roll=0.20,
        sway_amp=0.02, sway_hz=0.15, poke_hz=0.0, noise=0.004),
    EmotionLabel.CURIOUS: Archetype(
        track=0.60, gaze_gain=1.0, face=(0.15, 0.55, 0.30, math.pi / 2, 1.0),
        head_pitch=0.05, head_yaw=0.0, arm_reach=0.25, arm_lift=0.05,
        arm_spread=0.0, wrist_roll=0.55,
        sway_amp=0.015, sway_hz=0.5, poke_hz=0.45, noise=0.006),
    EmotionLabel.CALM: Archetype(
        track=0.12, gaze_gain=0.0, face=(0.0, 0.0, 0.0, 0.0, 1.0),
        head_pitch=0.0, head_yaw=0.0, arm_reach=0.0, arm_lift=0.0,
        arm_spread=0.0, wrist_roll=0.0,
        sway_amp=0.0, sway_hz=0.0, poke_hz=0.0, noise=0.003),
}


def mouse_trajectory(seed: int, duration_s: float, bounds=DEFAULT_BOUNDS,
                     rate_hz: int = RATE_HZ) -> tuple[np.ndarray, np.ndarray]:
    """Smooth random target path: (t_ms, positions) sampled at ``rate_hz``.

    Each axis sums 3-6 random-phase sinusoids with periods of 2-15 s,
    amplitude-budgeted so the per-step displacement stays small, then the
    result is clipped to the bounding box. Deterministic per seed.
    """
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
        raise ValueError(f"degenerate bounds: {bounds}")
    rng = np.random.default_rng(seed)
    n = max(1, int(round(duration_s * rate_hz)))
    t = np.arange(n) / rate_hz
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    pos = np.empty((n, 3))
    for axis in range(3):
        k = int(rng.integers(3, 7))
        periods = rng.uniform(2.0, 15.0, size=k)
        omegas = 2.0 * math.pi / periods
        phases = rng.uniform(0.0, 2.0 * math.pi, size=k)
        amps = rng.uniform(0.3, 1.0, size=k) * periods / periods.sum()
        # budget both excursion (stay near the box) and speed (smooth at 10 Hz)
        amps *= half[axis] / max(amps.sum(), 1e-9)
        speed = float((amps * omegas).sum())
        if speed > _MAX_AXIS_SPEED:
            amps *= _MAX_AXIS_SPEED / speed
        pos[:, axis] = center[axis] + (amps * np.sin(np.outer(t, omegas) + phases)).sum(axis=1)
    np.clip(pos, lo, hi, out=pos)
    t_ms = (np.arange(n) * (1000 // rate_hz)).astype(int)
    return t_ms, pos


def _look_at(delta: np.ndarray) -> tuple[float, float]:
    """(yaw about z, pitch about x) pointing the head at a target offset."""
    yaw = math.atan2(delta[0], max(delta[1], 1e-6))
    pitch = math.atan2(delta[2], max(math.hypot(delta[0], delta[1]), 1e-6))
    return yaw, pitch


def synth_demo(emotion: EmotionLabel, duration_s: float, seed: int,
               bounds=DEFAULT_BOUNDS, noise_scale: float | None = None) -> DemoClip:
    """Generate one scripted demonstration clip for ``emotion``.

    Composes target tracking (head + gaze), the archetype's face bias, and
    its arm behavior, all low-pass filtered with the archetype's tracking
    coefficient plus seeded jitter. Deterministic per (emotion, seed).
    """
    arch = ARCHETYPES[EmotionLabel(emotion)]
    noise = arch.noise if noise_scale is None else float(noise_scale)
    t_ms, targets = mouse_trajectory(seed, duration_s, bounds)
    rng = np.random.default_rng([seed, EmotionLabel(emotion).index])

    head_eye = np.array([0.0, 0.30, 0.45])  # head/eye vantage in the robot frame
    head_rv = np.zeros(3)
    hands = {"l": _REST_LEFT.copy(), "r": _REST_RIGHT.copy()}
    rests = {"l": _REST_LEFT, "r": _REST_RIGHT}
    frames = []
    for i, target in enumerate(targets):
        tsec = i / RATE_HZ
        yaw, pitch = _look_at(target - head_eye)
        goal_rv = np.array([pitch + arch.head_pitch, 0.0, yaw + arch.head_yaw])
        head_rv = head_rv + arch.track * (goal_rv - head_rv)
        head_rv = head_rv + rng.normal(0.0, noise, size=3) * 0.5

        sway = arch.sway_amp * math.sin(2.0 * math.pi * arch.sway_hz * tsec)
        hand_vecs = {}
        for side, phase in (("l", 0.0), ("r", math.pi / 2)):
            reach = arch.arm_reach
            if arch.poke_hz > 0.0 and side == "r":
                pulse = max(0.0, math.sin(2.0 * math.pi * arch.poke_hz * tsec)) ** 3
                reach = reach + (0.85 - reach) * pulse
            outward = arch.arm_spread * (-1.0 if side == "l" else 1.0)
            goal = rests[side] + reach * (target - rests[side])
            goal = goal + np.array([outward, 0.0, arch.arm_lift + sway * math.cos(phase)])
            goal = goal + np.array([sway * math.sin(phase), 0.0, 0.0])
            hands[side] = hands[side] + arch.track * (goal - hands[side])
            hands[side] = hands[side] + rng.normal(0.0, noise, size=3)
            hand_vecs[side] = hands[side]

        vlow, vup, r_eye, r_ear, s_eye = arch.face
        jitter = rng.normal(0.0, noise, size=7)
        face = FaceDofs.clamped(
            vertax_low_y=vlow + jitter[0],
            vertax_up_y=vup + jitter[1],
            r_eye=r_eye + jitter[2],
            r_ear=r_ear + jitter[3],
            s_eye=s_eye + jitter[4],
            p_eye_x=_gaze(arch.gaze_gain, yaw) + jitter[5],
            p_eye_y=_gaze(arch.gaze_gain, pitch) + jitter[6],
        )
        wrist_rv = 0.5 * head_rv + np.array([0.0, arch.wrist_roll, 0.0])
        frames.append(Frame(
            t_ms=int(t_ms[i]),
            head=Pose(rotvec=head_rv),
            hand_left=Pose(hand_vecs["l"], wrist_rv),
            hand_right=Pose(hand_vecs["r"], wrist_rv),
            face=face,
            target_pos=target,
        ))
    return DemoClip(emotion=EmotionLabel(emotion), frames=frames, source="synthetic", seed=seed)


def _gaze(gain: float, angle: float) -> float:
    return max(-1.0, min(1.0, gain * angle / (math.pi / 4.0)))


def synth_corpus(clips_per_emotion: int, frames: int, seed: int,
                 bounds=DEFAULT_BOUNDS) -> list[DemoClip]:
    """The desk-scale corpus: ``clips_per_emotion`` clips per emotion."""
    if clips_per_emotion <= 0:
        raise ValueError("nothing to generate: clips_per_emotion must be >= 1")
    if frames <= 0:
        raise ValueError("nothing to generate: frames must be >= 1")
    if clips_per_emotion > 1000:
        raise ValueError("clips_per_emotion must be <= 1000 (seed layout)")
    clips = []
    for emotion in EmotionLabel:
        for k in range(clips_per_emotion):
            clip_seed = seed * 10_000 + emotion.index * 1000 + k
            clips.append(synth_demo(emotion, frames / RATE_HZ, clip_seed, bounds=bounds))
    return clips
