"""Emotion-conditioned expressive robot behavior.

Retargets operator signals onto an expressive robot avatar, learns a
flow-matching generative policy from demonstration clips, and serves it
in a 10 Hz closed loop over WebSocket.
"""

from .dataset import ACT_DIM, OBS_DIM, DemoClip, EmotionLabel, Frame
from .flowgen import ActionChunk, Condition, FlowMatchingPolicy, ModelParams
from .geometry import Pose, Rotation, compose, express_in_frame, inverse
from .retarget import FaceBlend, FaceDofs, RetargetConfig, map_face, map_hand, map_head
from .runtime import Controller

__version__ = "0.1.0"

__all__ = [
    "ACT_DIM",
    "OBS_DIM",
    "ActionChunk",
    "Condition",
    "Controller",
    "DemoClip",
    "EmotionLabel",
    "FaceBlend",
    "FaceDofs",
    "FlowMatchingPolicy",
    "Frame",
    "ModelParams",
    "Pose",
    "RetargetConfig",
    "Rotation",
    "compose",
    "express_in_frame",
    "inverse",
    "map_face",
    "map_hand",
    "map_head",
]
