// Studio state: what the operator controls and what the avatar mirrors.

import { Pose, Vec3, pose, poseToVec6 } from "./pose.js";
import { FaceDofs, mapFace, mapHand, mapHead, DEFAULT_CONFIG, RetargetConfig } from "./retarget.js";
import { Emotion } from "./wire.js";

export type StudioMode = "demonstrate" | "perform";
export type ConnectionState = "idle" | "connecting" | "open" | "closed" | "error";

export const NEUTRAL_FACE: FaceDofs = [0, 0, 0, 0, 1, 0, 0];
export const REST_LEFT: Vec3 = [-0.25, 0.3, 0];
export const REST_RIGHT: Vec3 = [0.25, 0.3, 0];

/** Operator-side inputs in demonstrate mode. */
export interface OperatorControls {
  head: Pose;            // operator head pose (orientation is what matters)
  controllerLeft: Pose;  // hand controllers in world space
  controllerRight: Pose;
  sliders: { cEye: number; dLip: number; hBrow: number; hChin: number; thetaX: number; thetaY: number };
}

/** What the rendered robot currently shows. */
export interface AvatarState {
  head: Pose;
  handLeft: Pose;
  handRight: Pose;
  face: FaceDofs;
}

export interface StudioState {
  mode: StudioMode;
  connection: ConnectionState;
  emotion: Emotion;
  recording: boolean;
  borderFlash: boolean;
  target: Vec3;
  controls: OperatorControls;
  avatar: AvatarState;
}

export function initialState(mode: StudioMode, emotion: Emotion): StudioState {
  return {
    mode,
    connection: "idle",
    emotion,
    recording: false,
    borderFlash: false,
    target: [0, 0.55, 0.15],
    controls: {
      head: pose(),
      controllerLeft: pose(REST_LEFT),
      controllerRight: pose(REST_RIGHT),
      sliders: { cEye: 0, dLip: 0, hBrow: 0, hChin: 0, thetaX: 0, thetaY: 0 },
    },
    avatar: {
      head: pose(),
      handLeft: pose(REST_LEFT),
      handRight: pose(REST_RIGHT),
      face: [...NEUTRAL_FACE] as FaceDofs,
    },
  };
}

/** Demonstrate mode: run the operator controls through the retargeting
 * equations; the result both drives the avatar and becomes the obs. */
export function retargetControls(state: StudioState, cfg: RetargetConfig = DEFAULT_CONFIG): AvatarState {
  const { head, controllerLeft, controllerRight, sliders } = state.controls;
  return {
    head: mapHead(head),
    handLeft: mapHand(controllerLeft, head, cfg),
    handRight: mapHand(controllerRight, head, cfg),
    face: mapFace(
      { cEye: sliders.cEye, dLip: sliders.dLip, hBrow: sliders.hBrow, hChin: sliders.hChin, thetaX: sliders.thetaX, thetaY: sliders.thetaY },
      cfg,
    ),
  };
}

export function avatarObsArrays(avatar: AvatarState, target: Vec3): {
  head: number[]; hand_l: number[]; hand_r: number[]; face: number[]; target: number[];
} {
  return {
    head: poseToVec6(avatar.head),
    hand_l: poseToVec6(avatar.handLeft),
    hand_r: poseToVec6(avatar.handRight),
    face: [...avatar.face],
    target: [...target],
  };
}
