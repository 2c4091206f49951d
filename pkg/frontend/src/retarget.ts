// Client-side retargeting: the same equations the back end applies,
// re-implemented here so the studio can drive the avatar locally.
// Agreement with the primary implementation is pinned by the shared
// golden-vector file (see test/retarget.test.ts).

import { Pose, Vec6, expressInFrame, pose } from "./pose.js";

export interface FaceBlend {
  cEye: number;   // eye closedness, [0, 1]
  dLip: number;   // lip-corner dimple, [0, 1]
  hBrow: number;  // brow lower, [0, 1]
  hChin: number;  // chin raise, [0, 1]
  thetaX: number; // gaze, radians
  thetaY: number;
}

// wire order: [vertax_low_y, vertax_up_y, r_eye, r_ear, s_eye, p_eye_x, p_eye_y]
export type FaceDofs = [number, number, number, number, number, number, number];

export interface RetargetConfig {
  scale: number;
  thetaMax: number;
}

export const DEFAULT_CONFIG: RetargetConfig = { scale: 1.5, thetaMax: Math.PI / 4 };

const clamp = (x: number, lo: number, hi: number): number => Math.min(hi, Math.max(lo, x));
const clamp01 = (x: number): number => clamp(x, 0, 1);

export function blendFromVec(v: number[]): FaceBlend {
  return {
    cEye: clamp01(v[0]),
    dLip: clamp01(v[1]),
    hBrow: clamp01(v[2]),
    hChin: clamp01(v[3]),
    thetaX: v[4],
    thetaY: v[5],
  };
}

export function mapFace(blend: FaceBlend, cfg: RetargetConfig = DEFAULT_CONFIG): FaceDofs {
  const cEye = clamp01(blend.cEye);
  const dLip = clamp01(blend.dLip);
  const hBrow = clamp01(blend.hBrow);
  const hChin = clamp01(blend.hChin);
  const rawLow = dLip;
  const rawUp = -(hChin + hBrow) / 2;
  return [
    Math.min(rawLow, rawUp),
    Math.max(rawLow, rawUp),
    ((hChin + hBrow) * Math.PI) / 6,
    (Math.PI / 2) * (-hChin + hBrow),
    1 - 0.9 * cEye,
    clamp(-blend.thetaX / cfg.thetaMax, -1, 1),
    clamp(-blend.thetaY / cfg.thetaMax, -1, 1),
  ];
}

export function mapHead(operatorHead: Pose): Pose {
  return pose([0, 0, 0], operatorHead.rotvec);
}

export function mapHand(
  controller: Pose,
  operatorHead: Pose,
  cfg: RetargetConfig = DEFAULT_CONFIG,
): Pose {
  const rel = expressInFrame(controller, operatorHead);
  return pose(
    [rel.position[0] * cfg.scale, rel.position[1] * cfg.scale, rel.position[2] * cfg.scale],
    rel.rotvec,
  );
}

export function mapHandVec(controller: Vec6, head: Vec6, scale: number): Vec6 {
  const out = mapHand(
    { position: [controller[0], controller[1], controller[2]], rotvec: [controller[3], controller[4], controller[5]] },
    { position: [head[0], head[1], head[2]], rotvec: [head[3], head[4], head[5]] },
    { scale, thetaMax: DEFAULT_CONFIG.thetaMax },
  );
  return [...out.position, ...out.rotvec] as Vec6;
}
