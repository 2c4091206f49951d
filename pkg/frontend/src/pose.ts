// Rigid-pose math mirroring the back end: positions plus rotation
// vectors (axis * angle), quaternions used internally for composition.
// Wire order everywhere: [px, py, pz, rx, ry, rz].

export type Vec3 = [number, number, number];
export type Vec6 = [number, number, number, number, number, number];
export type Quat = [number, number, number, number]; // (w, x, y, z)

export interface Pose {
  position: Vec3;
  rotvec: Vec3;
}

const norm3 = (v: Vec3): number => Math.hypot(v[0], v[1], v[2]);

export function quatFromRotvec(v: Vec3): Quat {
  const theta = norm3(v);
  if (theta < 1e-8) {
    const k = 0.5 - (theta * theta) / 48.0;
    return normalizeQuat([Math.cos(theta / 2), k * v[0], k * v[1], k * v[2]]);
  }
  const k = Math.sin(theta / 2) / theta;
  return normalizeQuat([Math.cos(theta / 2), k * v[0], k * v[1], k * v[2]]);
}

function normalizeQuat(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  const s = q[0] < 0 ? -1 / n : 1 / n; // scalar part kept non-negative
  return [q[0] * s, q[1] * s, q[2] * s, q[3] * s];
}

export function quatToRotvec(q: Quat): Vec3 {
  const [w, x, y, z] = q;
  const s = Math.hypot(x, y, z);
  if (s < 1e-9) return [2 * x, 2 * y, 2 * z];
  const theta = 2 * Math.atan2(s, w);
  const k = theta / s;
  return [x * k, y * k, z * k];
}

export function quatMul(a: Quat, b: Quat): Quat {
  const [w1, x1, y1, z1] = a;
  const [w2, x2, y2, z2] = b;
  return normalizeQuat([
    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
  ]);
}

export function quatConj(q: Quat): Quat {
  return normalizeQuat([q[0], -q[1], -q[2], -q[3]]);
}

export function quatRotate(q: Quat, v: Vec3): Vec3 {
  const u: Vec3 = [q[1], q[2], q[3]];
  const t: Vec3 = [
    2 * (u[1] * v[2] - u[2] * v[1]),
    2 * (u[2] * v[0] - u[0] * v[2]),
    2 * (u[0] * v[1] - u[1] * v[0]),
  ];
  return [
    v[0] + q[0] * t[0] + (u[1] * t[2] - u[2] * t[1]),
    v[1] + q[0] * t[1] + (u[2] * t[0] - u[0] * t[2]),
    v[2] + q[0] * t[2] + (u[0] * t[1] - u[1] * t[0]),
  ];
}

export function wrapRotvec(v: Vec3): Vec3 {
  const theta = norm3(v);
  if (theta <= Math.PI) return [...v];
  const wrapped = theta % (2 * Math.PI);
  const scale = (wrapped > Math.PI ? -(2 * Math.PI - wrapped) : wrapped) / theta;
  return [v[0] * scale, v[1] * scale, v[2] * scale];
}

export function pose(position: Vec3 = [0, 0, 0], rotvec: Vec3 = [0, 0, 0]): Pose {
  return { position: [...position], rotvec: wrapRotvec(rotvec) };
}

export function poseFromVec6(v: Vec6): Pose {
  return pose([v[0], v[1], v[2]], [v[3], v[4], v[5]]);
}

export function poseToVec6(p: Pose): Vec6 {
  return [...p.position, ...p.rotvec] as Vec6;
}

export function compose(a: Pose, b: Pose): Pose {
  const qa = quatFromRotvec(a.rotvec);
  const rotated = quatRotate(qa, b.position);
  return pose(
    [a.position[0] + rotated[0], a.position[1] + rotated[1], a.position[2] + rotated[2]],
    quatToRotvec(quatMul(qa, quatFromRotvec(b.rotvec))),
  );
}

export function inverse(a: Pose): Pose {
  const qi = quatConj(quatFromRotvec(a.rotvec));
  const p = quatRotate(qi, a.position);
  return pose([-p[0], -p[1], -p[2]], quatToRotvec(qi));
}

export function expressInFrame(p: Pose, frame: Pose): Pose {
  return compose(inverse(frame), p);
}
