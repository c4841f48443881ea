/**
 * 2-D stick figure geometry for the default 17-joint model.
 *
 * Mirrors the server's chain kinematics (rotate about the joint axis, then
 * translate along the link offset) and projects to the front view: screen
 * x = -robot y (so the robot's left appears on the viewer's right), screen
 * y = robot z.
 */

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // w x y z

export interface FigureJoint {
  name: string;
  axis: Vec3;
  offset: Vec3;
  min: number;
  max: number;
}

export interface FigureChain {
  name: string;
  joints: FigureJoint[];
  /** indices into the 17-vector of joint angles */
  indices: number[];
}

const Z: Vec3 = [0, 0, 1];
const Y: Vec3 = [0, 1, 0];
const X: Vec3 = [1, 0, 0];

function arm(side: "l" | "r", sign: number, base: number): FigureChain {
  return {
    name: side === "l" ? "arm_left" : "arm_right",
    indices: [base, base + 1, base + 2, base + 3, base + 4],
    joints: [
      { name: `${side}_shoulder_pitch`, axis: Y, offset: [0, sign * 0.05, 0], min: -2.6, max: 2.6 },
      {
        name: `${side}_shoulder_roll`,
        axis: X,
        offset: [0, sign * 0.03, 0],
        min: sign > 0 ? -0.4 : -2.8,
        max: sign > 0 ? 2.8 : 0.4,
      },
      { name: `${side}_upper_arm_yaw`, axis: Z, offset: [0, 0, -0.18], min: -1.6, max: 1.6 },
      { name: `${side}_elbow_pitch`, axis: Y, offset: [0, 0, -0.16], min: -2.3, max: 0.3 },
      { name: `${side}_wrist_yaw`, axis: Z, offset: [0, 0, -0.05], min: -1.8, max: 1.8 },
    ],
  };
}

export const FIGURE_CHAINS: FigureChain[] = [
  {
    name: "head",
    indices: [0, 1, 2],
    joints: [
      { name: "head_yaw", axis: Z, offset: [0, 0, 0.06], min: -1.5, max: 1.5 },
      { name: "head_pitch", axis: Y, offset: [0, 0, 0.05], min: -0.7, max: 0.7 },
      { name: "head_roll", axis: X, offset: [0, 0, 0.09], min: -0.5, max: 0.5 },
    ],
  },
  arm("l", 1, 3),
  arm("r", -1, 8),
];

/** joint limits for all 17 joints in bus order, for slider clamping */
export const JOINT_LIMITS: { name: string; min: number; max: number }[] = [
  ...FIGURE_CHAINS[0].joints,
  ...FIGURE_CHAINS[1].joints,
  ...FIGURE_CHAINS[2].joints,
  { name: "l_hand_tendon", min: 0.0, max: 1.6 },
  { name: "r_hand_tendon", min: 0.0, max: 1.6 },
  { name: "ear_left", min: -0.9, max: 0.9 },
  { name: "ear_right", min: -0.9, max: 0.9 },
].map((j) => ({ name: j.name, min: j.min, max: j.max }));

export function clampAngle(index: number, value: number): number {
  const lim = JOINT_LIMITS[index];
  return Math.min(Math.max(value, lim.min), lim.max);
}

function quatFromAxisAngle(axis: Vec3, angle: number): Quat {
  const h = angle / 2;
  const s = Math.sin(h);
  return [Math.cos(h), s * axis[0], s * axis[1], s * axis[2]];
}

function quatMul(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

function rotate(q: Quat, v: Vec3): Vec3 {
  const [w, ux, uy, uz] = q;
  const cx = uy * v[2] - uz * v[1];
  const cy = uz * v[0] - ux * v[2];
  const cz = ux * v[1] - uy * v[0];
  const dx = uy * cz - uz * cy;
  const dy = uz * cx - ux * cz;
  const dz = ux * cy - uy * cx;
  return [v[0] + 2 * w * cx + 2 * dx, v[1] + 2 * w * cy + 2 * dy, v[2] + 2 * w * cz + 2 * dz];
}

/** World-frame waypoints of one chain (root first), from the 17-angle vector. */
export function chainWaypoints(chain: FigureChain, angles: number[], root: Vec3): Vec3[] {
  const points: Vec3[] = [root];
  let pos: Vec3 = root;
  let ori: Quat = [1, 0, 0, 0];
  for (let k = 0; k < chain.joints.length; k++) {
    const joint = chain.joints[k];
    ori = quatMul(ori, quatFromAxisAngle(joint.axis, angles[chain.indices[k]] ?? 0));
    const step = rotate(ori, joint.offset);
    pos = [pos[0] + step[0], pos[1] + step[1], pos[2] + step[2]];
    points.push(pos);
  }
  return points;
}

/** Anatomical anchor points; rendering-only, the server math is unanchored. */
export const CHAIN_ROOTS: Record<string, Vec3> = {
  head: [0, 0, 0.2],
  arm_left: [0, 0.1, 0.18],
  arm_right: [0, -0.1, 0.18],
};

export interface ProjectedPoint {
  x: number;
  y: number;
}

/** Front view projection: screen x left-right, screen y up. */
export function projectFront(p: Vec3): ProjectedPoint {
  return { x: -p[1], y: p[2] };
}

export function figurePolylines(angles: number[]): ProjectedPoint[][] {
  const lines = FIGURE_CHAINS.map((chain) =>
    chainWaypoints(chain, angles, CHAIN_ROOTS[chain.name]).map(projectFront),
  );
  // torso line from hip to neck
  lines.push([projectFront([0, 0, -0.25]), projectFront([0, 0, 0.2])]);
  return lines;
}
