import { describe, expect, it } from "vitest";
import {
  CHAIN_ROOTS,
  FIGURE_CHAINS,
  JOINT_LIMITS,
  chainWaypoints,
  clampAngle,
  figurePolylines,
} from "../src/robotfigure.js";

describe("stick figure kinematics", () => {
  it("zero pose puts each chain tip at the summed offsets", () => {
    const zeros = Array(17).fill(0);
    for (const chain of FIGURE_CHAINS) {
      const points = chainWaypoints(chain, zeros, [0, 0, 0]);
      const expected = chain.joints.reduce(
        (acc, j) => [acc[0] + j.offset[0], acc[1] + j.offset[1], acc[2] + j.offset[2]] as const,
        [0, 0, 0] as const,
      );
      const tip = points[points.length - 1];
      expect(tip[0]).toBeCloseTo(expected[0], 12);
      expect(tip[1]).toBeCloseTo(expected[1], 12);
      expect(tip[2]).toBeCloseTo(expected[2], 12);
    }
  });

  it("quarter turn about z swings the head offset correctly", () => {
    // a yaw about z leaves the (0,0,h) neck column unchanged
    const angles = Array(17).fill(0);
    angles[0] = Math.PI / 2;
    const head = chainWaypoints(FIGURE_CHAINS[0], angles, [0, 0, 0]);
    const tip = head[head.length - 1];
    expect(tip[0]).toBeCloseTo(0, 12);
    expect(tip[1]).toBeCloseTo(0, 12);
    expect(tip[2]).toBeCloseTo(0.2, 12);
  });

  it("elbow bend moves the left arm tip forward", () => {
    const angles = Array(17).fill(0);
    angles[6] = -Math.PI / 2; // l_elbow_pitch, axis y: forearm rotates toward +x
    const arm = chainWaypoints(FIGURE_CHAINS[1], angles, CHAIN_ROOTS.arm_left);
    const tip = arm[arm.length - 1];
    expect(tip[0]).toBeGreaterThan(0.15);
  });

  it("slider clamping respects joint limits", () => {
    expect(clampAngle(0, 9)).toBe(JOINT_LIMITS[0].max);
    expect(clampAngle(0, -9)).toBe(JOINT_LIMITS[0].min);
    expect(clampAngle(13, -1)).toBe(0); // hand tendon lower bound
  });

  it("produces one polyline per chain plus the torso", () => {
    const lines = figurePolylines(Array(17).fill(0));
    expect(lines).toHaveLength(4);
    for (const line of lines) expect(line.length).toBeGreaterThanOrEqual(2);
  });

  it("exposes limits for all 17 joints", () => {
    expect(JOINT_LIMITS).toHaveLength(17);
    for (const lim of JOINT_LIMITS) expect(lim.min).toBeLessThan(lim.max);
  });
});
