import { describe, expect, it } from "vitest";

import {
  applyDrag,
  applyInPlaneRotation,
  applyTilt,
  applyWheel,
  axisAngleToMatrix,
  composeRotation,
  defaultTuning,
  initialBoardState,
  matrixToAxisAngle,
  toPoseArray
} from "../src/pose";

describe("board state", () => {
  it("starts fronto-parallel in front of the camera", () => {
    const pose = toPoseArray(initialBoardState());
    expect(pose.slice(0, 3)).toEqual([0, 0, 0]);
    expect(pose[5]).toBeGreaterThan(0);
  });

  it("serializes as [rvec, tvec]", () => {
    const state = { rvec: [0.1, 0.2, 0.3] as [number, number, number],
                    tvec: [1, 2, 3] as [number, number, number] };
    expect(toPoseArray(state)).toEqual([0.1, 0.2, 0.3, 1, 2, 3]);
  });
});

describe("drag", () => {
  it("translates in-plane without touching rotation or depth", () => {
    const next = applyDrag(initialBoardState(), 50, -20);
    expect(next.rvec).toEqual([0, 0, 0]);
    expect(next.tvec[0]).toBeGreaterThan(0);
    expect(next.tvec[1]).toBeLessThan(0);
    expect(next.tvec[2]).toBe(initialBoardState().tvec[2]);
  });

  it("moves further per pixel when the board is deeper", () => {
    const near = applyDrag(initialBoardState(10), 100, 0);
    const far = applyDrag(initialBoardState(40), 100, 0);
    expect(far.tvec[0]).toBeGreaterThan(near.tvec[0]);
  });
});

describe("wheel", () => {
  it("scales depth multiplicatively", () => {
    const state = initialBoardState(20);
    const out = applyWheel(applyWheel(state, 1), 1);
    expect(out.tvec[2]).toBeCloseTo(20 * defaultTuning.wheelFactor ** 2);
  });

  it("never pushes the board behind the camera", () => {
    let state = initialBoardState(3);
    for (let i = 0; i < 100; i++) {
      state = applyWheel(state, -1);
    }
    expect(state.tvec[2]).toBe(defaultTuning.minDepth);
  });
});

describe("tilt and rotation", () => {
  it("vertical modifier-drag tilts about the x axis", () => {
    const next = applyTilt(initialBoardState(), 0, 100);
    expect(next.rvec[0]).toBeGreaterThan(0);
    expect(next.rvec[1]).toBeCloseTo(0);
    expect(next.tvec).toEqual(initialBoardState().tvec);
  });

  it("horizontal modifier-drag tilts about the y axis", () => {
    const next = applyTilt(initialBoardState(), 100, 0);
    expect(next.rvec[1]).toBeGreaterThan(0);
    expect(next.rvec[0]).toBeCloseTo(0);
  });

  it("Q and E rotate in opposite directions about the optical axis", () => {
    const q = applyInPlaneRotation(initialBoardState(), 1);
    const e = applyInPlaneRotation(initialBoardState(), -1);
    expect(q.rvec[2]).toBeCloseTo(-e.rvec[2]);
    expect(q.rvec[2]).toBeCloseTo(defaultTuning.rotateStep);
  });

  it("composes increments instead of overwriting", () => {
    let state = initialBoardState();
    for (let i = 0; i < 9; i++) {
      state = applyInPlaneRotation(state, 1);
    }
    expect(state.rvec[2]).toBeCloseTo(9 * defaultTuning.rotateStep);
  });
});

describe("axis-angle conversions", () => {
  it("round-trips arbitrary rotations", () => {
    const samples: Array<[number, number, number]> = [
      [0.3, -0.2, 0.9],
      [1.5, 0.1, 0],
      [0, 0, 3.1],
      [1e-14, 0, 0]
    ];
    for (const r of samples) {
      const back = matrixToAxisAngle(axisAngleToMatrix(r));
      const angle = Math.hypot(...r);
      const backAngle = Math.hypot(...back);
      expect(backAngle).toBeCloseTo(angle, 9);
      if (angle > 1e-9) {
        for (let i = 0; i < 3; i++) {
          expect(back[i]).toBeCloseTo(r[i], 8);
        }
      }
    }
  });

  it("composing a rotation with its inverse is the identity", () => {
    const r: [number, number, number] = [0.4, -0.7, 0.2];
    const inv: [number, number, number] = [-0.4, 0.7, -0.2];
    const out = composeRotation(r, inv);
    expect(Math.hypot(...out)).toBeLessThan(1e-9);
  });
});
