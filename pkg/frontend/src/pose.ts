/** Board-pose state and the 6-DOF input mapping.
 *
 * The pose is the board's rigid transform in camera coordinates:
 * drag = in-plane translation, wheel = depth, modifier+drag = tilt,
 * Q/E = in-plane rotation. All deltas are applied incrementally so the
 * board never jumps.
 */

import type { PoseArray } from "./types";

export interface BoardState {
  /** Axis-angle rotation, radians. */
  rvec: [number, number, number];
  /** Translation in board units; tz > 0 is in front of the camera. */
  tvec: [number, number, number];
}

export interface InputTuning {
  /** Board units moved per pixel dragged, scaled by depth. */
  dragGain: number;
  /** Depth multiplier per wheel notch. */
  wheelFactor: number;
  /** Radians of tilt per pixel of modifier-drag. */
  tiltGain: number;
  /** Radians per Q/E key press. */
  rotateStep: number;
  minDepth: number;
  maxDepth: number;
}

export const defaultTuning: InputTuning = {
  dragGain: 0.02,
  wheelFactor: 1.05,
  tiltGain: 0.005,
  rotateStep: Math.PI / 36,
  minDepth: 2,
  maxDepth: 200
};

export function initialBoardState(depth = 20): BoardState {
  return { rvec: [0, 0, 0], tvec: [0, 0, depth] };
}

export function toPoseArray(state: BoardState): PoseArray {
  return [...state.rvec, ...state.tvec] as PoseArray;
}

const clamp = (v: number, lo: number, hi: number): number =>
  Math.min(hi, Math.max(lo, v));

/** Mouse drag without modifier: translate parallel to the image plane.
 * Gain scales with depth so screen motion feels uniform at any distance. */
export function applyDrag(
  state: BoardState,
  dxPx: number,
  dyPx: number,
  tuning: InputTuning = defaultTuning
): BoardState {
  const depthScale = state.tvec[2] / 20;
  const [tx, ty, tz] = state.tvec;
  return {
    rvec: state.rvec,
    tvec: [
      tx + dxPx * tuning.dragGain * depthScale,
      ty + dyPx * tuning.dragGain * depthScale,
      tz
    ]
  };
}

/** Wheel: move along the optical axis, clamped to stay in front of the camera. */
export function applyWheel(
  state: BoardState,
  notches: number,
  tuning: InputTuning = defaultTuning
): BoardState {
  const factor = Math.pow(tuning.wheelFactor, notches);
  const tz = clamp(state.tvec[2] * factor, tuning.minDepth, tuning.maxDepth);
  return { rvec: state.rvec, tvec: [state.tvec[0], state.tvec[1], tz] };
}

/** Modifier+drag: tilt about the image axes. Horizontal drag tilts about
 * the vertical (y) axis, vertical drag about the horizontal (x) axis. */
export function applyTilt(
  state: BoardState,
  dxPx: number,
  dyPx: number,
  tuning: InputTuning = defaultTuning
): BoardState {
  return {
    rvec: composeRotation(state.rvec, [
      dyPx * tuning.tiltGain,
      dxPx * tuning.tiltGain,
      0
    ]),
    tvec: state.tvec
  };
}

/** Q/E: rotate about the optical axis. Positive = counter-clockwise. */
export function applyInPlaneRotation(
  state: BoardState,
  direction: 1 | -1,
  tuning: InputTuning = defaultTuning
): BoardState {
  return {
    rvec: composeRotation(state.rvec, [0, 0, direction * tuning.rotateStep]),
    tvec: state.tvec
  };
}

type Vec3 = [number, number, number];
type Mat3 = [Vec3, Vec3, Vec3];

/** Compose `delta` (applied in camera axes) onto the current axis-angle. */
export function composeRotation(current: Vec3, delta: Vec3): Vec3 {
  return matrixToAxisAngle(multiply(axisAngleToMatrix(delta), axisAngleToMatrix(current)));
}

export function axisAngleToMatrix(r: Vec3): Mat3 {
  const angle = Math.hypot(r[0], r[1], r[2]);
  if (angle < 1e-12) {
    return [
      [1, 0, 0],
      [0, 1, 0],
      [0, 0, 1]
    ];
  }
  const [kx, ky, kz] = [r[0] / angle, r[1] / angle, r[2] / angle];
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  const v = 1 - c;
  return [
    [c + kx * kx * v, kx * ky * v - kz * s, kx * kz * v + ky * s],
    [ky * kx * v + kz * s, c + ky * ky * v, ky * kz * v - kx * s],
    [kz * kx * v - ky * s, kz * ky * v + kx * s, c + kz * kz * v]
  ];
}

export function matrixToAxisAngle(m: Mat3): Vec3 {
  const trace = m[0][0] + m[1][1] + m[2][2];
  const cosA = clamp((trace - 1) / 2, -1, 1);
  const angle = Math.acos(cosA);
  if (angle < 1e-12) {
    return [0, 0, 0];
  }
  const axis: Vec3 = [
    m[2][1] - m[1][2],
    m[0][2] - m[2][0],
    m[1][0] - m[0][1]
  ];
  const norm = Math.hypot(...axis);
  if (norm < 1e-9) {
    // 180-degree rotation: recover the axis from the diagonal
    const d: Vec3 = [
      Math.sqrt(Math.max(0, (m[0][0] + 1) / 2)),
      Math.sqrt(Math.max(0, (m[1][1] + 1) / 2)),
      Math.sqrt(Math.max(0, (m[2][2] + 1) / 2))
    ];
    const k = d[0] >= d[1] && d[0] >= d[2] ? 0 : d[1] >= d[2] ? 1 : 2;
    if (k !== 0 && m[0][k] < 0) d[0] = -d[0];
    if (k !== 1 && m[1][k] < 0) d[1] = -d[1];
    if (k !== 2 && m[2][k] < 0) d[2] = -d[2];
    return [d[0] * angle, d[1] * angle, d[2] * angle];
  }
  return [
    (axis[0] / norm) * angle,
    (axis[1] / norm) * angle,
    (axis[2] / norm) * angle
  ];
}

function multiply(a: Mat3, b: Mat3): Mat3 {
  const out: Mat3 = [
    [0, 0, 0],
    [0, 0, 0],
    [0, 0, 0]
  ];
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    }
  }
  return out;
}
