/** Pure snapshot -> screen-state derivation.
 *
 * The UI never computes calibration quantities; every displayed number is
 * copied from a snapshot field. This module only reshapes them for drawing.
 */

import { PARAM_NAMES, type ParamName, type Polygon, type Snapshot } from "./types";

export const ACCEPT_JACCARD = 0.8;

export interface IodBar {
  name: ParamName;
  value: number;
  /** 0..1 height relative to the current maximum bar. */
  relative: number;
  dimmed: boolean;
}

export interface GroundTruthRow {
  name: ParamName;
  estimate: number;
  truth: number;
}

export interface ViewModel {
  banner: string;
  instruction: string | null;
  framesCaptured: number;
  overlayPolygon: Polygon | null;
  boardPolygon: Polygon | null;
  jaccard: number | null;
  jaccardAccepted: boolean;
  acceptFlash: boolean;
  bars: IodBar[];
  reveal: GroundTruthRow[] | null;
}

const BANNERS: Record<Snapshot["phase"], string> = {
  awaiting_bootstrap: "Show the board",
  awaiting_init1: "Initialization pose 1 of 2",
  awaiting_init2: "Initialization pose 2 of 2",
  refining: "Refining",
  converged: "Converged"
};

function toPolygon(points: number[][] | null | undefined): Polygon | null {
  if (!points) {
    return null;
  }
  return points.map((p) => [p[0], p[1]]);
}

export function deriveViewModel(snapshot: Snapshot): ViewModel {
  const iod = snapshot.iod ?? [];
  const maxIod = Math.max(1e-12, ...iod);
  const bars: IodBar[] = PARAM_NAMES.map((name, i) => ({
    name,
    value: iod[i] ?? 0,
    relative: (iod[i] ?? 0) / maxIod,
    dimmed: snapshot.converged_mask[i] === true
  }));

  const verdict = snapshot.last_verdict;
  const jaccard = verdict ? verdict.jaccard : null;
  const overlay = toPolygon(snapshot.target?.overlay_polygon);

  let reveal: GroundTruthRow[] | null = null;
  if (snapshot.ground_truth && snapshot.estimate) {
    const est = snapshot.estimate.intrinsics;
    reveal = PARAM_NAMES.map((name, i) => ({
      name,
      estimate: est[i],
      truth: snapshot.ground_truth![name]
    }));
  }

  return {
    banner: BANNERS[snapshot.phase] ?? snapshot.phase,
    instruction:
      snapshot.phase === "awaiting_bootstrap" && overlay === null
        ? "Hold the board facing the camera, tilted slightly, until it is captured."
        : null,
    framesCaptured: snapshot.frames_captured,
    overlayPolygon: overlay,
    boardPolygon: toPolygon(snapshot.board_polygon),
    jaccard,
    jaccardAccepted: jaccard !== null && jaccard > ACCEPT_JACCARD,
    acceptFlash: verdict?.accepted === true,
    bars,
    reveal
  };
}

/** True when a newly arrived snapshot represents a fresh capture. */
export function isCaptureEvent(prev: Snapshot | null, next: Snapshot): boolean {
  return prev !== null && next.frames_captured > prev.frames_captured;
}
