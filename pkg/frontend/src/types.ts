/** Wire types for the guidance service (/v1). */

export const PARAM_NAMES = [
  "fx", "fy", "cx", "cy", "k1", "k2", "k3", "p1", "p2"
] as const;

export type ParamName = (typeof PARAM_NAMES)[number];

/** [rx, ry, rz, tx, ty, tz] axis-angle rotation + translation. */
export type PoseArray = [number, number, number, number, number, number];

/** Row-major [x, y] pixel vertices. */
export type Polygon = Array<[number, number]>;

export type Phase =
  | "awaiting_bootstrap"
  | "awaiting_init1"
  | "awaiting_init2"
  | "refining"
  | "converged";

export interface TargetDto {
  pose: number[];
  group: string;
  targeted_parameter: string | null;
  overlay_polygon: number[][];
}

export interface VerdictDto {
  accepted: boolean;
  reason: string;
  jaccard: number;
}

export interface EstimateDto {
  intrinsics: number[];
  residual_rms: number;
  variances: number[];
  iod: number[];
  rank_deficient: boolean;
}

export interface Snapshot {
  phase: Phase;
  frames_captured: number;
  image_size: [number, number];
  target: TargetDto | null;
  board_polygon: number[][] | null;
  iod: number[] | null;
  converged_mask: boolean[];
  estimate: EstimateDto | null;
  last_verdict: VerdictDto | null;
  ground_truth?: Record<ParamName, number>;
}

export interface SessionCreated {
  id: string;
  image_size: [number, number];
}

/** Narrow an unknown JSON value into a Snapshot, throwing on shape errors. */
export function parseSnapshot(value: unknown): Snapshot {
  if (typeof value !== "object" || value === null) {
    throw new Error("snapshot is not an object");
  }
  const obj = value as Record<string, unknown>;
  if (typeof obj.phase !== "string") {
    throw new Error("snapshot missing phase");
  }
  if (typeof obj.frames_captured !== "number") {
    throw new Error("snapshot missing frames_captured");
  }
  if (!Array.isArray(obj.converged_mask) || obj.converged_mask.length !== 9) {
    throw new Error("snapshot converged_mask must have 9 entries");
  }
  if (obj.iod !== null && (!Array.isArray(obj.iod) || obj.iod.length !== 9)) {
    throw new Error("snapshot iod must be null or have 9 entries");
  }
  return obj as unknown as Snapshot;
}
