"""Interactive calibration state machine.

Bootstrap, two-frame initialization, MaxIOD-driven refinement with
per-parameter convergence tracking, frame-acceptance heuristics and Jaccard
overlap guidance.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .calibrate import (
    CalibrationResult,
    DegenerateConfigurationError,
    FrameObservation,
    InsufficientDataError,
    bootstrap_single_frame,
    estimate_homography,
    pose_from_homography,
    refine,
)
from .geometry import (
    DISTORTION_INDICES,
    N_INTRINSICS,
    PINHOLE_INDICES,
    BoardGeometry,
    BoardPose,
    IntrinsicParams,
    distortion_magnitude_map,
    project_points,
)
from .poses import (
    MapExhaustedError,
    PoseConfig,
    TargetGroup,
    TargetPose,
    VisitedMask,
    distortion_target,
    init_targets,
    pinhole_target,
)


class Phase(enum.Enum):
    AWAITING_BOOTSTRAP = "awaiting_bootstrap"
    AWAITING_INIT1 = "awaiting_init1"
    AWAITING_INIT2 = "awaiting_init2"
    REFINING = "refining"
    CONVERGED = "converged"


class RejectReason(enum.Enum):
    POSE_NOT_REACHED = "pose_not_reached"
    NOT_STILL = "not_still"
    TOO_FEW_POINTS = "too_few_points"
    SESSION_COMPLETE = "session_complete"
    ACCEPTED = "accepted"


@dataclass(frozen=True)
class FrameVerdict:
    accepted: bool
    reason: RejectReason
    jaccard: float

    def __post_init__(self) -> None:
        assert not self.accepted or self.reason is RejectReason.ACCEPTED


@dataclass(frozen=True)
class SessionConfig:
    convergence_threshold: float = 0.1
    jaccard_min: float = 0.8
    stillness_px: float = 1.5
    image_size: tuple[int, int] = (1280, 720)
    pose: PoseConfig = field(default_factory=PoseConfig)
    distortion_map_step: int = 4


@dataclass(frozen=True)
class SessionState:
    """Immutable session snapshot; `submit_frame` returns a new state."""

    config: SessionConfig
    board: BoardGeometry
    phase: Phase = Phase.AWAITING_BOOTSTRAP
    keyframes: tuple[FrameObservation, ...] = ()
    current_target: TargetPose | None = None
    estimate: CalibrationResult | None = None
    converged_mask: tuple[bool, ...] = (False,) * N_INTRINSICS
    previous_variance: tuple[float | None, ...] = (None,) * N_INTRINSICS
    visited: VisitedMask | None = None
    pinhole_steps: tuple[int, ...] = (0, 0, 0, 0)
    accepted_target_poses: tuple[BoardPose, ...] = ()
    bootstrap_intrinsics: IntrinsicParams | None = None

    @classmethod
    def new(
        cls, config: SessionConfig | None = None, board: BoardGeometry | None = None
    ) -> "SessionState":
        return cls(config=config or SessionConfig(), board=board or BoardGeometry())

    def working_intrinsics(self) -> IntrinsicParams:
        """Best current estimate; falls back to the f = image-width prior."""
        if self.estimate is not None:
            return self.estimate.intrinsics
        if self.bootstrap_intrinsics is not None:
            return self.bootstrap_intrinsics
        w, h = self.config.image_size
        return IntrinsicParams(fx=float(w), fy=float(w), cx=w / 2.0, cy=h / 2.0)

    def to_dict(self) -> dict:
        return {
            "phase": self.phase.value,
            "keyframe_count": len(self.keyframes),
            "current_target": self.current_target.to_dict() if self.current_target else None,
            "iod": self.estimate.iod.tolist() if self.estimate else None,
            "converged_mask": list(self.converged_mask),
            "estimate": self.estimate.to_dict() if self.estimate else None,
        }


def min_points_required(frames_so_far: int, is_init: bool) -> int:
    """Factor-five heuristic: 27 correspondences per init frame, 15 after.

    Init solves 9 + 6*2 = 21 unknowns from two frames; each later frame adds
    6 pose unknowns, so ceil(5 * 6 / 2) = 15 points suffice.
    """
    return 27 if is_init or frames_so_far < 2 else 15


def is_still(
    current: FrameObservation, previous: FrameObservation, threshold_px: float = 1.5
) -> bool:
    """All current corners re-detected in the previous frame with mean motion
    below the threshold."""
    prev_index = {int(c): i for i, c in enumerate(previous.corner_ids)}
    rows = []
    for i, c in enumerate(current.corner_ids):
        j = prev_index.get(int(c))
        if j is None:
            return False
        rows.append((i, j))
    if not rows:
        return False
    cur = current.pixels[[i for i, _ in rows]]
    prev = previous.pixels[[j for _, j in rows]]
    return float(np.linalg.norm(cur - prev, axis=1).mean()) < threshold_px


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _cross2(u: np.ndarray, v: np.ndarray) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def _clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of convex `subject` by convex `clip`."""
    # Ensure counter-clockwise clip polygon for a consistent inside test.
    if _cross2(clip[1] - clip[0], clip[2] - clip[1]) < 0:
        clip = clip[::-1]
    output = [tuple(p) for p in subject]
    for i in range(len(clip)):
        a, b = clip[i], clip[(i + 1) % len(clip)]
        edge = b - a
        inputs, output = output, []
        if not inputs:
            break
        for j in range(len(inputs)):
            p = np.asarray(inputs[j])
            q = np.asarray(inputs[(j + 1) % len(inputs)])
            p_in = _cross2(edge, p - a) >= 0
            q_in = _cross2(edge, q - a) >= 0
            if p_in:
                output.append(tuple(p))
            if p_in != q_in:
                d = q - p
                denom = _cross2(edge, d)
                if abs(denom) > 1e-12:
                    t = _cross2(edge, a - p) / denom
                    output.append(tuple(p + t * d))
    return np.asarray(output) if output else np.empty((0, 2))


def polygon_intersection_area(a: np.ndarray, b: np.ndarray) -> float:
    inter = _clip_convex(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    if len(inter) < 3:
        return 0.0
    return _polygon_area(inter)


def jaccard_overlap(
    target: TargetPose,
    estimated_pose: BoardPose,
    params: IntrinsicParams,
    board: BoardGeometry | None = None,
) -> float:
    """Intersection-over-union of the target overlay and the board outline
    projected from the estimated pose."""
    board = board or BoardGeometry()
    try:
        est_poly = project_points(board.outer_corners(), estimated_pose, params)
    except Exception:
        return 0.0
    tgt_poly = np.asarray(target.overlay_polygon, dtype=np.float64)
    area_t = _polygon_area(tgt_poly)
    area_e = _polygon_area(est_poly)
    if area_t <= 0 or area_e <= 0:
        return 0.0
    inter = polygon_intersection_area(tgt_poly, est_poly)
    union = area_t + area_e - inter
    return inter / union if union > 0 else 0.0


def convergence_step(
    variance_new: float, variance_old: float, threshold: float
) -> bool:
    """Variance ratio test: converged when the reduction 1 - new/old falls
    below the threshold."""
    if variance_old <= 0:
        return False
    return 1.0 - variance_new / variance_old < threshold


def _estimate_frame_pose(
    frame: FrameObservation, board: BoardGeometry, params: IntrinsicParams
) -> BoardPose:
    """Best-fit board pose of a frame under the current intrinsic estimate.

    The raw homography decomposition is unreliable when the intrinsic
    estimate is still crude; an extrinsics-only refinement keeps the pose's
    reprojection consistent with the observation.
    """
    H = estimate_homography(frame.object_points(board)[:, :2], frame.pixels)
    init = pose_from_homography(H, params)
    mask = np.ones(N_INTRINSICS, dtype=bool)
    result = refine(
        [frame], params, [init], board=board, fixed_mask=mask,
        max_iterations=50, compute_covariance=False,
    )
    return result.poses[0]


def _group_of(index: int) -> TargetGroup:
    return TargetGroup.PINHOLE if index in PINHOLE_INDICES else TargetGroup.DISTORTION


def _group_indices(group: TargetGroup) -> tuple[int, ...]:
    return PINHOLE_INDICES if group is TargetGroup.PINHOLE else DISTORTION_INDICES


def _select_next_target(state: SessionState) -> SessionState:
    """Pick the unconverged parameter with maximum IOD and generate its pose."""
    assert state.estimate is not None
    iod = state.estimate.iod
    candidates = [i for i in range(N_INTRINSICS) if not state.converged_mask[i]]
    if not candidates:
        return replace(state, phase=Phase.CONVERGED, current_target=None)
    # Ties broken by lowest canonical index (argmax on the filtered list).
    best = candidates[int(np.argmax([iod[i] for i in candidates]))]
    params = state.estimate.intrinsics
    cfg = state.config
    if _group_of(best) is TargetGroup.PINHOLE:
        steps = list(state.pinhole_steps)
        target = pinhole_target(
            best, steps[best], state.board, params, cfg.image_size, cfg.pose
        )
        steps[best] += 1
        return replace(
            state, phase=Phase.REFINING, current_target=target, pinhole_steps=tuple(steps)
        )
    dist_map = distortion_magnitude_map(
        params, cfg.image_size[0], cfg.image_size[1], step=cfg.distortion_map_step
    )
    visited = state.visited
    if visited is None or visited.grid.shape != dist_map.grid_shape:
        visited = VisitedMask.empty_for(dist_map)
    try:
        target, visited = distortion_target(
            dist_map, visited, state.board, params, cfg.image_size, cfg.pose
        )
    except MapExhaustedError:
        # The map changes as the estimate improves; restart the search.
        visited = VisitedMask.empty_for(dist_map)
        target, visited = distortion_target(
            dist_map, visited, state.board, params, cfg.image_size, cfg.pose
        )
    target = replace(target, targeted_parameter=best)
    return replace(state, phase=Phase.REFINING, current_target=target, visited=visited)


def _recalibrate(state: SessionState, frames: tuple[FrameObservation, ...]) -> CalibrationResult:
    params = state.working_intrinsics()
    init_poses = [_estimate_frame_pose(f, state.board, params) for f in frames]
    return refine(
        list(frames),
        params,
        init_poses,
        board=state.board,
        image_size=state.config.image_size,
    )


def _apply_convergence(
    state: SessionState, result: CalibrationResult, captured_group: TargetGroup
) -> SessionState:
    """Update per-parameter previous variances and convergence flags.

    The ratio test only compares variances across captures of the same
    parameter group; the complementary group's baseline is left untouched.
    """
    mask = list(state.converged_mask)
    prev = list(state.previous_variance)
    threshold = state.config.convergence_threshold
    if captured_group is TargetGroup.INIT:
        for i in range(N_INTRINSICS):
            prev[i] = float(result.variances[i])
    else:
        for i in _group_indices(captured_group):
            new_var = float(result.variances[i])
            if prev[i] is not None and not mask[i]:
                if convergence_step(new_var, prev[i], threshold):
                    mask[i] = True
            prev[i] = new_var
    return replace(state, converged_mask=tuple(mask), previous_variance=tuple(prev))


def submit_frame(
    state: SessionState,
    frame: FrameObservation,
    frame_prev: FrameObservation | None,
) -> tuple[SessionState, FrameVerdict]:
    """Feed one detected frame through the acceptance gates and, if accepted,
    recalibrate and advance the guidance state machine."""
    if state.phase is Phase.CONVERGED:
        return state, FrameVerdict(False, RejectReason.SESSION_COMPLETE, 0.0)
    cfg = state.config
    is_init = state.phase in (
        Phase.AWAITING_BOOTSTRAP,
        Phase.AWAITING_INIT1,
        Phase.AWAITING_INIT2,
    )
    if len(frame) < min_points_required(len(state.keyframes), is_init):
        return state, FrameVerdict(False, RejectReason.TOO_FEW_POINTS, 0.0)
    if frame_prev is None or not is_still(frame, frame_prev, cfg.stillness_px):
        return state, FrameVerdict(False, RejectReason.NOT_STILL, 0.0)

    if state.phase is Phase.AWAITING_BOOTSTRAP:
        intr, _low_confidence = bootstrap_single_frame(frame, cfg.image_size, state.board)
        target = init_targets(state.board, cfg.image_size, intr, cfg.pose)[0]
        new_state = replace(
            state,
            phase=Phase.AWAITING_INIT1,
            bootstrap_intrinsics=intr,
            current_target=target,
        )
        return new_state, FrameVerdict(True, RejectReason.ACCEPTED, 1.0)

    params = state.working_intrinsics()
    try:
        est_pose = _estimate_frame_pose(frame, state.board, params)
    except (DegenerateConfigurationError, InsufficientDataError):
        return state, FrameVerdict(False, RejectReason.POSE_NOT_REACHED, 0.0)
    assert state.current_target is not None
    jaccard = jaccard_overlap(state.current_target, est_pose, params, state.board)
    if jaccard <= cfg.jaccard_min:
        return state, FrameVerdict(False, RejectReason.POSE_NOT_REACHED, jaccard)

    keyframes = state.keyframes + (frame,)
    accepted_poses = state.accepted_target_poses + (state.current_target.pose,)

    if state.phase is Phase.AWAITING_INIT1:
        target = init_targets(state.board, cfg.image_size, params, cfg.pose)[1]
        new_state = replace(
            state,
            phase=Phase.AWAITING_INIT2,
            keyframes=keyframes,
            accepted_target_poses=accepted_poses,
            current_target=target,
        )
        return new_state, FrameVerdict(True, RejectReason.ACCEPTED, jaccard)

    new_state = replace(
        state, keyframes=keyframes, accepted_target_poses=accepted_poses
    )
    result = _recalibrate(new_state, keyframes)
    new_state = replace(new_state, estimate=result)
    captured_group = (
        TargetGroup.INIT if state.phase is Phase.AWAITING_INIT2 else state.current_target.group
    )
    new_state = _apply_convergence(new_state, result, captured_group)
    new_state = _select_next_target(new_state)
    return new_state, FrameVerdict(True, RejectReason.ACCEPTED, jaccard)
