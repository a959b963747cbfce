"""Synthetic ground-truth harness: camera sampling, observation rendering,
estimation-error measurement, the pose/uncertainty correlation experiment and
greedy key-frame compaction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .calibrate import (
    CalibrationResult,
    FrameObservation,
    InsufficientDataError,
    covariance,
    estimate_homography,
    index_of_dispersion,
    pose_from_homography,
    refine,
)
from .geometry import (
    N_INTRINSICS,
    BoardGeometry,
    BoardPose,
    IntrinsicParams,
    ProjectionError,
    distortion_magnitude_map,
    project_points,
)
from .poses import (
    MapExhaustedError,
    PoseConfig,
    TargetGroup,
    VisitedMask,
    distortion_target,
    init_targets,
    pinhole_target,
    _pose_from_rotation,
)
from .session import Phase, SessionConfig, SessionState, submit_frame

logger = logging.getLogger(__name__)

DEFAULT_IMAGE_SIZE = (1280, 720)


def default_real_camera() -> "GroundTruthCamera":
    """Webcam-like reference model used as the sampling center in experiments."""
    return GroundTruthCamera(
        intrinsics=IntrinsicParams(
            fx=1000.0, fy=1000.0, cx=640.0, cy=360.0,
            k1=-0.1, k2=0.03, k3=0.0, p1=0.001, p2=0.001,
        ),
        image_size=DEFAULT_IMAGE_SIZE,
    )


@dataclass(frozen=True)
class GroundTruthCamera:
    intrinsics: IntrinsicParams
    image_size: tuple[int, int]

    def __post_init__(self) -> None:
        w, h = self.image_size
        if not (0 <= self.intrinsics.cx <= w and 0 <= self.intrinsics.cy <= h):
            raise ValueError("principal point outside image")


@dataclass
class TestSet:
    """Held-out frames with known generating poses."""

    frames: list[tuple[BoardPose, FrameObservation]]

    def __len__(self) -> int:
        return len(self.frames)


def sample_camera(
    c_real: IntrinsicParams,
    deviation: float,
    seed: int,
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE,
    max_attempts: int = 100,
) -> GroundTruthCamera:
    """Draw C ~ N(C_real, diag(deviation * |C_real|)); resample on
    non-positive focal lengths."""
    if deviation < 0:
        raise ValueError("deviation must be non-negative")
    rng = np.random.default_rng(seed)
    base = c_real.to_array()
    std = np.sqrt(deviation * np.abs(base))
    for _ in range(max_attempts):
        sample = base + std * rng.standard_normal(N_INTRINSICS)
        if sample[0] > 0 and sample[1] > 0:
            w, h = image_size
            sample[2] = np.clip(sample[2], 0, w)
            sample[3] = np.clip(sample[3], 0, h)
            return GroundTruthCamera(IntrinsicParams.from_array(sample), image_size)
    raise RuntimeError("could not sample positive focal lengths")


def render_observation(
    pose: BoardPose,
    cam: GroundTruthCamera,
    noise_sigma: float,
    seed: int | np.random.Generator,
    board: BoardGeometry | None = None,
) -> FrameObservation:
    """Project the board corners, keep in-bounds detections, add pixel noise."""
    board = board or BoardGeometry()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pix = project_points(board.object_points(), pose, cam.intrinsics)
    w, h = cam.image_size
    inside = (pix[:, 0] >= 0) & (pix[:, 0] < w) & (pix[:, 1] >= 0) & (pix[:, 1] < h)
    ids = np.flatnonzero(inside)
    if len(ids) == 0:
        raise ProjectionError("no board corner projects inside the image")
    noisy = pix[inside] + rng.normal(0.0, noise_sigma, (len(ids), 2)) if noise_sigma > 0 else pix[inside]
    return FrameObservation(ids, noisy)


def fit_pose(
    frame: FrameObservation,
    params: IntrinsicParams,
    board: BoardGeometry | None = None,
) -> tuple[BoardPose, float]:
    """Extrinsics-only fit of one frame under fixed intrinsics.

    Returns (pose, residual_rms in pixels per coordinate).
    """
    board = board or BoardGeometry()
    H = estimate_homography(frame.object_points(board)[:, :2], frame.pixels)
    init = pose_from_homography(H, params)
    mask = np.ones(N_INTRINSICS, dtype=bool)
    result = refine(
        [frame], params, [init], board=board, fixed_mask=mask,
        max_iterations=50, compute_covariance=False,
    )
    return result.poses[0], result.residual_rms


def estimation_error(
    c_est: IntrinsicParams,
    test: TestSet,
    board: BoardGeometry | None = None,
) -> float:
    """Held-out RMS reprojection error (pixels per coordinate).

    Each test frame's pose is re-fit under the fixed candidate intrinsics so
    the score reflects intrinsics quality only; frames whose pose fit fails
    are excluded with a warning.
    """
    board = board or BoardGeometry()
    if len(test) == 0:
        raise ValueError("empty test set")
    sq_sum = 0.0
    n_coords = 0
    failures = 0
    for _, frame in test.frames:
        try:
            pose, _ = fit_pose(frame, c_est, board)
            pix = project_points(frame.object_points(board), pose, c_est)
        except Exception:
            failures += 1
            continue
        d = pix - frame.pixels
        sq_sum += float((d * d).sum())
        n_coords += d.size
    if failures:
        logger.warning("estimation_error: %d/%d test frames excluded", failures, len(test))
    if n_coords == 0:
        raise RuntimeError("all test-frame pose fits failed")
    return float(np.sqrt(sq_sum / n_coords))


def make_test_set(
    cam: GroundTruthCamera,
    n_frames: int = 50,
    noise_sigma: float = 1.0,
    seed: int = 0,
    board: BoardGeometry | None = None,
) -> TestSet:
    """Stratified held-out set: tilts spanning +/-60 degrees, distances 1.5-4
    board widths, board centers cycling through all four image quadrants."""
    board = board or BoardGeometry()
    rng = np.random.default_rng(seed)
    board_w = board.squares_x * board.square_length
    quads = [(-1, -1), (1, -1), (-1, 1), (1, 1)]
    frames: list[tuple[BoardPose, FrameObservation]] = []
    tilts = np.linspace(-60.0, 60.0, n_frames)
    rng.shuffle(tilts)
    i = 0
    attempts = 0
    while len(frames) < n_frames and attempts < 20 * n_frames:
        attempts += 1
        tilt = tilts[len(frames)]
        axis = "x" if i % 2 == 0 else "y"
        qx, qy = quads[i % 4]
        dist = rng.uniform(1.5, 4.0) * board_w
        R = (
            Rotation.from_euler("z", rng.uniform(0, 360), degrees=True)
            * Rotation.from_euler(axis, tilt, degrees=True)
        ).as_matrix()
        off = np.array([qx * rng.uniform(0.05, 0.25), qy * rng.uniform(0.05, 0.2)])
        center = np.array([off[0] * dist, off[1] * dist, dist])
        pose = _pose_from_rotation(R, board, center)
        try:
            frame = render_observation(pose, cam, noise_sigma, rng, board)
        except ProjectionError:
            continue
        if len(frame) < 15:
            continue
        frames.append((pose, frame))
        i += 1
    if len(frames) < n_frames:
        raise RuntimeError("could not generate the requested test set")
    return TestSet(frames)


def well_spread_poses(
    cam: GroundTruthCamera, n: int = 10, seed: int = 0, board: BoardGeometry | None = None
) -> list[BoardPose]:
    """A well-conditioned pose set: strong two-axis tilts, near boards,
    quadrant coverage. Used as the baseline in covariance experiments."""
    board = board or BoardGeometry()
    rng = np.random.default_rng(seed)
    board_w = board.squares_x * board.square_length
    quads = [(-1, -1), (1, -1), (-1, 1), (1, 1)]
    poses = []
    while len(poses) < n:
        qx, qy = quads[len(poses) % 4]
        dist = rng.uniform(1.0, 1.6) * board_w
        R = Rotation.from_euler(
            "xyz",
            [
                rng.uniform(17.0, 52.0) * rng.choice([-1, 1]),
                rng.uniform(17.0, 52.0) * rng.choice([-1, 1]),
                rng.uniform(0, 360.0),
            ],
            degrees=True,
        ).as_matrix()
        center = np.array(
            [qx * rng.uniform(0.05, 0.15) * dist, qy * rng.uniform(0.03, 0.1) * dist, dist]
        )
        pose = _pose_from_rotation(R, board, center)
        try:
            pix = project_points(board.object_points(), pose, cam.intrinsics)
        except ProjectionError:
            continue
        w, h = cam.image_size
        inside = (pix[:, 0] >= 0) & (pix[:, 0] < w) & (pix[:, 1] >= 0) & (pix[:, 1] < h)
        if inside.sum() < 36:
            continue
        poses.append(pose)
    return poses


def fronto_parallel_poses(
    cam: GroundTruthCamera, n: int = 10, seed: int = 0, board: BoardGeometry | None = None
) -> list[BoardPose]:
    """Degenerate all-fronto-parallel pose set (varied distance/offset only)."""
    board = board or BoardGeometry()
    rng = np.random.default_rng(seed)
    board_w = board.squares_x * board.square_length
    poses = []
    for i in range(n):
        dist = rng.uniform(1.3, 3.0) * board_w
        center = np.array(
            [rng.uniform(-0.08, 0.08) * dist, rng.uniform(-0.05, 0.05) * dist, dist]
        )
        poses.append(_pose_from_rotation(np.eye(3), board, center))
    return poses


def match_overlay_pose(
    target_pose: BoardPose,
    overlay_intrinsics: IntrinsicParams,
    true_intrinsics: IntrinsicParams,
    board: BoardGeometry | None = None,
) -> BoardPose:
    """Board pose whose true-camera projection matches the guidance overlay.

    The overlay is rendered with the current (possibly wrong) estimate; a
    user aligns the physical board with it, so the reached pose is the best
    fit of the overlay's corner pixels under the true camera.
    """
    board = board or BoardGeometry()
    desired = project_points(board.object_points(), target_pose, overlay_intrinsics)
    frame = FrameObservation(np.arange(board.n_corners), desired)
    pose, _ = fit_pose(frame, true_intrinsics, board)
    return pose


@dataclass
class GuidedSessionResult:
    state: SessionState
    frames_used: int
    converged: bool
    iod_history: list[np.ndarray] = field(default_factory=list)


def run_guided_session(
    cam: GroundTruthCamera,
    noise_sigma: float = 1.0,
    convergence_threshold: float = 0.1,
    seed: int = 0,
    max_keyframes: int = 40,
    board: BoardGeometry | None = None,
) -> GuidedSessionResult:
    """Drive a session with a perfect-pose actor: every requested target pose
    is answered with an observation rendered exactly at that pose."""
    board = board or BoardGeometry()
    rng = np.random.default_rng(seed)
    config = SessionConfig(
        convergence_threshold=convergence_threshold, image_size=cam.image_size
    )
    state = SessionState.new(config, board)
    iod_history: list[np.ndarray] = []

    def observe(pose: BoardPose) -> tuple[FrameObservation, FrameObservation]:
        # The virtual board is perfectly still: the consecutive-frame pair
        # used by the stillness gate carries the same detection.
        cur = render_observation(pose, cam, noise_sigma, rng, board)
        return cur, cur

    # Bootstrap with a generic tilted, centered board.
    R = Rotation.from_euler("x", 30, degrees=True).as_matrix()
    boot_pose = _pose_from_rotation(
        R, board, np.array([0.0, 0.0, 2.0 * board.squares_x * board.square_length])
    )
    cur, prev = observe(boot_pose)
    state, verdict = submit_frame(state, cur, prev)
    if not verdict.accepted:
        return GuidedSessionResult(state, 0, False, iod_history)

    stalls = 0
    while state.phase is not Phase.CONVERGED and len(state.keyframes) < max_keyframes:
        assert state.current_target is not None
        n_before = len(state.keyframes)
        actor_pose = match_overlay_pose(
            state.current_target.pose, state.working_intrinsics(), cam.intrinsics, board
        )
        cur, prev = observe(actor_pose)
        state, verdict = submit_frame(state, cur, prev)
        if state.estimate is not None and verdict.accepted:
            iod_history.append(state.estimate.iod.copy())
        if len(state.keyframes) == n_before:
            stalls += 1
            if stalls > 5:
                break
        else:
            stalls = 0
    return GuidedSessionResult(
        state, len(state.keyframes), state.phase is Phase.CONVERGED, iod_history
    )


@dataclass
class CorrelationResult:
    """Per-frame-index mean and spread of the parameter standard deviations."""

    layout: str
    frame_index: np.ndarray  # keyframe counts, starting at 2
    sigma_mean: np.ndarray  # (n_index, 9)
    sigma_std: np.ndarray  # (n_index, 9)
    n_cameras: int
    n_failed: int
    sigma_traces: np.ndarray | None = None  # (n_cameras, n_index, 9)
    value_traces: np.ndarray | None = None  # (n_cameras, n_index, 9)
    iod_traces: np.ndarray | None = None  # (n_cameras, n_index, 9)


def _layout_groups(layout: str) -> list[TargetGroup]:
    if layout == "KFirst":
        first, second = TargetGroup.PINHOLE, TargetGroup.DISTORTION
    elif layout == "DistFirst":
        first, second = TargetGroup.DISTORTION, TargetGroup.PINHOLE
    else:
        raise ValueError(f"unknown layout {layout!r} (expected KFirst or DistFirst)")
    return [first] * 8 + [second] * 10


def _experiment_pose_sequence(
    cam: GroundTruthCamera, layout: str, board: BoardGeometry, config: PoseConfig
) -> list[BoardPose]:
    """2 init poses + 18 group poses generated against the ground truth."""
    params = cam.intrinsics
    targets = init_targets(board, cam.image_size, params, config)
    poses = [t.pose for t in targets]
    pinhole_steps = {i: 0 for i in range(4)}
    pinhole_cycle = [0, 1, 2, 3]
    pc = 0
    dist_map = distortion_magnitude_map(params, cam.image_size[0], cam.image_size[1])
    visited = VisitedMask.empty_for(dist_map)
    for group in _layout_groups(layout):
        if group is TargetGroup.PINHOLE:
            idx = pinhole_cycle[pc % 4]
            pc += 1
            t = pinhole_target(idx, pinhole_steps[idx], board, params, cam.image_size, config)
            pinhole_steps[idx] += 1
            poses.append(t.pose)
        else:
            try:
                t, visited = distortion_target(
                    dist_map, visited, board, params, cam.image_size, config
                )
            except MapExhaustedError:
                visited = VisitedMask.empty_for(dist_map)
                t, visited = distortion_target(
                    dist_map, visited, board, params, cam.image_size, config
                )
            poses.append(t.pose)
    return poses


def run_correlation_experiment(
    n_cameras: int = 20,
    layout: str = "KFirst",
    seed: int = 0,
    c_real: IntrinsicParams | None = None,
    deviation: float = 0.1,
    noise_sigma: float = 1.0,
    board: BoardGeometry | None = None,
) -> CorrelationResult:
    """Reproduce the pose-strategy / parameter-uncertainty correlation study.

    For each sampled camera, a 20-frame sequence (2 init + 8 of one group +
    10 of the other) is calibrated incrementally, recording sigma of every
    parameter after each frame.
    """
    board = board or BoardGeometry()
    c_real = c_real or default_real_camera().intrinsics
    config = PoseConfig()
    groups = _layout_groups(layout)  # validates the layout early
    del groups
    traces = []
    values = []
    iods = []
    n_failed = 0
    for ci in range(n_cameras):
        try:
            cam = sample_camera(c_real, deviation, seed=seed * 1000 + ci)
            rng = np.random.default_rng(seed * 7777 + ci)
            poses = _experiment_pose_sequence(cam, layout, board, config)
            frames = [
                render_observation(p, cam, noise_sigma, rng, board) for p in poses
            ]
            sigmas = []
            vals = []
            iod_rows = []
            intr = cam.intrinsics
            est_poses = poses[:2]
            for m in range(2, len(frames) + 1):
                result = refine(
                    frames[:m],
                    intr,
                    list(est_poses) + [poses[m - 1]] if m > 2 else list(poses[:m]),
                    board=board,
                    image_size=cam.image_size,
                    compute_covariance=False,
                )
                intr = result.intrinsics
                est_poses = result.poses
                # Near-zero truncation: phases that leave a parameter group
                # unconstrained must show honestly large sigma, not a clipped one.
                variances, _ = covariance(
                    frames[:m], intr, list(est_poses), board, rel_tolerance=1e-15
                )
                sigmas.append(np.sqrt(variances))
                vals.append(intr.to_array())
                iod_rows.append(index_of_dispersion(intr, variances))
            traces.append(np.asarray(sigmas))
            values.append(np.asarray(vals))
            iods.append(np.asarray(iod_rows))
        except Exception:
            logger.warning("correlation experiment: camera %d failed", ci, exc_info=True)
            n_failed += 1
    if not traces:
        raise RuntimeError("all cameras failed")
    stack = np.stack(traces)
    return CorrelationResult(
        layout=layout,
        frame_index=np.arange(2, 2 + stack.shape[1]),
        sigma_mean=stack.mean(axis=0),
        sigma_std=stack.std(axis=0),
        n_cameras=len(traces),
        n_failed=n_failed,
        sigma_traces=stack,
        value_traces=np.stack(values),
        iod_traces=np.stack(iods),
    )


@dataclass
class CompactionResult:
    selected_indices: list[int]
    error_trace: list[float]

    @property
    def n_selected(self) -> int:
        return len(self.selected_indices)


def greedy_compact(
    sequence: list[FrameObservation],
    test: TestSet,
    initial_intrinsics: IntrinsicParams,
    board: BoardGeometry | None = None,
    image_size: tuple[int, int] | None = None,
) -> CompactionResult:
    """Greedy key-frame subset selection against a held-out test set.

    The two leading (initialization) frames are kept unconditionally; then
    the remaining frame that most reduces the held-out estimation error is
    added until no addition reduces it.
    """
    board = board or BoardGeometry()
    if len(sequence) < 2:
        raise InsufficientDataError("sequence must start with the two init frames")

    def calibrate(indices: list[int]) -> IntrinsicParams:
        frames = [sequence[i] for i in indices]
        poses = []
        for f in frames:
            H = estimate_homography(f.object_points(board)[:, :2], f.pixels)
            poses.append(pose_from_homography(H, initial_intrinsics))
        return refine(
            frames, initial_intrinsics, poses, board=board,
            image_size=image_size, compute_covariance=False,
        ).intrinsics

    selected = [0, 1]
    err = estimation_error(calibrate(selected), test, board)
    trace = [err]
    remaining = list(range(2, len(sequence)))
    while remaining:
        best_err, best_i = None, None
        for i in remaining:
            try:
                cand_err = estimation_error(calibrate(selected + [i]), test, board)
            except Exception:
                continue
            if best_err is None or cand_err < best_err:
                best_err, best_i = cand_err, i
        if best_err is None or best_err >= err:
            break
        selected.append(best_i)
        remaining.remove(best_i)
        err = best_err
        trace.append(err)
    return CompactionResult(selected_indices=selected, error_trace=trace)
