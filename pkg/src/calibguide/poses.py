"""Analytic generation of calibration-target board poses.

Pinhole-group poses maximize angular spread via binary subdivision of the
tilt range while avoiding the known singular configurations; distortion-group
poses are placed fronto-parallel over the strongest unvisited region of the
distortion map.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .geometry import (
    BoardGeometry,
    BoardPose,
    DistortionMap,
    IntrinsicParams,
    PARAM_NAMES,
    ProjectionError,
    project_points,
)


class TargetGroup(enum.Enum):
    PINHOLE = "pinhole"
    DISTORTION = "distortion"
    INIT = "init"


class PlacementError(RuntimeError):
    """No board placement satisfies the visibility requirements."""


class MapExhaustedError(RuntimeError):
    """Every region of the distortion map has been visited."""


@dataclass(frozen=True)
class PoseConfig:
    """Tunable constants of the pose generator (defaults from the method)."""

    tilt_range_deg: float = 70.0
    inplane_rotation_deg: float = 22.5
    principal_shift_fraction: float = 0.05
    init_tilt_deg: float = 45.0
    distortion_width_fraction: float = 0.33
    threshold_fraction: float = 0.8
    visibility_margin: float = 0.05
    parallel_tolerance_deg: float = 5.0
    axis_tolerance_deg: float = 2.0
    reflection_tolerance: float = 0.05


@dataclass(frozen=True)
class TargetPose:
    pose: BoardPose
    group: TargetGroup
    targeted_parameter: int | None
    overlay_polygon: np.ndarray  # (4, 2) pixel coordinates of the outer corners

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.to_array().tolist(),
            "group": self.group.value,
            "targeted_parameter": (
                PARAM_NAMES[self.targeted_parameter]
                if self.targeted_parameter is not None
                else None
            ),
            "overlay_polygon": np.asarray(self.overlay_polygon).tolist(),
        }


@dataclass(frozen=True)
class VisitedMask:
    """Excluded distortion-map regions; bits are only ever set within a session."""

    grid: np.ndarray  # boolean, at DistortionMap grid resolution
    step: int

    @classmethod
    def empty_for(cls, dist_map: DistortionMap) -> "VisitedMask":
        return cls(grid=np.zeros(dist_map.grid_shape, dtype=bool), step=dist_map.step)

    @property
    def all_visited(self) -> bool:
        return bool(self.grid.all())


@dataclass(frozen=True)
class SingularityReport:
    parallel_to_image_plane: bool
    axis_aligned: bool
    reflection_violation: bool

    @property
    def any_violation(self) -> bool:
        return self.parallel_to_image_plane or self.axis_aligned or self.reflection_violation


def subdivision_fraction(step: int) -> float:
    """The binary-subdivision sequence 1/4, 3/4, 1/8, 3/8, 5/8, 7/8, 1/16, ...

    Each depth level is completed left-to-right before descending; values are
    the odd multiples of 2^-depth, which never repeat across depths.
    """
    if step < 0:
        raise ValueError("step must be non-negative")
    depth = 2
    remaining = step
    while True:
        count = 2 ** (depth - 1)  # odd numerators at this depth
        if remaining < count:
            return (2 * remaining + 1) / 2.0**depth
        remaining -= count
        depth += 1


def _nth_valid_tilt(step: int, cfg: PoseConfig) -> float:
    """The step-th subdivision tilt angle, skipping near-zero tilts that
    would leave the board parallel to the image plane."""
    found = -1
    i = 0
    while True:
        frac = subdivision_fraction(i)
        angle = -cfg.tilt_range_deg + 2.0 * cfg.tilt_range_deg * frac
        if abs(angle) >= cfg.parallel_tolerance_deg:
            found += 1
            if found == step:
                return angle
        i += 1


def _overlay_polygon(
    pose: BoardPose, board: BoardGeometry, params: IntrinsicParams
) -> np.ndarray:
    return project_points(board.outer_corners(), pose, params)


def _pose_from_rotation(
    R: np.ndarray, board: BoardGeometry, center_cam: np.ndarray
) -> BoardPose:
    """Pose placing the rotated board's center at `center_cam`."""
    t = center_cam - R @ board.center()
    return BoardPose.from_matrix(R, t)


def _fully_visible(
    pose: BoardPose,
    board: BoardGeometry,
    params: IntrinsicParams,
    image_size: tuple[int, int],
    margin: float,
) -> bool:
    w, h = image_size
    try:
        poly = _overlay_polygon(pose, board, params)
    except ProjectionError:
        return False
    mx, my = margin * w, margin * h
    return bool(
        (poly[:, 0] >= mx).all()
        and (poly[:, 0] <= w - mx).all()
        and (poly[:, 1] >= my).all()
        and (poly[:, 1] <= h - my).all()
    )


def _visible_distance(
    R: np.ndarray,
    board: BoardGeometry,
    params: IntrinsicParams,
    image_size: tuple[int, int],
    margin: float,
    offset: np.ndarray | None = None,
) -> float:
    """Smallest board distance with the whole pattern inside the margin inset.

    Binary search on the board-center depth; larger distance shrinks the
    projection, so visibility is monotone in t_z.
    """
    diag = float(np.linalg.norm(board.center())) * 2.0
    off = np.zeros(2) if offset is None else np.asarray(offset, dtype=np.float64)

    def center_at(tz: float) -> np.ndarray:
        return np.array([off[0] * tz, off[1] * tz, tz])

    def visible(tz: float) -> bool:
        return _fully_visible(
            _pose_from_rotation(R, board, center_at(tz)), board, params, image_size, margin
        )

    lo, hi = 0.1 * diag, 200.0 * diag
    if not visible(hi):
        raise PlacementError("board cannot be made fully visible at any distance")
    if visible(lo):
        return lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if visible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _tilt_rotation(angle_deg: float, axis: str, inplane_deg: float) -> np.ndarray:
    tilt = Rotation.from_euler(axis, angle_deg, degrees=True)
    inplane = Rotation.from_euler("z", inplane_deg, degrees=True)
    return (inplane * tilt).as_matrix()


def pinhole_target(
    parameter_index: int,
    step: int,
    board: BoardGeometry,
    params: IntrinsicParams,
    image_size: tuple[int, int],
    config: PoseConfig | None = None,
) -> TargetPose:
    """Target pose for one of fx, fy, cx, cy.

    The board is tilted about the parameter's principal axis by a binary
    subdivision of the (-tilt_range, +tilt_range) interval, rotated in-plane
    by 22.5 degrees, placed at the nearest fully-visible distance and, for
    the principal-point parameters, shifted 5% of the image size along the
    respective axis.
    """
    cfg = config or PoseConfig()
    if parameter_index not in (0, 1, 2, 3):
        raise ValueError("pinhole targets apply to fx, fy, cx, cy only")
    # fy/cy tilt about x, fx/cx about y
    axis = "x" if parameter_index in (1, 3) else "y"
    angle = _nth_valid_tilt(step, cfg)
    R = _tilt_rotation(angle, axis, cfg.inplane_rotation_deg)

    shifted = parameter_index in (2, 3)
    margin = cfg.visibility_margin + (cfg.principal_shift_fraction if shifted else 0.0)
    tz = _visible_distance(R, board, params, image_size, margin)
    center_cam = np.array([0.0, 0.0, tz])
    if shifted:
        w, h = image_size
        if parameter_index == 2:
            center_cam[0] += cfg.principal_shift_fraction * w * tz / params.fx
        else:
            center_cam[1] += cfg.principal_shift_fraction * h * tz / params.fy
    pose = _pose_from_rotation(R, board, center_cam)
    return TargetPose(
        pose=pose,
        group=TargetGroup.PINHOLE,
        targeted_parameter=parameter_index,
        overlay_polygon=_overlay_polygon(pose, board, params),
    )


def distortion_target(
    dist_map: DistortionMap,
    visited: VisitedMask,
    board: BoardGeometry,
    params: IntrinsicParams,
    image_size: tuple[int, int],
    config: PoseConfig | None = None,
) -> tuple[TargetPose, VisitedMask]:
    """Fronto-parallel target over the strongest unvisited distortion region.

    Thresholds the unvisited part of the map at a fraction of its maximum,
    fits the axis-aligned bounding box of the largest connected region, marks
    it visited and aligns the board projection's top-left corner with the
    box's top-left at a depth giving 33% image-width coverage.
    """
    cfg = config or PoseConfig()
    if visited.all_visited:
        raise MapExhaustedError("distortion map fully visited")
    unvisited = ~visited.grid
    vals = np.where(unvisited, dist_map.values, -np.inf)
    peak = vals.max()
    mask = vals >= cfg.threshold_fraction * peak
    labels, n = ndimage.label(mask)
    if n == 0:
        raise MapExhaustedError("no region passes the threshold")
    # Largest area; ties broken by topmost-leftmost AABB corner.
    best = None
    for lab in range(1, n + 1):
        rows, cols = np.nonzero(labels == lab)
        area = len(rows)
        key = (-area, rows.min(), cols.min())
        if best is None or key < best[0]:
            best = (key, (rows.min(), rows.max(), cols.min(), cols.max()))
    r0, r1, c0, c1 = best[1]
    new_grid = visited.grid.copy()
    new_grid[r0 : r1 + 1, c0 : c1 + 1] = True
    new_visited = VisitedMask(grid=new_grid, step=visited.step)

    w, h = image_size
    board_w = board.squares_x * board.square_length
    proj_w = cfg.distortion_width_fraction * w
    tz = params.fx * board_w / proj_w
    # Top-left alignment with the AABB, clamped so the projection stays
    # inside the image. Distortion warps the projection, so the depth and
    # offset are corrected by a short fixed-point iteration on the measured
    # overlay polygon.
    aabb_u = float(c0 * dist_map.step)
    aabb_v = float(r0 * dist_map.step)
    tx = (min(aabb_u, w - proj_w) - params.cx) * tz / params.fx
    ty = (min(aabb_v, h - proj_w) - params.cy) * tz / params.fy
    fallback = (tx, ty, tz)
    for _ in range(12):
        pose = BoardPose(np.zeros(3), np.array([tx, ty, tz]))
        poly = _overlay_polygon(pose, board, params)
        wid = poly[:, 0].max() - poly[:, 0].min()
        hei = poly[:, 1].max() - poly[:, 1].min()
        if not (np.isfinite(poly).all() and 0 < wid < 10 * w and tz > 0):
            # wildly wrong interim intrinsics can make the distortion
            # polynomial blow up; fall back to the pinhole placement
            tx, ty, tz = fallback
            break
        u_goal = min(aabb_u, max(w - wid, 0.0))
        v_goal = min(aabb_v, max(h - hei, 0.0))
        du = u_goal - poly[:, 0].min()
        dv = v_goal - poly[:, 1].min()
        if abs(wid - proj_w) < 0.05 and abs(du) < 0.05 and abs(dv) < 0.05:
            break
        tx += du * tz / params.fx
        ty += dv * tz / params.fy
        tz *= wid / proj_w
        tx *= wid / proj_w
        ty *= wid / proj_w
    pose = BoardPose(np.zeros(3), np.array([tx, ty, tz]))
    return (
        TargetPose(
            pose=pose,
            group=TargetGroup.DISTORTION,
            targeted_parameter=None,
            overlay_polygon=_overlay_polygon(pose, board, params),
        ),
        new_visited,
    )


def init_targets(
    board: BoardGeometry,
    image_size: tuple[int, int],
    params: IntrinsicParams,
    config: PoseConfig | None = None,
) -> list[TargetPose]:
    """The two initialization poses: a 45-degree x-tilt and a full-view
    fronto-parallel pose."""
    cfg = config or PoseConfig()
    R1 = _tilt_rotation(cfg.init_tilt_deg, "x", cfg.inplane_rotation_deg)
    tz1 = _visible_distance(R1, board, params, image_size, cfg.visibility_margin)
    pose1 = _pose_from_rotation(R1, board, np.array([0.0, 0.0, tz1]))

    w, h = image_size
    board_w = board.squares_x * board.square_length
    board_h = board.squares_y * board.square_length
    # Depth at which the projection covers the whole view (board may
    # overhang along one axis because of the aspect-ratio mismatch).
    tz2 = min(params.fx * board_w / w, params.fy * board_h / h)
    pose2 = _pose_from_rotation(np.eye(3), board, np.array([0.0, 0.0, tz2]))
    return [
        TargetPose(
            pose=pose1,
            group=TargetGroup.INIT,
            targeted_parameter=None,
            overlay_polygon=_overlay_polygon(pose1, board, params),
        ),
        TargetPose(
            pose=pose2,
            group=TargetGroup.INIT,
            targeted_parameter=None,
            overlay_polygon=_overlay_polygon(pose2, board, params),
        ),
    ]


def _vanishing_line_direction(
    pose: BoardPose, params: IntrinsicParams
) -> np.ndarray | None:
    """Unit direction (a, b) of the board plane's vanishing line, or None for
    a (near) fronto-parallel board whose vanishing line is at infinity."""
    n = pose.rotation_matrix()[:, 2]
    d = np.array([n[0] / params.fx, n[1] / params.fy])
    norm = np.linalg.norm(d)
    if norm < 1e-8:
        return None
    return d / norm


def check_singularities(
    pose: BoardPose,
    prior_poses: list[BoardPose],
    board: BoardGeometry,
    params: IntrinsicParams,
    config: PoseConfig | None = None,
) -> SingularityReport:
    """Evaluate the degenerate-configuration rules for a candidate pose.

    - parallel_to_image_plane: board normal within tolerance of the optical axis
    - axis_aligned: a projected board edge within tolerance of an image axis
    - reflection_violation: the vanishing line is, for any prior pose, the
      mirror (about a horizontal/vertical image line) of that pose's
      vanishing line
    """
    cfg = config or PoseConfig()
    R = pose.rotation_matrix()
    normal_angle = np.degrees(np.arccos(np.clip(abs(R[2, 2]), -1.0, 1.0)))
    parallel = normal_angle < cfg.parallel_tolerance_deg

    # Projected direction of each in-plane board axis, evaluated at the
    # board center (the pattern's principal orientation in the image).
    center_cam = R @ board.center() + pose.tvec
    axis_aligned = False
    if center_cam[2] <= 0:
        axis_aligned = True
    else:
        z = center_cam[2]
        for axis_dir in (R[:, 0], R[:, 1]):
            d = np.array(
                [
                    params.fx * (axis_dir[0] * z - center_cam[0] * axis_dir[2]),
                    params.fy * (axis_dir[1] * z - center_cam[1] * axis_dir[2]),
                ]
            )
            if np.linalg.norm(d) < 1e-12:
                continue
            angle = np.degrees(np.arctan2(d[1], d[0])) % 180.0
            to_axis = min(angle, 180.0 - angle, abs(angle - 90.0))
            if to_axis < cfg.axis_tolerance_deg:
                axis_aligned = True
                break

    reflection = False
    d = _vanishing_line_direction(pose, params)
    if d is not None:
        mirrored = np.array([d[0], -d[1]])
        for prior in prior_poses:
            dp = _vanishing_line_direction(prior, params)
            if dp is None:
                continue
            residual = abs(mirrored[0] * dp[1] - mirrored[1] * dp[0])
            if residual < cfg.reflection_tolerance:
                reflection = True
                break
    return SingularityReport(
        parallel_to_image_plane=parallel,
        axis_aligned=axis_aligned,
        reflection_violation=reflection,
    )
