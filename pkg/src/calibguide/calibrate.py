"""Planar-target calibration: homography, closed-form initialization,
Levenberg-Marquardt refinement and parameter covariance.

The estimated parameter vector is v = [C, rvec_1, tvec_1, ..., rvec_M, tvec_M]
with C the 9 canonical intrinsics; parameter covariance is the pseudo-inverse
of the Gauss-Newton normal matrix (unit isotropic pixel noise assumed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    N_INTRINSICS,
    BoardGeometry,
    BoardPose,
    IntrinsicParams,
    project_points,
    project_points_jacobian,
)


class DegenerateConfigurationError(ValueError):
    """Raised when the view geometry cannot constrain the requested parameters."""


class InsufficientDataError(ValueError):
    """Raised when there are too few point correspondences."""


@dataclass(frozen=True)
class FrameObservation:
    """Identified corner detections: parallel arrays of corner ids and pixels."""

    corner_ids: np.ndarray
    pixels: np.ndarray

    def __post_init__(self) -> None:
        ids = np.asarray(self.corner_ids, dtype=np.int64).reshape(-1)
        px = np.asarray(self.pixels, dtype=np.float64).reshape(-1, 2)
        if ids.shape[0] != px.shape[0]:
            raise ValueError("corner_ids and pixels must have the same length")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("corner ids must be distinct")
        object.__setattr__(self, "corner_ids", ids)
        object.__setattr__(self, "pixels", px)

    def __len__(self) -> int:
        return len(self.corner_ids)

    def object_points(self, board: BoardGeometry) -> np.ndarray:
        return board.object_points()[self.corner_ids]


@dataclass
class CalibrationResult:
    intrinsics: IntrinsicParams
    poses: list[BoardPose]
    residual_rms: float
    variances: np.ndarray
    iod: np.ndarray
    rank_deficient: bool = False
    converged: bool = True
    image_size: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.intrinsics.to_array().tolist(),
            "image_size": list(self.image_size) if self.image_size else None,
            "poses": [p.to_array().tolist() for p in self.poses],
            "residual_rms": self.residual_rms,
            "variances": self.variances.tolist(),
            "iod": self.iod.tolist(),
            "rank_deficient": self.rank_deficient,
        }


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley normalization: centroid at origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.linalg.norm(pts - centroid, axis=1).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    T = np.array([[s, 0, -s * centroid[0]], [0, s, -s * centroid[1]], [0, 0, 1.0]])
    homog = np.column_stack([pts, np.ones(len(pts))])
    return (homog @ T.T)[:, :2], T


def estimate_homography(board_pts: np.ndarray, pixel_pts: np.ndarray) -> np.ndarray:
    """Normalized-DLT homography mapping board-plane (x, y) to pixels.

    Scaled so H[2, 2] = 1 when that entry is nonzero.
    """
    board_pts = np.asarray(board_pts, dtype=np.float64).reshape(-1, 2)
    pixel_pts = np.asarray(pixel_pts, dtype=np.float64).reshape(-1, 2)
    n = len(board_pts)
    if n < 4:
        raise InsufficientDataError(f"need at least 4 correspondences, got {n}")
    src, T_src = _normalize_points(board_pts)
    dst, T_dst = _normalize_points(pixel_pts)
    A = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = src[i]
        u, v = dst[i]
        A[2 * i] = [-x, -y, -1, 0, 0, 0, u * x, u * y, u]
        A[2 * i + 1] = [0, 0, 0, -x, -y, -1, v * x, v * y, v]
    _, s, vt = np.linalg.svd(A)
    if s[-2] < 1e-9 * s[0]:
        raise DegenerateConfigurationError("collinear or otherwise degenerate correspondences")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(T_dst) @ Hn @ T_src
    if abs(H[2, 2]) > 1e-12:
        H = H / H[2, 2]
    return H


def _zhang_constraint_rows(H: np.ndarray) -> np.ndarray:
    """Two rows of the absolute-conic constraint system per homography.

    Unknown vector b = [B11, B22, B13, B23, B33] (zero-skew, B12 = 0)
    where B = K^-T K^-1.
    """

    def v(i: int, j: int) -> np.ndarray:
        h_i, h_j = H[:, i], H[:, j]
        return np.array(
            [
                h_i[0] * h_j[0],
                h_i[1] * h_j[1],
                h_i[2] * h_j[0] + h_i[0] * h_j[2],
                h_i[2] * h_j[1] + h_i[1] * h_j[2],
                h_i[2] * h_j[2],
            ]
        )

    return np.stack([v(0, 1), v(0, 0) - v(1, 1)])


def init_intrinsics(
    homographies: list[np.ndarray], image_size: tuple[int, int] | None = None
) -> IntrinsicParams:
    """Closed-form pinhole initialization from plane homographies.

    Solves the zero-skew absolute-conic system of the Zhang method. When the
    system is too ill-conditioned for the full 4-DOF solution (e.g. the
    45-degree-tilt + fronto-parallel initialization pair), falls back to a
    focal-only solve with the principal point fixed at the image center,
    which requires `image_size`. Distortion is zeroed.
    """
    if len(homographies) < 2:
        raise InsufficientDataError("need at least 2 homographies")
    hs = [np.asarray(H, dtype=np.float64) / np.linalg.norm(H) for H in homographies]
    for i in range(len(hs)):
        for j in range(i + 1, len(hs)):
            d = min(np.linalg.norm(hs[i] - hs[j]), np.linalg.norm(hs[i] + hs[j]))
            if d < 1e-8:
                raise DegenerateConfigurationError("coplanar (identical) board views")

    A = np.concatenate([_zhang_constraint_rows(H) for H in hs])
    _, s, vt = np.linalg.svd(A)
    full_ok = len(s) >= 5 and s[3] > 1e-6 * s[0]
    if full_ok:
        b11, b22, b13, b23, b33 = vt[-1]
        if b11 != 0 and b22 != 0:
            cx = -b13 / b11
            cy = -b23 / b22
            lam = b33 - (b13 * b13 / b11 + b23 * b23 / b22)
            with np.errstate(invalid="ignore", divide="ignore"):
                fx2 = lam / b11
                fy2 = lam / b22
            if fx2 > 0 and fy2 > 0 and np.isfinite(fx2) and np.isfinite(fy2):
                return IntrinsicParams(float(np.sqrt(fx2)), float(np.sqrt(fy2)), float(cx), float(cy))

    # Fallback: principal point at image center, focal lengths only.
    if image_size is None:
        raise DegenerateConfigurationError(
            "absolute-conic system is singular and no image size given for the center-principal-point fallback"
        )
    return _focal_only_solve(hs, image_size)


def _focal_only_solve(
    homographies: list[np.ndarray], image_size: tuple[int, int]
) -> IntrinsicParams:
    """Linear fx, fy solve with the principal point fixed at the image center."""
    cx, cy = image_size[0] / 2.0, image_size[1] / 2.0
    shift = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    rows = []
    rhs = []
    for H in homographies:
        Hc = shift @ H
        h1, h2 = Hc[:, 0], Hc[:, 1]
        # r1.r2 = 0 and |r1|^2 = |r2|^2 with K = diag(fx, fy, 1)
        rows.append([h1[0] * h2[0], h1[1] * h2[1]])
        rhs.append(-h1[2] * h2[2])
        rows.append([h1[0] ** 2 - h2[0] ** 2, h1[1] ** 2 - h2[1] ** 2])
        rhs.append(h2[2] ** 2 - h1[2] ** 2)
    A2 = np.asarray(rows)
    b2 = np.asarray(rhs)
    sv = np.linalg.svd(A2, compute_uv=False)
    if sv[-1] < 1e-8 * max(sv[0], 1e-30):
        raise DegenerateConfigurationError(
            "focal length unobservable (e.g. all views fronto-parallel)"
        )
    sol, *_ = np.linalg.lstsq(A2, b2, rcond=None)
    if sol[0] <= 0 or sol[1] <= 0:
        raise DegenerateConfigurationError("negative focal-length solution; degenerate geometry")
    return IntrinsicParams(float(1.0 / np.sqrt(sol[0])), float(1.0 / np.sqrt(sol[1])), cx, cy)


def pose_from_homography(H: np.ndarray, params: IntrinsicParams) -> BoardPose:
    """Recover the board pose from a plane homography, with positive board depth."""
    Kinv = np.linalg.inv(params.matrix())
    M = Kinv @ H
    lam = 1.0 / np.linalg.norm(M[:, 0])
    if M[2, 2] * lam < 0:
        lam = -lam
    r1 = lam * M[:, 0]
    r2 = lam * M[:, 1]
    t = lam * M[:, 2]
    r3 = np.cross(r1, r2)
    Q = np.column_stack([r1, r2, r3])
    u, _, vt = np.linalg.svd(Q)
    R = u @ vt
    if np.linalg.det(R) < 0:
        R = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    if t[2] < 0:
        raise DegenerateConfigurationError("homography places the board behind the camera")
    return BoardPose.from_matrix(R, t)


def _pack(
    intrinsics: np.ndarray, poses: list[BoardPose], free_idx: np.ndarray
) -> np.ndarray:
    return np.concatenate([intrinsics[free_idx]] + [p.to_array() for p in poses])


def _unpack(
    x: np.ndarray, base_intrinsics: np.ndarray, free_idx: np.ndarray, n_frames: int
) -> tuple[IntrinsicParams, list[BoardPose]]:
    intr = base_intrinsics.copy()
    nf = len(free_idx)
    intr[free_idx] = x[:nf]
    poses = [BoardPose.from_array(x[nf + 6 * i : nf + 6 * i + 6]) for i in range(n_frames)]
    return IntrinsicParams.from_array(intr), poses


def _residuals_jacobian(
    frames: list[FrameObservation],
    board: BoardGeometry,
    intrinsics: IntrinsicParams,
    poses: list[BoardPose],
    free_idx: np.ndarray,
    want_jac: bool = True,
) -> tuple[np.ndarray, np.ndarray | None]:
    nf = len(free_idx)
    n_total = sum(len(f) for f in frames)
    r = np.empty(2 * n_total)
    J = np.zeros((2 * n_total, nf + 6 * len(frames))) if want_jac else None
    row = 0
    for k, frame in enumerate(frames):
        obj = frame.object_points(board)
        n = len(frame)
        if want_jac:
            pix, jac = project_points_jacobian(obj, poses[k], intrinsics)
            J[row : row + 2 * n, :nf] = jac[:, :, free_idx].reshape(2 * n, nf)
            J[row : row + 2 * n, nf + 6 * k : nf + 6 * k + 6] = jac[:, :, 9:].reshape(2 * n, 6)
        else:
            pix = project_points(obj, poses[k], intrinsics)
        r[row : row + 2 * n] = (pix - frame.pixels).ravel()
        row += 2 * n
    return r, J


def refine(
    frames: list[FrameObservation],
    initial_intrinsics: IntrinsicParams,
    initial_poses: list[BoardPose],
    board: BoardGeometry | None = None,
    fixed_mask: np.ndarray | None = None,
    max_iterations: int = 100,
    image_size: tuple[int, int] | None = None,
    compute_covariance: bool = True,
) -> CalibrationResult:
    """Levenberg-Marquardt refinement of intrinsics and per-frame poses.

    `fixed_mask[i]` freezes intrinsic i at its initial value. Damping uses a
    multiplicative lambda schedule (x10 on reject, /10 on accept) starting at
    1e-3; terminates on relative cost decrease or step norm below 1e-12.
    """
    if board is None:
        board = BoardGeometry()
    if len(frames) != len(initial_poses):
        raise ValueError("one initial pose per frame required")
    fixed = (
        np.zeros(N_INTRINSICS, dtype=bool)
        if fixed_mask is None
        else np.asarray(fixed_mask, dtype=bool)
    )
    free_idx = np.flatnonzero(~fixed)
    n_total = sum(len(f) for f in frames)
    n_unknowns = len(free_idx) + 6 * len(frames)
    if 2 * n_total < n_unknowns:
        raise InsufficientDataError(
            f"{2 * n_total} constraints for {n_unknowns} unknowns"
        )

    base = initial_intrinsics.to_array()
    x = _pack(base, initial_poses, free_idx)
    r, J = _residuals_jacobian(frames, board, *_unpack(x, base, free_idx, len(frames)), free_idx)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    for _ in range(max_iterations):
        g = J.T @ r
        H = J.T @ J
        diag = np.clip(np.diag(H), 1e-12, None)
        accepted = False
        for _ in range(25):
            try:
                step = np.linalg.solve(H + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            intr_new, poses_new = _unpack(x_new, base, free_idx, len(frames))
            try:
                r_new, _ = _residuals_jacobian(
                    frames, board, intr_new, poses_new, free_idx, want_jac=False
                )
            except (ValueError, ArithmeticError):
                lam *= 10.0
                continue
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                rel_decrease = (cost - cost_new) / max(cost, 1e-300)
                x = x_new
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                small = rel_decrease < 1e-12 or float(np.linalg.norm(step)) < 1e-12
                r, J = _residuals_jacobian(frames, board, intr_new, poses_new, free_idx)
                cost = cost_new
                if small:
                    converged = True
                break
            lam *= 10.0
        if not accepted or converged:
            converged = converged or not accepted
            break

    intrinsics, poses = _unpack(x, base, free_idx, len(frames))
    residual_rms = float(np.sqrt(cost / (2 * n_total)))
    if compute_covariance:
        variances, rank_deficient = covariance(frames, intrinsics, poses, board)
    else:
        variances, rank_deficient = np.zeros(N_INTRINSICS), False
    iod = index_of_dispersion(intrinsics, variances)
    return CalibrationResult(
        intrinsics=intrinsics,
        poses=poses,
        residual_rms=residual_rms,
        variances=variances,
        iod=iod,
        rank_deficient=rank_deficient,
        converged=converged,
        image_size=image_size,
    )


def covariance(
    frames: list[FrameObservation],
    intrinsics: IntrinsicParams,
    poses: list[BoardPose],
    board: BoardGeometry | None = None,
    rel_tolerance: float = 1e-10,
) -> tuple[np.ndarray, bool]:
    """Intrinsic-parameter variances via backward transport of covariance.

    Diagonal of the C-block of (J^T J)^+ over the full unknown vector
    [C, pose_1, ..., pose_M], assuming unit isotropic pixel noise. Uses an
    eigenvalue-truncated pseudo-inverse; returns (variances, rank_deficient).
    """
    if board is None:
        board = BoardGeometry()
    free_idx = np.arange(N_INTRINSICS)
    _, J = _residuals_jacobian(frames, board, intrinsics, poses, free_idx)
    H = J.T @ J
    w, V = np.linalg.eigh(H)
    keep = w > rel_tolerance * max(w[-1], 0.0)
    rank_deficient = bool(np.any(~keep))
    inv_w = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    Vc = V[:N_INTRINSICS, :]
    variances = (Vc * Vc * inv_w).sum(axis=1)
    return np.clip(variances, 0.0, None), rank_deficient


def index_of_dispersion(intrinsics: IntrinsicParams, variances: np.ndarray) -> np.ndarray:
    """Elementwise variance-to-parameter ratio; plain variance where C_i = 0."""
    c = np.abs(intrinsics.to_array())
    v = np.asarray(variances, dtype=np.float64)
    return np.where(c > 0, v / np.where(c > 0, c, 1.0), v)


def bootstrap_single_frame(
    frame: FrameObservation,
    image_size: tuple[int, int],
    board: BoardGeometry | None = None,
) -> tuple[IntrinsicParams, bool]:
    """Focal-only calibration from one frame.

    Principal point is fixed at the image center and distortion at zero; only
    fx, fy (and the frame pose) are refined. Returns (params, low_confidence)
    where low_confidence marks a near-fronto-parallel frame whose focal
    estimate is ambiguous against board distance.
    """
    if board is None:
        board = BoardGeometry()
    if len(frame) < 4:
        raise InsufficientDataError(f"need at least 4 points, got {len(frame)}")
    w, h = image_size
    f0 = float(w)
    H = estimate_homography(frame.object_points(board)[:, :2], frame.pixels)
    try:
        linear = _focal_only_solve([H], image_size)
        f0 = float(np.sqrt(linear.fx * linear.fy))
    except DegenerateConfigurationError:
        pass  # fronto-parallel view; keep the f = width prior
    intr, pose = _refine_tied_focal(frame, board, f0, image_size)

    # f / t_z ambiguity: a fronto-parallel board leaves the focal length
    # unconstrained by this single view.
    n = pose.rotation_matrix()[:, 2]
    angle = np.degrees(np.arccos(np.clip(abs(n[2]), -1.0, 1.0)))
    low_confidence = angle < 10.0
    return intr, low_confidence


def _refine_tied_focal(
    frame: FrameObservation,
    board: BoardGeometry,
    f0: float,
    image_size: tuple[int, int],
    max_iterations: int = 60,
) -> tuple[IntrinsicParams, BoardPose]:
    """LM over [f, pose] with fx = fy = f, center principal point, no distortion."""
    w, h = image_size
    obj = frame.object_points(board)

    def params_of(f: float) -> IntrinsicParams:
        return IntrinsicParams(fx=f, fy=f, cx=w / 2.0, cy=h / 2.0)

    pose = pose_from_homography(
        estimate_homography(obj[:, :2], frame.pixels), params_of(f0)
    )
    x = np.concatenate([[f0], pose.to_array()])

    def residual_jac(x: np.ndarray, want_jac: bool = True):
        f = max(float(x[0]), 1e-3)
        p = BoardPose.from_array(x[1:])
        pix, jac = project_points_jacobian(obj, p, params_of(f))
        r = (pix - frame.pixels).ravel()
        if not want_jac:
            return r, None
        J = np.empty((len(r), 7))
        J[:, 0] = (jac[:, :, 0] + jac[:, :, 1]).reshape(-1)
        J[:, 1:] = jac[:, :, 9:].reshape(-1, 6)
        return r, J

    r, J = residual_jac(x)
    cost = float(r @ r)
    lam = 1e-3
    for _ in range(max_iterations):
        g = J.T @ r
        Hn = J.T @ J
        diag = np.clip(np.diag(Hn), 1e-12, None)
        accepted = False
        for _ in range(25):
            try:
                step = np.linalg.solve(Hn + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            try:
                r_new, _ = residual_jac(x_new, want_jac=False)
            except (ValueError, ArithmeticError):
                lam *= 10.0
                continue
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                rel = (cost - cost_new) / max(cost, 1e-300)
                x = x_new
                lam = max(lam / 10.0, 1e-12)
                r, J = residual_jac(x)
                cost = cost_new
                accepted = True
                if rel < 1e-12 or float(np.linalg.norm(step)) < 1e-12:
                    accepted = False  # converged
                break
            lam *= 10.0
        if not accepted:
            break
    f = max(float(x[0]), 1e-3)
    return params_of(f), BoardPose.from_array(x[1:])
