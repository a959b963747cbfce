"""Pinhole camera model with radial/tangential distortion.

Projection, analytic Jacobians and the per-pixel distortion-magnitude map
used for placing distortion-measuring target poses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

N_INTRINSICS = 9
PARAM_NAMES = ("fx", "fy", "cx", "cy", "k1", "k2", "k3", "p1", "p2")
PINHOLE_INDICES = (0, 1, 2, 3)
DISTORTION_INDICES = (4, 5, 6, 7, 8)


class ProjectionError(ValueError):
    """Raised when a point cannot be projected (non-positive depth)."""


@dataclass(frozen=True)
class IntrinsicParams:
    """The 9 intrinsic parameters in canonical order [fx, fy, cx, cy, k1, k2, k3, p1, p2]."""

    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.k3, self.p1, self.p2],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "IntrinsicParams":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (N_INTRINSICS,):
            raise ValueError(f"expected shape ({N_INTRINSICS},), got {arr.shape}")
        return cls(*arr.tolist())

    def matrix(self) -> np.ndarray:
        """3x3 camera matrix K (zero skew)."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def distortion(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.p1, self.p2])


@dataclass(frozen=True)
class BoardPose:
    """Board-to-camera transform: axis-angle rotation + translation."""

    rvec: np.ndarray
    tvec: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "rvec", np.asarray(self.rvec, dtype=np.float64).reshape(3))
        object.__setattr__(self, "tvec", np.asarray(self.tvec, dtype=np.float64).reshape(3))

    def rotation_matrix(self) -> np.ndarray:
        return Rotation.from_rotvec(self.rvec).as_matrix()

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.rvec, self.tvec])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "BoardPose":
        arr = np.asarray(arr, dtype=np.float64).reshape(6)
        return cls(arr[:3], arr[3:])

    @classmethod
    def from_matrix(cls, R: np.ndarray, t: np.ndarray) -> "BoardPose":
        return cls(Rotation.from_matrix(R).as_rotvec(), np.asarray(t, dtype=np.float64))


@dataclass(frozen=True)
class BoardGeometry:
    """Planar 9x6-square board; the 8x5 = 40 interior corners are the measurements."""

    squares_x: int = 9
    squares_y: int = 6
    square_length: float = 1.0

    @property
    def n_corners(self) -> int:
        return (self.squares_x - 1) * (self.squares_y - 1)

    def object_points(self) -> np.ndarray:
        """Interior corner grid, shape (40, 3), Z = 0.

        Board frame: origin at the outer top-left corner, x to the right,
        y downward, corners at integer square multiples starting from (1, 1).
        """
        nx, ny = self.squares_x - 1, self.squares_y - 1
        xs = np.arange(1, nx + 1) * self.square_length
        ys = np.arange(1, ny + 1) * self.square_length
        gx, gy = np.meshgrid(xs, ys)
        pts = np.zeros((nx * ny, 3))
        pts[:, 0] = gx.ravel()
        pts[:, 1] = gy.ravel()
        return pts

    def outer_corners(self) -> np.ndarray:
        """The 4 outer board corners (TL, TR, BR, BL), shape (4, 3)."""
        w = self.squares_x * self.square_length
        h = self.squares_y * self.square_length
        return np.array([[0.0, 0.0, 0.0], [w, 0.0, 0.0], [w, h, 0.0], [0.0, h, 0.0]])

    def center(self) -> np.ndarray:
        return np.array(
            [self.squares_x * self.square_length / 2.0, self.squares_y * self.square_length / 2.0, 0.0]
        )


@dataclass
class DistortionMap:
    """Per-pixel displacement magnitude of the lens distortion, in pixels.

    Computed on a subsampled grid (every `step` pixels); `values[i, j]`
    corresponds to pixel (j * step, i * step).
    """

    width: int
    height: int
    step: int
    values: np.ndarray = field(repr=False)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.values.shape


def distort(p_norm: np.ndarray, params: IntrinsicParams) -> np.ndarray:
    """Apply radial + tangential distortion to normalized (pre-K) points.

    Accepts shape (2,) or (N, 2); returns the same shape.
    """
    p = np.asarray(p_norm, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    x, y = p[:, 0], p[:, 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (params.k1 + r2 * (params.k2 + r2 * params.k3))
    xd = x * radial + 2.0 * params.p1 * x * y + params.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + params.p1 * (r2 + 2.0 * y * y) + 2.0 * params.p2 * x * y
    out = np.stack([xd, yd], axis=-1)
    return out[0] if single else out


def project_points(
    points: np.ndarray, pose: BoardPose, params: IntrinsicParams
) -> np.ndarray:
    """Project 3D points (N, 3) in board frame to pixel coordinates (N, 2)."""
    pc = points @ pose.rotation_matrix().T + pose.tvec
    z = pc[:, 2]
    if np.any(z <= 0):
        raise ProjectionError("point behind camera (non-positive depth)")
    xy = pc[:, :2] / z[:, None]
    d = distort(xy, params)
    out = np.empty_like(d)
    out[:, 0] = params.fx * d[:, 0] + params.cx
    out[:, 1] = params.fy * d[:, 1] + params.cy
    return out


def project(point: np.ndarray, pose: BoardPose, params: IntrinsicParams) -> np.ndarray:
    """Project a single 3D point to a pixel coordinate (2,)."""
    return project_points(np.asarray(point, dtype=np.float64).reshape(1, 3), pose, params)[0]


def _rotation_point_jacobian(rvec: np.ndarray, points: np.ndarray) -> np.ndarray:
    """d(R(rvec) @ P) / d rvec for each point; returns (N, 3, 3).

    Uses the closed form of Gallego & Yezzi for dR/dv_i, with the
    first-order limit dR/dv_i = [e_i]_x at the identity.
    """
    theta = np.linalg.norm(rvec)
    R = Rotation.from_rotvec(rvec).as_matrix()
    n = points.shape[0]
    jac = np.empty((n, 3, 3))
    if theta < 1e-10:
        # R ~ I + [v]_x: d(Rp)/dv = -[p]_x
        for i in range(n):
            p = points[i]
            jac[i] = -_skew(p)
        return jac
    v = rvec
    vx = _skew(v)
    eye = np.eye(3)
    dR = []
    for i in range(3):
        e = eye[:, i]
        term = v[i] * vx + _skew(np.cross(v, (eye - R) @ e))
        dR.append((term / (theta * theta)) @ R)
    for i in range(n):
        p = points[i]
        for a in range(3):
            jac[i, :, a] = dR[a] @ p
    return jac


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def project_points_jacobian(
    points: np.ndarray, pose: BoardPose, params: IntrinsicParams
) -> tuple[np.ndarray, np.ndarray]:
    """Projections and Jacobians for a batch of board points.

    Returns (pixels (N, 2), jac (N, 2, 15)) with columns ordered as the 9
    canonical intrinsics followed by [rvec, tvec].
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    R = pose.rotation_matrix()
    pc = points @ R.T + pose.tvec
    z = pc[:, 2]
    if np.any(z <= 0):
        raise ProjectionError("point behind camera (non-positive depth)")
    x = pc[:, 0] / z
    y = pc[:, 1] / z
    r2 = x * x + y * y
    k1, k2, k3, p1, p2 = params.k1, params.k2, params.k3, params.p1, params.p2
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    px = params.fx * xd + params.cx
    py = params.fy * yd + params.cy
    pixels = np.stack([px, py], axis=-1)

    n = points.shape[0]
    jac = np.zeros((n, 2, 15))

    # Intrinsics block.
    jac[:, 0, 0] = xd  # d u / d fx
    jac[:, 1, 1] = yd  # d v / d fy
    jac[:, 0, 2] = 1.0  # d u / d cx
    jac[:, 1, 3] = 1.0  # d v / d cy
    r4 = r2 * r2
    r6 = r4 * r2
    jac[:, 0, 4] = params.fx * x * r2
    jac[:, 0, 5] = params.fx * x * r4
    jac[:, 0, 6] = params.fx * x * r6
    jac[:, 0, 7] = params.fx * 2.0 * x * y
    jac[:, 0, 8] = params.fx * (r2 + 2.0 * x * x)
    jac[:, 1, 4] = params.fy * y * r2
    jac[:, 1, 5] = params.fy * y * r4
    jac[:, 1, 6] = params.fy * y * r6
    jac[:, 1, 7] = params.fy * (r2 + 2.0 * y * y)
    jac[:, 1, 8] = params.fy * 2.0 * x * y

    # d(xd, yd)/d(x, y)
    g = k1 + 2.0 * k2 * r2 + 3.0 * k3 * r4
    dxd_dx = radial + 2.0 * x * x * g + 2.0 * p1 * y + 6.0 * p2 * x
    dxd_dy = 2.0 * x * y * g + 2.0 * p1 * x + 2.0 * p2 * y
    dyd_dx = 2.0 * x * y * g + 2.0 * p1 * x + 2.0 * p2 * y
    dyd_dy = radial + 2.0 * y * y * g + 6.0 * p1 * y + 2.0 * p2 * x

    # d(x, y)/d(Xc, Yc, Zc)
    inv_z = 1.0 / z
    dxy_dpc = np.zeros((n, 2, 3))
    dxy_dpc[:, 0, 0] = inv_z
    dxy_dpc[:, 0, 2] = -x * inv_z
    dxy_dpc[:, 1, 1] = inv_z
    dxy_dpc[:, 1, 2] = -y * inv_z

    # d Pc / d (rvec, tvec)
    dpc_dpose = np.zeros((n, 3, 6))
    dpc_dpose[:, :, :3] = _rotation_point_jacobian(pose.rvec, points)
    dpc_dpose[:, 0, 3] = 1.0
    dpc_dpose[:, 1, 4] = 1.0
    dpc_dpose[:, 2, 5] = 1.0

    # Chain: (2x2) @ (2x3) @ (3x6), scaled by focal lengths.
    ddist_dxy = np.empty((n, 2, 2))
    ddist_dxy[:, 0, 0] = dxd_dx
    ddist_dxy[:, 0, 1] = dxd_dy
    ddist_dxy[:, 1, 0] = dyd_dx
    ddist_dxy[:, 1, 1] = dyd_dy
    chain = np.einsum("nab,nbc,ncd->nad", ddist_dxy, dxy_dpc, dpc_dpose)
    chain[:, 0, :] *= params.fx
    chain[:, 1, :] *= params.fy
    jac[:, :, 9:] = chain
    return pixels, jac


def projection_jacobian(
    point: np.ndarray, pose: BoardPose, params: IntrinsicParams
) -> np.ndarray:
    """2x15 Jacobian of the projected pixel w.r.t. intrinsics + pose."""
    _, jac = project_points_jacobian(np.asarray(point, dtype=np.float64).reshape(1, 3), pose, params)
    return jac[0]


def distortion_magnitude_map(
    params: IntrinsicParams, width: int, height: int, step: int = 4
) -> DistortionMap:
    """Pixel-space displacement magnitude of the distortion model.

    For each (subsampled) pixel p: take the viewing ray whose ideal pinhole
    projection is p, distort it, re-apply K and measure |distorted - p|.
    """
    if params.fx <= 0 or params.fy <= 0:
        raise ValueError("focal lengths must be positive")
    us = np.arange(0, width, step, dtype=np.float64)
    vs = np.arange(0, height, step, dtype=np.float64)
    gu, gv = np.meshgrid(us, vs)
    x = (gu - params.cx) / params.fx
    y = (gv - params.cy) / params.fy
    pts = np.stack([x.ravel(), y.ravel()], axis=-1)
    d = distort(pts, params)
    du = params.fx * d[:, 0] + params.cx - gu.ravel()
    dv = params.fy * d[:, 1] + params.cy - gv.ravel()
    mag = np.hypot(du, dv).reshape(gv.shape)
    return DistortionMap(width=width, height=height, step=step, values=mag)
