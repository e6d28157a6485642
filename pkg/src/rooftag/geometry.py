"""Rotations, rigid transforms, camera models and planar homographies.

Conventions used throughout the package:

* World frame: right-handed, z up, units in metres. The intersection
  centre is the origin in the bundled scenarios.
* Camera frame: x right, y down, z forward (optical axis). A point p_w
  maps to the camera frame as p_c = R_wc @ p_w + T_wc.
* Pixels: u is the column coordinate, v the row coordinate, both in
  units of pixels with the centre of pixel (row i, col j) at (u, v) =
  (j, i). Projection: lambda * [u, v, 1]^T = A @ p_c with lambda the
  camera-frame depth.
* Rotation vectors: axis * angle, angle in radians. `vec_from_rot`
  returns the representative with angle in [0, pi].
* Homographies map planar tag coordinates (x, y, 1) to pixel
  coordinates (u, v, 1) up to scale, and are normalized to unit
  Frobenius norm with H[2][2] >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import symmetric_eigh_jacobi
from .errors import (
    BehindCamera,
    DegenerateConfiguration,
    NegativeDepth,
    NotARotation,
    RayParallelToPlane,
)

__all__ = [
    "rot_from_vec",
    "vec_from_rot",
    "RigidTransform",
    "CameraModel",
    "project",
    "project_points",
    "dlt_homography",
    "backproject_to_height",
]

_MIN_DEPTH = 1.0e-6
_ORTHONORMAL_TOL = 1.0e-9


def _skew(w: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def rot_from_vec(w) -> np.ndarray:
    """Rotation matrix for a rotation vector (exponential map).

    Uses the closed Rodrigues form, switching to the quadratic series
    for angles below 1e-4 rad where sin(t)/t and (1-cos(t))/t**2 lose
    precision.
    """
    w = np.asarray(w, dtype=float).reshape(3)
    theta_sq = float(w @ w)
    W = _skew(w)
    if theta_sq < 1.0e-8:
        a = 1.0 - theta_sq / 6.0
        b = 0.5 - theta_sq / 24.0
    else:
        theta = np.sqrt(theta_sq)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta_sq
    return np.eye(3) + a * W + b * (W @ W)


def _polar_rotation(M: np.ndarray) -> np.ndarray:
    """Nearest orthogonal factor of M via the Newton iteration X <- (X + X^-T)/2."""
    X = np.array(M, dtype=float)
    for _ in range(40):
        try:
            Xinv_t = np.linalg.inv(X).T
        except np.linalg.LinAlgError as exc:
            raise NotARotation("matrix is singular") from exc
        X_next = 0.5 * (X + Xinv_t)
        if np.max(np.abs(X_next - X)) < 1.0e-15:
            X = X_next
            break
        X = X_next
    return X


def vec_from_rot(R) -> np.ndarray:
    """Rotation vector (angle in [0, pi]) for a rotation or quasi-rotation.

    The input is first projected onto the nearest proper rotation
    (polar factor). Raises NotARotation when the polar factor has
    negative determinant or the input is singular.
    """
    R = np.asarray(R, dtype=float).reshape(3, 3)
    if not np.all(np.isfinite(R)):
        raise NotARotation("matrix has non-finite entries")
    Q = _polar_rotation(R)
    if np.linalg.det(Q) <= 0.0:
        raise NotARotation("polar factor has non-positive determinant")

    # Quaternion extraction (Shepperd's method): stable at every angle.
    t = Q[0, 0] + Q[1, 1] + Q[2, 2]
    if t >= Q[0, 0] and t >= Q[1, 1] and t >= Q[2, 2]:
        r = np.sqrt(1.0 + t)
        s = 0.5 / r
        qw = 0.5 * r
        qx = (Q[2, 1] - Q[1, 2]) * s
        qy = (Q[0, 2] - Q[2, 0]) * s
        qz = (Q[1, 0] - Q[0, 1]) * s
    elif Q[0, 0] >= Q[1, 1] and Q[0, 0] >= Q[2, 2]:
        r = np.sqrt(1.0 + Q[0, 0] - Q[1, 1] - Q[2, 2])
        s = 0.5 / r
        qx = 0.5 * r
        qw = (Q[2, 1] - Q[1, 2]) * s
        qy = (Q[0, 1] + Q[1, 0]) * s
        qz = (Q[0, 2] + Q[2, 0]) * s
    elif Q[1, 1] >= Q[2, 2]:
        r = np.sqrt(1.0 - Q[0, 0] + Q[1, 1] - Q[2, 2])
        s = 0.5 / r
        qy = 0.5 * r
        qw = (Q[0, 2] - Q[2, 0]) * s
        qx = (Q[0, 1] + Q[1, 0]) * s
        qz = (Q[1, 2] + Q[2, 1]) * s
    else:
        r = np.sqrt(1.0 - Q[0, 0] - Q[1, 1] + Q[2, 2])
        s = 0.5 / r
        qz = 0.5 * r
        qw = (Q[1, 0] - Q[0, 1]) * s
        qx = (Q[0, 2] + Q[2, 0]) * s
        qy = (Q[1, 2] + Q[2, 1]) * s
    if qw < 0.0:
        qw, qx, qy, qz = -qw, -qx, -qy, -qz
    v = np.array([qx, qy, qz])
    n = np.linalg.norm(v)
    if n < 1.0e-12:
        return 2.0 * v
    angle = 2.0 * np.arctan2(n, qw)
    return v * (angle / n)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation, applied as p -> R @ p + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        t = np.array(self.t, dtype=float).reshape(3)
        err = np.max(np.abs(R.T @ R - np.eye(3)))
        if err > _ORTHONORMAL_TOL:
            raise ValueError(f"R is not orthonormal (|R^T R - I| = {err:.2e})")
        if np.linalg.det(R) <= 0.0:
            raise ValueError("R has non-positive determinant")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self * other)(p) = self(other(p))."""
        return RigidTransform(self.R @ other.R, self.R @ other.t + self.t)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.R.T, -self.R.T @ self.t)

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or many points (n, 3)."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.R @ p + self.t
        return p @ self.R.T + self.t


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics A plus the world<->camera transforms.

    resolution is (width, height) in pixels. world_to_cam and
    cam_to_world must be mutual inverses; prefer the from_extrinsics
    constructor which derives one from the other.
    """

    A: np.ndarray
    world_to_cam: RigidTransform
    cam_to_world: RigidTransform
    resolution: tuple = field(default=(960, 720))

    def __post_init__(self):
        A = np.array(self.A, dtype=float).reshape(3, 3)
        if np.max(np.abs(A[np.tril_indices(3, k=-1)])) > 1.0e-12:
            raise ValueError("A must be upper triangular")
        if abs(A[2, 2] - 1.0) > 1.0e-12 or abs(A[2, 0]) > 1e-12 or abs(A[2, 1]) > 1e-12:
            raise ValueError("last row of A must be (0, 0, 1)")
        rt = self.world_to_cam.compose(self.cam_to_world)
        if (
            np.max(np.abs(rt.R - np.eye(3))) > _ORTHONORMAL_TOL
            or np.max(np.abs(rt.t)) > _ORTHONORMAL_TOL
        ):
            raise ValueError("world_to_cam and cam_to_world are not mutual inverses")
        w, h = self.resolution
        if int(w) <= 0 or int(h) <= 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "resolution", (int(w), int(h)))

    @classmethod
    def from_extrinsics(cls, A, world_to_cam: RigidTransform, resolution) -> "CameraModel":
        return cls(A, world_to_cam, world_to_cam.inverse(), resolution)

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return self.cam_to_world.t


def project(cam: CameraModel, point_w) -> tuple:
    """Project one world point to pixel coordinates (u, v).

    Raises BehindCamera when the camera-frame depth is <= 1e-6 m.
    """
    p_c = cam.world_to_cam.apply(np.asarray(point_w, dtype=float).reshape(3))
    depth = p_c[2]
    if depth <= _MIN_DEPTH:
        raise BehindCamera(f"depth {depth:.3e} m")
    uvw = cam.A @ p_c
    return (uvw[0] / uvw[2], uvw[1] / uvw[2])


def project_points(cam: CameraModel, points_w) -> tuple:
    """Vectorized projection of (n, 3) world points.

    Returns (uv, depth) where uv is (n, 2). No visibility checks are
    made: entries with depth <= 1e-6 hold garbage and must be masked by
    the caller.
    """
    p = np.asarray(points_w, dtype=float).reshape(-1, 3)
    p_c = p @ cam.world_to_cam.R.T + cam.world_to_cam.t
    depth = p_c[:, 2]
    uvw = p_c @ cam.A.T
    safe = np.where(np.abs(uvw[:, 2]) > _MIN_DEPTH, uvw[:, 2], 1.0)
    uv = uvw[:, :2] / safe[:, None]
    return uv, depth


def _hartley_normalization(points: np.ndarray) -> np.ndarray:
    """Similarity transform taking points to centroid 0, RMS radius sqrt(2)."""
    centroid = points.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((points - centroid) ** 2, axis=1)))
    if rms < 1.0e-12:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / rms
    return np.array(
        [
            [s, 0.0, -s * centroid[0]],
            [0.0, s, -s * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def dlt_homography(tag_points, pixel_points) -> np.ndarray:
    """Direct linear transform for the tag-plane -> image homography.

    tag_points: (n, 2) planar coordinates; pixel_points: (n, 2) pixels;
    n >= 4. Both sets are Hartley-normalized (centroid 0, RMS radius
    sqrt(2)); the stacked 2n x 9 system L h = 0 is solved by the
    eigenvector of the smallest eigenvalue of L^T L, computed with a
    self-contained cyclic Jacobi sweep. Raises DegenerateConfiguration
    when n < 4 or the two smallest eigenvalues are within relative 1e-8
    of each other (no unique solution).
    """
    x = np.asarray(tag_points, dtype=float).reshape(-1, 2)
    u = np.asarray(pixel_points, dtype=float).reshape(-1, 2)
    n = x.shape[0]
    if u.shape[0] != n:
        raise ValueError("point count mismatch")
    if n < 4:
        raise DegenerateConfiguration(f"need at least 4 points, got {n}")
    Tx = _hartley_normalization(x)
    Tu = _hartley_normalization(u)
    xn = x @ Tx[:2, :2].T + Tx[:2, 2]
    un = u @ Tu[:2, :2].T + Tu[:2, 2]

    L = np.zeros((2 * n, 9))
    L[0::2, 0] = xn[:, 0]
    L[0::2, 1] = xn[:, 1]
    L[0::2, 2] = 1.0
    L[0::2, 6] = -un[:, 0] * xn[:, 0]
    L[0::2, 7] = -un[:, 0] * xn[:, 1]
    L[0::2, 8] = -un[:, 0]
    L[1::2, 3] = xn[:, 0]
    L[1::2, 4] = xn[:, 1]
    L[1::2, 5] = 1.0
    L[1::2, 6] = -un[:, 1] * xn[:, 0]
    L[1::2, 7] = -un[:, 1] * xn[:, 1]
    L[1::2, 8] = -un[:, 1]

    vals, vecs = symmetric_eigh_jacobi(L.T @ L)
    scale = max(abs(vals[-1]), 1.0e-300)
    if (vals[1] - vals[0]) <= 1.0e-8 * scale:
        raise DegenerateConfiguration("smallest eigenvalues nearly equal")
    Hn = vecs[:, 0].reshape(3, 3)
    H = np.linalg.inv(Tu) @ Hn @ Tx
    if H[2, 2] < 0.0:
        H = -H
    return H / np.linalg.norm(H)


def backproject_to_height(cam: CameraModel, pixel, height: float) -> tuple:
    """Intersect the ray through a pixel with the plane z = height.

    Solves [C1 C2 (u,v,1)] @ (x, y, -lambda) = -height*C3 - A@T_wc with
    C_j = A @ R_wc @ e_j. Raises RayParallelToPlane when the system is
    singular and NegativeDepth when the intersection is behind the
    camera (lambda <= 0). Returns world (x, y).
    """
    u, v = float(pixel[0]), float(pixel[1])
    AR = cam.A @ cam.world_to_cam.R
    M = np.column_stack((AR[:, 0], AR[:, 1], np.array([u, v, 1.0])))
    scale = np.linalg.norm(AR[:, 0]) * np.linalg.norm(AR[:, 1]) * np.linalg.norm(M[:, 2])
    det = np.linalg.det(M)
    if abs(det) <= 1.0e-12 * max(scale, 1.0e-300):
        raise RayParallelToPlane(f"singular system at pixel ({u:.1f}, {v:.1f})")
    rhs = -AR[:, 2] * float(height) - cam.A @ cam.world_to_cam.t
    sol = np.linalg.solve(M, rhs)
    lam = -sol[2]
    if lam <= 0.0:
        raise NegativeDepth(f"intersection depth {lam:.3e} m")
    return (sol[0], sol[1])
