"""Vehicle pose solvers from roof-tag corner observations.

Three solver flavors over the same control-point inputs:

* estimate_basic: closed-form homography decomposition (DLT, column
  normalization, quasi-rotation projection, scale recovery), composed
  with the camera extrinsics into a world pose.
* estimate_hard: the tag plane is pinned to z = h; damped Gauss-Newton
  over the 3-parameter horizontal pose (x, y, phi), initialized from
  height-plane back-projection plus the basic orientation.
* estimate_soft: full 6-parameter pose with a quadratic height penalty
  per control point (weight mu, default 1), optionally over several
  cameras at once.

Layout corner order within each tag follows the same convention as the
detector output, so detection corners map to control points by index.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFiniteResidual, TagBehindCamera
from .geometry import (
    CameraModel,
    backproject_to_height,
    dlt_homography,
    project_points,
    rot_from_vec,
    vec_from_rot,
)

__all__ = [
    "TagLayout",
    "make_layout",
    "PoseEstimate",
    "SolverSettings",
    "estimate_basic",
    "init_constrained",
    "estimate_hard",
    "estimate_soft",
    "solve_least_squares",
    "finite_difference_jacobian",
    "hard_residual_fn",
    "soft_residual_fn",
    "LAYOUT_NAMES",
]

LAYOUT_NAMES = ("single-center", "double-front-rear", "triple", "long")


def _wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    r = (a + np.pi) % (2.0 * np.pi) - np.pi
    if r == -np.pi:
        r = np.pi
    return float(r)


@dataclass(frozen=True)
class TagLayout:
    """Control points of the roof plate in the tag frame (z = 0).

    control_points: (n, 3) meters; groups of four consecutive points form
    one tag, listed in the same cyclic order the detector reports, and
    tag_ids[g] names group g.
    """

    name: str
    control_points: np.ndarray
    tag_ids: tuple

    def __post_init__(self):
        pts = np.asarray(self.control_points, float)
        object.__setattr__(self, "control_points", pts)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) % 4 or not len(pts):
            raise ConfigError("control points must be (4g, 3)")
        if np.abs(pts[:, 2]).max() > 0:
            raise ConfigError("layout control points must have z = 0")
        if len(self.tag_ids) != len(pts) // 4:
            raise ConfigError("one tag id per group of four corners")
        if len(set(self.tag_ids)) != len(self.tag_ids):
            raise ConfigError("duplicate tag id in layout")
        for g in range(len(self.tag_ids)):
            quad = pts[4 * g:4 * g + 4, :2]
            x, y = quad[:, 0], quad[:, 1]
            area2 = np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))
            if area2 >= 0:
                raise ConfigError(
                    f"tag group {g} corner order inconsistent with the "
                    "detector's corner convention"
                )

    def corner_indices(self, tag_id):
        g = self.tag_ids.index(tag_id)
        return range(4 * g, 4 * g + 4)


def make_layout(name: str, tag_width: float = 1.6) -> TagLayout:
    """Build one of the named roof-plate configurations."""
    if tag_width <= 0:
        raise ConfigError(f"tag_width must be positive, got {tag_width}")
    w = tag_width / 2.0
    square = np.array([[-w, -w], [-w, w], [w, w], [w, -w]])
    if name == "single-center":
        centers, ids = [(0.0, 0.0)], (0,)
    elif name == "double-front-rear":
        centers, ids = [(1.8, 0.0), (-1.8, 0.0)], (0, 1)
    elif name == "triple":
        centers, ids = [(2.0, 0.0), (0.0, 0.0), (-2.0, 0.0)], (0, 1, 2)
    elif name == "long":
        hl, hw = 1.5 * tag_width, w
        plate = np.array([[-hl, -hw], [-hl, hw], [hl, hw], [hl, -hw]])
        pts = np.column_stack([plate, np.zeros(4)])
        return TagLayout(name, pts, (0,))
    else:
        raise ConfigError(f"unknown layout {name!r} (one of {LAYOUT_NAMES})")
    rows = []
    for cx, cy in centers:
        rows.append(square + [cx, cy])
    pts = np.vstack(rows)
    return TagLayout(name, np.column_stack([pts, np.zeros(len(pts))]), ids)


@dataclass(frozen=True)
class PoseEstimate:
    """Tag pose in the world frame plus solver diagnostics.

    horizontal = (x, y, phi) = (T_tw[0], T_tw[1], w_tw[2]).
    """

    w_tw: np.ndarray
    T_tw: np.ndarray
    horizontal: tuple
    rms_reprojection: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 50
    step_tolerance: float = 1e-10
    residual_tolerance: float = 1e-12
    mu: float = 1.0
    damping_init: float = 1e-3

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if min(self.step_tolerance, self.residual_tolerance,
               self.damping_init) <= 0:
            raise ConfigError("tolerances and damping must be positive")
        if self.mu < 0:
            raise ConfigError("mu must be non-negative")


def _check_single_camera(obs):
    seen = set()
    for i, _uv in obs:
        if i in seen:
            raise ConfigError(f"layout index {i} observed twice on one camera")
        seen.add(i)
    return obs


def _split(obs):
    idx = np.array([i for i, _ in obs], int)
    uv = np.array([p for _, p in obs], float)
    return idx, uv


# ------------------------------------------------------------- basic

def _pose_from_homography(A, H):
    """Homography decomposition: (w_tc, R_tc, T_tc), tag frame to camera."""
    M = np.linalg.solve(A, H)

    def decompose(M):
        n1 = np.linalg.norm(M[:, 0])
        n2 = np.linalg.norm(M[:, 1])
        r1 = M[:, 0] / n1
        r2 = M[:, 1] / n2
        r3 = np.cross(r1, r2)
        w = vec_from_rot(np.column_stack([r1, r2, r3]))
        R = rot_from_vec(w)
        lam = np.sqrt(n1 * n2)
        T = M[:, 2] / lam
        return w, R, T

    w, R, T = decompose(M)
    if T[2] < 0:
        w, R, T = decompose(-M)
    if T[2] <= 0:
        raise TagBehindCamera(
            f"decomposed tag depth {T[2]:.3g} is not in front of the camera"
        )
    return w, R, T


def _reprojection_rms(cam, world_pts, uv_obs):
    uv_hat, _ = project_points(cam, world_pts)
    d2 = ((uv_hat - uv_obs) ** 2).sum(axis=1)
    return float(np.sqrt(d2.mean()))


def estimate_basic(layout: TagLayout, obs, cam: CameraModel) -> PoseEstimate:
    """Closed-form pose from one camera's observations.

    obs: list of (layout_index, (u, v)). Needs four or more points in a
    non-degenerate arrangement.
    """
    _check_single_camera(obs)
    idx, uv = _split(obs)
    tag_xy = layout.control_points[idx, :2]
    H = dlt_homography(tag_xy, uv)
    _w_tc, R_tc, T_tc = _pose_from_homography(cam.A, H)
    ext = cam.cam_to_world
    R_tw = ext.R @ R_tc
    w_tw = vec_from_rot(R_tw)
    T_tw = ext.R @ T_tc + ext.t
    horizontal = (float(T_tw[0]), float(T_tw[1]), float(w_tw[2]))
    world_pts = layout.control_points[idx] @ rot_from_vec(w_tw).T + T_tw
    return PoseEstimate(
        w_tw=w_tw,
        T_tw=T_tw,
        horizontal=horizontal,
        rms_reprojection=_reprojection_rms(cam, world_pts, uv),
        iterations=0,
        converged=True,
    )


def init_constrained(layout: TagLayout, obs, cam: CameraModel, h: float):
    """Initial (x, y, phi): back-projected centroid at height h, basic phi."""
    basic = estimate_basic(layout, obs, cam)
    pts = [backproject_to_height(cam, uv, h) for _i, uv in obs]
    xy = np.asarray(pts).mean(axis=0)
    return float(xy[0]), float(xy[1]), basic.horizontal[2]


# ------------------------------------------------- least-squares engine

def finite_difference_jacobian(residual_fn, params, step: float = 1e-6):
    """Central-difference Jacobian, one parameter at a time."""
    params = np.asarray(params, float)
    cols = []
    for j in range(len(params)):
        d = np.zeros_like(params)
        d[j] = step
        hi = np.asarray(residual_fn(params + d), float)
        lo = np.asarray(residual_fn(params - d), float)
        cols.append((hi - lo) / (2.0 * step))
    return np.column_stack(cols)


def solve_least_squares(residual_fn, init,
                        settings: SolverSettings = SolverSettings()):
    """Damped Gauss-Newton with Levenberg-style damping adaptation.

    Damping is multiplied by 10 whenever a trial step fails to decrease
    the objective, divided by 10 after every accepted step. Returns the
    parameter vector and a diagnostics dict (iterations, converged,
    cost_history of accepted objective values).
    """
    p = np.asarray(init, float).copy()
    r = np.asarray(residual_fn(p), float)
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidual("residual not finite at the initial point")
    cost = float(r @ r)
    history = [cost]
    lam = settings.damping_init
    eye = np.eye(len(p))
    converged = False
    iterations = 0
    for _ in range(settings.max_iterations):
        iterations += 1
        J = finite_difference_jacobian(residual_fn, p)
        g = J.T @ r
        JTJ = J.T @ J
        step = None
        new_r = None
        new_cost = None
        for _attempt in range(30):
            try:
                trial = np.linalg.solve(JTJ + lam * eye, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            rc = np.asarray(residual_fn(p + trial), float)
            cc = float(rc @ rc) if np.all(np.isfinite(rc)) else np.inf
            if cc <= cost:
                step, new_r, new_cost = trial, rc, cc
                break
            lam *= 10.0
        if step is None:
            # no descent within the damping range: stationary point
            converged = True
            break
        p = p + step
        decrease = cost - new_cost
        r, cost = new_r, new_cost
        lam /= 10.0
        history.append(cost)
        if np.linalg.norm(step) < settings.step_tolerance \
                or decrease < settings.residual_tolerance:
            converged = True
            break
    return p, {
        "iterations": iterations,
        "converged": converged,
        "cost_history": history,
    }


# --------------------------------------------------------- hard solver

def hard_residual_fn(layout: TagLayout, obs, cam: CameraModel, h: float):
    """Reprojection residual of the z = h constrained pose (x, y, phi)."""
    idx, uv = _split(obs)
    tag_pts = layout.control_points[idx]

    def residual(p):
        x, y, phi = p
        R = rot_from_vec(np.array([0.0, 0.0, phi]))
        world = tag_pts @ R.T + np.array([x, y, h])
        uv_hat, _depth = project_points(cam, world)
        return (uv_hat - uv).ravel()

    return residual


def estimate_hard(layout: TagLayout, obs, cam: CameraModel, h: float,
                  settings: SolverSettings = SolverSettings()) -> PoseEstimate:
    _check_single_camera(obs)
    init = np.array(init_constrained(layout, obs, cam, h))
    residual = hard_residual_fn(layout, obs, cam, h)
    p, diag = solve_least_squares(residual, init, settings)
    phi = _wrap_angle(p[2])
    w_tw = np.array([0.0, 0.0, phi])
    T_tw = np.array([p[0], p[1], h])
    n_pts = len(obs)
    rms = float(np.sqrt(diag["cost_history"][-1] / n_pts))
    return PoseEstimate(
        w_tw=w_tw,
        T_tw=T_tw,
        horizontal=(float(p[0]), float(p[1]), phi),
        rms_reprojection=rms,
        iterations=diag["iterations"],
        converged=diag["converged"],
    )


# --------------------------------------------------------- soft solver

def soft_residual_fn(layout: TagLayout, obs_multi, cams, h: float,
                     mu: float = 1.0):
    """Residuals of the full 6-parameter pose (w_tw, T_tw).

    Reprojection terms for every observed (point, camera) pair, then one
    mu * (z_i - h) term per layout control point. obs_multi is a list of
    per-camera observation lists aligned with cams.
    """
    per_cam = []
    for obs, cam in zip(obs_multi, cams):
        if obs:
            idx, uv = _split(obs)
            per_cam.append((layout.control_points[idx], uv, cam))
    all_pts = layout.control_points

    def residual(p):
        R = rot_from_vec(p[:3])
        T = p[3:]
        parts = []
        for tag_pts, uv, cam in per_cam:
            world = tag_pts @ R.T + T
            uv_hat, _depth = project_points(cam, world)
            parts.append((uv_hat - uv).ravel())
        z_all = all_pts @ R.T[:, 2] + T[2]
        parts.append(mu * (z_all - h))
        return np.concatenate(parts)

    return residual


def estimate_soft(layout: TagLayout, obs_multi, cams, h: float,
                  settings: SolverSettings = SolverSettings()) -> PoseEstimate:
    """Soft height-constrained pose over one or more cameras.

    The initial pose comes from the reference camera: the one observing
    the most points, ties broken by lowest camera index.
    """
    if len(obs_multi) != len(cams) or not cams:
        raise ConfigError("need one observation list per camera")
    for obs in obs_multi:
        _check_single_camera(obs)
    counts = [len(obs) for obs in obs_multi]
    ref = int(np.argmax(counts))  # argmax takes the first (lowest) index
    x0, y0, phi0 = init_constrained(layout, obs_multi[ref], cams[ref], h)
    init = np.array([0.0, 0.0, phi0, x0, y0, h])
    residual = soft_residual_fn(layout, obs_multi, cams, h, settings.mu)
    p, diag = solve_least_squares(residual, init, settings)
    R = rot_from_vec(p[:3])
    w_tw = vec_from_rot(R)  # canonical rotation vector, angle in [0, pi]
    T_tw = p[3:].copy()
    n_pts = sum(counts)
    final = residual(p)
    n_reproj = 2 * n_pts
    rms = float(np.sqrt((final[:n_reproj] ** 2).sum() / n_pts)) if n_pts else 0.0
    return PoseEstimate(
        w_tw=w_tw,
        T_tw=T_tw,
        horizontal=(float(T_tw[0]), float(T_tw[1]), float(w_tw[2])),
        rms_reprojection=rms,
        iterations=diag["iterations"],
        converged=diag["converged"],
    )
