"""Synthetic intersection scenes for benchmarking the pose solvers.

A scenario places four roadside cameras on the corners of an intersection,
all looking at its center, and drops a bus with roof tags at random
horizontal poses inside a sector in front of camera 0. Observations come
in two flavors: `analytic` projects the layout corners directly and adds
Gaussian pixel noise, `rendered` paints a grayscale frame and runs the
full detector on it.

Randomness is split per trial: trial i draws everything it needs from
``numpy.random.default_rng([seed, i])``, in the fixed order radius,
azimuth, heading, height disturbance, then pixel noise. Parallel and
serial runs therefore produce identical records.

World frame: z up, ground at z = 0, intersection center at the origin.
The vehicle (= tag) frame shares the world z axis; the bus top and the
tag plates lie in the plane z = bus_height + delta.
"""

import math
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from multiprocessing import get_context

import numpy as np

from ._kernels import warm_up
from .codebook import TagCodebook, default_codebook
from .detection import detect_tags
from .errors import BehindCamera, ConfigError, EmptySector, RooftagError
from .geometry import CameraModel, RigidTransform, project_points, rot_from_vec
from .pose import (
    LAYOUT_NAMES,
    estimate_basic,
    estimate_hard,
    estimate_soft,
    make_layout,
)

__all__ = [
    "SOLVER_NAMES",
    "TRIALS_HEADER",
    "ScenarioConfig",
    "GroundTruthSample",
    "SolverResult",
    "TrialRecord",
    "load_scenario",
    "apply_overrides",
    "rsu_cameras",
    "sample_poses",
    "observe_corners",
    "render_frame",
    "run_trials",
    "write_trials",
    "read_trials",
]

SOLVER_NAMES = ("bas", "hopt", "sopt")

_GROUND = 200
_BUS_TOP = 140
_TAG_DARK = 20
_TAG_LIGHT = 235


@dataclass(frozen=True)
class ScenarioConfig:
    """Intersection scenario; every field has a benchmark default.

    focal_length_px of None resolves to 800 px at 960-wide frames, scaled
    with image_width so changing the resolution keeps the field of view.
    """

    lane_width: float = 3.7
    rsu_height: float = 8.0
    rsu_pitch_down_deg: float = 40.0
    image_width: int = 960
    image_height: int = 720
    focal_length_px: float | None = None
    bus_length: float = 6.0
    bus_width: float = 2.0
    bus_height: float = 3.0
    tag_width: float = 1.6
    layout: str = "double-front-rear"
    height_disturbance_max: float = 0.0
    pixel_noise_sigma: float = 0.3
    sector_radius_min: float = 6.0
    sector_radius_max: float = 17.0
    sector_azimuth_half_deg: float = 40.0
    heading_min_deg: float = 0.0
    heading_max_deg: float = 360.0
    samples: int = 1000
    seed: int = 1

    def __post_init__(self):
        if self.focal_length_px is None:
            object.__setattr__(
                self, "focal_length_px", 800.0 * self.image_width / 960.0
            )
        for name in ("lane_width", "rsu_height", "bus_length", "bus_width",
                     "bus_height", "tag_width", "focal_length_px"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.rsu_pitch_down_deg < 90.0:
            raise ConfigError("rsu_pitch_down_deg must be in (0, 90)")
        if self.image_width < 1 or self.image_height < 1:
            raise ConfigError("image dimensions must be positive")
        if self.height_disturbance_max < 0:
            raise ConfigError("height_disturbance_max must be >= 0")
        if self.pixel_noise_sigma < 0:
            raise ConfigError("pixel_noise_sigma must be >= 0")
        if self.sector_radius_min < 0:
            raise ConfigError("sector_radius_min must be >= 0")
        if not 0.0 <= self.sector_azimuth_half_deg <= 180.0:
            raise ConfigError("sector_azimuth_half_deg must be in [0, 180]")
        if self.heading_max_deg < self.heading_min_deg:
            raise ConfigError("heading_max_deg must be >= heading_min_deg")
        if self.samples < 0:
            raise ConfigError("samples must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.layout not in LAYOUT_NAMES:
            raise ConfigError(
                f"unknown layout {self.layout!r}; choose from "
                + ", ".join(LAYOUT_NAMES)
            )


_INT_KEYS = {"image_width", "image_height", "samples", "seed"}
_STR_KEYS = {"layout"}
_ALL_KEYS = {f.name for f in fields(ScenarioConfig)}


def _parse_assignment(text, where):
    key, sep, value = text.partition("=")
    key = key.strip()
    value = value.strip()
    if not sep or not key or not value:
        raise ConfigError(f"{where}: expected key = value, got {text!r}")
    if key not in _ALL_KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        if key in _STR_KEYS:
            return key, value
        if key in _INT_KEYS:
            return key, int(value)
        return key, float(value)
    except ValueError:
        raise ConfigError(f"{where}: bad value {value!r} for {key}") from None


def load_scenario(path=None, overrides=()) -> ScenarioConfig:
    """Read a flat key = value scenario file; `#` starts a comment.

    With path of None only defaults and overrides apply. overrides is an
    iterable of "key=value" strings applied after the file, before
    validation. Unknown and duplicate keys are rejected.
    """
    items = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, value = _parse_assignment(line, f"{path}:{lineno}")
                if key in items:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                items[key] = value
    for text in overrides:
        key, value = _parse_assignment(text, "override")
        items[key] = value
    return ScenarioConfig(**items)


def apply_overrides(cfg: ScenarioConfig, overrides) -> ScenarioConfig:
    """A copy of cfg with "key=value" override strings applied."""
    items = dict(_parse_assignment(text, "override") for text in overrides)
    return replace(cfg, **items) if items else cfg


# ------------------------------------------------------------------ cameras

def _corner_camera(position, yaw, pitch_down, focal, resolution):
    """Camera at `position`; x right, y down, z forward along (yaw, -pitch)."""
    cp, sp = math.cos(pitch_down), math.sin(pitch_down)
    cy, sy = math.cos(yaw), math.sin(yaw)
    forward = np.array([cy * cp, sy * cp, -sp])
    right = np.array([sy, -cy, 0.0])
    down = np.cross(forward, right)
    R_cw = np.column_stack([right, down, forward])
    world_to_cam = RigidTransform(R_cw.T, -R_cw.T @ np.asarray(position, float))
    w, h = resolution
    A = np.array([
        [focal, 0.0, (w - 1) / 2.0],
        [0.0, focal, (h - 1) / 2.0],
        [0.0, 0.0, 1.0],
    ])
    return CameraModel.from_extrinsics(A, world_to_cam, resolution)


@lru_cache(maxsize=32)
def rsu_cameras(cfg: ScenarioConfig):
    """The four corner cameras, each looking at the intersection center.

    Camera 0 sits at (+2 lanes, +2 lanes); the rest follow counter-
    clockwise. All benchmark trials observe through camera 0.
    """
    half = 2.0 * cfg.lane_width
    out = []
    for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        pos = (sx * half, sy * half, cfg.rsu_height)
        yaw = math.atan2(-pos[1], -pos[0])
        out.append(_corner_camera(
            pos, yaw, math.radians(cfg.rsu_pitch_down_deg),
            cfg.focal_length_px, (cfg.image_width, cfg.image_height),
        ))
    return tuple(out)


# ----------------------------------------------------------------- sampling

@dataclass(frozen=True)
class GroundTruthSample:
    """One drawn vehicle pose; dist is horizontal range to camera 0's foot."""

    trial: int
    x: float
    y: float
    phi: float
    delta: float
    dist: float


def _check_sector(cfg):
    if cfg.sector_radius_min >= cfg.sector_radius_max:
        raise EmptySector(
            f"radius range [{cfg.sector_radius_min}, {cfg.sector_radius_max}]"
            " has no area"
        )
    if cfg.sector_azimuth_half_deg <= 0:
        raise EmptySector("sector_azimuth_half_deg must be positive")


def _draw_sample(cfg, index, rng) -> GroundTruthSample:
    """Draws, in order: squared radius, azimuth, heading, disturbance."""
    foot_x = 2.0 * cfg.lane_width
    foot_y = 2.0 * cfg.lane_width
    r = math.sqrt(rng.uniform(cfg.sector_radius_min ** 2,
                              cfg.sector_radius_max ** 2))
    half = math.radians(cfg.sector_azimuth_half_deg)
    az = math.atan2(-foot_y, -foot_x) + rng.uniform(-half, half)
    phi = rng.uniform(math.radians(cfg.heading_min_deg),
                      math.radians(cfg.heading_max_deg))
    d = cfg.height_disturbance_max
    delta = rng.uniform(-d, d)
    return GroundTruthSample(
        trial=index,
        x=foot_x + r * math.cos(az),
        y=foot_y + r * math.sin(az),
        phi=phi,
        delta=delta,
        dist=r,
    )


def sample_poses(cfg: ScenarioConfig):
    """cfg.samples ground-truth poses, uniform over the sector area."""
    _check_sector(cfg)
    return [
        _draw_sample(cfg, i, np.random.default_rng([cfg.seed, i]))
        for i in range(cfg.samples)
    ]


# ------------------------------------------------------------- observations

def observe_corners(cfg, cam: CameraModel, sample, rng=None):
    """Analytic corner observations: project, add noise, crop to the frame.

    Returns a list of (layout_index, (u, v)) pairs, or an empty list when
    fewer than four corners land inside the image. rng supplies the pixel
    noise and is required when pixel_noise_sigma > 0.
    """
    layout = make_layout(cfg.layout, cfg.tag_width)
    z = cfg.bus_height + sample.delta
    R = rot_from_vec(np.array([0.0, 0.0, sample.phi]))
    world = layout.control_points @ R.T + np.array([sample.x, sample.y, z])
    uv, depth = project_points(cam, world)
    if cfg.pixel_noise_sigma > 0:
        if rng is None:
            raise ValueError("rng is required when pixel_noise_sigma > 0")
        uv = uv + rng.normal(0.0, cfg.pixel_noise_sigma, uv.shape)
    w, h = cam.resolution
    keep = (
        (depth > 1e-6)
        & (uv[:, 0] >= -0.5) & (uv[:, 0] <= w - 0.5)
        & (uv[:, 1] >= -0.5) & (uv[:, 1] <= h - 0.5)
    )
    obs = [(int(i), uv[i].copy()) for i in np.flatnonzero(keep)]
    return obs if len(obs) >= 4 else []


# --------------------------------------------------------------- rendering

def _ray_plane_xy(cam, us, vs, plane_z):
    """World (x, y) where pixel rays cross the plane z = plane_z.

    Returns (x, y, hit); hit is False where the ray runs parallel to or
    away from the plane.
    """
    A_inv = np.linalg.inv(cam.A)
    R_cw = cam.world_to_cam.R.T
    center = -R_cw @ cam.world_to_cam.t
    ones = np.ones_like(us)
    d_cam = A_inv @ np.stack([us, vs, ones])
    d_world = R_cw @ d_cam
    dz = d_world[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (plane_z - center[2]) / dz
    hit = np.isfinite(t) & (t > 1e-9)
    x = center[0] + t * d_world[0]
    y = center[1] + t * d_world[1]
    return x, y, hit


def _plate_geometry(cfg, codebook: TagCodebook):
    """Per-tag (center_x, center_y, grid) in the vehicle frame."""
    layout = make_layout(cfg.layout, cfg.tag_width)
    grids = dict(codebook.entries)
    plates = []
    for g, tid in enumerate(layout.tag_ids):
        if tid not in grids:
            raise ConfigError(f"codebook has no entry for tag id {tid}")
        quad = layout.control_points[4 * g:4 * g + 4, :2]
        cx, cy = quad.mean(axis=0)
        plates.append((float(cx), float(cy), grids[tid]))
    return plates


def _surface_color(cfg, sample, plates, xw, yw, hit):
    """Color of the z = bus_height + delta plane at world points.

    Ground outside the bus top, mid gray on it, tag plates painted from
    their grids (one-cell white band around the dark bordered square).
    Also returns the mask of points that landed on a plate.
    """
    c, s = math.cos(sample.phi), math.sin(sample.phi)
    dx = xw - sample.x
    dy = yw - sample.y
    vx = c * dx + s * dy
    vy = -s * dx + c * dy
    color = np.full(xw.shape, _GROUND, np.uint8)
    on_bus = (
        hit
        & (np.abs(vx) <= cfg.bus_length / 2.0)
        & (np.abs(vy) <= cfg.bus_width / 2.0)
    )
    color[on_bus] = _BUS_TOP
    on_plate = np.zeros(xw.shape, bool)
    for cx, cy, grid in plates:
        k = grid.shape[0]
        cell = cfg.tag_width / (k + 2)
        half_plate = (k + 4) / 2.0 * cell
        lx = vx - cx
        ly = vy - cy
        inside = hit & (np.abs(lx) <= half_plate) & (np.abs(ly) <= half_plate)
        if not inside.any():
            continue
        on_plate |= inside
        gx = lx[inside] / cell + (k + 2) / 2.0
        gy = (k + 2) / 2.0 - ly[inside] / cell
        vals = np.full(gx.shape, _TAG_LIGHT, np.uint8)
        in_square = (gx >= 0) & (gx < k + 2) & (gy >= 0) & (gy < k + 2)
        border = in_square & (
            (gx < 1) | (gx >= k + 1) | (gy < 1) | (gy >= k + 1)
        )
        vals[border] = _TAG_DARK
        interior = in_square & ~border
        if interior.any():
            i = np.clip((gy[interior] - 1).astype(int), 0, k - 1)
            j = np.clip((gx[interior] - 1).astype(int), 0, k - 1)
            vals[interior] = np.where(grid[i, j] == 1, _TAG_DARK, _TAG_LIGHT)
        color[inside] = vals
    return color, on_plate


def _clip_bbox(uv, width, height, pad):
    lo_u = max(int(math.floor(uv[:, 0].min())) - pad, 0)
    hi_u = min(int(math.ceil(uv[:, 0].max())) + pad, width - 1)
    lo_v = max(int(math.floor(uv[:, 1].min())) - pad, 0)
    hi_v = min(int(math.ceil(uv[:, 1].max())) + pad, height - 1)
    if lo_u > hi_u or lo_v > hi_v:
        return None
    return lo_u, hi_u, lo_v, hi_v

# sub-pixel offsets of the 4x4 supersampling pattern
_SS = (np.arange(4) + 0.5) / 4.0 - 0.5
_SS_U = np.tile(_SS, 4)
_SS_V = np.repeat(_SS, 4)


def render_frame(cfg, cam: CameraModel, sample, codebook=None) -> np.ndarray:
    """Grayscale frame of the scene for one ground-truth sample.

    Flat ground, hard-edged bus-top rectangle, and tag plates supersampled
    4x4 wherever any sub-ray lands on a plate (coverage anti-aliasing
    against whatever lies behind the plate edge). Deterministic.
    """
    if cfg.layout == "long":
        raise ConfigError("layout 'long' is analytic-only; it has no raster"
                          " cell grid")
    if codebook is None:
        codebook = _default_codebook()
    w, h = cam.resolution
    z = cfg.bus_height + sample.delta
    c, s = math.cos(sample.phi), math.sin(sample.phi)
    R2 = np.array([[c, -s], [s, c]])
    bus_local = np.array([
        [cfg.bus_length / 2.0, cfg.bus_width / 2.0],
        [-cfg.bus_length / 2.0, cfg.bus_width / 2.0],
        [-cfg.bus_length / 2.0, -cfg.bus_width / 2.0],
        [cfg.bus_length / 2.0, -cfg.bus_width / 2.0],
    ])
    bus_world = np.column_stack([
        bus_local @ R2.T + np.array([sample.x, sample.y]),
        np.full(4, z),
    ])
    bus_uv, bus_depth = project_points(cam, bus_world)
    if (bus_depth <= 1e-6).any():
        raise BehindCamera("bus top is not fully in front of the camera")

    img = np.full((h, w), _GROUND, np.uint8)
    plates = _plate_geometry(cfg, codebook)

    # hard pass: bus-top rectangle, decided at pixel centers
    bbox = _clip_bbox(bus_uv, w, h, pad=1)
    if bbox is not None:
        lo_u, hi_u, lo_v, hi_v = bbox
        ncols = hi_u - lo_u + 1
        step = max(1, 65536 // ncols)
        for r0 in range(lo_v, hi_v + 1, step):
            r1 = min(r0 + step, hi_v + 1)
            vs, us = np.mgrid[r0:r1, lo_u:hi_u + 1].astype(float)
            xw, yw, ok = _ray_plane_xy(cam, us.ravel(), vs.ravel(), z)
            color, _ = _surface_color(cfg, sample, [], xw, yw, ok)
            img[r0:r1, lo_u:hi_u + 1] = color.reshape(r1 - r0, ncols)

    # supersampled pass over each plate's image-space neighborhood
    for cx, cy, grid in plates:
        k = grid.shape[0]
        half_plate = (k + 4) / 2.0 * (cfg.tag_width / (k + 2))
        corners_local = np.array([
            [cx - half_plate, cy - half_plate],
            [cx - half_plate, cy + half_plate],
            [cx + half_plate, cy + half_plate],
            [cx + half_plate, cy - half_plate],
        ])
        corners_world = np.column_stack([
            corners_local @ R2.T + np.array([sample.x, sample.y]),
            np.full(4, z),
        ])
        uv, _depth = project_points(cam, corners_world)
        bbox = _clip_bbox(uv, w, h, pad=1)
        if bbox is None:
            continue
        lo_u, hi_u, lo_v, hi_v = bbox
        ncols = hi_u - lo_u + 1
        step = max(1, 4096 // ncols)
        for r0 in range(lo_v, hi_v + 1, step):
            r1 = min(r0 + step, hi_v + 1)
            vs, us = np.mgrid[r0:r1, lo_u:hi_u + 1].astype(float)
            us = us.ravel()
            vs = vs.ravel()
            uu = (us[:, None] + _SS_U[None, :]).ravel()
            vv = (vs[:, None] + _SS_V[None, :]).ravel()
            xw, yw, ok = _ray_plane_xy(cam, uu, vv, z)
            sub_color, sub_plate = _surface_color(
                cfg, sample, plates, xw, yw, ok
            )
            sub_color = sub_color.reshape(-1, 16)
            covered = sub_plate.reshape(-1, 16).any(axis=1)
            xc, yc, okc = _ray_plane_xy(cam, us, vs, z)
            center_color, _ = _surface_color(cfg, sample, plates, xc, yc, okc)
            value = np.where(
                covered,
                np.rint(sub_color.mean(axis=1)).astype(np.uint8),
                center_color,
            )
            img[r0:r1, lo_u:hi_u + 1] = value.reshape(r1 - r0, ncols)
    return img


# ------------------------------------------------------------------ trials

@dataclass(frozen=True)
class SolverResult:
    est_x: float
    est_y: float
    est_phi: float
    pos_err: float
    ang_err: float
    converged: bool


@dataclass(frozen=True)
class TrialRecord:
    """Ground truth plus per-solver outcomes; dropped means no usable view."""

    sample: GroundTruthSample
    results: dict
    dropped: bool


@lru_cache(maxsize=1)
def _default_codebook():
    return default_codebook()


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _corners_from_detections(layout, detections):
    """Map decoded tags onto layout indices; lowest Hamming wins per id."""
    best = {}
    for det in detections:
        if det.tag_id not in layout.tag_ids:
            continue
        old = best.get(det.tag_id)
        if old is None or det.hamming < old.hamming:
            best[det.tag_id] = det
    obs = []
    for tid in layout.tag_ids:
        det = best.get(tid)
        if det is None:
            continue
        for m, idx in enumerate(layout.corner_indices(tid)):
            obs.append((int(idx), det.corners[m].copy()))
    return obs


def _run_solvers(layout, obs, cam, h, solvers):
    results = {}
    for name in solvers:
        try:
            if name == "bas":
                est = estimate_basic(layout, obs, cam)
            elif name == "hopt":
                est = estimate_hard(layout, obs, cam, h)
            elif name == "sopt":
                est = estimate_soft(layout, [obs], [cam], h)
            else:
                raise ConfigError(f"unknown solver {name!r}")
        except ConfigError:
            raise
        except RooftagError:
            nan = float("nan")
            results[name] = SolverResult(nan, nan, nan, nan, nan, False)
            continue
        results[name] = est
    return results


def _run_trial(cfg, mode, solvers, index) -> TrialRecord:
    rng = np.random.default_rng([cfg.seed, index])
    sample = _draw_sample(cfg, index, rng)
    cam = rsu_cameras(cfg)[0]
    layout = make_layout(cfg.layout, cfg.tag_width)
    if mode == "analytic":
        obs = observe_corners(cfg, cam, sample, rng)
    else:
        img = render_frame(cfg, cam, sample)
        obs = _corners_from_detections(
            layout, detect_tags(img, _default_codebook())
        )
        if len(obs) < 4:
            obs = []
    if not obs:
        return TrialRecord(sample, {}, dropped=True)
    results = {}
    for name, est in _run_solvers(layout, obs, cam, cfg.bus_height,
                                  solvers).items():
        if isinstance(est, SolverResult):
            results[name] = est
            continue
        ex, ey, ephi = est.horizontal
        results[name] = SolverResult(
            est_x=float(ex),
            est_y=float(ey),
            est_phi=float(ephi),
            pos_err=math.hypot(ex - sample.x, ey - sample.y),
            ang_err=abs(_wrap(ephi - sample.phi)),
            converged=bool(est.converged),
        )
    return TrialRecord(sample, results, dropped=False)


def _run_trial_star(args):
    return _run_trial(*args)


def run_trials(cfg: ScenarioConfig, mode="analytic",
               solvers=SOLVER_NAMES, n_jobs=1):
    """All cfg.samples trials through camera 0; records in trial order.

    mode "analytic" uses noisy projected corners, "rendered" paints each
    frame and runs the detector. Solvers receive the nominal bus height,
    never the drawn disturbance. n_jobs > 1 forks worker processes; the
    per-trial RNG split keeps the output identical to a serial run.
    """
    if mode not in ("analytic", "rendered"):
        raise ConfigError(f"unknown mode {mode!r}")
    solvers = tuple(solvers)
    for name in solvers:
        if name not in SOLVER_NAMES:
            raise ConfigError(f"unknown solver {name!r}")
    _check_sector(cfg)
    jobs = [(cfg, mode, solvers, i) for i in range(cfg.samples)]
    if n_jobs <= 1 or len(jobs) < 2:
        return [_run_trial(*job) for job in jobs]
    if mode == "rendered":
        warm_up()  # compile kernels once, before the fork
    chunk = max(1, len(jobs) // (4 * n_jobs))
    with get_context("fork").Pool(n_jobs) as pool:
        return pool.map(_run_trial_star, jobs, chunksize=chunk)


# --------------------------------------------------------------------- csv

TRIALS_HEADER = ("trial,x,y,phi,delta,dist,solver,est_x,est_y,est_phi,"
                 "pos_err,ang_err,converged,dropped")


def _fmt(v) -> str:
    return format(float(v), ".9g")


def write_trials(records, path):
    """Trial records as CSV, one row per solver (a lone '-' row if dropped)."""
    lines = [TRIALS_HEADER]
    for rec in records:
        s = rec.sample
        head = (f"{s.trial},{_fmt(s.x)},{_fmt(s.y)},{_fmt(s.phi)},"
                f"{_fmt(s.delta)},{_fmt(s.dist)}")
        if rec.dropped:
            lines.append(f"{head},-,nan,nan,nan,nan,nan,0,1")
            continue
        for name, r in rec.results.items():
            lines.append(
                f"{head},{name},{_fmt(r.est_x)},{_fmt(r.est_y)},"
                f"{_fmt(r.est_phi)},{_fmt(r.pos_err)},{_fmt(r.ang_err)},"
                f"{int(r.converged)},0"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trials(path):
    """Parse a write_trials CSV back into TrialRecords (in file order)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != TRIALS_HEADER:
        raise RooftagError(f"{path}: not a trials CSV (bad header)")
    records = []
    current = None  # (trial_index, sample, results, dropped)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 14:
            raise RooftagError(f"{path}:{lineno}: expected 14 fields")
        try:
            trial = int(parts[0])
            sample = GroundTruthSample(
                trial, float(parts[1]), float(parts[2]), float(parts[3]),
                float(parts[4]), float(parts[5]),
            )
            solver = parts[6]
            dropped = parts[13] == "1"
            result = SolverResult(
                float(parts[7]), float(parts[8]), float(parts[9]),
                float(parts[10]), float(parts[11]), parts[12] == "1",
            )
        except ValueError:
            raise RooftagError(f"{path}:{lineno}: malformed row") from None
        if current is None or current[0] != trial:
            if current is not None:
                records.append(TrialRecord(current[1], current[2], current[3]))
            current = (trial, sample, {}, dropped)
        if not dropped:
            current[2][solver] = result
    if current is not None:
        records.append(TrialRecord(current[1], current[2], current[3]))
    return records
