"""Benchmark targets the package commits to, one test per criterion.

Each test prints a single PASS/FAIL verdict line. The print happens
with pytest's capture suspended so the verdicts show up in the live
run log even for passing tests. The rendered campaigns are expensive
(tens of minutes on one core) and shared between criteria through
module fixtures: the clean 20k low-resolution run feeds criteria 2
and 7, the disturbed run feeds 3, 4 and 5.
"""

import math
import os
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from rooftag.codebook import default_codebook
from rooftag.detection import detect_tags
from rooftag.geometry import (
    CameraModel,
    RigidTransform,
    backproject_to_height,
    dlt_homography,
    project,
    project_points,
    rot_from_vec,
    vec_from_rot,
)
from rooftag.pose import (
    SolverSettings,
    estimate_basic,
    estimate_hard,
    estimate_soft,
    finite_difference_jacobian,
    hard_residual_fn,
    init_constrained,
    make_layout,
    soft_residual_fn,
    solve_least_squares,
)
from rooftag.simulate import (
    ScenarioConfig,
    render_frame,
    rsu_cameras,
    run_trials,
    sample_poses,
    write_trials,
    read_trials,
)
from rooftag.stats import bin_by_distance, emit_report


_CAPTURE = None


@pytest.fixture(autouse=True, scope="module")
def _grab_capture_manager(request):
    # fd-level capture swallows even sys.__stdout__, so verdict lines
    # must go out through the capture manager with capture suspended
    global _CAPTURE
    _CAPTURE = request.config.pluginmanager.getplugin("capturemanager")
    yield


def _verdict(num, ok, detail):
    state = "PASS" if ok else "FAIL"
    line = f"ACCEPTANCE {num}: {state} ({detail})"
    if _CAPTURE is not None:
        with _CAPTURE.global_and_fixture_disabled():
            print(line, flush=True)
    else:
        print(line, file=sys.__stdout__, flush=True)
    assert ok, f"criterion {num}: {detail}"


def _solid_bins(records):
    """Distance-indexed bins with every solver count at threshold."""
    return {b.distance: b for b in bin_by_distance(records) if not b.sparse}


def _finite_rms(records, name, field):
    vals = np.array([getattr(r.results[name], field)
                     for r in records if not r.dropped])
    vals = vals[np.isfinite(vals)]
    return float(np.sqrt((vals ** 2).mean()))


# --------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def clean_low_res():
    """Criterion 2/7 campaign: rendered, 960x720, no height disturbance."""
    cfg = ScenarioConfig(samples=20000, seed=101, height_disturbance_max=0.0)
    records = run_trials(cfg, mode="rendered")
    return cfg, records


C3_CHECKS = "sopt@16m max<0.30 rms<0.20 ang<0.5deg and sopt<=hopt"


def _c3_passes(bins):
    b = bins.get(16)
    if b is None:
        return False
    sopt = b.solvers["sopt"]
    hopt = b.solvers["hopt"]
    return (sopt.pos_max < 0.30 and sopt.pos_rms < 0.20
            and math.degrees(sopt.ang_rms) < 0.5
            and sopt.pos_rms <= hopt.pos_rms)


@pytest.fixture(scope="module")
def disturbed_low_res():
    """Criterion 3 campaign with the documented focal fallback ladder."""
    attempts = []
    for focal in (None, 700.0, 900.0):
        cfg = ScenarioConfig(samples=2500, seed=33,
                             height_disturbance_max=0.10,
                             focal_length_px=focal)
        records = run_trials(cfg, mode="rendered")
        bins = _solid_bins(records)
        attempts.append(cfg.focal_length_px)
        if _c3_passes(bins):
            return cfg, records, bins, attempts
    return cfg, records, bins, attempts


@pytest.fixture(scope="module")
def disturbed_high_res(disturbed_low_res):
    """Criterion 4 campaign: same poses at 3200x2400."""
    cfg3, _, _, _ = disturbed_low_res
    cfg = replace(cfg3, image_width=3200, image_height=2400,
                  focal_length_px=cfg3.focal_length_px * 3200.0 / 960.0)
    records = run_trials(cfg, mode="rendered")
    return cfg, records, _solid_bins(records)


# --------------------------------------------------------------- criteria

def test_criterion_1_noiseless_closure():
    cfg = ScenarioConfig(samples=1000, seed=19, pixel_noise_sigma=0.0,
                         height_disturbance_max=0.0)
    t0 = time.perf_counter()
    records = run_trials(cfg)
    elapsed = time.perf_counter() - t0
    pos = {n: _finite_rms(records, n, "pos_err")
           for n in ("bas", "hopt", "sopt")}
    ang = {n: _finite_rms(records, n, "ang_err")
           for n in ("bas", "hopt", "sopt")}
    ok = (all(v < 1e-5 for v in pos.values())
          and all(v < 1e-6 for v in ang.values())
          and elapsed < 10.0)
    worst_p = max(pos.values())
    worst_a = max(ang.values())
    _verdict(1, ok, f"pos rms<={worst_p:.2e} m, ang rms<={worst_a:.2e} rad, "
             f"{elapsed:.1f} s for 1000 analytic samples")


def test_criterion_2_low_res_trends(clean_low_res):
    _, records = clean_low_res
    bins = _solid_bins(records)
    bas16 = bins[16].solvers["bas"].pos_rms
    bas6 = bins[6].solvers["bas"].pos_rms
    far_ok = bas16 < 1.0
    degrade_ok = bas16 >= 2.0 * bas6
    order_ok = all(
        bins[d].solvers[n].pos_rms <= bins[d].solvers["bas"].pos_rms
        for d in bins if d >= 10 for n in ("hopt", "sopt"))
    ok = far_ok and degrade_ok and order_ok
    _verdict(2, ok, f"bas 16m rms={bas16:.3f} m ({bas16 / bas6:.1f}x its "
             f"6m rms), optimized<=bas at every bin>=10m: {order_ok}")


def test_criterion_3_disturbed_low_res(disturbed_low_res):
    cfg, _, bins, attempts = disturbed_low_res
    sopt = bins[16].solvers["sopt"]
    hopt = bins[16].solvers["hopt"]
    ok = _c3_passes(bins)
    _verdict(3, ok, f"focal={cfg.focal_length_px:g} (tried "
             f"{[f'{a:g}' for a in attempts]}), sopt@16m "
             f"max={sopt.pos_max:.3f} rms={sopt.pos_rms:.3f} "
             f"ang={math.degrees(sopt.ang_rms):.3f}deg, "
             f"hopt rms={hopt.pos_rms:.3f}")


def test_criterion_4_high_res_improvement(disturbed_low_res,
                                          disturbed_high_res):
    _, _, lo_bins, _ = disturbed_low_res
    _, _, hi_bins = disturbed_high_res
    shared = sorted(d for d in lo_bins if d in hi_bins and d >= 8)
    not_smaller = [
        f"{n}@{d}m" for d in shared for n in ("bas", "hopt", "sopt")
        if not (hi_bins[d].solvers[n].pos_rms
                < lo_bins[d].solvers[n].pos_rms)]
    factors = {n: lo_bins[16].solvers[n].pos_rms
               / hi_bins[16].solvers[n].pos_rms
               for n in ("bas", "hopt", "sopt")}
    bas_leads = (factors["bas"] >= factors["hopt"]
                 and factors["bas"] >= factors["sopt"])
    ok = bool(shared) and 16 in shared and not not_smaller and bas_leads
    detail = ("16m improvement factors "
              + " ".join(f"{n}={factors[n]:.2f}x" for n in factors))
    if not_smaller:
        detail += f", rms not strictly smaller for {not_smaller}"
    else:
        detail += f", strictly smaller at every bin in {shared}"
    _verdict(4, ok, detail)


def _plate_fully_visible(cfg, cam, sample, layout, margin=2.0):
    R = rot_from_vec(np.array([0.0, 0.0, sample.phi]))
    shift = np.array([sample.x, sample.y, cfg.bus_height + sample.delta])
    w, h = cam.resolution
    scale = (cfg.tag_width / 2 + cfg.tag_width / 8) / (cfg.tag_width / 2)
    for tid in layout.tag_ids:
        pts = layout.control_points[list(layout.corner_indices(tid))]
        ctr = pts.mean(axis=0)
        plate = ctr + (pts - ctr) * scale
        uv, depth = project_points(cam, plate @ R.T + shift)
        if not (np.all(depth > 0)
                and np.all(uv[:, 0] >= margin)
                and np.all(uv[:, 0] <= w - 1 - margin)
                and np.all(uv[:, 1] >= margin)
                and np.all(uv[:, 1] <= h - 1 - margin)):
            return False
    return True


def _tag_free_image(k):
    rng = np.random.default_rng([909, k])
    h, w = 720, 960
    kind = k % 3
    if kind == 0:
        return rng.integers(0, 256, (h, w)).astype(np.uint8)
    if kind == 1:
        yy, xx = np.mgrid[0:h, 0:w].astype(float)
        img = np.full((h, w), 128.0)
        for _ in range(4):
            fx, fy = rng.uniform(0.002, 0.02, 2)
            pha, phb = rng.uniform(0.0, 2.0 * np.pi, 2)
            img += rng.uniform(15.0, 45.0) * (
                np.cos(2 * np.pi * fx * xx + pha)
                * np.cos(2 * np.pi * fy * yy + phb))
        return np.clip(img, 0, 255).astype(np.uint8)
    img = np.full((h, w), 200.0)
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    for _ in range(int(rng.integers(1, 4))):
        cx = rng.uniform(100, w - 100)
        cy = rng.uniform(100, h - 100)
        half_a = rng.uniform(15.0, 70.0)
        half_b = rng.uniform(15.0, 70.0)
        ang = rng.uniform(0.0, np.pi)
        ca, sa = np.cos(ang), np.sin(ang)
        da = (xx - cx) * ca + (yy - cy) * sa
        db = -(xx - cx) * sa + (yy - cy) * ca
        img[(np.abs(da) < half_a) & (np.abs(db) < half_b)] = rng.uniform(
            10.0, 60.0)
    img += rng.normal(0.0, 3.0, (h, w))
    return np.clip(img, 0, 255).astype(np.uint8)


def test_criterion_5_detection_reliability(disturbed_low_res):
    cfg, _, _, _ = disturbed_low_res
    cam = rsu_cameras(cfg)[0]
    layout = make_layout(cfg.layout, cfg.tag_width)
    book = default_codebook()
    checked = missed = false_pos = 0
    for sample in sample_poses(cfg):
        if sample.dist > 16.0:
            continue
        if not _plate_fully_visible(cfg, cam, sample, layout):
            continue
        checked += 1
        dets = detect_tags(render_frame(cfg, cam, sample), book)
        ids = sorted(d.tag_id for d in dets)
        want = sorted(layout.tag_ids)
        missed += len(set(want) - set(ids))
        false_pos += len(ids) - len(set(want) & set(ids))
    ghost = 0
    for k in range(1000):
        ghost += len(detect_tags(_tag_free_image(k), book))
    ok = checked >= 300 and missed == 0 and false_pos == 0 and ghost == 0
    _verdict(5, ok, f"{checked} fully-visible frames<=16m: {missed} missed, "
             f"{false_pos} false; 1000 tag-free images: {ghost} detections")


def test_criterion_6_numerical_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    cfg = ScenarioConfig()
    cam = rsu_cameras(cfg)[0]
    layout = make_layout(cfg.layout, cfg.tag_width)
    h = cfg.bus_height

    def sector_pose():
        r = math.sqrt(rng.uniform(8.0 ** 2, 15.0 ** 2))
        az = math.radians(rng.uniform(-20.0, 20.0))
        base = math.atan2(-cam.center[1], -cam.center[0])
        x = cam.center[0] + r * math.cos(base + az)
        y = cam.center[1] + r * math.sin(base + az)
        return x, y, rng.uniform(-math.pi, math.pi)

    def analytic_obs(x, y, phi, sigma=0.0):
        R = rot_from_vec(np.array([0.0, 0.0, phi]))
        world = layout.control_points @ R.T + np.array([x, y, h])
        uv, _ = project_points(cam, world)
        if sigma:
            uv = uv + rng.normal(0.0, sigma, uv.shape)
        return [(i, uv[i]) for i in range(len(uv))]

    # rotation vector round trip
    rod = 0.0
    for _ in range(200):
        axis = rng.normal(size=3)
        w = axis / np.linalg.norm(axis) * rng.uniform(1e-6, math.pi - 1e-3)
        rod = max(rod, float(np.abs(vec_from_rot(rot_from_vec(w)) - w).max()))
    rod_ok = rod < 1e-9

    # homography recovery on exact projections
    dlt = 0.0
    for _ in range(100):
        x, y, phi = sector_pose()
        R = rot_from_vec(np.array([0.0, 0.0, phi]))
        ext = cam.world_to_cam
        Rc = ext.R @ R
        tc = ext.R @ np.array([x, y, h]) + ext.t
        H_true = cam.A @ np.column_stack([Rc[:, 0], Rc[:, 1], tc])
        H_true /= np.linalg.norm(H_true)
        obs = analytic_obs(x, y, phi)
        uv = np.array([p for _, p in obs])
        H = dlt_homography(layout.control_points[:, :2], uv)
        H /= np.linalg.norm(H)
        if np.sign(H[2, 2]) != np.sign(H_true[2, 2]):
            H = -H
        dlt = max(dlt, float(np.abs(H - H_true).max()))
    dlt_ok = dlt < 1e-8

    # pixel ray to height plane and back
    back = 0.0
    for _ in range(200):
        x, y, _ = sector_pose()
        uv = project(cam, np.array([x, y, h]))
        bx, by = backproject_to_height(cam, uv, h)
        uv2 = project(cam, np.array([bx, by, h]))
        back = max(back, float(np.hypot(uv2[0] - uv[0], uv2[1] - uv[1])))
    back_ok = back < 1e-9

    # finite-difference Jacobians are step-size stable
    jac = 0.0
    for _ in range(100):
        x, y, phi = sector_pose()
        obs = analytic_obs(x, y, phi, sigma=0.3)
        res = soft_residual_fn(layout, [obs], [cam], h)
        p = np.array([0.0, 0.0, phi, x, y, h]) + rng.normal(0, 1e-3, 6)
        J1 = finite_difference_jacobian(res, p, step=1e-6)
        J2 = finite_difference_jacobian(res, p, step=1e-7)
        jac = max(jac, float(np.linalg.norm(J1 - J2)
                             / max(np.linalg.norm(J1), 1e-300)))
    jac_ok = jac < 1e-4

    # accepted optimizer steps never raise the objective
    mono_ok = True
    for _ in range(100):
        x, y, phi = sector_pose()
        obs = analytic_obs(x, y, phi, sigma=1.0)
        res = hard_residual_fn(layout, obs, cam, h)
        init = np.array(init_constrained(layout, obs, cam, h))
        _p, diag = solve_least_squares(res, init, SolverSettings())
        hist = diag["cost_history"]
        mono_ok = mono_ok and all(b <= a + 1e-12 for a, b in
                                  zip(hist, hist[1:]))

    # estimates follow a rigid change of the world frame
    equi = 0.0
    for _ in range(100):
        x, y, phi = sector_pose()
        obs = analytic_obs(x, y, phi)
        gamma = rng.uniform(-math.pi, math.pi)
        shift = rng.uniform(-20.0, 20.0, 2)
        Rg = rot_from_vec(np.array([0.0, 0.0, gamma]))
        tg = np.array([shift[0], shift[1], 0.0])
        ext = cam.world_to_cam
        moved = CameraModel.from_extrinsics(
            cam.A,
            RigidTransform(ext.R @ Rg.T, ext.t - ext.R @ Rg.T @ tg),
            cam.resolution)
        for solver in ("bas", "hopt", "sopt"):
            if solver == "bas":
                a = estimate_basic(layout, obs, cam)
                b = estimate_basic(layout, obs, moved)
            elif solver == "hopt":
                a = estimate_hard(layout, obs, cam, h)
                b = estimate_hard(layout, obs, moved, h)
            else:
                a = estimate_soft(layout, [obs], [cam], h)
                b = estimate_soft(layout, [obs], [moved], h)
            ax, ay, aphi = a.horizontal
            bx, by, bphi = b.horizontal
            moved_xy = Rg[:2, :2] @ np.array([ax, ay]) + tg[:2]
            equi = max(equi, float(np.hypot(bx - moved_xy[0],
                                            by - moved_xy[1])))
            dphi = (bphi - (aphi + gamma) + math.pi) % (2 * math.pi) - math.pi
            equi = max(equi, abs(dphi))
    equi_ok = equi < 1e-9

    elapsed = time.perf_counter() - t0
    ok = (rod_ok and dlt_ok and back_ok and jac_ok and mono_ok and equi_ok
          and elapsed < 30.0)
    _verdict(6, ok, f"rodrigues={rod:.1e} dlt={dlt:.1e} backproject={back:.1e}"
             f" jac={jac:.1e} monotone={mono_ok} equivariance={equi:.1e}, "
             f"{elapsed:.1f} s")


def test_criterion_7_determinism(clean_low_res, tmp_path_factory):
    cfg, serial_records = clean_low_res
    out_a = tmp_path_factory.mktemp("serial")
    out_b = tmp_path_factory.mktemp("parallel")
    write_trials(serial_records, out_a / "trials.csv")
    emit_report(bin_by_distance(read_trials(out_a / "trials.csv")), out_a)

    parallel_records = run_trials(cfg, mode="rendered", n_jobs=2)
    write_trials(parallel_records, out_b / "trials.csv")
    emit_report(bin_by_distance(read_trials(out_b / "trials.csv")), out_b)

    same_trials = ((out_a / "trials.csv").read_bytes()
                   == (out_b / "trials.csv").read_bytes())
    same_stats = ((out_a / "stats.csv").read_bytes()
                  == (out_b / "stats.csv").read_bytes())
    ok = same_trials and same_stats
    _verdict(7, ok, f"serial vs parallel rerun of the 20k campaign: "
             f"trials identical={same_trials} stats identical={same_stats}")
