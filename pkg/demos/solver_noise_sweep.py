"""How the three pose solvers degrade with pixel noise.

Projects the tag corners analytically for a bus parked 14 m from the
camera, perturbs them with increasing Gaussian pixel noise and tabulates
position / heading RMS errors of the plain homography solver (bas), the
fixed-height refinement (hopt) and the soft-height refinement (sopt).
500 draws per noise level, fixed seed.
"""

import math

import numpy as np

from rooftag import (
    ScenarioConfig,
    estimate_basic,
    estimate_hard,
    estimate_soft,
    make_layout,
    project_points,
    rot_from_vec,
    rsu_cameras,
)

DISTANCE = 14.0
HEADING = math.radians(30.0)
DRAWS = 500
LEVELS = (0.0, 0.1, 0.3, 0.5, 1.0)


def main():
    cfg = ScenarioConfig()
    cam = rsu_cameras(cfg)[0]
    layout = make_layout(cfg.layout, cfg.tag_width)
    foot = cam.center[:2]
    axis = -foot / np.linalg.norm(foot)
    x, y = foot + DISTANCE * axis
    h = cfg.bus_height

    R = rot_from_vec(np.array([0.0, 0.0, HEADING]))
    world = layout.control_points @ R.T + np.array([x, y, h])
    uv_clean, _ = project_points(cam, world)

    rng = np.random.default_rng(404)
    print(f"bus {DISTANCE:.0f} m out, {DRAWS} draws per level")
    print("sigma_px   bas pos/ang      hopt pos/ang     sopt pos/ang")
    for sigma in LEVELS:
        errs = {n: [] for n in ("bas", "hopt", "sopt")}
        angs = {n: [] for n in ("bas", "hopt", "sopt")}
        for _ in range(DRAWS):
            uv = uv_clean + rng.normal(0.0, sigma, uv_clean.shape)
            obs = [(i, uv[i]) for i in range(len(uv))]
            for name in errs:
                if name == "bas":
                    est = estimate_basic(layout, obs, cam)
                elif name == "hopt":
                    est = estimate_hard(layout, obs, cam, h)
                else:
                    est = estimate_soft(layout, [obs], [cam], h)
                ex, ey, ephi = est.horizontal
                errs[name].append(math.hypot(ex - x, ey - y))
                d = (ephi - HEADING + math.pi) % (2 * math.pi) - math.pi
                angs[name].append(d)
        cells = []
        for name in ("bas", "hopt", "sopt"):
            p = math.sqrt(np.mean(np.square(errs[name])))
            a = math.degrees(math.sqrt(np.mean(np.square(angs[name]))))
            cells.append(f"{p:7.4f}m {a:6.3f}d")
        print(f"  {sigma:4.1f}   " + "   ".join(cells))
    print("position error grows roughly linearly in the noise for all")
    print("three; the height-aware refinements stay an order of magnitude")
    print("below the plain solver at this range")


if __name__ == "__main__":
    main()
