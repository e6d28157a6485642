"""Command line front end for the rooftag pipeline.

Five subcommands: `render` writes synthetic camera frames as PGM,
`detect` prints the tags found in one frame, `estimate` turns a
detections file back into vehicle poses, `bench` runs a full trial
campaign and reports distance-binned statistics, `report` re-aggregates
an existing trials CSV. Exit codes: 0 success, 2 configuration problem
(including command line errors), 3 runtime failure. All printed numbers
use 9 significant digits so runs diff cleanly.
"""

import argparse
import math
import os
import sys

from .codebook import default_codebook, load_codebook
from .detection import detect_tags
from .errors import ConfigError, RooftagError
from .pgm import read_pgm, write_pgm
from .pose import estimate_basic, estimate_hard, estimate_soft, make_layout
from .simulate import (
    SOLVER_NAMES,
    load_scenario,
    read_trials,
    render_frame,
    rsu_cameras,
    run_trials,
    sample_poses,
    write_trials,
)
from .stats import bin_by_distance, emit_report

__all__ = ["main", "build_parser"]


def _g9(x: float) -> str:
    return format(float(x), ".9g")


def _add_config_options(sub, trials=True):
    sub.add_argument("--config", metavar="PATH", default=None,
                     help="scenario file; defaults apply when omitted")
    sub.add_argument("--set", metavar="KEY=VALUE", action="append",
                     default=[], help="override one scenario key "
                     "(repeatable)")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")
    if trials:
        sub.add_argument("--trials", type=int, default=None,
                         help="override the scenario sample count")


def _load_config(args):
    overrides = list(args.set)
    if getattr(args, "trials", None) is not None:
        overrides.append(f"samples={args.trials}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        return load_scenario(args.config, overrides)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def _solver_list(text):
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [n for n in names if n not in SOLVER_NAMES]
    if bad or not names:
        raise ConfigError(f"unknown solvers {bad!r}; choose from "
                          f"{', '.join(SOLVER_NAMES)}")
    return names


def _cmd_render(args):
    cfg = _load_config(args)
    indices = sorted(set(args.index))
    if indices[0] < 0 or indices[-1] >= cfg.samples:
        raise ConfigError(f"sample index out of range 0..{cfg.samples - 1}")
    cam = rsu_cameras(cfg)[0]
    os.makedirs(args.out, exist_ok=True)
    wanted = set(indices)
    for sample in sample_poses(cfg):
        if sample.trial not in wanted:
            continue
        path = os.path.join(args.out, f"frame_{sample.trial:04d}.pgm")
        write_pgm(path, render_frame(cfg, cam, sample))
        print(path)
    return 0


def _cmd_detect(args):
    img = read_pgm(args.image)
    book = (load_codebook(args.codebook) if args.codebook
            else default_codebook())
    for det in detect_tags(img, book):
        cells = [str(det.tag_id)]
        for u, v in det.corners:
            cells.append(_g9(u))
            cells.append(_g9(v))
        cells.append(str(det.hamming))
        print(" ".join(cells))
    return 0


def _read_detections(path, layout):
    """Detection lines back into (layout_index, (u, v)) observations."""
    obs = []
    with open(path, encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) < 4 or (len(tokens) - 2) % 2:
                raise RooftagError(f"{path}:{lineno}: malformed "
                                   "detection line")
            try:
                tag_id = int(tokens[0])
                coords = [float(t) for t in tokens[1:-1]]
                int(tokens[-1])  # hamming, unused here
            except ValueError as exc:
                raise RooftagError(f"{path}:{lineno}: malformed "
                                   "detection line") from exc
            if tag_id not in layout.tag_ids:
                raise RooftagError(f"{path}:{lineno}: tag {tag_id} is not "
                                   f"in the {layout.name!r} layout")
            idx = list(layout.corner_indices(tag_id))
            for k in range(len(coords) // 2):
                obs.append((idx[k], (coords[2 * k], coords[2 * k + 1])))
    return obs


def _cmd_estimate(args):
    cfg = _load_config(args)
    layout = make_layout(cfg.layout, cfg.tag_width)
    cam = rsu_cameras(cfg)[0]
    obs = _read_detections(args.detections, layout)
    h = cfg.bus_height
    for name in _solver_list(args.solvers):
        if name == "bas":
            est = estimate_basic(layout, obs, cam)
        elif name == "hopt":
            est = estimate_hard(layout, obs, cam, h)
        else:
            est = estimate_soft(layout, [obs], [cam], h)
        x, y, phi = est.horizontal
        print(f"{name} {_g9(x)} {_g9(y)} {_g9(math.degrees(phi))}")
    return 0


def _cmd_bench(args):
    cfg = _load_config(args)
    records = run_trials(cfg, mode=args.mode,
                         solvers=_solver_list(args.solvers),
                         n_jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    trials_path = os.path.join(args.out, "trials.csv")
    write_trials(records, trials_path)
    # stats come from the written file, so `report` on it reproduces
    # stats.csv exactly
    stats = bin_by_distance(read_trials(trials_path))
    for path in (trials_path, *emit_report(stats, args.out)):
        print(path)
    return 0


def _cmd_report(args):
    records = read_trials(args.trials_csv)
    stats = bin_by_distance(records)
    os.makedirs(args.out, exist_ok=True)
    for path in emit_report(stats, args.out):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rooftag",
        description="fiducial roof tags: rendering, detection, pose "
                    "estimation and benchmarks",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("render", help="write synthetic frames as PGM")
    p.add_argument("index", type=int, nargs="+",
                   help="sample indices to render")
    _add_config_options(p)
    p.add_argument("--out", metavar="DIR", default=".")
    p.set_defaults(func=_cmd_render)

    p = subs.add_parser("detect", help="find tags in a PGM frame")
    p.add_argument("image", help="input PGM path")
    p.add_argument("--codebook", metavar="PATH", default=None,
                   help="codebook file; built-in codes when omitted")
    p.set_defaults(func=_cmd_detect)

    p = subs.add_parser("estimate",
                        help="solve vehicle poses from a detections file")
    p.add_argument("detections", help="file of `detect` output lines")
    _add_config_options(p, trials=False)
    p.add_argument("--solvers", default=",".join(SOLVER_NAMES),
                   help="comma-separated subset of bas,hopt,sopt")
    p.set_defaults(func=_cmd_estimate)

    p = subs.add_parser("bench", help="run trials and report statistics")
    _add_config_options(p)
    p.add_argument("--out", metavar="DIR", default=".")
    p.add_argument("--mode", choices=("analytic", "rendered"),
                   default="analytic")
    p.add_argument("--solvers", default=",".join(SOLVER_NAMES),
                   help="comma-separated subset of bas,hopt,sopt")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for the trial loop")
    p.set_defaults(func=_cmd_bench)

    p = subs.add_parser("report", help="re-aggregate an existing trials CSV")
    p.add_argument("trials_csv", help="trials CSV written by bench")
    p.add_argument("--out", metavar="DIR", default=".")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"rooftag: {exc}", file=sys.stderr)
        return 2
    except (RooftagError, OSError) as exc:
        print(f"rooftag: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
