"""Distance-binned error statistics and the benchmark report files.

Trial errors are grouped by the horizontal integer meter distance of the
vehicle to the camera foot (nearest integer, half up), one row per solver
per bin. RMS values cover finite errors only: a solver that failed a
trial left NaN behind, and a bin where it failed every trial reports
count 0 with NaN statistics. The report is a small CSV plus two SVG line
plots whose polylines are rebuilt from the CSV text itself, so parsing
the emitted file and plotting again reproduces the curves byte for byte.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import RooftagError
from .simulate import SOLVER_NAMES

__all__ = [
    "STATS_HEADER",
    "SolverBinStats",
    "DistanceBinStats",
    "bin_by_distance",
    "emit_report",
    "render_plots",
]

STATS_HEADER = "dist_m,solver,count,pos_rms_m,pos_max_m,ang_rms_deg"

_PLOT_W = 640
_PLOT_H = 440
_MARGIN_L = 70
_MARGIN_R = 24
_MARGIN_T = 42
_MARGIN_B = 52
_COLORS = {"bas": "#c0392b", "hopt": "#27ae60", "sopt": "#2980b9"}


@dataclass(frozen=True)
class SolverBinStats:
    """Error summary of one solver inside one distance bin (angles rad)."""

    count: int
    pos_rms: float
    pos_max: float
    ang_rms: float


@dataclass(frozen=True)
class DistanceBinStats:
    """One integer-meter bin: record count, per-solver stats, sparse flag."""

    distance: int
    n_records: int
    solvers: dict
    sparse: bool


def bin_by_distance(records, min_bin_count: int = 50) -> list:
    """Group kept trials by nearest-integer distance and summarize errors.

    Returns DistanceBinStats sorted by distance. A record with horizontal
    distance d joins bin floor(d + 0.5); dropped trials never enter a
    bin. Solver columns follow the bas, hopt, sopt order, restricted to
    solvers that actually appear in the records. Failed trials (NaN
    errors) stay in the bin but are left out of count, RMS and max; a bin
    whose smallest solver count is under min_bin_count is flagged sparse.
    """
    kept = [r for r in records if not r.dropped]
    names = [n for n in SOLVER_NAMES if any(n in r.results for r in kept)]
    groups = {}
    for r in kept:
        groups.setdefault(int(math.floor(r.sample.dist + 0.5)), []).append(r)
    out = []
    for dist in sorted(groups):
        rows = groups[dist]
        per = {}
        thin = False
        for name in names:
            pos = np.array([r.results[name].pos_err for r in rows
                            if name in r.results], dtype=float)
            ang = np.array([r.results[name].ang_err for r in rows
                            if name in r.results], dtype=float)
            good = np.isfinite(pos) & np.isfinite(ang)
            n = int(good.sum())
            if n:
                # summing in sorted order makes the result independent of
                # record order, not just equal up to rounding
                per[name] = SolverBinStats(
                    count=n,
                    pos_rms=float(np.sqrt(np.sort(pos[good] ** 2).mean())),
                    pos_max=float(pos[good].max()),
                    ang_rms=float(np.sqrt(np.sort(ang[good] ** 2).mean())),
                )
            else:
                nan = float("nan")
                per[name] = SolverBinStats(0, nan, nan, nan)
            thin = thin or n < min_bin_count
        out.append(DistanceBinStats(distance=dist, n_records=len(rows),
                                    solvers=per, sparse=thin))
    return out


def _stats_csv_text(stats) -> str:
    lines = [STATS_HEADER]
    for b in stats:
        for name, s in b.solvers.items():
            lines.append(",".join([
                str(b.distance),
                name,
                str(s.count),
                format(s.pos_rms, ".9g"),
                format(s.pos_max, ".9g"),
                format(math.degrees(s.ang_rms), ".9g"),
            ]))
    return "\n".join(lines) + "\n"


def emit_report(stats, out_dir):
    """Write stats.csv, pos_rms.svg and ang_rms.svg under out_dir.

    Returns the three paths in that order. The plots are generated from
    the CSV text, so reading the file back and calling render_plots on it
    gives the same SVG bytes. Raises RooftagError when stats is empty and
    lets OSError from the writes propagate.
    """
    if not stats:
        raise RooftagError("nothing to report: no distance bin has data")
    text = _stats_csv_text(stats)
    pos_svg, ang_svg = render_plots(text)
    csv_path = os.path.join(out_dir, "stats.csv")
    pos_path = os.path.join(out_dir, "pos_rms.svg")
    ang_path = os.path.join(out_dir, "ang_rms.svg")
    for path, payload in ((csv_path, text), (pos_path, pos_svg),
                          (ang_path, ang_svg)):
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write(payload)
    return csv_path, pos_path, ang_path


def render_plots(csv_text: str):
    """Build the two SVG line plots from stats.csv text.

    Returns (pos_svg, ang_svg) strings. NaN rows are skipped; a solver
    whose rows are all NaN contributes no polyline but still appears in
    the legend order of the remaining ones. Raises RooftagError on a
    header mismatch or a malformed row.
    """
    lines = csv_text.strip("\n").split("\n")
    if not lines or lines[0] != STATS_HEADER:
        raise RooftagError("unrecognized stats header "
                           f"{lines[0] if lines else ''!r}")
    series = {}
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != 6:
            raise RooftagError(f"malformed stats row {ln!r}")
        try:
            dist = int(cells[0])
            pos_rms = float(cells[3])
            ang_deg = float(cells[5])
        except ValueError as exc:
            raise RooftagError(f"malformed stats row {ln!r}") from exc
        series.setdefault(cells[1], []).append((dist, pos_rms, ang_deg))
    pos = _svg_plot(
        "position RMS vs distance", "distance (m)", "RMS error (m)",
        {n: [(d, p) for d, p, _ in v if math.isfinite(p)]
         for n, v in series.items()})
    ang = _svg_plot(
        "orientation RMS vs distance", "distance (m)", "RMS error (deg)",
        {n: [(d, a) for d, _, a in v if math.isfinite(a)]
         for n, v in series.items()})
    return pos, ang


def _ticks(lo, hi, n):
    step = (hi - lo) / n
    return [lo + i * step for i in range(n + 1)]


def _svg_plot(title, xlabel, ylabel, series) -> str:
    """One SVG 1.1 chart; series maps solver name to (x, y) point lists."""
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    x_lo = min(xs) if xs else 0.0
    x_hi = max(xs) if xs else 1.0
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_hi = max(ys) * 1.05 if ys and max(ys) > 0 else 1.0
    y_lo = 0.0
    px0, px1 = _MARGIN_L, _PLOT_W - _MARGIN_R
    py0, py1 = _PLOT_H - _MARGIN_B, _MARGIN_T

    def sx(x):
        return px0 + (x - x_lo) / (x_hi - x_lo) * (px1 - px0)

    def sy(y):
        return py0 + (y - y_lo) / (y_hi - y_lo) * (py1 - py0)

    out = [
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_PLOT_W}" height="{_PLOT_H}" '
        f'viewBox="0 0 {_PLOT_W} {_PLOT_H}">',
        f'<rect width="{_PLOT_W}" height="{_PLOT_H}" fill="white"/>',
        f'<text x="{_PLOT_W / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]
    # axes
    out.append(f'<line x1="{px0}" y1="{py0}" x2="{px1}" y2="{py0}" '
               'stroke="black" stroke-width="1"/>')
    out.append(f'<line x1="{px0}" y1="{py0}" x2="{px0}" y2="{py1}" '
               'stroke="black" stroke-width="1"/>')
    span = x_hi - x_lo
    x_step = max(1, int(math.ceil(span / 10)))
    t = int(math.ceil(x_lo))
    while t <= x_hi + 1e-9:
        X = sx(t)
        out.append(f'<line x1="{X:.2f}" y1="{py0}" x2="{X:.2f}" '
                   f'y2="{py0 + 5}" stroke="black" stroke-width="1"/>')
        out.append(f'<text x="{X:.2f}" y="{py0 + 20}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{t:g}</text>')
        t += x_step
    for yv in _ticks(y_lo, y_hi, 5):
        Y = sy(yv)
        out.append(f'<line x1="{px0 - 5}" y1="{Y:.2f}" x2="{px0}" '
                   f'y2="{Y:.2f}" stroke="black" stroke-width="1"/>')
        out.append(f'<text x="{px0 - 8}" y="{Y + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{yv:.3g}</text>')
        if yv > y_lo:
            out.append(f'<line x1="{px0}" y1="{Y:.2f}" x2="{px1}" '
                       f'y2="{Y:.2f}" stroke="#ddd" stroke-width="1"/>')
    out.append(f'<text x="{(px0 + px1) / 2:.1f}" y="{_PLOT_H - 14}" '
               'text-anchor="middle" font-family="sans-serif" '
               f'font-size="13">{xlabel}</text>')
    out.append(f'<text x="18" y="{(py0 + py1) / 2:.1f}" '
               'text-anchor="middle" font-family="sans-serif" '
               f'font-size="13" transform="rotate(-90 18 '
               f'{(py0 + py1) / 2:.1f})">{ylabel}</text>')
    legend_y = _MARGIN_T + 6
    for name in series:
        pts = sorted(series[name])
        color = _COLORS.get(name, "#777777")
        if pts:
            coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
            out.append(f'<polyline points="{coords}" fill="none" '
                       f'stroke="{color}" stroke-width="2"/>')
            for x, y in pts:
                out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" '
                           f'r="2.5" fill="{color}"/>')
        out.append(f'<line x1="{px1 - 86}" y1="{legend_y}" x2="{px1 - 62}" '
                   f'y2="{legend_y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{px1 - 56}" y="{legend_y + 4}" '
                   'font-family="sans-serif" font-size="12">'
                   f'{name}</text>')
        legend_y += 17
    out.append("</svg>")
    return "\n".join(out) + "\n"
