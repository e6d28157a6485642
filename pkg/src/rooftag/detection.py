"""Tag detection pipeline for grayscale frames.

Five stages, each usable on its own: adaptive thresholding against local
window means, edge-point clustering, outer-boundary walks around each
cluster, quadrilateral verification with sub-pixel corner refinement, and
homography-based cell decoding against a codebook.

Coordinate conventions. Binary masks and edge clusters use integer
(row, col) indices. Everything sub-pixel (quad corners, detections) uses
image coordinates (u, v) = (col, row) with pixel centers at integer
positions. Quad corners are ordered with positive shoelace area in (u, v),
which is counter-clockwise as the axes are drawn (u right, v down).
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._kernels import adaptive_threshold_kernel, trace_cycles
from .codebook import TagCodebook
from .errors import DegenerateConfiguration, ImageTooSmall
from .geometry import dlt_homography

__all__ = [
    "DetectionParams",
    "QuadCandidate",
    "TagDetection",
    "adaptive_threshold",
    "extract_edge_clusters",
    "extract_simple_cycles",
    "verify_quadrilateral",
    "decode_tag",
    "detect_tags",
    "detection_overlay",
]

_EIGHT = np.ones((3, 3), bool)


@dataclass(frozen=True)
class DetectionParams:
    """Tuning knobs for detect_tags.

    window/offset feed the thresholder; min_area drops speckle components;
    arm of None means the per-cycle default max(4, round(length / 32)).
    corner_threshold must sit above the bluntest corner a strongly
    foreshortened tag can produce (signal ~0.87) yet below the straight-run
    floor (~0.97); round shapes are rejected by the side-straightness gate
    rather than by this threshold.
    """

    window: int = 31
    offset: int = 8
    min_area: int = 24
    arm: int | None = None
    corner_threshold: float = 0.93
    smoothing_sigma: float = 1.0


@dataclass(frozen=True)
class QuadCandidate:
    """Convex quadrilateral candidate.

    corners: (4, 2) sub-pixel (u, v) points, positive shoelace order.
    side_lines: (4, 3) rows (nx, ny, c) with unit normal, n . x = c; line j
    passes through corners j and (j+1) % 4.
    """

    corners: np.ndarray
    side_lines: np.ndarray


@dataclass(frozen=True)
class TagDetection:
    """A decoded tag.

    corners are reordered so corner 0 is the image of the first canonical
    tag corner; rotation_applied is the grid rotation (degrees) that made
    the sampled cells match the codebook entry.
    """

    tag_id: int
    corners: np.ndarray
    hamming: int
    rotation_applied: int


def adaptive_threshold(img, window: int = 31, offset: int = 8,
                       min_area: int = 24) -> np.ndarray:
    """Foreground mask: intensity < clipped-window local mean - offset.

    Components (8-connected) smaller than min_area pixels are removed.
    """
    img = np.ascontiguousarray(np.asarray(img, dtype=np.uint8))
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    h, w = img.shape
    if window > h or window > w:
        raise ImageTooSmall(
            f"window {window} exceeds image dimensions {w}x{h}"
        )
    fg = adaptive_threshold_kernel(img, window, int(offset))
    if min_area > 1 and fg.any():
        labels, n = ndimage.label(fg, structure=_EIGHT)
        if n:
            counts = np.bincount(labels.ravel())
            small = counts < min_area
            small[0] = False
            if small.any():
                fg[small[labels]] = False
    return fg


def extract_edge_clusters(binary) -> list:
    """8-connected clusters of edge points, as (n, 2) arrays of (row, col).

    An edge point is a foreground pixel with at least one background
    4-neighbour; pixels outside the image count as background. Points
    within a cluster are in row-major order.
    """
    binary = np.asarray(binary, dtype=bool)
    padded = np.pad(binary, 1)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1]
        & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    edge = binary & ~interior
    if not edge.any():
        return []
    labels, n = ndimage.label(edge, structure=_EIGHT)
    rows, cols = np.nonzero(edge)
    labs = labels[rows, cols]
    order = np.argsort(labs, kind="stable")
    pts = np.column_stack([rows[order], cols[order]]).astype(np.int64)
    counts = np.bincount(labs)[1:]
    return np.split(pts, np.cumsum(counts)[:-1])


def extract_simple_cycles(clusters) -> list:
    """Closed outer-boundary walks around each cluster.

    The walk follows the cracks between pixels with the cluster on its
    right hand, so it traces the outer boundary only: interior points and
    hole boundaries are skipped, which keeps one-or-two-pixel-thick rings
    walkable, and points on a one-pixel-wide spur appear once per side.
    Chains shorter than four points are dropped. Returns (n, 2) arrays of
    (row, col) in walk order.
    """
    clusters = [np.asarray(c, dtype=np.int64) for c in clusters if len(c)]
    if not clusters:
        return []
    max_r = max(int(c[:, 0].max()) for c in clusters)
    max_c = max(int(c[:, 1].max()) for c in clusters)
    labels = np.zeros((max_r + 3, max_c + 3), np.int32)
    starts_r = np.empty(len(clusters), np.int64)
    starts_c = np.empty(len(clusters), np.int64)
    counts = np.empty(len(clusters), np.int64)
    for i, pts in enumerate(clusters):
        labels[pts[:, 0] + 1, pts[:, 1] + 1] = i + 1
        starts_r[i] = pts[0, 0] + 1
        starts_c[i] = pts[0, 1] + 1
        counts[i] = len(pts)
    out_r, out_c, offsets, ok = trace_cycles(labels, starts_r, starts_c, counts)
    cycles = []
    for i in range(len(clusters)):
        if ok[i]:
            lo, hi = offsets[i], offsets[i + 1]
            cycles.append(np.column_stack([out_r[lo:hi] - 1, out_c[lo:hi] - 1]))
    return cycles


def _tls_line(pts):
    """Total-least-squares line through (u, v) points: unit (nx, ny), c."""
    centroid = pts.mean(axis=0)
    d = pts - centroid
    cov = d.T @ d
    # eigenvector of the smaller eigenvalue of a symmetric 2x2
    tr = cov[0, 0] + cov[1, 1]
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    disc = max(tr * tr / 4.0 - det, 0.0)
    lam = tr / 2.0 - np.sqrt(disc)
    # (cov - lam I) n = 0
    a = cov[0, 0] - lam
    b = cov[0, 1]
    cc = cov[1, 1] - lam
    if abs(a) >= abs(cc):
        n = np.array([-b, a])
    else:
        n = np.array([cc, -b])
    norm = np.hypot(n[0], n[1])
    if norm < 1e-12:
        return None
    n = n / norm
    return n, float(n @ centroid)


def verify_quadrilateral(cycle, arm: int | None = None,
                         corner_threshold: float = 0.93,
                         smoothing_sigma: float = 1.0):
    """Fit a convex quadrilateral to an edge cycle, or return None.

    The turn signal at each cycle point is the cosine between the chords
    to points `arm` steps ahead and behind. After circular Gaussian
    smoothing, valleys below corner_threshold (circular non-minimum
    suppression with radius arm, equal-minima plateaus merged) mark
    corners; exactly four are required. Sides are refined by total
    least squares over their arcs, excluding arm/2 points next to each
    raw corner; an arc whose RMS distance from its fitted line exceeds
    one pixel fails the candidate (circles and blobs turn up four shallow
    valleys now and then, but never four straight sides). Accepted lines
    are pushed half a pixel outward so they land on the geometric edge
    rather than the centers of the outermost foreground pixels. Corner
    output is the intersection of consecutive sides, ordered with
    positive shoelace area in (u, v).
    """
    cycle = np.asarray(cycle)
    n = len(cycle)
    if arm is None:
        arm = max(4, round(n / 32))
    if n < 4 * arm:
        return None
    # (u, v) float coordinates in cycle order
    pts = np.column_stack([cycle[:, 1], cycle[:, 0]]).astype(float)
    ahead = np.roll(pts, -arm, axis=0) - pts
    behind = pts - np.roll(pts, arm, axis=0)
    dot = np.einsum("ij,ij->i", ahead, behind)
    norms = np.linalg.norm(ahead, axis=1) * np.linalg.norm(behind, axis=1)
    signal = dot / np.maximum(norms, 1e-12)
    smooth = ndimage.gaussian_filter1d(signal, smoothing_sigma, mode="wrap")
    local_min = ndimage.minimum_filter1d(smooth, 2 * arm + 1, mode="wrap")
    cand = np.flatnonzero((smooth < corner_threshold) & (smooth <= local_min))
    if len(cand) == 0:
        return None
    # merge circular plateaus / near-duplicates closer than arm
    groups = [[int(cand[0])]]
    for idx in cand[1:]:
        if idx - groups[-1][-1] <= arm:
            groups[-1].append(int(idx))
        else:
            groups.append([int(idx)])
    if len(groups) > 1 and (cand[0] + n) - groups[-1][-1] <= arm:
        groups[0] = groups.pop() + groups[0]
    corners_raw = []
    for g in groups:
        g = np.array(g)
        corners_raw.append(int(g[np.argmin(smooth[g % n])]))
    if len(corners_raw) != 4:
        return None
    corners_raw = sorted(c % n for c in corners_raw)

    trim = arm // 2
    lines = []
    for j in range(4):
        a = corners_raw[j]
        b = corners_raw[(j + 1) % 4]
        span = (b - a) % n
        if span - 2 * trim < 2:
            return None
        idx = (a + trim + 1 + np.arange(span - 2 * trim - 1)) % n
        fit = _tls_line(pts[idx])
        if fit is None:
            return None
        nrm, c = fit
        rms = np.sqrt(np.mean((pts[idx] @ nrm - c) ** 2))
        if rms > 1.0:
            return None
        lines.append(fit)

    # orient normals away from the polygon and push each line 0.5 px out
    center = pts[corners_raw].mean(axis=0)
    oriented = np.empty((4, 3))
    for j, (nrm, c) in enumerate(lines):
        if nrm @ center > c:
            nrm, c = -nrm, -c
        oriented[j] = [nrm[0], nrm[1], c + 0.5]

    corners = np.empty((4, 2))
    for j in range(4):
        n1 = oriented[j - 1]
        n2 = oriented[j]
        det = n1[0] * n2[1] - n1[1] * n2[0]
        if abs(det) < 1e-9:
            return None
        corners[j, 0] = (n1[2] * n2[1] - n2[2] * n1[1]) / det
        corners[j, 1] = (n1[0] * n2[2] - n2[0] * n1[2]) / det

    edges = np.roll(corners, -1, axis=0) - corners
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] \
        - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    if np.all(cross > 0):
        side_lines = oriented
    elif np.all(cross < 0):
        # reversed winding: corner m becomes old corner 3-m, and the side
        # from new m to m+1 is the old line fitted between 2-m and 3-m
        corners = corners[::-1]
        side_lines = np.roll(oriented[::-1], -1, axis=0)
    else:
        return None  # not convex
    return QuadCandidate(corners, side_lines)


# Canonical tag frame for decoding: corners at (+-1, +-1) in the order
# (-1,-1), (-1,1), (1,1), (1,-1); the dark square spans cells 0..c-1 of a
# c x c grid (c = interior cells + 2 border rings) with grid row 0 along
# the y = +1 edge.

def _cell_centers(cells, c):
    """Tag-frame (x, y) centers for (row, col) index pairs on the c-grid."""
    s = 2.0 / c
    out = np.empty((len(cells), 2))
    for m, (i, j) in enumerate(cells):
        out[m, 0] = -1.0 + (j + 0.5) * s
        out[m, 1] = 1.0 - (i + 0.5) * s
    return out


_CANONICAL_CORNERS = np.array(
    [[-1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [1.0, -1.0]]
)


def _sample_box3(img_f, uv):
    """Mean of the 3x3 pixel box nearest each (u, v); NaN when off-image."""
    h, w = img_f.shape
    out = np.empty(len(uv))
    for m, (u, v) in enumerate(uv):
        j = int(round(u))
        i = int(round(v))
        if i < 0 or i >= h or j < 0 or j >= w:
            out[m] = np.nan
            continue
        block = img_f[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
        out[m] = block.mean()
    return out


def _project_h(H, xy):
    q = np.column_stack([xy, np.ones(len(xy))]) @ H.T
    with np.errstate(divide="ignore", invalid="ignore"):
        return q[:, :2] / q[:, 2:3]


def decode_tag(img, quad: QuadCandidate, codebook: TagCodebook):
    """Sample the cell grid behind a quad and match it to the codebook.

    Returns a TagDetection, or None when the best match exceeds the
    codebook's Hamming budget or the samples run off the image.
    """
    k = codebook.cell_count
    c = k + 2
    try:
        H = dlt_homography(_CANONICAL_CORNERS, quad.corners)
    except DegenerateConfiguration:
        return None
    img_f = np.asarray(img, dtype=float)

    interior = [(i + 1, j + 1) for i in range(k) for j in range(k)]
    border = [
        (i, j) for i in range(c) for j in range(c)
        if i in (0, c - 1) or j in (0, c - 1)
    ]
    band = [
        (i, j) for i in range(-1, c + 1) for j in range(-1, c + 1)
        if i in (-1, c) or j in (-1, c)
    ]

    vals_in = _sample_box3(img_f, _project_h(H, _cell_centers(interior, c)))
    if np.isnan(vals_in).any():
        return None
    dark = _sample_box3(img_f, _project_h(H, _cell_centers(border, c)))
    light = _sample_box3(img_f, _project_h(H, _cell_centers(band, c)))
    dark = dark[~np.isnan(dark)]
    light = light[~np.isnan(light)]
    if len(dark) < 8 or len(light) < 8:
        return None
    threshold = (dark.sum() + light.sum()) / (len(dark) + len(light))

    grid = (vals_in < threshold).astype(np.uint8).reshape(k, k)
    tag_id, dist, rot = codebook.best_match(grid)
    if dist > codebook.max_hamming:
        return None
    return TagDetection(
        tag_id=tag_id,
        corners=np.roll(quad.corners, rot, axis=0),
        hamming=dist,
        rotation_applied=90 * rot,
    )


def _convex_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_polygon(subject, clip):
    """Sutherland-Hodgman intersection of convex polygons (both CCW)."""
    out = list(subject)
    m = len(clip)
    for i in range(m):
        a = clip[i]
        b = clip[(i + 1) % m]
        ex, ey = b[0] - a[0], b[1] - a[1]
        inp = out
        out = []
        if not inp:
            break
        for j in range(len(inp)):
            p = inp[j]
            q = inp[(j + 1) % len(inp)]
            dp = ex * (p[1] - a[1]) - ey * (p[0] - a[0])
            dq = ex * (q[1] - a[1]) - ey * (q[0] - a[0])
            if dp >= 0:
                out.append(p)
            if (dp >= 0) != (dq >= 0):
                t = dp / (dp - dq)
                out.append(p + t * (q - p))
    return np.array(out) if out else np.empty((0, 2))


def _overlap_fraction(quad_a, quad_b):
    inter = _clip_polygon(quad_a, quad_b)
    if len(inter) < 3:
        return 0.0
    area = _convex_area(inter)
    return area / max(min(_convex_area(quad_a), _convex_area(quad_b)), 1e-12)


def detect_tags(img, codebook: TagCodebook,
                params: DetectionParams = DetectionParams()) -> list:
    """Run the full pipeline on one frame; detections sorted by tag id.

    When two decodes overlap by more than half the smaller quad's area
    (nested or duplicated boundaries), the one with more bit errors is
    dropped.
    """
    binary = adaptive_threshold(img, params.window, params.offset,
                                params.min_area)
    clusters = extract_edge_clusters(binary)
    cycles = extract_simple_cycles(clusters)
    found = []
    for cycle in cycles:
        quad = verify_quadrilateral(
            cycle, params.arm, params.corner_threshold, params.smoothing_sigma
        )
        if quad is None:
            continue
        det = decode_tag(img, quad, codebook)
        if det is not None:
            found.append(det)

    found.sort(key=lambda d: (d.hamming, d.tag_id))
    kept = []
    for det in found:
        clash = any(
            _overlap_fraction(det.corners, other.corners) > 0.5
            for other in kept
        )
        if not clash:
            kept.append(det)
    kept.sort(key=lambda d: d.tag_id)
    return kept


def detection_overlay(img, detections) -> np.ndarray:
    """Color visualization: green quad edges, red dot on corner 0."""
    rgb = np.repeat(np.asarray(img, dtype=np.uint8)[:, :, None], 3, axis=2)
    h, w = rgb.shape[:2]

    def put(u, v, color):
        j, i = int(round(u)), int(round(v))
        if 0 <= i < h and 0 <= j < w:
            rgb[i, j] = color

    for det in detections:
        cs = det.corners
        for a in range(4):
            p, q = cs[a], cs[(a + 1) % 4]
            steps = int(np.hypot(*(q - p)) * 2) + 1
            for t in np.linspace(0.0, 1.0, steps):
                x = p + t * (q - p)
                put(x[0], x[1], (0, 220, 0))
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                put(cs[0, 0] + dj, cs[0, 1] + di, (255, 0, 0))
    return rgb
