"""Scalar inner loops, jitted with numba when available.

The three kernels here are the only parts of the package where plain
numpy vectorization is either impossible (sequential contour walking)
or measurably too slow on large frames (per-pixel clipped-window
thresholding, repeated 9x9 Jacobi sweeps). Each is written as simple
scalar loops so the jitted path and the pure-Python fallback execute
identical arithmetic.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


@njit(cache=True)
def adaptive_threshold_kernel(img, window, offset):
    """Binarize img against clipped-window local means.

    A pixel is foreground iff intensity < mean(window) - offset, where the
    window is the (window x window) block centred on the pixel clipped to
    the image bounds. The comparison is done in exact integer arithmetic:
    I < S/A - offset  <=>  A*(I + offset) < S.
    """
    h, w = img.shape
    integral = np.empty((h + 1, w + 1), np.int64)
    for j in range(w + 1):
        integral[0, j] = 0
    for i in range(h):
        integral[i + 1, 0] = 0
        acc = 0
        for j in range(w):
            acc += img[i, j]
            integral[i + 1, j + 1] = integral[i, j + 1] + acc
    half = window // 2
    out = np.zeros((h, w), np.bool_)
    for i in range(h):
        r0 = i - half
        if r0 < 0:
            r0 = 0
        r1 = i + half + 1
        if r1 > h:
            r1 = h
        for j in range(w):
            c0 = j - half
            if c0 < 0:
                c0 = 0
            c1 = j + half + 1
            if c1 > w:
                c1 = w
            s = (
                integral[r1, c1]
                - integral[r0, c1]
                - integral[r1, c0]
                + integral[r0, c0]
            )
            area = (r1 - r0) * (c1 - c0)
            if area * (int(img[i, j]) + offset) < s:
                out[i, j] = True
    return out


@njit(cache=True)
def symmetric_eigh_jacobi(S):
    """Eigendecomposition of a small symmetric matrix by cyclic Jacobi sweeps.

    Returns (values, vectors) with eigenvalues ascending and eigenvectors
    as the corresponding columns. Deterministic: fixed sweep order, fixed
    stopping rule (off-diagonal norm <= 1e-14 * ||S||_F, at most 60 sweeps).
    """
    n = S.shape[0]
    A = S.copy()
    V = np.eye(n)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += A[i, j] * A[i, j]
    fro = np.sqrt(fro)
    tol = 1e-14 * fro
    for _sweep in range(60):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += A[p, q] * A[p, q]
        off = np.sqrt(2.0 * off)
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = akp * c - akq * s
                    A[k, q] = akp * s + akq * c
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = apk * c - aqk * s
                    A[q, k] = apk * s + aqk * c
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = vkp * c - vkq * s
                    V[k, q] = vkp * s + vkq * c
    vals = np.empty(n)
    for i in range(n):
        vals[i] = A[i, i]
    order = np.argsort(vals)
    vals_sorted = np.empty(n)
    vecs_sorted = np.empty((n, n))
    for i in range(n):
        vals_sorted[i] = vals[order[i]]
        for k in range(n):
            vecs_sorted[k, i] = V[k, order[i]]
    return vals_sorted, vecs_sorted


@njit(cache=True)
def trace_cycles(labels, starts_r, starts_c, counts):
    """Outer-boundary pixel chains of edge clusters, by crack following.

    labels: int32 map, 0 = not an edge point, k >= 1 = cluster id, padded by
    one zero ring so neighbour lookups never leave the array. starts_*[k-1]
    is the row-major first point of cluster k (topmost row, then leftmost
    column); counts[k-1] its point count.

    The walk moves along the cracks between pixels keeping cluster pixels
    on its right hand, starting eastward along the top edge of the start
    point, and ends when that corner state recurs. Crack transitions are
    invertible, so the walk provably closes; holes inside the cluster are
    never entered. Emitted points are the pixels right of each step with
    consecutive repeats merged, so a one-pixel-wide spur contributes its
    pixels once per side. Chains shorter than 4 points are dropped, which
    also discards isolated points. Returns flat point arrays (padded
    coordinates) with per-cluster offsets and acceptance flags.
    """
    n_clusters = starts_r.shape[0]
    cap = 0
    for k in range(n_clusters):
        cap += 4 * counts[k] + 8
    out_r = np.empty(cap, np.int32)
    out_c = np.empty(cap, np.int32)
    offsets = np.empty(n_clusters + 1, np.int64)
    ok = np.zeros(n_clusters, np.uint8)
    pos = 0
    for k in range(n_clusters):
        offsets[k] = pos
        cid = k + 1
        r0 = starts_r[k]
        c0 = starts_c[k]
        # Corner (R, C) is the top-left lattice corner of pixel (R, C);
        # directions are E=0, S=1, W=2, N=3. Pretend the walk arrived at
        # the start corner moving East: with the start pixel topmost and
        # leftmost, its north and west neighbours are background, so the
        # first move is East along the pixel's top edge.
        R = r0
        C = c0
        d = 0
        written = 0
        budget = 4 * counts[k] + 8
        for _step in range(budget):
            nw = labels[R - 1, C - 1] == cid
            ne = labels[R - 1, C] == cid
            sw = labels[R, C - 1] == cid
            se = labels[R, C] == cid
            if d == 0:
                left_ahead, right_ahead = ne, se
            elif d == 1:
                left_ahead, right_ahead = se, sw
            elif d == 2:
                left_ahead, right_ahead = sw, nw
            else:
                left_ahead, right_ahead = nw, ne
            if left_ahead:
                d = (d + 3) & 3
            elif not right_ahead:
                d = (d + 1) & 3
            if _step > 0 and R == r0 and C == c0 and d == 0:
                # back at the start corner about to repeat the first move
                if (written > 1 and out_r[pos + written - 1] == out_r[pos]
                        and out_c[pos + written - 1] == out_c[pos]):
                    written -= 1  # chain wrapped onto its first pixel
                if written >= 4:
                    ok[k] = 1
                    pos += written
                break
            if d == 0:
                er, ec = R, C
                C += 1
            elif d == 1:
                er, ec = R, C - 1
                R += 1
            elif d == 2:
                er, ec = R - 1, C - 1
                C -= 1
            else:
                er, ec = R - 1, C
                R -= 1
            if (written == 0 or out_r[pos + written - 1] != er
                    or out_c[pos + written - 1] != ec):
                out_r[pos + written] = er
                out_c[pos + written] = ec
                written += 1
    offsets[n_clusters] = pos
    return out_r, out_c, offsets, ok


def warm_up():
    """Trigger compilation of all kernels on tiny inputs."""
    img = np.zeros((8, 8), np.uint8)
    img[3:5, 3:5] = 255
    adaptive_threshold_kernel(img, 3, 8)
    symmetric_eigh_jacobi(np.eye(3))
    labels = np.zeros((6, 6), np.int32)
    labels[2, 2:4] = 1
    labels[3, 2:4] = 1
    trace_cycles(
        labels,
        np.array([2], np.int64),
        np.array([2], np.int64),
        np.array([4], np.int64),
    )
