"""Hot point-set kernels: greedy nets, nearest-center assignment, crowding
counts, proximity pairing and image-space clustering.

Every kernel has a numba-compiled loop version and a vectorized numpy
version with identical results. Set ``FRAMEDISC_JIT=0`` before import to
force the numpy path (numba is also skipped when it is not installed).

Metric codes: ``EUCLIDEAN = 0``; ``HYPERBOLIC = 1`` (upper half plane,
points stored as ``(b, a)`` with ``a > 0``).
"""

from __future__ import annotations

import os

import numpy as np

EUCLIDEAN = 0
HYPERBOLIC = 1

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("FRAMEDISC_JIT", "1") != "0"


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------- numba path


@_njit
def _dist_nb(kind, p, q):
    s = 0.0
    for k in range(p.shape[0]):
        d = p[k] - q[k]
        s += d * d
    if kind == EUCLIDEAN:
        return np.sqrt(s)
    # cosh(d) = 1 + |p-q|^2 / (2 a_p a_q) written through asinh for accuracy
    return 2.0 * np.arcsinh(np.sqrt(s) / (2.0 * np.sqrt(p[1] * q[1])))


@_njit
def _greedy_net_nb(kind, pts, sep):
    n = pts.shape[0]
    centers = np.empty(n, dtype=np.int64)
    nc = 0
    for i in range(n):
        ok = True
        for c in range(nc):
            if _dist_nb(kind, pts[i], pts[centers[c]]) < sep:
                ok = False
                break
        if ok:
            centers[nc] = i
            nc += 1
    return centers[:nc]


@_njit
def _assign_nb(kind, pts, cpts):
    n = pts.shape[0]
    owner = np.empty(n, dtype=np.int64)
    best_d = np.empty(n)
    for i in range(n):
        bd = np.inf
        bj = -1
        for j in range(cpts.shape[0]):
            d = _dist_nb(kind, pts[i], cpts[j])
            if d < bd:
                bd = d
                bj = j
        owner[i] = bj
        best_d[i] = bd
    return owner, best_d


@_njit
def _crowding_nb(kind, pts, radius):
    n = pts.shape[0]
    best = 0
    for m in range(n):
        c = 0
        for j in range(n):
            if _dist_nb(kind, pts[m], pts[j]) < radius:
                c += 1
        if c > best:
            best = c
    return best


@_njit
def _separation_nb(kind, pts):
    n = pts.shape[0]
    best = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            d = _dist_nb(kind, pts[i], pts[j])
            if d < best:
                best = d
    return best


@_njit
def _pair_close_nb(kind, pts, order, eligible, threshold):
    # partner[i] = j for paired indices, -1 otherwise
    n = pts.shape[0]
    partner = -np.ones(n, dtype=np.int64)
    for oi in range(order.shape[0]):
        i = order[oi]
        if partner[i] >= 0 or not eligible[i]:
            continue
        bj = -1
        bd = threshold
        for oj in range(order.shape[0]):
            j = order[oj]
            if j == i or partner[j] >= 0 or not eligible[j]:
                continue
            d = _dist_nb(kind, pts[i], pts[j])
            if d < bd:
                bd = d
                bj = j
        if bj >= 0:
            partner[i] = bj
            partner[bj] = i
    return partner


@_njit
def _image_clusters_nb(images, cell_of, radius):
    # greedy ball clustering inside each cell; label = seed index
    n = images.shape[0]
    label = -np.ones(n, dtype=np.int64)
    for i in range(n):
        if label[i] >= 0:
            continue
        label[i] = i
        for j in range(i + 1, n):
            if label[j] >= 0 or cell_of[j] != cell_of[i]:
                continue
            s = 0.0
            for k in range(images.shape[1]):
                d = images[j, k] - images[i, k]
                s += d.real * d.real + d.imag * d.imag
            if np.sqrt(s) <= radius:
                label[j] = i
    return label


# ---------------------------------------------------------------- numpy path


def pairwise_distances(kind: int, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Distance matrix between the rows of ``P`` and ``Q``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    diff = P[:, None, :] - Q[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    if kind == EUCLIDEAN:
        return np.sqrt(sq)
    denom = 2.0 * np.sqrt(P[:, None, 1] * Q[None, :, 1])
    return 2.0 * np.arcsinh(np.sqrt(sq) / denom)


def _greedy_net_np(kind, pts, sep):
    alive = np.ones(pts.shape[0], dtype=bool)
    centers = []
    while True:
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        i = idx[0]
        centers.append(i)
        d = pairwise_distances(kind, pts[i:i + 1], pts[idx])[0]
        alive[idx[d < sep]] = False
    return np.asarray(centers, dtype=np.int64)


def _assign_np(kind, pts, cpts):
    owner = np.empty(pts.shape[0], dtype=np.int64)
    best_d = np.empty(pts.shape[0])
    step = max(1, 2_000_000 // max(cpts.shape[0], 1))
    for s in range(0, pts.shape[0], step):
        d = pairwise_distances(kind, pts[s:s + step], cpts)
        owner[s:s + step] = np.argmin(d, axis=1)
        best_d[s:s + step] = d[np.arange(d.shape[0]), owner[s:s + step]]
    return owner, best_d


def _crowding_np(kind, pts, radius):
    best = 0
    step = max(1, 2_000_000 // max(pts.shape[0], 1))
    for s in range(0, pts.shape[0], step):
        d = pairwise_distances(kind, pts[s:s + step], pts)
        best = max(best, int((d < radius).sum(axis=1).max()))
    return best


def _separation_np(kind, pts):
    best = np.inf
    step = max(1, 2_000_000 // max(pts.shape[0], 1))
    for s in range(0, pts.shape[0], step):
        d = pairwise_distances(kind, pts[s:s + step], pts)
        rows = np.arange(d.shape[0])
        d[rows, rows + s] = np.inf
        best = min(best, float(d.min()))
    return best


def _pair_close_np(kind, pts, order, eligible, threshold):
    n = pts.shape[0]
    partner = -np.ones(n, dtype=np.int64)
    order = np.asarray(order, dtype=np.int64)
    D = pairwise_distances(kind, pts[order], pts[order])
    free = eligible[order].copy()
    for a in range(order.size):
        if not free[a]:
            continue
        # an index left unpaired here can never be picked later: all of its
        # close neighbours are already taken
        free[a] = False
        row = np.where(free, D[a], np.inf)
        b = int(np.argmin(row))
        if row[b] < threshold:
            free[b] = False
            partner[order[a]] = order[b]
            partner[order[b]] = order[a]
    return partner


def _image_clusters_np(images, cell_of, radius):
    n = images.shape[0]
    label = -np.ones(n, dtype=np.int64)
    for c in np.unique(cell_of):
        members = np.flatnonzero(cell_of == c)
        todo = members
        while todo.size:
            seed = todo[0]
            d = np.linalg.norm(images[todo] - images[seed], axis=1)
            hit = d <= radius
            hit[0] = True
            label[todo[hit]] = seed
            todo = todo[~hit]
    return label


# ---------------------------------------------------------------- dispatch


def greedy_net_indices(kind, pts, sep, *, jit=None):
    """Indices (in scan order) of a maximal subset with pairwise distance
    ``>= sep``."""
    f = _select(jit, _greedy_net_nb, _greedy_net_np)
    return f(kind, np.ascontiguousarray(pts, dtype=float), float(sep))


def assign_nearest(kind, pts, cpts, *, jit=None):
    """Nearest center per point (lowest center index on ties) and its distance."""
    f = _select(jit, _assign_nb, _assign_np)
    return f(kind, np.ascontiguousarray(pts, dtype=float),
             np.ascontiguousarray(cpts, dtype=float))


def crowding(kind, pts, radius, *, jit=None):
    f = _select(jit, _crowding_nb, _crowding_np)
    return int(f(kind, np.ascontiguousarray(pts, dtype=float), float(radius)))


def min_separation(kind, pts, *, jit=None):
    f = _select(jit, _separation_nb, _separation_np)
    return float(f(kind, np.ascontiguousarray(pts, dtype=float)))


def pair_close(kind, pts, threshold, order=None, eligible=None, *, jit=None):
    """Greedy pairing: scanning ``order``, each free eligible index is paired
    with its nearest free eligible index at distance ``< threshold``.

    Returns the partner array (``-1`` for unpaired indices).
    """
    pts = np.ascontiguousarray(pts, dtype=float)
    n = pts.shape[0]
    order = np.arange(n, dtype=np.int64) if order is None else np.asarray(order, dtype=np.int64)
    eligible = np.ones(n, dtype=bool) if eligible is None else np.asarray(eligible, dtype=bool)
    f = _select(jit, _pair_close_nb, _pair_close_np)
    return f(kind, pts, order, eligible, float(threshold))


def image_clusters(images, cell_of, radius, *, jit=None):
    """Greedy clustering of ``images`` within each cell into balls of the
    given radius around seed points; returns the seed index per point."""
    f = _select(jit, _image_clusters_nb, _image_clusters_np)
    return f(np.ascontiguousarray(images, dtype=complex),
             np.ascontiguousarray(cell_of, dtype=np.int64), float(radius))


def _select(jit, nb, np_):
    if jit is None:
        return nb if USE_NUMBA else np_
    if jit and numba is None:  # pragma: no cover
        raise RuntimeError("numba requested but not installed")
    return nb if jit else np_
