"""Carathéodory sparsification of weighted point sets.

Given points p_1..p_n with positive weights u, find a subset S and positive
weights w on S with

    sum_S w_i p_i == sum_i u_i p_i   and   sum_S w_i == sum_i u_i,

where |S| is at most the affine rank of the points plus one.  The basic
reduction walks along null vectors of the difference matrix; the fast
variant runs that reduction on cluster means and recurses into the
surviving clusters.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, InputError, NumericalFailure
from .numerics import as_matrix, matrix_rank, null_space_basis

# weights at or below this fraction of the initial max weight count as zero
WEIGHT_FLOOR = 1e-12
# acceptance threshold for a recycled null vector, relative to ||P||_F ||v||
NULL_RESIDUAL = 1e-10


@dataclass(frozen=True)
class WeightedPointSet:
    """Rows of ``points`` with strictly positive ``weights``.

    ``index`` maps each stored row back to its position in the caller's
    original array; rows given zero weight are stripped on construction.
    """

    points: np.ndarray
    weights: np.ndarray
    index: np.ndarray

    @classmethod
    def from_arrays(cls, points, weights=None):
        pts = as_matrix(points, "points")
        n = pts.shape[0]
        if n == 0:
            raise ArgumentError("point set is empty")
        if weights is None:
            w = np.ones(n)
        else:
            w = np.asarray(weights, dtype=np.float64).ravel()
            if w.shape[0] != n:
                raise InputError(f"{n} points but {w.shape[0]} weights")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise InputError("weights must be finite and nonnegative")
        keep = w > 0
        if not np.any(keep):
            raise ArgumentError("all weights are zero")
        idx = np.flatnonzero(keep)
        return cls(pts[keep], w[keep], idx)

    def __len__(self):
        return self.points.shape[0]

    @property
    def weighted_sum(self):
        return self.weights @ self.points

    @property
    def total_weight(self):
        return float(self.weights.sum())


@dataclass(frozen=True)
class CoresetSelection:
    indices: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return int(self.indices.shape[0])

    def weighted_sum(self, points):
        return self.weights @ np.asarray(points)[self.indices]


def _coerce(p):
    if isinstance(p, WeightedPointSet):
        return p
    return WeightedPointSet.from_arrays(p)


def _reduce_arrays(points, weights, max_iter=None):
    """Core loop; returns positions (into ``points``) and weights, sorted."""
    n0 = points.shape[0]
    alive = np.arange(n0)
    u = weights.astype(np.float64, copy=True)
    floor = WEIGHT_FLOOR * float(u.max())
    scale = float(np.linalg.norm(points)) or 1.0
    max_iter = n0 if max_iter is None else max_iter

    steps = 0
    while alive.size > 1:
        P = points[alive]
        A = (P[1:] - P[0]).T
        N = null_space_basis(A, max_vectors=max(16, P.shape[1] + 1))
        if N.shape[1] == 0:
            break
        # v_1 = -sum_{i>=2} v_i makes sum(v) == 0, so sum(v_i p_i) == A v
        pending = np.vstack([-N.sum(axis=0, keepdims=True), N])
        fresh = True
        while pending.shape[1] and alive.size > 1:
            v, pending = pending[:, 0], pending[:, 1:]
            vnorm = np.linalg.norm(v)
            if vnorm == 0:
                continue
            if not fresh:
                # recycled vectors drift under elimination; verify before use
                resid = np.linalg.norm(v @ P) + abs(v.sum()) * scale
                if resid > NULL_RESIDUAL * scale * vnorm:
                    break
            fresh = False
            if not np.any(v > 0):
                v = -v
            pos = v > 0
            ratios = np.full(v.shape, np.inf)
            ratios[pos] = u[pos] / v[pos]
            jstar = int(np.argmin(ratios))  # first minimizer: smallest index
            u = u - ratios[jstar] * v
            u[jstar] = 0.0
            steps += 1
            if steps > max_iter:
                raise NumericalFailure(
                    "Carathéodory reduction did not terminate",
                    n=n0, steps=steps, remaining=int(alive.size),
                )
            drop = u <= floor
            drop[jstar] = True
            # clear dropped coordinates from the pending vectors: jstar pivots
            # on v, any extra dropped point on one of the pending vectors
            if pending.shape[1]:
                pending = pending - np.outer(v, pending[jstar] / v[jstar])
                for k in np.flatnonzero(drop):
                    if k == jstar or pending.shape[1] == 0:
                        continue
                    piv = int(np.argmax(np.abs(pending[k])))
                    pv = pending[:, piv]
                    pending = np.delete(pending, piv, axis=1)
                    if pv[k] != 0:
                        pending = pending - np.outer(pv, pending[k] / pv[k])
                pending = pending[~drop]
            keep = ~drop
            alive, u, P = alive[keep], u[keep], P[keep]
        # batch consumed or abandoned: recompute null space on the survivors
    return alive, u


def caratheodory_reduce(p, max_iter=None) -> CoresetSelection:
    """Reduce a weighted point set to at most rank+1 points, preserving the weighted sum."""
    p = _coerce(p)
    pos, w = _reduce_arrays(p.points, p.weights, max_iter=max_iter)
    if np.any(w <= 0):
        raise NumericalFailure("nonpositive weight survived reduction", min_weight=float(w.min()))
    return CoresetSelection(p.index[pos], w)


def default_clusters(n, cols):
    return max(2, min(n, 2 * (cols + 2)))


def fast_caratheodory(p, clusters=None) -> CoresetSelection:
    """Clustered Carathéodory: reduce cluster means, recurse on surviving clusters.

    Partitions are contiguous blocks of at most ceil(n / clusters) rows, so
    the result is deterministic for a fixed input.  The last level always
    runs the basic reduction, which guarantees affine independence of the
    returned points.
    """
    p = _coerce(p)
    m = p.points.shape[1]
    if clusters is None:
        clusters = default_clusters(len(p), m)
    if clusters < 2:
        raise ArgumentError(f"clusters must be >= 2, got {clusters}")
    rank = matrix_rank(p.points)
    stop = min(m, rank) + 1

    points, u, idx = p.points, p.weights.copy(), p.index.copy()
    while True:
        n = points.shape[0]
        if n <= stop or n <= clusters:
            break
        size = math.ceil(n / clusters)
        starts = np.arange(0, n, size)
        ends = np.minimum(starts + size, n)
        cw = np.add.reduceat(u, starts)
        means = np.add.reduceat(u[:, None] * points, starts, axis=0) / cw[:, None]
        sel = caratheodory_reduce(WeightedPointSet(means, cw, np.arange(len(cw))))
        if len(sel) == len(cw):
            break  # no cluster dropped; finish with the basic reduction
        parts = []
        new_w = []
        for c, wc in zip(sel.indices, sel.weights):
            rows = np.arange(starts[c], ends[c])
            parts.append(rows)
            new_w.append(wc * u[rows] / cw[c])
        rows = np.concatenate(parts)
        w = np.concatenate(new_w)
        keep = w > 0
        points, u, idx = points[rows[keep]], w[keep], idx[rows[keep]]

    pos, w = _reduce_arrays(points, u)
    order = np.argsort(idx[pos], kind="stable")
    sel = CoresetSelection(idx[pos][order], w[order])
    if np.any(sel.weights <= 0):
        raise NumericalFailure("nonpositive weight survived reduction")
    return sel


def accurate_coreset(kernel, clusters=None) -> CoresetSelection:
    """Unit-weight Carathéodory selection over the rows of a kernel matrix.

    Accepts an array or any object exposing the rows as ``.matrix``.  Unit
    weights make the preserved quantity the column-sum vector 1^T K.
    """
    rows = kernel.matrix if hasattr(kernel, "matrix") else kernel
    rows = as_matrix(rows, "kernel")
    if rows.shape[0] == 0:
        raise ArgumentError("kernel matrix has no rows")
    return fast_caratheodory(WeightedPointSet.from_arrays(rows), clusters=clusters)
