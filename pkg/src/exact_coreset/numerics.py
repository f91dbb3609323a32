"""Dense linear algebra helpers: thin SVD, numerical rank, null vectors.

Everything here is a pure function of its inputs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, InputError, NoNullSpaceError

EPS = np.finfo(np.float64).eps


def as_matrix(a, name="a"):
    """Return ``a`` as a finite 2-d float64 array or raise InputError."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InputError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SpectralSummary:
    singular_values: np.ndarray
    left_basis: np.ndarray
    right_basis: np.ndarray
    rank_tolerance: float

    @property
    def rank(self) -> int:
        return effective_rank(self)


def default_rank_tolerance(shape, sigma_max):
    return max(shape) * EPS * float(sigma_max) if sigma_max > 0 else 0.0


def thin_svd(a, k=None, rank_tolerance=None) -> SpectralSummary:
    """Thin SVD of ``a``; with ``k`` only the top-k triple is kept.

    The rank tolerance is fixed from the full spectrum even when truncating,
    so rank decisions do not depend on ``k``.
    """
    a = as_matrix(a)
    rows, cols = a.shape
    if k is not None:
        if not 1 <= k <= min(rows, cols):
            raise ArgumentError(f"k={k} outside [1, {min(rows, cols)}]")
    if min(rows, cols) == 0:
        return SpectralSummary(np.zeros(0), np.zeros((rows, 0)), np.zeros((cols, 0)), 0.0)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    tol = default_rank_tolerance(a.shape, s[0]) if rank_tolerance is None else float(rank_tolerance)
    if k is not None:
        u, s, vt = u[:, :k], s[:k], vt[:k]
    return SpectralSummary(s, u, vt.T, tol)


def effective_rank(s: SpectralSummary) -> int:
    """Number of singular values strictly above the rank tolerance."""
    return int(np.count_nonzero(np.asarray(s.singular_values) > s.rank_tolerance))


def matrix_rank(a) -> int:
    a = as_matrix(a)
    if a.size == 0:
        return 0
    return effective_rank(thin_svd(a))


def null_space_basis(a, rank_tolerance=None, max_vectors=None):
    """Orthonormal basis (as columns) of the numerical null space of ``a``.

    With ``max_vectors`` only that many orthonormal null vectors are
    returned (a fixed-seed projection, so the output is deterministic).
    """
    a = as_matrix(a)
    if max_vectors is not None and a.shape[0] < a.shape[1]:
        return _partial_null_basis(a, rank_tolerance, int(max_vectors))
    rows, cols = a.shape
    if rows == 0:
        return np.eye(cols)
    if rows >= cols:
        _, s, vt = np.linalg.svd(a, full_matrices=False)
        tol = default_rank_tolerance(a.shape, s[0])
        if rank_tolerance is not None:
            tol = float(rank_tolerance)
        r = int(np.count_nonzero(s > tol))
        return vt[r:].T.copy()
    # wide: complete the row-space basis with a complete QR (cheaper than a full V)
    _, s, vt = np.linalg.svd(a, full_matrices=False)
    tol = default_rank_tolerance(a.shape, s[0])
    if rank_tolerance is not None:
        tol = float(rank_tolerance)
    r = int(np.count_nonzero(s > tol))
    if r == 0:
        return np.eye(cols)
    q, _ = np.linalg.qr(vt[:r].T, mode="complete")
    return q[:, r:].copy()


def _partial_null_basis(a, rank_tolerance, count):
    cols = a.shape[1]
    _, s, vt = np.linalg.svd(a, full_matrices=False)
    tol = default_rank_tolerance(a.shape, s[0])
    if rank_tolerance is not None:
        tol = float(rank_tolerance)
    r = int(np.count_nonzero(s > tol))
    count = min(count, cols - r)
    if count <= 0:
        return np.zeros((cols, 0))
    row_basis = vt[:r].T
    probe = np.random.default_rng(0x5EED).standard_normal((cols, count))
    for _ in range(2):  # project twice for orthogonality to working precision
        probe -= row_basis @ (row_basis.T @ probe)
    q, _ = np.linalg.qr(probe)
    return q


def null_space_vector(a):
    """Unit vector v with A v ~ 0: the right singular vector of the smallest singular value.

    Raises NoNullSpaceError when ``a`` has full column rank.
    """
    a = as_matrix(a)
    rows, cols = a.shape
    if cols == 0:
        raise NoNullSpaceError("matrix has no columns")
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    tol = default_rank_tolerance(a.shape, s[0] if s.size else 0.0)
    r = int(np.count_nonzero(s > tol))
    if r >= cols:
        raise NoNullSpaceError(f"matrix of shape {a.shape} has full column rank {r}")
    v = vt[-1]
    # deterministic sign: largest-magnitude entry positive
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v / np.linalg.norm(v)


def statistical_dimension(s: SpectralSummary, lam: float) -> float:
    """sum_i 1 / (1 + lam^2 / sigma_i^2) over significant singular values."""
    if lam < 0:
        raise ArgumentError(f"lambda must be >= 0, got {lam}")
    sig = np.asarray(s.singular_values, dtype=np.float64)
    sig = sig[sig > s.rank_tolerance]
    if lam == 0:
        return float(sig.size)
    sig2 = sig * sig
    return float(np.sum(sig2 / (sig2 + lam * lam)))
