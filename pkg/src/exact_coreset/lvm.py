"""Latent-variable moments: whitening, third-moment coresets, tensor power iteration.

The whitened third moment is the column sum of per-sample rows
vec((M^T x_i)^{⊗3}) / n, so a Carathéodory selection over those rows
reproduces it exactly and with it every contraction used by power
iteration.
"""

import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .caratheodory import CoresetSelection, accurate_coreset
from .errors import ArgumentError, DeficientRankError, InputError, RecoveryError
from .kernelization import outer_power_rows
from .numerics import as_matrix, thin_svd

WHITENING_TOL = 1e-8


@dataclass(frozen=True)
class MomentModel:
    x: np.ndarray
    k: int

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        n, d = x.shape
        if not 1 <= self.k < d:
            raise ArgumentError(f"need 1 <= k < d, got k={self.k}, d={d}")
        if n < self.k:
            raise InputError(f"need at least k={self.k} samples, got {n}")
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class WhiteningMatrix:
    m: np.ndarray  # d x k, with M^T T2 M = I_k
    source_spectrum: np.ndarray
    basis: np.ndarray  # top-k eigenvectors of T2

    @property
    def k(self):
        return self.m.shape[1]

    def unwhiten(self):
        """Pseudo-inverse of M^T, i.e. V_k diag(sqrt(sigma))."""
        return self.basis * np.sqrt(self.source_spectrum)


def second_moment(x):
    """(1/n) sum_i x_i x_i^T."""
    x = as_matrix(x, "x")
    t2 = x.T @ x / x.shape[0]
    return 0.5 * (t2 + t2.T)


def whitening_matrix(t2, k) -> WhiteningMatrix:
    """M = V_k diag(sigma_k)^(-1/2) from the top-k singular pairs of T2."""
    t2 = as_matrix(t2, "t2")
    if t2.shape[0] != t2.shape[1]:
        raise InputError(f"t2 must be square, got {t2.shape}")
    if not 1 <= k <= t2.shape[0]:
        raise ArgumentError(f"k={k} outside [1, {t2.shape[0]}]")
    full = thin_svd(t2)
    if full.singular_values[k - 1] <= full.rank_tolerance:
        raise DeficientRankError(
            f"second moment has rank {full.rank} < k={k}"
        )
    sig = full.singular_values[:k]
    basis = full.right_basis[:, :k]
    m = basis / np.sqrt(sig)
    resid = np.linalg.norm(m.T @ t2 @ m - np.eye(k))
    if resid > WHITENING_TOL:
        raise DeficientRankError(f"whitening residual {resid:.3e} exceeds {WHITENING_TOL}")
    return WhiteningMatrix(m, sig, basis)


@dataclass(frozen=True)
class WhitenedTensorKernel:
    rows: np.ndarray  # n x k^3
    whitening: WhiteningMatrix

    @property
    def matrix(self):
        return self.rows

    @property
    def k(self):
        return self.whitening.k

    def tensor(self, selection=None):
        """Whitened third moment, from all rows or from a weighted selection."""
        if selection is None:
            flat = self.rows.sum(axis=0)
        else:
            flat = selection.weights @ self.rows[selection.indices]
        return flat.reshape((self.k,) * 3)


def build_lvm_kernel(model: MomentModel, whitening=None) -> WhitenedTensorKernel:
    if whitening is None:
        whitening = whitening_matrix(second_moment(model.x), model.k)
    z = model.x @ whitening.m
    return WhitenedTensorKernel(outer_power_rows(z, 3) / model.n, whitening)


def lvm_size_bound(k):
    return comb(k + 2, 3) + 1


def lvm_coreset(model: MomentModel, clusters=None, kernel=None) -> CoresetSelection:
    """Samples and weights reproducing the whitened third moment exactly."""
    if kernel is None:
        kernel = build_lvm_kernel(model)
    return accurate_coreset(kernel, clusters=clusters)


def contraction_coreset(points, p, clusters=None) -> CoresetSelection:
    """Coreset for x -> sum_i (p_i^T x)^p; at most C(m+p-1, p)+1 points."""
    return accurate_coreset(outer_power_rows(points, p), clusters=clusters)


def tensor_contract(points, x, p, weights=None):
    """sum_i w_i (p_i^T x)^p; ``x`` may be a (q, m) batch."""
    points = as_matrix(points, "points")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != points.shape[1]:
        raise InputError(f"query has dimension {x.shape[-1]}, expected {points.shape[1]}")
    w = np.ones(points.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape[0] != points.shape[0]:
        raise InputError(f"{points.shape[0]} points but {w.shape[0]} weights")
    out = (x @ points.T) ** p @ w
    return float(out) if np.ndim(out) == 0 else out


def _t_vv(t, x):
    return np.einsum("ijk,j,k->i", t, x, x)


def _t_vvv(t, x):
    return float(np.einsum("ijk,i,j,k->", t, x, x, x))


@dataclass
class PowerDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    converged: list
    warnings: list = field(default_factory=list)

    @property
    def pairs(self):
        return [(float(l), self.eigenvectors[:, j]) for j, l in enumerate(self.eigenvalues)]


def tensor_power_decompose(tensor, restarts=10, iters=100, seed=0, tol=1e-10, n_components=None):
    """Greedy power iteration with deflation on a symmetric k x k x k tensor.

    Each component is the best of ``restarts`` runs (by T(v, v, v));
    starting vectors are orthogonalized against components already found.
    Eigenvectors are oriented so the eigenvalue is nonnegative, which is
    the orientation the update x <- T(I, x, x) / ||.|| converges to.
    """
    if restarts < 1 or iters < 1:
        raise ArgumentError("restarts and iters must be >= 1")
    if isinstance(tensor, WhitenedTensorKernel):
        tensor = tensor.tensor()
    t = np.array(tensor, dtype=np.float64)
    if t.ndim != 3 or len(set(t.shape)) != 1:
        raise InputError(f"expected a cubic 3-way tensor, got shape {t.shape}")
    k = t.shape[0]
    n_components = k if n_components is None else n_components
    rng = np.random.default_rng(seed)

    values, vectors, converged, notes = [], [], [], []
    for comp in range(n_components):
        best = None
        for _ in range(restarts):
            x = rng.standard_normal(k)
            for v in vectors:
                x -= (v @ x) * v
            nx = np.linalg.norm(x)
            if nx == 0:
                continue
            x /= nx
            done = False
            for _ in range(iters):
                y = _t_vv(t, x)
                ny = np.linalg.norm(y)
                if ny == 0:
                    break
                y /= ny
                step = np.linalg.norm(y - x)
                x = y
                if step < tol:
                    done = True
                    break
            val = _t_vvv(t, x)
            if best is None or val > best[0]:
                best = (val, x.copy(), done)
        if best is None:
            notes.append(f"component {comp}: no usable start vector")
            break
        val, v, done = best
        if val < 0:
            val, v = -val, -v
        if not done:
            notes.append(f"component {comp}: not converged after {iters} iterations")
        values.append(val)
        vectors.append(v)
        converged.append(done)
        t = t - val * np.einsum("i,j,k->ijk", v, v, v)
    if notes:
        warnings.warn("; ".join(notes), RuntimeWarning, stacklevel=2)
    vecs = np.column_stack(vectors) if vectors else np.zeros((k, 0))
    return PowerDecomposition(np.array(values), vecs, converged, notes)


@dataclass(frozen=True)
class LatentParameters:
    weights: np.ndarray  # gamma_j
    components: np.ndarray  # mu_j as columns, d x k


def recover_parameters(decomposition, whitening: WhiteningMatrix) -> LatentParameters:
    """gamma_j = 1 / lambda_j^2, mu_j = lambda_j (M^T)^+ v_j."""
    if isinstance(decomposition, PowerDecomposition):
        pairs = decomposition.pairs
    else:
        pairs = list(decomposition)
    if not pairs:
        raise RecoveryError("no eigenpairs to recover from")
    back = whitening.unwhiten()
    gammas, mus = [], []
    for j, (lam, v) in enumerate(pairs):
        if not lam > 0:
            raise RecoveryError(f"component {j} has nonpositive eigenvalue {lam}")
        gammas.append(1.0 / lam**2)
        mus.append(lam * back @ np.asarray(v))
    return LatentParameters(np.array(gammas), np.column_stack(mus))


def planted_single_topic(n, d, k, seed=0, weights=None, concentration=0.5):
    """Noiseless single-topic corpus: every document row equals its topic's word distribution.

    Topic counts are exact (``round(weights * n)``) so the empirical mixing
    weights match the planted ones.  Returns (x, planted_weights, planted_topics).
    """
    rng = np.random.default_rng(seed)
    topics = rng.dirichlet(np.full(d, concentration), size=k).T  # d x k
    if weights is None:
        weights = rng.dirichlet(np.full(k, 5.0))
    counts = np.floor(np.asarray(weights) * n).astype(int)
    counts[: n - counts.sum()] += 1
    labels = rng.permutation(np.repeat(np.arange(k), counts))
    gamma = counts / n
    return topics[:, labels].T.copy(), gamma, topics


def gaussian_mixture(n, d, k, seed=0, spread=4.0, noise=1.0):
    """Isotropic Gaussian mixture sample; returns (x, labels, means)."""
    rng = np.random.default_rng(seed)
    means = rng.normal(scale=spread, size=(k, d))
    labels = rng.integers(0, k, size=n)
    return means[labels] + noise * rng.standard_normal((n, d)), labels, means
