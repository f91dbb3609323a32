"""Accurate coresets for l_p-regularized l_p regression (even p).

Pipeline: lift (x_i; y_i) and the regularizer into a kernel matrix, select
rows with the Carathéodory reduction, then rebuild a small weighted problem
(Xc, yc) plus a reweighted regularizer whose loss equals the full loss for
every w.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .caratheodory import WeightedPointSet, accurate_coreset, fast_caratheodory
from .errors import ArgumentError, InputError, NumericalFailure
from .kernelization import build_regression_kernel, outer_power_rows, outer_power_vec, augment
from .numerics import as_matrix, effective_rank, matrix_rank, statistical_dimension, thin_svd


@dataclass(frozen=True)
class RegressionProblem:
    x: np.ndarray
    y: np.ndarray
    lam: float = 0.0
    p: int = 2

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if x.shape[0] < 1:
            raise InputError("regression problem needs at least one sample")
        if y.shape[0] != x.shape[0]:
            raise InputError(f"x has {x.shape[0]} rows but y has {y.shape[0]} entries")
        if not np.all(np.isfinite(y)):
            raise InputError("y contains non-finite entries")
        if self.p < 2 or self.p % 2:
            raise ArgumentError(f"p must be even and >= 2, got {self.p}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ArgumentError(f"lambda must be finite and >= 0, got {self.lam}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]


def _check_w(w, d):
    w = np.asarray(w, dtype=np.float64)
    if w.shape[-1] != d:
        raise InputError(f"query has dimension {w.shape[-1]}, expected {d}")
    return w


def reg_loss(prob: RegressionProblem, w):
    """sum_i (x_i^T w - y_i)^p + lambda * sum_j w_j^p.

    ``w`` may be a single query or a (q, d) batch.
    """
    w = _check_w(w, prob.d)
    r = w @ prob.x.T - prob.y
    out = np.sum(r**prob.p, axis=-1) + prob.lam * np.sum(w**prob.p, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RegressionCoreset:
    """Weighted rows plus the reweighted regularizer.

    ``xc``/``yc`` hold selected rows scaled by weight^(1/p), so
    ||xc w - yc||_p^p equals the weighted data term.  ``reg_diag`` maps a
    flat position of the (d+1)^p lift to its accumulated weight * sign.
    """

    xc: np.ndarray
    yc: np.ndarray
    data_indices: np.ndarray
    data_weights: np.ndarray
    reg_diag: dict
    lam: float
    p: int
    d: int
    kernel_rank: int = 0
    selected_total: int = 0

    @property
    def n_data(self):
        return int(self.data_indices.shape[0])

    def reg_tensor(self):
        t = np.zeros((self.d + 1) ** self.p)
        for pos, val in self.reg_diag.items():
            t[pos] = val
        return t


def _staged_selection(kernel, clusters):
    """Reduce the data rows on their own, then together with the regularizer rows.

    Regularizer rows are scaled unit vectors, so they are nearly all
    independent and a single pass over the full kernel spends most of its
    time on them.  The first stage shrinks the data block to at most
    rank(data)+1 rows; the second runs on the survivors plus the
    regularizer rows.  Both stages preserve the weighted sum exactly, so
    the column sum of the full kernel is unchanged.
    """
    n_data = kernel.n_data
    if kernel.n_rows == n_data:
        return accurate_coreset(kernel, clusters=clusters)
    rows = kernel.matrix
    first = fast_caratheodory(WeightedPointSet.from_arrays(rows[:n_data]), clusters=clusters)
    n_reg = kernel.n_rows - n_data
    idx = np.concatenate([first.indices, n_data + np.arange(n_reg)])
    w = np.concatenate([first.weights, np.ones(n_reg)])
    return fast_caratheodory(WeightedPointSet(rows[idx], w, idx), clusters=clusters)


def build_coreset(prob: RegressionProblem, clusters=None, reg_form="sign", kernel=None):
    """Kernelize, select, and rebuild (Xc, yc, reg_diag)."""
    if kernel is None:
        kernel = build_regression_kernel(prob.x, prob.y, prob.lam, prob.p, reg_form=reg_form)
    sel = _staged_selection(kernel, clusters)
    is_data = sel.indices < kernel.n_data
    di, dw = sel.indices[is_data], sel.weights[is_data]
    scale = dw ** (1.0 / prob.p)
    xc = prob.x[di] * scale[:, None]
    yc = prob.y[di] * scale

    reg_diag = {}
    for i, w in zip(sel.indices[~is_data], sel.weights[~is_data]):
        j = i - kernel.n_data
        pos = int(kernel.reg_positions[j])
        reg_diag[pos] = reg_diag.get(pos, 0.0) + float(w * kernel.reg_signs[j])
    return RegressionCoreset(
        xc=xc, yc=yc, data_indices=di, data_weights=dw, reg_diag=reg_diag,
        lam=prob.lam, p=prob.p, d=prob.d,
        kernel_rank=matrix_rank(kernel.matrix), selected_total=len(sel),
    )


def coreset_reg_loss(c: RegressionCoreset, w):
    """||xc w - yc||_p^p + lambda * sum_j reg_diag[j] * vec((w; -1)^{⊗p})_j."""
    w = _check_w(w, c.d)
    batch = np.atleast_2d(w)
    data = np.sum((batch @ c.xc.T - c.yc) ** c.p, axis=-1)
    reg = np.zeros(batch.shape[0])
    if c.reg_diag and c.lam > 0:
        pos = np.fromiter(c.reg_diag.keys(), dtype=np.int64)
        val = np.fromiter(c.reg_diag.values(), dtype=np.float64)
        q = np.column_stack([batch, -np.ones(batch.shape[0])])
        lifted = outer_power_rows(q, c.p)
        reg = c.lam * (lifted[:, pos] @ val)
    out = data + reg
    return float(out[0]) if w.ndim == 1 else out


def _solve_normal(a, b):
    tol = a.shape[0] * np.finfo(float).eps * max(np.abs(a).max(), 1.0)
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[-1] <= tol * 10:
        raise NumericalFailure("normal matrix is singular", smallest_singular_value=float(s[-1]))
    return np.linalg.solve(a, b)


def solve_ridge(c: RegressionCoreset):
    """Minimizer of the coreset loss for p = 2.

    The regularizer lift contributes the quadratic form q^T R q with
    q = (w; -1): its feature block acts like lambda*Ic, and the
    label row/column gives a linear term that must be kept because the
    reweighting does not cancel it.
    """
    if c.p != 2:
        raise ArgumentError("closed-form solve is available only for p = 2")
    d = c.d
    r = c.reg_tensor().reshape(d + 1, d + 1)
    r = 0.5 * (r + r.T)
    ic = r[:d, :d]
    lin = r[:d, d]
    a = c.xc.T @ c.xc + c.lam * ic
    b = c.xc.T @ c.yc + c.lam * lin
    return _solve_normal(a, b)


def ridge_solution(prob: RegressionProblem):
    """(X^T X + lambda I)^{-1} X^T y on the full data."""
    if prob.p != 2:
        raise ArgumentError("closed-form solve is available only for p = 2")
    a = prob.x.T @ prob.x + prob.lam * np.eye(prob.d)
    return _solve_normal(a, prob.x.T @ prob.y)


@dataclass
class EquivalenceReport:
    num_queries: int
    max_abs_gap: float
    max_rel_gap: float
    full_solution: list = None
    coreset_solution: list = None
    solution_gap: float = None
    n: int = 0
    d: int = 0
    selected_data_rows: int = 0
    selected_total: int = 0
    timings: dict = field(default_factory=dict)

    def as_dict(self, with_timings=False):
        out = {
            "num_queries": self.num_queries,
            "max_abs_gap": self.max_abs_gap,
            "max_rel_gap": self.max_rel_gap,
            "full_solution": self.full_solution,
            "coreset_solution": self.coreset_solution,
            "solution_gap": self.solution_gap,
            "n": self.n,
            "d": self.d,
            "selected_data_rows": self.selected_data_rows,
            "selected_total": self.selected_total,
        }
        if with_timings:
            out["timings"] = dict(self.timings)
        return out


def relative_gaps(full, approx):
    full = np.asarray(full, dtype=np.float64)
    gap = np.abs(np.asarray(approx, dtype=np.float64) - full)
    denom = np.where(np.abs(full) > 0, np.abs(full), 1.0)
    return gap, gap / denom


def verify_equivalence(prob: RegressionProblem, c: RegressionCoreset, num_queries=100, seed=0):
    """Compare full and coreset losses on seeded standard-normal queries."""
    if num_queries < 1:
        raise ArgumentError("num_queries must be >= 1")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((num_queries, prob.d))

    t0 = time.perf_counter()
    full = reg_loss(prob, w)
    t1 = time.perf_counter()
    core = coreset_reg_loss(c, w)
    t2 = time.perf_counter()
    gap, rel = relative_gaps(full, core)

    report = EquivalenceReport(
        num_queries=num_queries,
        max_abs_gap=float(gap.max()),
        max_rel_gap=float(rel.max()),
        n=prob.n, d=prob.d,
        selected_data_rows=c.n_data,
        selected_total=c.selected_total,
        timings={"full_loss_ms": 1e3 * (t1 - t0), "coreset_loss_ms": 1e3 * (t2 - t1)},
    )
    if prob.p == 2:
        try:
            xf = ridge_solution(prob)
            t3 = time.perf_counter()
            xc = solve_ridge(c)
            report.timings["coreset_solve_ms"] = 1e3 * (time.perf_counter() - t3)
        except NumericalFailure:
            pass
        else:
            report.full_solution = [float(v) for v in xf]
            report.coreset_solution = [float(v) for v in xc]
            report.solution_gap = float(np.linalg.norm(xc - xf) / max(np.linalg.norm(xf), 1e-300))
    return report


def data_kernel_spectrum(prob: RegressionProblem):
    """Singular values of the lifted data rows (no regularizer rows)."""
    return thin_svd(outer_power_rows(augment(prob.x, prob.y), prob.p))


def sweep_lambda(prob: RegressionProblem, lambdas, clusters=None):
    """Per lambda: (lambda, selected data rows, statistical dimension + 1)."""
    lambdas = [float(v) for v in lambdas]
    if not lambdas:
        raise ArgumentError("lambda grid is empty")
    if any(v < 0 or not np.isfinite(v) for v in lambdas):
        raise ArgumentError("lambda values must be finite and >= 0")
    spectrum = data_kernel_spectrum(prob)
    rows = []
    for lam in lambdas:
        sub = RegressionProblem(prob.x, prob.y, lam, prob.p)
        c = build_coreset(sub, clusters=clusters)
        rows.append((lam, c.n_data, statistical_dimension(spectrum, lam) + 1.0))
    return rows


def rank_bound(d, p):
    """Number of distinct monomials of degree p in d+1 variables: C(d+p, p)."""
    from math import comb
    return comb(d + p, p)


def per_row_contributions(prob: RegressionProblem, c: RegressionCoreset, w):
    """(weighted residual^p, weighted lifted-row·lifted-query) for each selected data row."""
    w = _check_w(w, prob.d)
    q = np.append(w, -1.0)
    lifted_q = outer_power_vec(q, prob.p)
    data = augment(prob.x, prob.y)[c.data_indices]
    direct = c.data_weights * (data @ q) ** prob.p
    lifted = c.data_weights * (outer_power_rows(data, prob.p) @ lifted_q)
    return direct, lifted
