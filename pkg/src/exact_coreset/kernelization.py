"""Outer-power lifting of data rows and the regularizer sign structure.

A row d in R^D is lifted to vec(d ⊗ ... ⊗ d) (p factors), laid out in C
order so that the multi-index (i_1, ..., i_p) sits at flat position
sum_k i_k * D^(p-k) (zero-based).  For a query q = (w; -1) the inner
product of the lifted row with the lifted query is (d^T q)^p, which turns
every regression loss into a linear functional of the lifted rows.

The regularizer lambda * ||w||_p^p is lifted through a diagonal sign
pattern on the same layout: entries of a non-constant multi-index class
cancel in pairs, constant classes (i, ..., i) keep w_i^p, and the class of
the label slot is zeroed.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, InputError, SizeError
from .numerics import as_matrix

MAX_ROW_ENTRIES = 10**7
MAX_MATRIX_ENTRIES = 5 * 10**8


def flat_index(multi_index, d_aug):
    """Zero-based flat position of a zero-based multi-index."""
    multi_index = tuple(int(i) for i in multi_index)
    return int(np.ravel_multi_index(multi_index, (d_aug,) * len(multi_index)))


def multi_index(flat, d_aug, p):
    return tuple(int(i) for i in np.unravel_index(int(flat), (d_aug,) * p))


def outer_power_vec(x, p):
    """vec(x ⊗^p) in C order."""
    if p < 1:
        raise ArgumentError(f"p must be >= 1, got {p}")
    x = np.asarray(x, dtype=np.float64).ravel()
    out = x
    for _ in range(p - 1):
        out = np.multiply.outer(out, x).ravel()
    return out.copy()


def outer_power_rows(x, p):
    """Row-wise outer powers of an (n, D) matrix -> (n, D^p)."""
    x = as_matrix(x, "x")
    n, dim = x.shape
    _check_row_size(dim, p)
    out = x
    for _ in range(p - 1):
        out = (out[:, :, None] * x[:, None, :]).reshape(n, -1)
    return out.copy()


def _check_row_size(d_aug, p):
    if float(d_aug) ** p > MAX_ROW_ENTRIES:
        raise SizeError(
            f"lifted rows would have {d_aug}^{p} entries (limit {MAX_ROW_ENTRIES})"
        )


@dataclass(frozen=True)
class SignTensorDiagonal:
    d_aug: int
    p: int
    diag: np.ndarray

    def tensor(self):
        return self.diag.reshape((self.d_aug,) * self.p)

    def regularizer(self, w):
        """1^T diag * vec(q ⊗^p) with q = (w; -1)."""
        q = np.append(np.asarray(w, dtype=np.float64), -1.0)
        return float(self.diag @ outer_power_vec(q, self.p))


def _class_ranks(d_aug, p):
    """For every flat position: its class id, rank inside the class (lex order), class size."""
    shape = (d_aug,) * p
    idx = np.indices(shape).reshape(p, -1).T
    key = np.ravel_multi_index(np.sort(idx, axis=1).T, shape)
    order = np.argsort(key, kind="stable")  # stable keeps lex order inside a class
    sorted_key = key[order]
    starts = np.flatnonzero(np.r_[True, sorted_key[1:] != sorted_key[:-1]])
    sizes = np.diff(np.r_[starts, sorted_key.size])
    group = np.repeat(np.arange(starts.size), sizes)
    rank = np.empty(key.size, dtype=np.int64)
    rank[order] = np.arange(key.size) - starts[group]
    count = np.empty(key.size, dtype=np.int64)
    count[order] = sizes[group]
    return key, rank, count


def lp_sign_tensor(d, p):
    """Sign pattern whose contraction with (w; -1)^{⊗p} equals ||w||_p^p.

    Within each non-constant class the lexicographically first half of the
    permutations gets -1 and the second half +1.  A class with an odd number
    of permutations (possible from p = 6) has its first permutation set to
    0 and the remainder split evenly.
    """
    if d < 1:
        raise ArgumentError(f"d must be >= 1, got {d}")
    if p < 2 or p % 2:
        raise ArgumentError(f"p must be even and >= 2, got {p}")
    d_aug = d + 1
    _check_row_size(d_aug, p)
    _, rank, count = _class_ranks(d_aug, p)
    odd = count % 2 == 1
    shifted = np.where(odd, rank - 1, rank)
    half = np.where(odd, (count - 1) // 2, count // 2)
    diag = np.where(shifted < half, -1.0, 1.0)
    diag[odd & (rank == 0)] = 0.0
    for i in range(d_aug):
        diag[flat_index((i,) * p, d_aug)] = 1.0 if i < d else 0.0
    return SignTensorDiagonal(d_aug, p, diag)


def ridge_sign_matrix(d):
    """p = 2 sign pattern: -1 above the diagonal, 0 at the label corner, +1 elsewhere."""
    if d < 1:
        raise ArgumentError(f"d must be >= 1, got {d}")
    d_aug = d + 1
    m = np.ones((d_aug, d_aug))
    m[np.triu_indices(d_aug, k=1)] = -1.0
    m[d, d] = 0.0
    return SignTensorDiagonal(d_aug, 2, m.ravel())


def diagonal_regularizer(d, p):
    """Alternative regularizer lift: +1 only on (i, ..., i) for the d feature slots."""
    d_aug = d + 1
    _check_row_size(d_aug, p)
    diag = np.zeros(d_aug**p)
    for i in range(d):
        diag[flat_index((i,) * p, d_aug)] = 1.0
    return SignTensorDiagonal(d_aug, p, diag)


class KernelRow(NamedTuple):
    values: np.ndarray
    kind: str  # "data" or "reg"
    ref: int  # sample index for data rows, flat diagonal position for reg rows


@dataclass(frozen=True)
class KernelMatrix:
    """Lifted rows: n data rows followed by one row per nonzero entry of lambda*T.

    ``reg_positions[j]`` is the flat diagonal position of regularizer row
    ``n_data + j`` and ``reg_signs[j]`` its sign entry (the row itself is
    lambda * sign * e_position).
    """

    matrix: np.ndarray
    n_data: int
    d_aug: int
    p: int
    lam: float
    reg_positions: np.ndarray
    reg_signs: np.ndarray

    @property
    def n_rows(self):
        return self.matrix.shape[0]

    @property
    def data_rows(self):
        return self.matrix[: self.n_data]

    def row(self, i) -> KernelRow:
        if i < self.n_data:
            return KernelRow(self.matrix[i], "data", int(i))
        return KernelRow(self.matrix[i], "reg", int(self.reg_positions[i - self.n_data]))

    def __iter__(self):
        for i in range(self.n_rows):
            yield self.row(i)


def augment(x, y):
    x = as_matrix(x, "x")
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != x.shape[0]:
        raise InputError(f"x has {x.shape[0]} rows but y has {y.shape[0]} entries")
    if not np.all(np.isfinite(y)):
        raise InputError("y contains non-finite entries")
    return np.column_stack([x, y])


def build_regression_kernel(x, y, lam, p=2, reg_form="sign"):
    """Lift (x_i; y_i) to its p-th outer power and append the regularizer rows.

    ``reg_form="sign"`` uses the full sign pattern; ``"diagonal"`` appends
    only the d rows lambda * e_(i,...,i).
    """
    if p < 2 or p % 2:
        raise ArgumentError(f"p must be even and >= 2, got {p}")
    if lam < 0 or not np.isfinite(lam):
        raise ArgumentError(f"lambda must be finite and >= 0, got {lam}")
    data = augment(x, y)
    n, d_aug = data.shape
    if n < 1:
        raise InputError("regression problem needs at least one sample")
    d = d_aug - 1
    _check_row_size(d_aug, p)

    if lam > 0:
        if reg_form == "sign":
            signs = lp_sign_tensor(d, p) if p > 2 else ridge_sign_matrix(d)
        elif reg_form == "diagonal":
            signs = diagonal_regularizer(d, p)
        else:
            raise ArgumentError(f"unknown regularizer form {reg_form!r}")
        positions = np.flatnonzero(signs.diag)
        reg_signs = signs.diag[positions]
    else:
        positions = np.zeros(0, dtype=np.int64)
        reg_signs = np.zeros(0)

    width = d_aug**p
    if (n + positions.size) * width > MAX_MATRIX_ENTRIES:
        raise SizeError(f"kernel would hold {(n + positions.size) * width} entries")
    mat = np.zeros((n + positions.size, width))
    mat[:n] = outer_power_rows(data, p)
    mat[n + np.arange(positions.size), positions] = lam * reg_signs
    return KernelMatrix(mat, n, d_aug, p, float(lam), positions, reg_signs)
