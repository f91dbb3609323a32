from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exact_coreset.caratheodory import (
    WeightedPointSet,
    accurate_coreset,
    caratheodory_reduce,
    fast_caratheodory,
)
from exact_coreset.errors import ArgumentError, NumericalFailure
from exact_coreset.kernelization import build_regression_kernel
from exact_coreset.lvm import MomentModel, build_lvm_kernel, gaussian_mixture
from exact_coreset.numerics import matrix_rank


def check_contracts(points, weights, sel):
    """Direct-evaluation oracle for the three selection contracts."""
    points = np.asarray(points, dtype=float)
    target = weights @ points
    got = sel.weights @ points[sel.indices]
    assert np.all(np.abs(got - target) <= 1e-9 * (1 + np.linalg.norm(target)))
    assert abs(sel.weights.sum() - weights.sum()) <= 1e-9 * weights.sum()
    assert len(sel) <= np.linalg.matrix_rank(points) + 1
    assert np.all(sel.weights > 0)
    assert np.all(np.diff(sel.indices) > 0)


def test_single_point():
    sel = caratheodory_reduce(WeightedPointSet.from_arrays([[3.0, 4.0]], [1.0]))
    assert list(sel.indices) == [0]
    assert list(sel.weights) == [1.0]


def test_square_vertices():
    pts = np.array([[1.0, 0], [0, 1], [-1, 0], [0, -1]])
    w = np.ones(4)
    sel = caratheodory_reduce(WeightedPointSet.from_arrays(pts, w))
    assert len(sel) <= 3
    np.testing.assert_allclose(sel.weighted_sum(pts), [0, 0], atol=1e-12)
    assert sel.weights.sum() == pytest.approx(4.0, rel=1e-12)


def test_collinear_points_rank_one():
    t = np.random.default_rng(3).normal(size=10)
    pts = np.outer(t, [1.0, 2.0, 3.0])
    assert np.linalg.matrix_rank(pts) == 1
    for fn in (caratheodory_reduce, fast_caratheodory):
        sel = fn(WeightedPointSet.from_arrays(pts))
        assert len(sel) <= 2
        check_contracts(pts, np.ones(10), sel)


def test_zero_weights_stripped():
    pts = np.arange(12.0).reshape(6, 2)
    p = WeightedPointSet.from_arrays(pts, [0, 1, 0, 2, 3, 0])
    assert list(p.index) == [1, 3, 4]
    sel = caratheodory_reduce(p)
    assert set(sel.indices) <= {1, 3, 4}


def test_empty_and_bad_input():
    with pytest.raises(ArgumentError):
        WeightedPointSet.from_arrays(np.zeros((0, 2)))
    with pytest.raises(ArgumentError):
        WeightedPointSet.from_arrays([[1.0, 2.0]], [0.0])
    with pytest.raises(ArgumentError):
        fast_caratheodory(WeightedPointSet.from_arrays(np.eye(3)), clusters=1)


def test_iteration_cap_raises_with_diagnostics():
    pts = np.random.default_rng(0).normal(size=(40, 2))
    with pytest.raises(NumericalFailure) as err:
        caratheodory_reduce(WeightedPointSet.from_arrays(pts), max_iter=3)
    assert err.value.diagnostics["n"] == 40


def test_fast_small_input_unchanged():
    pts = np.random.default_rng(1).normal(size=(4, 5))
    w = np.array([0.5, 1.0, 2.0, 0.25])
    sel = fast_caratheodory(WeightedPointSet.from_arrays(pts, w), clusters=3)
    assert list(sel.indices) == [0, 1, 2, 3]
    np.testing.assert_array_equal(sel.weights, w)


def test_fast_thousand_points():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(1000, 4))
    sel = fast_caratheodory(WeightedPointSet.from_arrays(pts), clusters=12)
    assert len(sel) <= 5
    check_contracts(pts, np.ones(1000), sel)


def test_fast_matches_basic_sum():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(30, 3))
    w = rng.random(30) + 0.1
    a = caratheodory_reduce(WeightedPointSet.from_arrays(pts, w))
    b = fast_caratheodory(WeightedPointSet.from_arrays(pts, w), clusters=5)
    np.testing.assert_allclose(a.weighted_sum(pts), b.weighted_sum(pts), rtol=0, atol=1e-12)


def test_deterministic():
    pts = np.random.default_rng(5).normal(size=(300, 6))
    a = fast_caratheodory(WeightedPointSet.from_arrays(pts))
    b = fast_caratheodory(WeightedPointSet.from_arrays(pts))
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_array_equal(a.weights, b.weights)


def test_accurate_coreset_one_row():
    sel = accurate_coreset(np.array([[1.0, 2.0, 3.0]]))
    assert list(sel.indices) == [0] and list(sel.weights) == [1.0]


def test_accurate_coreset_ridge_kernel():
    rng = np.random.default_rng(6)
    x, y = rng.normal(size=(50, 3)), rng.normal(size=50)
    k = build_regression_kernel(x, y, 1.0, 2)
    rank = matrix_rank(k.matrix)
    sel = accurate_coreset(k)
    # regularizer rows span (d+1)^2 - 1 directions; the y^2 column adds one more
    assert rank == 16
    assert len(sel) <= rank + 1
    np.testing.assert_allclose(sel.weighted_sum(k.matrix), k.matrix.sum(axis=0),
                               rtol=0, atol=1e-9 * (1 + np.linalg.norm(k.matrix.sum(axis=0))))


def test_accurate_coreset_lvm_kernel_size():
    x, _, _ = gaussian_mixture(2000, 12, 3, seed=7)
    kern = build_lvm_kernel(MomentModel(x, 3))
    sel = accurate_coreset(kern)
    assert len(sel) <= comb(5, 3) + 1 == 11


def test_idempotent():
    pts = np.random.default_rng(8).normal(size=(200, 5))
    sel = fast_caratheodory(WeightedPointSet.from_arrays(pts))
    again = caratheodory_reduce(WeightedPointSet.from_arrays(pts[sel.indices], sel.weights))
    np.testing.assert_array_equal(again.indices, np.arange(len(sel)))
    np.testing.assert_array_equal(again.weights, sel.weights)


@st.composite
def weighted_sets(draw):
    n = draw(st.integers(1, 120))
    m = draw(st.integers(1, 8))
    r = draw(st.integers(1, m))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, r)) @ rng.normal(size=(r, m))  # rank <= r
    w = rng.random(n) * 10 + 1e-3
    return pts, w


@given(weighted_sets(), st.sampled_from(["basic", "fast"]))
@settings(max_examples=60, deadline=None)
def test_contracts_property(data, which):
    pts, w = data
    fn = caratheodory_reduce if which == "basic" else fast_caratheodory
    sel = fn(WeightedPointSet.from_arrays(pts, w))
    check_contracts(pts, w, sel)
