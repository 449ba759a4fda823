"""Eigenvalue bound triples: pinned cases plus randomized property tests."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swiptrelay.matprops import (
    det_identity_inverse_bounds,
    det_sum_bounds,
    hermitian_pair,
    trace_product_bounds,
)


def _rng_hermitian(rng, n):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (z + z.conj().T) / 2.0


def _rng_psd(rng, n):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return z @ z.conj().T / n


def test_trace_product_identity():
    lower, value, upper = trace_product_bounds(hermitian_pair(np.eye(2), np.eye(2)))
    assert (lower, value, upper) == (2.0, 2.0, 2.0)


def test_trace_product_opposite_order_diagonals():
    p = hermitian_pair(np.diag([2.0, 1.0]), np.diag([1.0, 2.0]))
    lower, value, upper = trace_product_bounds(p)
    assert lower == pytest.approx(4.0)
    assert value == pytest.approx(4.0)  # opposite order saturates the lower bound
    assert upper == pytest.approx(5.0)


def test_det_sum_identity():
    lower, value, upper = det_sum_bounds(hermitian_pair(np.eye(2), np.eye(2)))
    assert (lower, value, upper) == (4.0, 4.0, 4.0)


def test_det_sum_opposite_order_diagonals():
    p = hermitian_pair(np.diag([3.0, 1.0]), np.diag([1.0, 3.0]))
    lower, value, upper = det_sum_bounds(p)
    assert lower == pytest.approx(12.0)
    assert value == pytest.approx(16.0)  # opposite order saturates the upper bound
    assert upper == pytest.approx(16.0)


def test_det_identity_inverse_zero_b():
    lower, value, upper = det_identity_inverse_bounds(
        hermitian_pair(np.eye(3), np.zeros((3, 3))))
    assert (lower, value, upper) == (1.0, 1.0, 1.0)


def test_det_identity_inverse_commuting_same_order():
    p = hermitian_pair(np.diag([2.0, 1.0]), np.diag([2.0, 1.0]))
    lower, value, upper = det_identity_inverse_bounds(p)
    assert lower == pytest.approx(4.0)
    assert value == pytest.approx(4.0)  # same order hits the lower bound
    assert upper == pytest.approx(4.5)


def test_commuting_unitary_sandwich_hits_trace_upper_bound():
    rng = np.random.default_rng(5)
    z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    q, _ = np.linalg.qr(z)
    a = q @ np.diag([3.0, 2.0, 1.0]) @ q.conj().T
    b = q @ np.diag([5.0, 4.0, 0.5]) @ q.conj().T
    lower, value, upper = trace_product_bounds(hermitian_pair(a, b))
    assert value == pytest.approx(upper, abs=1e-9)


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        hermitian_pair(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        hermitian_pair(np.eye(2), np.eye(3))


def test_det_sum_rejects_indefinite():
    with pytest.raises(ValueError):
        det_sum_bounds(hermitian_pair(np.diag([1.0, -1.0]), np.eye(2)))


def test_det_identity_inverse_rejects_singular_a():
    with pytest.raises(ValueError):
        det_identity_inverse_bounds(hermitian_pair(np.diag([1.0, 0.0]), np.eye(2)))


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=10**9), st.integers(min_value=1, max_value=5))
def test_trace_product_bound_property(seed, n):
    rng = np.random.default_rng(seed)
    p = hermitian_pair(_rng_hermitian(rng, n), _rng_hermitian(rng, n))
    lower, value, upper = trace_product_bounds(p)
    slack = 1e-9 * max(1.0, abs(lower), abs(upper))
    assert lower - slack <= value <= upper + slack


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=10**9), st.integers(min_value=1, max_value=5))
def test_det_sum_bound_property(seed, n):
    rng = np.random.default_rng(seed)
    p = hermitian_pair(_rng_psd(rng, n), _rng_psd(rng, n))
    lower, value, upper = det_sum_bounds(p)
    slack = 1e-9 * max(1.0, abs(lower), abs(upper))
    assert lower - slack <= value <= upper + slack


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=10**9), st.integers(min_value=1, max_value=5))
def test_det_identity_inverse_bound_property(seed, n):
    rng = np.random.default_rng(seed)
    a = _rng_psd(rng, n) + 0.1 * np.eye(n)
    p = hermitian_pair(a, _rng_psd(rng, n))
    lower, value, upper = det_identity_inverse_bounds(p)
    slack = 1e-9 * max(1.0, abs(lower), abs(upper))
    assert lower - slack <= value <= upper + slack
