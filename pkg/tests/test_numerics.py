import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmse_audit.errors import ContractError, NumericalError
from mmse_audit.numerics import cholesky, emp_stats, is_positive_definite, spd_solve, spd_sqrt, sym_eig


def sym_matrices(max_d=8):
    return st.integers(1, max_d).flatmap(
        lambda d: arrays(np.float64, (d, d), elements=st.floats(-10, 10, allow_nan=False))
    ).map(lambda m: m + m.T)


def test_identity():
    e = sym_eig(np.eye(4))
    np.testing.assert_array_equal(e.eigenvalues, np.ones(4))
    q = np.abs(e.eigenvectors)
    assert np.array_equal(np.sort(q, axis=0), np.sort(np.eye(4), axis=0))


def test_diag_axis_aligned():
    e = sym_eig(np.diag([1.0, 3.0]))
    np.testing.assert_allclose(e.eigenvalues, [3.0, 1.0])
    np.testing.assert_allclose(e.eigenvectors, [[0.0, 1.0], [1.0, 0.0]], atol=1e-15)


def test_random_5x5_reconstructs():
    b = np.random.default_rng(0).normal(size=(5, 5))
    m = b + b.T
    e = sym_eig(m)
    assert np.max(np.abs(e.reconstruct() - m)) <= 1e-10 * np.max(np.abs(m))


def test_agrees_with_lapack():
    b = np.random.default_rng(5).normal(size=(12, 12))
    m = b @ b.T
    np.testing.assert_allclose(sym_eig(m).eigenvalues, np.linalg.eigvalsh(m)[::-1], rtol=0, atol=1e-11 * np.max(np.abs(m)))


@settings(max_examples=60, deadline=None)
@given(sym_matrices())
def test_sym_eig_properties(m):
    e = sym_eig(m)
    d = m.shape[0]
    scale = max(np.max(np.abs(m)), 1e-300)
    assert np.all(np.diff(e.eigenvalues) <= 0)
    assert np.max(np.abs(e.reconstruct() - m)) <= 1e-10 * scale + 1e-300
    assert np.max(np.abs(e.eigenvectors.T @ e.eigenvectors - np.eye(d))) <= 1e-10
    assert abs(e.eigenvalues.sum() - np.trace(m)) <= 1e-10 * d * scale
    # sign convention: the largest-magnitude entry of each column is positive
    q = e.eigenvectors
    idx = np.argmax(np.abs(q), axis=0)
    assert np.all(q[idx, np.arange(d)] > 0)


def test_asymmetric_rejected():
    with pytest.raises(ContractError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_spd_sqrt_examples():
    np.testing.assert_allclose(spd_sqrt(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(spd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)
    b = np.random.default_rng(1).normal(size=(4, 4))
    m = b @ b.T + 0.1 * np.eye(4)
    r = spd_sqrt(m)
    np.testing.assert_allclose(r, r.T, atol=0)
    assert np.max(np.abs(r @ r - m)) <= 1e-9


def test_spd_sqrt_rejects_indefinite():
    with pytest.raises(ContractError):
        spd_sqrt(np.diag([1.0, -1.0]))


@settings(max_examples=50, deadline=None)
@given(sym_matrices(6))
def test_cholesky_fails_exactly_when_not_pd(m):
    lam_min = np.linalg.eigvalsh(m)[0]
    scale = max(np.max(np.abs(m)), 1.0)
    if abs(lam_min) < 1e-8 * scale:
        return  # too close to singular to call either way
    if lam_min > 0:
        low = cholesky(m)
        assert np.allclose(low, np.tril(low))
        assert np.max(np.abs(low @ low.T - m)) <= 1e-10 * scale
    else:
        assert not is_positive_definite(m)


def test_spd_solve_singular():
    with pytest.raises(NumericalError):
        spd_solve(np.zeros((2, 2)), np.ones(2))


def test_emp_stats_constant_targets():
    xs = np.random.default_rng(2).normal(size=(50, 3))
    st_ = emp_stats(xs, np.full(50, 0.7))
    np.testing.assert_allclose(st_.cov_xy, 0.0, atol=1e-15)
    assert st_.var_y == 0.0


def test_emp_stats_identical_inputs():
    x = np.random.default_rng(3).normal(size=40)
    st_ = emp_stats(x, x)
    np.testing.assert_allclose(st_.cov_xy, st_.var_x.ravel(), rtol=1e-14)


def test_emp_stats_lln():
    xs = np.random.default_rng(4).normal(size=(100_000, 3))
    st_ = emp_stats(xs, xs[:, 0])
    assert np.all(np.abs(st_.var_x - np.eye(3)) <= 0.05)


def test_emp_stats_unbiased():
    xs = np.array([[0.0], [2.0]])
    assert emp_stats(xs, [0.0, 1.0]).var_x[0, 0] == 2.0


def test_emp_stats_needs_two_rows():
    with pytest.raises(ContractError):
        emp_stats(np.ones((1, 2)), [1.0])
