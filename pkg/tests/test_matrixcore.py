import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ouaccel.matrixcore import (
    PrecisionMatrix,
    ValidationError,
    general_eigenvalues,
    matrix_exponential,
    psd_factor,
    random_spd,
    spectral_rate,
    symmetric_eig,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=12)


def test_symmetric_eig_identity():
    vals, vecs = symmetric_eig(np.eye(3))
    assert np.allclose(vals, 1.0)
    assert np.linalg.norm(vecs.T @ vecs - np.eye(3)) <= 1e-12


def test_symmetric_eig_multiscale_diag():
    vals, vecs = symmetric_eig(np.diag([0.05, 1.0]))
    assert vals.tolist() == [0.05, 1.0]
    assert np.allclose(np.abs(vecs), np.eye(2))


def test_symmetric_eig_reconstruction():
    rng = np.random.default_rng(8)
    g = rng.standard_normal((8, 8))
    m = g + g.T
    vals, q = symmetric_eig(m)
    assert np.linalg.norm(q @ np.diag(vals) @ q.T - m) <= 1e-10 * np.linalg.norm(m)
    for lam, v in zip(vals, q.T):
        assert np.linalg.norm(m @ v - lam * v) <= 1e-10 * np.linalg.norm(m)


def test_symmetric_eig_rejects_asymmetric():
    with pytest.raises(ValidationError, match="residual"):
        symmetric_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_general_eigenvalues_examples():
    sp = general_eigenvalues(-np.eye(4))
    assert np.allclose(sp.values, -1.0) and sp.rho == pytest.approx(1.0)
    sp = general_eigenvalues(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert np.allclose(sorted(sp.values.imag), [-1.0, 1.0])
    assert abs(sp.rho) <= 1e-15

    eps = 0.05
    h = math.sqrt(2 / eps)
    a = np.array([[-eps, h], [-eps * h, -1.0]])
    sp = general_eigenvalues(a)
    assert np.all(np.abs(sp.values.imag) > 0)
    assert np.allclose(sp.values.real, -(1 + eps) / 2, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(min_value=1, max_value=15))
def test_general_eigenvalues_trace_det(seed, n):
    a = np.random.default_rng(seed).standard_normal((n, n))
    sp = general_eigenvalues(a)
    assert sp.rho == -sp.abscissa
    assert abs(sp.values.sum() - np.trace(a)) <= 1e-8 * max(1.0, np.linalg.norm(a))
    det = np.linalg.det(a)
    assert abs(np.prod(sp.values) - det) <= 1e-8 * max(1.0, abs(det))
    # conjugate-closed
    assert np.allclose(np.sort_complex(sp.values), np.sort_complex(sp.values.conj()))


def test_general_eigenvalues_characteristic_residual_small_n():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3, 4):
        a = rng.standard_normal((n, n))
        scale = np.linalg.norm(a) ** n
        for lam in general_eigenvalues(a).values:
            assert abs(np.linalg.det(a - lam * np.eye(n))) <= 1e-8 * max(scale, 1.0)


def test_general_agrees_with_symmetric():
    s = random_spd(7, 1e3, 5)
    vals = np.sort(general_eigenvalues(s.s).values.real)
    assert np.allclose(vals, s.eigenvalues, rtol=1e-8)


def test_matrix_exponential_examples():
    a = np.random.default_rng(0).standard_normal((3, 3))
    assert np.array_equal(matrix_exponential(a, 0.0), np.eye(3))
    assert np.allclose(matrix_exponential(np.diag([-1.0, -2.0]), 1.0), np.diag([math.exp(-1), math.exp(-2)]), rtol=1e-14)
    rot = matrix_exponential(np.array([[0.0, 1.0], [-1.0, 0.0]]), math.pi / 2)
    assert np.allclose(rot, [[0.0, 1.0], [-1.0, 0.0]], atol=1e-15)
    with pytest.raises(ValidationError):
        matrix_exponential(a, -1.0)


@settings(max_examples=30, deadline=None)
@given(seeds, dims, st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_matrix_exponential_semigroup(seed, n, t, s):
    a = np.random.default_rng(seed).standard_normal((n, n))
    lhs = matrix_exponential(a, t + s)
    rhs = matrix_exponential(a, t) @ matrix_exponential(a, s)
    assert np.linalg.norm(lhs - rhs) <= 1e-9 * max(1.0, np.linalg.norm(lhs))


def test_matrix_exponential_derivative_at_zero():
    a = np.random.default_rng(1).standard_normal((4, 4))
    h = 1e-6
    fd = (matrix_exponential(a, h) - matrix_exponential(a, 0.0)) / h
    assert np.linalg.norm(fd - a) <= 1e-5 * np.linalg.norm(a)


def test_matrix_exponential_decays_for_stable_drift():
    s = random_spd(5, 100.0, 2)
    a = -s.s
    rho = spectral_rate(a)
    n10 = np.linalg.norm(matrix_exponential(a, 10 / rho))
    n20 = np.linalg.norm(matrix_exponential(a, 20 / rho))
    assert n20 < n10 < 1.0


def test_psd_factor_examples():
    f = psd_factor(np.eye(3))
    assert f.shape == (3, 3) and np.allclose(f @ f.T, np.eye(3))
    ones = np.ones((4, 4))
    f = psd_factor(ones)
    assert f.shape == (4, 1)
    assert np.allclose(np.abs(f[:, 0]), 1.0)
    g = np.random.default_rng(4).standard_normal((6, 3))
    d = g @ g.T
    f = psd_factor(d)
    assert f.shape[1] == 3
    assert np.linalg.norm(f @ f.T - d) <= 1e-10 * np.linalg.norm(d)


def test_psd_factor_clamps_dust_and_rejects_indefinite():
    d = np.diag([1.0, -1e-14])
    assert psd_factor(d).shape == (2, 1)
    with pytest.raises(ValidationError, match="indefinite"):
        psd_factor(np.diag([1.0, -1e-3]))


@settings(max_examples=30, deadline=None)
@given(seeds, dims, st.integers(min_value=0, max_value=12))
def test_psd_factor_properties(seed, n, r):
    r = min(r, n)
    g = np.random.default_rng(seed).standard_normal((n, r))
    d = g @ g.T
    f = psd_factor(d)
    assert f.shape[1] <= n
    assert f.shape[1] == np.linalg.matrix_rank(d) or r == 0
    assert np.linalg.norm(f @ f.T - d) <= 1e-10 * max(np.linalg.norm(d), 1e-300)


@settings(max_examples=40, deadline=None)
@given(seeds, dims, st.floats(1.0, 1e6))
def test_precision_matrix_invariants(seed, n, cond):
    p = random_spd(n, cond, seed)
    s = p.s
    norm = np.linalg.norm(s)
    assert np.array_equal(s, s.T)
    assert np.all(p.eigenvalues > 0)
    assert np.linalg.norm(p.sqrt_s @ p.sqrt_s - s) <= 1e-10 * norm
    inv = np.linalg.inv(s)
    assert np.linalg.norm(p.inv_sqrt_s @ p.inv_sqrt_s - p.inv_s) <= 1e-10 * np.linalg.norm(inv)
    assert np.linalg.norm(p.eigenvectors.T @ p.eigenvectors - np.eye(n)) <= 1e-12
    assert np.linalg.norm(p.sqrt_s @ s - s @ p.sqrt_s) <= 1e-10 * norm * np.linalg.norm(p.sqrt_s)
    assert np.linalg.norm(p.inv_sqrt_s @ s - s @ p.inv_sqrt_s) <= 1e-10 * norm * np.linalg.norm(p.inv_sqrt_s)
    assert not p.s.flags.writeable


def test_precision_matrix_validation():
    with pytest.raises(ValidationError, match="positive definite"):
        PrecisionMatrix(np.diag([1.0, 0.0]))
    with pytest.raises(ValidationError, match="symmetric"):
        PrecisionMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValidationError, match="square"):
        PrecisionMatrix(np.ones((2, 3)))
    p = PrecisionMatrix(np.array([[2.0, 1.0 + 1e-13], [1.0, 2.0]]))
    assert 0 < p.asymmetry <= 1e-10
    assert p.s[0, 1] == p.s[1, 0]


def test_random_spd_condition_number():
    p = random_spd(6, 1e4, 9)
    assert p.lambda_min == pytest.approx(1.0, rel=1e-12)
    assert p.lambda_max == pytest.approx(1e4, rel=1e-12)
    assert np.array_equal(random_spd(6, 1e4, 9).s, p.s)


def test_right_divide_accuracy():
    p = random_spd(8, 1e6, 11)
    a = np.random.default_rng(0).standard_normal((8, 8))
    x = np.asarray(p.right_divide(a), dtype=float)
    assert np.linalg.norm(x @ p.s - a) <= 1e-12 * np.linalg.norm(a) * np.linalg.norm(p.s)
