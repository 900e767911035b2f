import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qma.forms import TwoFormQ, pairing_matrix, standard_omega
from qma.hypercomplex import conj_j, standard_frame
from qma.simdiag import (
    DiagonalizationError,
    PointwiseCoefficients,
    build_omega_tilde,
    coefficients_in_basis,
    conj_equivariance_residual,
    defining_relation_residual,
    lemma2_bound,
    normalize_to_standard,
    orthogonality_residuals,
    random_pointwise_coefficients,
    random_q_positive,
    random_q_real,
    simultaneous_diagonalize,
)


def _cvec(rng, m):
    return rng.standard_normal(m) + 1j * rng.standard_normal(m)


def _quadratic_form(frame, c):
    # del del_J of c|x|^2: constant real Hessian 2c Id pushed to holomorphic indices
    D = frame.dual
    Hc = np.einsum("ai,ij,bj->ab", D, 2 * c * np.eye(4 * frame.n), D.conj())
    M = -Hc @ frame.jcov
    return TwoFormQ(M - M.T)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_tilde_trivial_cases(n):
    fr = standard_frame(n)
    om = standard_omega(fr)
    np.testing.assert_allclose(build_omega_tilde(fr, om, om), np.eye(2 * n), atol=1e-14)
    np.testing.assert_allclose(build_omega_tilde(fr, om, om * 0), 0, atol=1e-15)


def test_tilde_defining_relation(rng):
    fr = standard_frame(3)
    om1, om2 = random_q_positive(fr, rng), random_q_real(fr, rng)
    T = build_omega_tilde(fr, om1, om2)
    U = np.array([_cvec(rng, 6) for _ in range(100)])
    W = np.array([_cvec(rng, 6) for _ in range(100)])
    res = defining_relation_residual(om1, om2, T, U, W)
    assert res <= 1e-12 * (1 + om1.norm() + om2.norm()) * np.abs(U).max() * np.abs(W).max()
    # independent check: Omega_2(v, .) = Omega_1(T v, .) as covectors
    np.testing.assert_allclose(om2.A.T, (om1.A.T @ T), atol=1e-11)


def test_tilde_rejects_non_positive(rng):
    fr = standard_frame(2)
    with pytest.raises(ValueError):
        build_omega_tilde(fr, -standard_omega(fr), random_q_real(fr, rng))


def test_equivariance(rng):
    fr = standard_frame(2)
    om = standard_omega(fr)
    assert conj_equivariance_residual(fr, om, om, _cvec(rng, 4)) < 1e-15
    om1, om2 = random_q_positive(fr, rng), random_q_real(fr, rng)
    v = _cvec(rng, 4)
    v /= np.linalg.norm(v)
    assert conj_equivariance_residual(fr, om1, om2, v) <= 1e-11
    # negative control: a (2,0)-form that is not q-real
    X = _cvec(rng, 16).reshape(4, 4)
    bad = TwoFormQ(X - X.T)
    assert conj_equivariance_residual(fr, om1, bad, v) > 1e-6


def test_diagonalize_identity_pair():
    fr = standard_frame(2)
    om = standard_omega(fr)
    res = simultaneous_diagonalize(fr, om, om)
    np.testing.assert_allclose(res.eigenvalues, 1, atol=1e-14)
    assert res.residual < 1e-15
    assert res.ok()


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_diagonalize_random(n, rng):
    fr = standard_frame(n)
    for _ in range(50):
        om1, om2 = random_q_positive(fr, rng), random_q_real(fr, rng)
        res = simultaneous_diagonalize(fr, om1, om2)
        assert max(orthogonality_residuals(fr, om1, om2, res.basis).values()) <= 1e-10
        assert res.min_singular > 1e-8
        T = build_omega_tilde(fr, om1, om2)
        for e, lam in zip(res.basis, res.eigenvalues):
            np.testing.assert_allclose(T @ e, lam * e, atol=1e-9)
            # the companion carries the conjugate eigenvalue
            s = conj_j(fr, e)
            np.testing.assert_allclose(T @ s, np.conj(lam) * s, atol=1e-9)


def test_positive_pair_has_real_nonnegative_eigenvalues(rng):
    fr = standard_frame(3)
    for _ in range(50):
        om1, om2 = random_q_positive(fr, rng), random_q_positive(fr, rng)
        lam = simultaneous_diagonalize(fr, om1, om2).eigenvalues
        assert np.abs(lam.imag).max() <= 1e-9
        assert lam.real.min() >= -1e-9


def test_normalize_scaling():
    fr = standard_frame(2)
    om = standard_omega(fr)
    std = normalize_to_standard(simultaneous_diagonalize(fr, om, om * 2), om, om * 2)
    np.testing.assert_allclose(std.phis, [2, 2], atol=1e-13)


@pytest.mark.parametrize("n", [1, 2])
def test_normalize_quadratic(n):
    fr = standard_frame(n)
    om = standard_omega(fr)
    c = 0.3
    om2 = om + _quadratic_form(fr, c)
    std = normalize_to_standard(simultaneous_diagonalize(fr, om, om2), om, om2)
    # trace of the flat operator on c|x|^2 is c * 8n / 4, shared equally by n eigenvalues
    np.testing.assert_allclose(std.phis, 1 + 2 * c, atol=1e-13)


def test_normalized_basis_diagonalizes(rng):
    fr = standard_frame(3)
    om1, om2 = random_q_positive(fr, rng), random_q_real(fr, rng)
    std = normalize_to_standard(simultaneous_diagonalize(fr, om1, om2), om1, om2)
    B = std.full_basis()
    P1 = B @ om1.A @ B.T
    P2 = B @ om2.A @ B.T
    # in the basis e_1, s_1, ..., the forms are block diagonal with blocks [[0, x], [-x, 0]]
    blocks = np.kron(np.eye(3), np.ones((2, 2))).astype(bool)
    scale = om1.norm() + om2.norm()
    assert np.abs(P2[~blocks]).max() <= 1e-10 * scale * np.abs(B).max() ** 2
    np.testing.assert_allclose(np.diag(P1, 1)[::2], 1, atol=1e-10)
    np.testing.assert_allclose(np.diag(P2, 1)[::2], std.phis, atol=1e-10)
    a = coefficients_in_basis(std, _cvec(rng, 6))
    assert a.shape == (6,)


def test_indefinite_counterexample():
    # two indefinite q-real forms: the construction does not produce a basis
    rng = np.random.default_rng(1)
    fr = standard_frame(2)
    om1, om2 = random_q_real(fr, rng), random_q_real(fr, rng)
    assert np.linalg.eigvalsh(pairing_matrix(fr, om1.A)).min() < 0
    with pytest.raises(ValueError):
        simultaneous_diagonalize(fr, om1, om2)
    res = simultaneous_diagonalize(fr, om1, om2, check=False)
    assert not res.ok()
    assert res.min_singular < 1e-8


def test_error_type():
    assert issubclass(DiagonalizationError, RuntimeError)


def test_lemma2_examples():
    zero = PointwiseCoefficients(np.zeros(4), np.ones(4), np.array([1.0, 2.0]))
    lhs, rhs = lemma2_bound(zero, 1, 0.5)
    assert lhs == 0 and rhs >= 0
    c = PointwiseCoefficients(np.array([1, 0, 0, 0]), np.array([1, 0, 0, 0]), np.array([1.0, 1.0]))
    assert lemma2_bound(c, 0, 1.0, B=1.0) == (1.0, 3.0)
    with pytest.raises(ValueError):
        lemma2_bound(c, 2, 1.0)
    with pytest.raises(ValueError):
        lemma2_bound(c, 0, 0.0)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4),
       eps=st.floats(1e-3, 1e3), data=st.data())
def test_lemma2_property(seed, n, eps, data):
    rng = np.random.default_rng(seed)
    coeffs = random_pointwise_coefficients(n, rng)
    k = data.draw(st.integers(0, n - 1))
    lhs, rhs = lemma2_bound(coeffs, k, eps)
    assert lhs <= rhs * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3))
def test_diagonalize_property(seed, n):
    rng = np.random.default_rng(seed)
    fr = standard_frame(n)
    om1, om2 = random_q_positive(fr, rng), random_q_real(fr, rng)
    res = simultaneous_diagonalize(fr, om1, om2)
    assert res.residual <= 1e-10
