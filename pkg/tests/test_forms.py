import itertools

import numpy as np
import pytest
import sympy

from qma.forms import (
    FormPQ,
    IdentityFailure,
    TwoFormQ,
    elementary_symmetric,
    is_q_positive,
    is_q_real,
    j_on_form,
    pairing_matrix,
    pfaffian,
    power_identity_coefficient,
    q_real_part,
    relative_eigen_density,
    standard_omega,
    standard_omega_form,
    top_ratio,
    verify_wedge_identities,
    volume_convention,
    wedge,
    wedge_power,
)
from qma.hypercomplex import standard_frame
from qma.simdiag import random_q_positive, random_q_real


def _perm_sign(seq):
    # parity by counting inversions, independent of the library's sorter
    inv = sum(1 for i, j in itertools.combinations(range(len(seq)), 2) if seq[i] > seq[j])
    return -1 if inv % 2 else 1


def _brute_wedge(a: FormPQ, b: FormPQ) -> dict:
    out = {}
    for ka, va in a.terms.items():
        for kb, vb in b.terms.items():
            idx = ka + kb
            if len(set(idx)) < len(idx):
                continue
            key = tuple(sorted(idx))
            out[key] = out.get(key, 0) + _perm_sign(idx) * va * vb
    return {k: v for k, v in out.items() if v != 0}


def _random_form(n, p, q, rng, terms=4):
    m = 2 * n
    hol = list(itertools.combinations(range(m), p))
    anti = list(itertools.combinations(range(m, 2 * m), q))
    out = {}
    for _ in range(terms):
        key = hol[rng.integers(len(hol))] + anti[rng.integers(len(anti))]
        out[key] = complex(rng.standard_normal(), rng.standard_normal())
    return FormPQ(n, p, q, out)


def _close(a: FormPQ, b: FormPQ, tol=1e-12):
    return a.equals(b, tol)


def test_antisymmetry():
    n = 2
    d1, d2 = FormPQ.generator(n, 0), FormPQ.generator(n, 1)
    assert wedge(d1, d2).equals(-wedge(d2, d1))
    assert wedge(d1, d1).is_zero()
    assert FormPQ(n, 2, 0, {(1, 0): 1}).coefficient((0, 1)) == -1


def test_omega_square_n2():
    fr = standard_frame(2)
    om = standard_omega_form(fr)
    sq = wedge(om, om)
    assert sq.terms == {(0, 1, 2, 3): 2}
    assert _brute_wedge(om, om) == {(0, 1, 2, 3): 2}


def test_wedge_zero_and_overflow():
    n = 1
    a = FormPQ.generator(n, 0)
    assert wedge(a, FormPQ.zero(n, 1, 0)).is_zero()
    top = FormPQ(n, 2, 2, {(0, 1, 2, 3): 1})
    with pytest.raises(ValueError):
        wedge(top, a)


def test_bad_monomial_type():
    with pytest.raises(ValueError):
        FormPQ(1, 2, 0, {(0, 2): 1})


def test_wedge_matches_brute_force(rng):
    for _ in range(20):
        a = _random_form(2, 1, 1, rng)
        b = _random_form(2, 1, 0, rng)
        got = wedge(a, b).terms
        want = _brute_wedge(a, b)
        assert set(got) == set(want)
        for k in got:
            assert abs(got[k] - want[k]) < 1e-12


def test_graded_commutativity(rng):
    for (p1, q1), (p2, q2) in [((1, 0), (1, 0)), ((1, 1), (1, 0)), ((2, 0), (0, 1))]:
        a = _random_form(2, p1, q1, rng)
        b = _random_form(2, p2, q2, rng)
        sign = (-1) ** (a.degree * b.degree)
        assert _close(wedge(a, b), wedge(b, a) * sign)


def test_exact_mode_stays_exact():
    n = 1
    half = sympy.Rational(1, 2) + sympy.I / 3
    a = FormPQ.generator(n, 0).scale(half)
    b = FormPQ.generator(n, 1).scale(sympy.Integer(3))
    (c,) = wedge(a, b).terms.values()
    assert c == sympy.Rational(3, 2) + sympy.I


@pytest.mark.parametrize("n", [1, 2])
def test_j_on_omega_is_conjugate(n):
    fr = standard_frame(n)
    om = standard_omega_form(fr)
    assert _close(j_on_form(fr, om), om.conj())


def test_j_squared(rng):
    fr = standard_frame(2)
    for p, q in [(1, 1), (2, 0), (1, 0), (2, 1)]:
        a = _random_form(2, p, q, rng)
        jj = j_on_form(fr, j_on_form(fr, a))
        assert (jj.p, jj.q) == (p, q)
        assert _close(jj, a * (-1) ** (p + q))


def test_j_linear_and_multiplicative(rng):
    fr = standard_frame(2)
    a = _random_form(2, 1, 0, rng)
    b = _random_form(2, 1, 1, rng)
    c = 0.3 - 1.7j
    assert _close(j_on_form(fr, a * c), j_on_form(fr, a) * c)
    lhs = j_on_form(fr, wedge(a, b))
    rhs = wedge(j_on_form(fr, a), j_on_form(fr, b))
    assert _close(lhs, rhs)
    jb = j_on_form(fr, b)
    assert (jb.p, jb.q) == (1, 1)
    assert (j_on_form(fr, a).p, j_on_form(fr, a).q) == (0, 1)


def test_standard_omega_n1():
    om = standard_omega(standard_frame(1))
    np.testing.assert_array_equal(om.A, np.array([[0, 1], [-1, 0]]))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_standard_omega_q_real_positive(n):
    fr = standard_frame(n)
    om = standard_omega(fr)
    assert is_q_real(fr, om)
    assert is_q_positive(fr, om, strict=True)
    H = pairing_matrix(fr, om.A)
    np.testing.assert_allclose(H, np.eye(2 * n), atol=1e-15)
    assert not is_q_positive(fr, -om)
    assert not is_q_real(fr, om * 1j)


def test_q_positive_rejects_non_q_real():
    fr = standard_frame(1)
    with pytest.raises(ValueError):
        is_q_positive(fr, standard_omega(fr) * 1j)


def test_q_real_projection(rng):
    fr = standard_frame(2)
    for _ in range(10):
        X = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        beta = TwoFormQ(X - X.T)
        assert is_q_real(fr, q_real_part(fr, beta))


def test_q_real_is_real_subspace(rng):
    fr = standard_frame(2)
    a, b = random_q_real(fr, rng), random_q_real(fr, rng)
    assert is_q_real(fr, a * 0.7 + b * (-2.3))
    for _ in range(20):
        H = pairing_matrix(fr, random_q_real(fr, rng).A)
        np.testing.assert_allclose(H, H.conj().T, atol=1e-12)


def test_two_form_round_trip(rng):
    X = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    al = TwoFormQ(X - X.T)
    back = TwoFormQ.from_form(al.to_form())
    np.testing.assert_allclose(back.A, al.A, atol=1e-15)
    with pytest.raises(ValueError):
        TwoFormQ(X)


def test_pfaffian_squares_to_determinant(rng):
    for m in (2, 4, 6, 8):
        X = rng.standard_normal((m, m))
        A = X - X.T
        assert pfaffian(A) ** 2 == pytest.approx(np.linalg.det(A), rel=1e-10)


def test_top_ratio_matches_wedge_expansion(rng):
    fr = standard_frame(2)
    om = standard_omega_form(fr)
    for _ in range(5):
        a = random_q_positive(fr, rng)
        b = random_q_real(fr, rng)
        form = wedge(a.to_form(), b.to_form())
        (key, c), = form.terms.items()
        (_, base), = wedge_power(om, 2).terms.items()
        assert complex(top_ratio(fr, a.A, b.A)) == pytest.approx(c / base, abs=1e-12)


def test_volume_constants():
    assert [volume_convention(standard_frame(n)).constant for n in (1, 2, 3)] == [4, 64, 2304]


def test_power_identity_example():
    assert power_identity_coefficient([2, 3], 1) == sympy.Rational(5, 2)
    assert power_identity_coefficient([5], 0) == 1


def test_relative_eigen_density(rng):
    assert relative_eigen_density([1, 1, 1]) == 1
    assert relative_eigen_density([2, 3]) == 6
    phis = rng.uniform(0.1, 3, 3)
    assert float(power_identity_coefficient(list(phis), 3)) == pytest.approx(
        relative_eigen_density(phis), rel=1e-12)


def test_elementary_symmetric():
    assert elementary_symmetric([1, 2, 3], 2) == 11
    assert elementary_symmetric([1, 2, 3], 0) == 1


@pytest.mark.parametrize("n", [1, 2])
def test_identities_symbolic(n):
    res = verify_wedge_identities(n)
    assert all(r == 0 for r in res.values())
    assert ("power", n) in res and ("gradient", n - 1) in res and ("mixed", n - 1) in res


def test_identities_specialised_n3():
    vals = {"phi1": "1/3", "phi2": "-2", "phi3": "5/7", "a1": "1", "a2": "2/3", "a3": "-1",
            "a4": "4", "a5": "1/2", "a6": "3", "b1": "2", "b2": "-1/5", "b3": "7", "b4": "1",
            "b5": "0", "b6": "-3"}
    res = verify_wedge_identities(3, vals)
    assert all(r == 0 for r in res.values())


def test_identity_range():
    with pytest.raises(ValueError):
        verify_wedge_identities(4)
    assert issubclass(IdentityFailure, AssertionError)
