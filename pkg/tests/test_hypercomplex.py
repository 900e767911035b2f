import numpy as np
import pytest

from qma.hypercomplex import (
    ONE,
    QI,
    QJ,
    QK,
    ComplexTangentVector,
    Quaternion,
    conj_j,
    i_on_vector,
    j_on_vector,
    quat_mul,
    standard_frame,
)


def _rand_quat(rng):
    return Quaternion.from_array(rng.standard_normal(4))


def _expanded(a, b):
    # independent oracle: 4x4 left-multiplication matrix of a applied to b
    w, x, y, z = a.as_array()
    L = np.array([[w, -x, -y, -z], [x, w, -z, y], [y, z, w, -x], [z, -y, x, w]])
    return L @ b.as_array()


def test_units():
    assert quat_mul(QI, QJ) == QK
    assert quat_mul(QJ, QK) == QI
    assert quat_mul(QK, QI) == QJ
    assert quat_mul(QJ, QI) == -QK
    assert quat_mul(QI, QI) == -ONE


def test_identity(rng):
    a = _rand_quat(rng)
    assert ONE * a == a and a * ONE == a


def test_associative_and_norm_multiplicative(rng):
    worst = 0.0
    for _ in range(100):
        a, b, c = (_rand_quat(rng) for _ in range(3))
        worst = max(worst, np.abs(((a * b) * c).as_array() - (a * (b * c)).as_array()).max())
        assert (a * b).norm() == pytest.approx(a.norm() * b.norm(), rel=1e-13)
        np.testing.assert_allclose((a * b).as_array(), _expanded(a, b), atol=1e-14)
    assert worst < 1e-13


def test_conjugate_reverses_products(rng):
    a, b = _rand_quat(rng), _rand_quat(rng)
    np.testing.assert_allclose((a * b).conj().as_array(), (b.conj() * a.conj()).as_array(),
                               atol=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_frame_relations(n):
    fr = standard_frame(n)
    eye = np.eye(4 * n)
    for L in (fr.I, fr.J, fr.K):
        np.testing.assert_array_equal(L @ L, -eye)
        np.testing.assert_array_equal(L @ L.T, eye)
    # right action: x -> x I -> x I J -> x I J K
    np.testing.assert_array_equal(fr.I @ fr.J @ fr.K, -eye)


def test_frame_matches_right_multiplication(rng):
    fr = standard_frame(1)
    q = _rand_quat(rng)
    for L, u in ((fr.I, QI), (fr.J, QJ), (fr.K, QK)):
        np.testing.assert_allclose(q.as_array() @ L, (q * u).as_array(), atol=1e-14)


def test_frame_rejects_bad_dimension():
    with pytest.raises(ValueError):
        standard_frame(0)


@pytest.mark.parametrize("n", [1, 2])
def test_holomorphic_coordinates(n):
    fr = standard_frame(n)
    W = fr.holo
    # w(x I) = i w(x): the coordinates are I-holomorphic
    np.testing.assert_allclose(fr.I @ W, 1j * W, atol=1e-15)
    np.testing.assert_allclose(fr.dual @ W, np.eye(2 * n), atol=1e-14)
    np.testing.assert_allclose(fr.dual @ W.conj(), 0, atol=1e-14)
    assert set(np.unique(fr.jcov)) <= {-1, 0, 1}


def test_vector_types(rng):
    fr = standard_frame(2)
    v = ComplexTangentVector(rng.standard_normal(4) + 1j * rng.standard_normal(4))
    np.testing.assert_allclose(i_on_vector(fr, v).components, 1j * v.components, atol=1e-14)
    vj = j_on_vector(fr, v)
    assert vj.kind == "01"
    back = j_on_vector(fr, vj)
    np.testing.assert_allclose(back.components, -v.components, atol=1e-14)
    # the real part of v + conj(v) reconstructs consistently
    x = fr.real_from_holo(v.components)
    np.testing.assert_allclose(x @ fr.holo, v.components, atol=1e-14)


def test_conj_j_matches_vector_action(rng):
    fr = standard_frame(2)
    c = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    v = ComplexTangentVector(c)
    via_action = j_on_vector(fr, v.conj()).components
    np.testing.assert_allclose(conj_j(fr, c), via_action, atol=1e-14)
    # sigma is an antilinear map with sigma^2 = -1
    np.testing.assert_allclose(conj_j(fr, conj_j(fr, c)), -c, atol=1e-14)


def test_bad_kind():
    with pytest.raises(ValueError):
        ComplexTangentVector(np.zeros(2), "11")
