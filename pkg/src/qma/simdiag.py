"""Simultaneous diagonalisation of a strictly q-positive and a q-real (2,0)-form.

Vectors of the (1,0)-space are component arrays ``c`` of length 2n; the
antilinear companion map is ``sigma(c) = conj(c) J`` (:func:`conj_j`).  For a
strictly q-positive ``Omega_1`` the sesquilinear form
``h(u, v) = Omega_1(u, sigma(v))`` is a Hermitian inner product.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from qma.forms import (
    TwoFormQ,
    elementary_symmetric,
    is_q_positive,
    is_q_real,
    pairing_matrix,
    q_real_part,
    standard_omega,
)
from qma.hypercomplex import HypercomplexFrame, conj_j

ORTHO_RTOL = 1e-10


class DiagonalizationError(RuntimeError):
    """Raised when the inductive construction breaks down."""


def _hinner(frame, A1, u, v):
    # h(u, v) = Omega_1(u, sigma(v)); linear in u, antilinear in v
    return u @ A1 @ conj_j(frame, v)


def _check_positive(frame: HypercomplexFrame, om1: TwoFormQ):
    if not is_q_real(frame, om1, tol=1e-10):
        raise ValueError("Omega_1 must be q-real")
    if not is_q_positive(frame, om1, strict=True):
        raise ValueError("Omega_1 must be strictly q-positive")


def orthonormal_basis(frame: HypercomplexFrame, om1: TwoFormQ) -> np.ndarray:
    """Vectors ``v_1..v_n`` (rows) with ``v_i, sigma(v_i)`` an Omega_1-orthonormal basis.

    ``Omega_1(v_i, v_j) = 0``, ``Omega_1(v_i, sigma(v_j)) = delta_ij``.
    """
    _check_positive(frame, om1)
    m = 2 * frame.n
    A1 = om1.A
    chosen = []
    for k in range(frame.n):
        N = _complement(frame, A1, chosen, m)
        v = N[:, 0]
        v = v / np.sqrt(_hinner(frame, A1, v, v).real)
        chosen.append(v)
    return np.array(chosen)


def _complement(frame, A1, chosen, m):
    """Orthonormal (Euclidean) basis of V' = common kernel of Omega_1(e, .), Omega_1(sigma e, .)."""
    if not chosen:
        return np.eye(m, dtype=complex)
    rows = []
    for e in chosen:
        rows.append(e @ A1)
        rows.append(conj_j(frame, e) @ A1)
    return scipy.linalg.null_space(np.array(rows))


def build_omega_tilde(frame: HypercomplexFrame, om1: TwoFormQ, om2: TwoFormQ) -> np.ndarray:
    """Endomorphism T of the (1,0)-space with ``Omega_2(v, .) = Omega_1(T v, .)``.

    Built from an Omega_1-orthonormal basis ``v_i`` as
    ``T v = sum_i Omega_2(v, sigma v_i) v_i - Omega_2(v, v_i) sigma(v_i)``;
    column ``j`` of the result is ``T`` applied to the j-th coordinate vector.
    """
    V = orthonormal_basis(frame, om1)
    S = conj_j(frame, V)
    m = 2 * frame.n
    T = np.zeros((m, m), dtype=complex)
    for j in range(m):
        v = np.zeros(m, dtype=complex)
        v[j] = 1
        col = np.zeros(m, dtype=complex)
        for vi, si in zip(V, S):
            col += om2(v, si) * vi - om2(v, vi) * si
        T[:, j] = col
    return T


def defining_relation_residual(om1: TwoFormQ, om2: TwoFormQ, T: np.ndarray, u, w) -> float:
    """``|Omega_2(u, w) - Omega_1(T u, w)|`` maximised over paired rows of ``u, w``."""
    u = np.atleast_2d(u)
    w = np.atleast_2d(w)
    return float(np.max(np.abs(om2(u, w) - om1(u @ T.T, w))))


def conj_equivariance_residual(frame: HypercomplexFrame, om1: TwoFormQ, om2: TwoFormQ,
                               v: np.ndarray) -> float:
    """``|T(sigma v) - sigma(T v)|`` for the endomorphism T of :func:`build_omega_tilde`."""
    T = build_omega_tilde(frame, om1, om2)
    lhs = T @ conj_j(frame, v)
    rhs = conj_j(frame, T @ v)
    return float(np.linalg.norm(lhs - rhs))


@dataclass
class DiagonalizationResult:
    """Basis vectors ``e_i`` (rows of ``basis``) and eigenvalues of T on them."""

    frame: HypercomplexFrame = field(repr=False)
    basis: np.ndarray
    eigenvalues: np.ndarray
    residual: float
    eigen_residual: float
    min_singular: float

    @property
    def companions(self) -> np.ndarray:
        return conj_j(self.frame, self.basis)

    def full_basis(self) -> np.ndarray:
        """2n x 2n matrix with rows e_1, sigma(e_1), ..., e_n, sigma(e_n)."""
        rows = []
        for e, s in zip(self.basis, self.companions):
            rows.extend([e, s])
        return np.array(rows)

    def ok(self, rtol: float = ORTHO_RTOL) -> bool:
        return self.residual <= rtol and self.min_singular > 1e-8


def orthogonality_residuals(frame: HypercomplexFrame, om1: TwoFormQ, om2: TwoFormQ,
                            basis: np.ndarray) -> dict:
    """Maximum of the four off-diagonal pairings, relative to ``|A1| + |A2|``.

    The basis vectors are scaled to unit Euclidean length first.
    """
    E = basis / np.linalg.norm(basis, axis=1, keepdims=True)
    S = conj_j(frame, E)
    scale = om1.norm() + om2.norm()
    off = ~np.eye(len(E), dtype=bool)
    out = {}
    for name, om in (("omega1", om1), ("omega2", om2)):
        plain = E @ om.A @ E.T
        mixed = E @ om.A @ S.T
        out[f"{name}(e_i,e_j)"] = float(np.abs(plain[off]).max(initial=0.0) / scale)
        out[f"{name}(e_i,sigma e_j)"] = float(np.abs(mixed[off]).max(initial=0.0) / scale)
    return out


def _pick(evals, Y, R):
    # residual of each eigenpair, then ties by |lambda| and index
    res = np.linalg.norm(R @ Y - Y * evals, axis=0) / np.maximum(np.linalg.norm(Y, axis=0), 1e-300)
    floor = res.min()
    order = sorted(range(len(evals)),
                   key=lambda i: (res[i] > 2 * floor + 1e-14, abs(evals[i]), i))
    return order[0], res[order[0]]


def simultaneous_diagonalize(frame: HypercomplexFrame, om1: TwoFormQ, om2: TwoFormQ,
                             check: bool = True) -> DiagonalizationResult:
    """Inductive construction of ``e_1, sigma(e_1), ..., e_n, sigma(e_n)``.

    At step k an eigenvector of T restricted to V' (the common kernel of
    ``Omega_1(e_i, .)`` and ``Omega_1(sigma e_i, .)`` for the vectors chosen so
    far) is appended.  V' is represented in an Omega_1-orthonormal basis so the
    restricted operator is Hermitian up to rounding.

    With ``check=False`` the positivity preconditions are skipped and failures
    are reported through the residual fields instead of raised.

    Raises:
        ValueError: preconditions fail (only with ``check``).
        DiagonalizationError: no admissible eigenvector or dependent basis.
    """
    if check:
        _check_positive(frame, om1)
        if not is_q_real(frame, om2, tol=1e-10):
            raise ValueError("Omega_2 must be q-real")
        T = build_omega_tilde(frame, om1, om2)
    else:
        T = np.linalg.solve(om1.A, om2.A)
    m = 2 * frame.n
    H1 = pairing_matrix(frame, om1.A)
    scale = om1.norm() + om2.norm()
    chosen, lams = [], []
    worst_eig = 0.0
    for _ in range(frame.n):
        N = _complement(frame, om1.A, chosen, m)
        if N.shape[1] == 0:
            break
        G = N.conj().T @ H1 @ N
        G = 0.5 * (G + G.conj().T)
        try:
            L = np.linalg.cholesky(G)
            B = N @ np.linalg.inv(L.conj().T)
        except np.linalg.LinAlgError:
            if check:
                raise DiagonalizationError("Omega_1 is not positive on V'")
            B = N
        R, *_ = np.linalg.lstsq(B, T @ B, rcond=None)
        evals, Y = np.linalg.eig(R)
        idx, res = _pick(evals, Y, R)
        e = B @ Y[:, idx]
        e = e / np.linalg.norm(e)
        eig_res = float(np.linalg.norm(T @ e - evals[idx] * e)) / max(scale, 1e-300)
        worst_eig = max(worst_eig, eig_res)
        chosen.append(e)
        lams.append(evals[idx])
    basis = np.array(chosen) if chosen else np.zeros((0, m), dtype=complex)
    full = []
    for e in basis:
        full.extend([e, conj_j(frame, e)])
    full = np.array(full)
    if len(full) == m:
        min_sv = float(np.linalg.svd(full, compute_uv=False).min())
    else:
        min_sv = 0.0
    res = orthogonality_residuals(frame, om1, om2, basis) if len(basis) else {"empty": np.inf}
    result = DiagonalizationResult(
        frame=frame,
        basis=basis,
        eigenvalues=np.array(lams, dtype=complex),
        residual=max(res.values()),
        eigen_residual=worst_eig,
        min_singular=min_sv,
    )
    if check and (worst_eig > 1e-8 or min_sv <= 1e-8):
        raise DiagonalizationError(
            f"breakdown: eigen residual {worst_eig:.3e}, smallest singular value {min_sv:.3e}"
        )
    return result


@dataclass
class StandardBasis:
    """Basis with ``Omega_1(e_i, sigma e_i) = 1``; ``phis[i] = Omega_2(e_i, sigma e_i)``."""

    basis: np.ndarray
    companions: np.ndarray
    phis: np.ndarray

    def full_basis(self) -> np.ndarray:
        rows = []
        for e, s in zip(self.basis, self.companions):
            rows.extend([e, s])
        return np.array(rows)


def normalize_to_standard(result: DiagonalizationResult, om1: TwoFormQ,
                          om2: TwoFormQ | None = None) -> StandardBasis:
    """Rescale each ``e_i`` so ``Omega_1(e_i, sigma(e_i)) = 1``.

    The relative eigenvalues are read off as ``Omega_2(e_i, sigma e_i)`` when
    ``om2`` is given, otherwise as the real parts of the eigenvalues of T.
    """
    frame = result.frame
    E = result.basis
    norms = np.einsum("ij,jk,ik->i", E, om1.A, conj_j(frame, E))
    if np.any(norms.real <= 0) or np.any(np.abs(norms.imag) > 1e-8 * np.abs(norms)):
        raise AssertionError(f"Omega_1 pairing is not positive on the basis: {norms}")
    E = E / np.sqrt(norms.real)[:, None]
    S = conj_j(frame, E)
    if om2 is not None:
        phis = np.einsum("ij,jk,ik->i", E, om2.A, S).real
    else:
        phis = result.eigenvalues.real.copy()
    return StandardBasis(E, S, phis)


def coefficients_in_basis(std: StandardBasis, one_form: np.ndarray) -> np.ndarray:
    """Coefficients of a (1,0)-form in the dual basis of ``e_1, sigma e_1, ...``.

    ``gamma = sum_i a_{2i-1} e_i^* + a_{2i} (e_i^*)'`` where the starred forms are
    dual to the basis, so ``a`` is ``gamma`` evaluated on the basis vectors.
    """
    return std.full_basis() @ one_form


# ---------------------------------------------------------------------------
# The pointwise inequality behind the mixed-term bound


@dataclass
class PointwiseCoefficients:
    """``a``: coefficients of d phi, ``b``: of beta (length 2n); ``phis``: relative eigenvalues."""

    a: np.ndarray
    b: np.ndarray
    phis: np.ndarray

    @property
    def n(self) -> int:
        return len(self.phis)


def lemma2_bound(coeffs: PointwiseCoefficients, k: int, eps: float,
                 B: float | None = None) -> tuple[float, float]:
    """Both sides of the coefficient inequality for a given ``k`` and ``eps``.

    lhs = sum_{|I|=k} (sum_{j not in I} |a_2j||b_2j| + |a_2j-1||b_2j-1|) phi_I
    rhs = B eps (n-k) e_k(phi) + (B/eps) sum_{|I|=k} (sum_{j not in I} |a_2j-1|^2 + |a_2j|^2) phi_I

    ``B`` defaults to ``max |b_i|``.
    """
    n = coeffs.n
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 0 <= k <= n - 1:
        raise ValueError(f"k must lie in 0..{n - 1}")
    a = np.abs(np.asarray(coeffs.a)).reshape(n, 2)
    b = np.abs(np.asarray(coeffs.b)).reshape(n, 2)
    phis = np.asarray(coeffs.phis, dtype=float)
    if B is None:
        B = float(b.max(initial=0.0))
    lhs = 0.0
    grad = 0.0
    for subset in itertools.combinations(range(n), k):
        prod = float(np.prod(phis[list(subset)])) if subset else 1.0
        outside = [j for j in range(n) if j not in subset]
        lhs += prod * float(np.sum(a[outside] * b[outside]))
        grad += prod * float(np.sum(a[outside] ** 2))
    rhs = B * eps * (n - k) * float(elementary_symmetric(phis, k)) + B / eps * grad
    return lhs, rhs


# ---------------------------------------------------------------------------
# Random instances


def random_quaternionic_matrix(frame: HypercomplexFrame, rng: np.random.Generator) -> np.ndarray:
    """Random P commuting with sigma, i.e. ``P E = E conj(P)``."""
    m = 2 * frame.n
    E = frame.jcov
    M = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    return 0.5 * (M + E @ M.conj() @ np.linalg.inv(E))


def random_q_real(frame: HypercomplexFrame, rng: np.random.Generator) -> TwoFormQ:
    m = 2 * frame.n
    M = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    return q_real_part(frame, TwoFormQ(M - M.T))


def random_q_positive(frame: HypercomplexFrame, rng: np.random.Generator) -> TwoFormQ:
    """Pull back the standard form by a random invertible quaternionic-linear map."""
    m = 2 * frame.n
    P = random_quaternionic_matrix(frame, rng) + 0.5 * np.eye(m)
    A = P.T @ standard_omega(frame).A @ P
    return TwoFormQ(0.5 * (A - A.T))


def random_pointwise_coefficients(n: int, rng: np.random.Generator) -> PointwiseCoefficients:
    scale = 10.0 ** rng.uniform(-2, 2)
    a = scale * (rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n))
    b = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
    phis = 10.0 ** rng.uniform(-3, 2, size=n)
    phis[rng.random(n) < 0.1] = 0.0
    return PointwiseCoefficients(a, b, phis)
