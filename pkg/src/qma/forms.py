"""Forms of type (p,q) with respect to I on the flat model H^n.

Generators are the covectors ``dw_0 .. dw_{2n-1}`` (indices ``0..2n-1``) and
``dwbar_0 .. dwbar_{2n-1}`` (indices ``2n..4n-1``).  A :class:`FormPQ` keeps a
sparse map from strictly increasing generator tuples to coefficients.
Coefficients are either Python complex numbers (floating mode) or sympy
expressions (exact mode: Gaussian rationals and indeterminates).

A (2,0)-form is also carried densely as :class:`TwoFormQ`, an antisymmetric
2n x 2n matrix ``A`` with ``alpha = sum_{i<j} A[i, j] dw_i ^ dw_j`` so that
``alpha(U, V) = U^T A V`` on (1,0)-vectors.

The left action of an endomorphism L on forms is ``(L alpha)(X, ...) =
alpha(X L, ...)``.  For J this gives ``J dw = E dwbar`` and ``J dwbar = E dw``
with ``E = frame.jcov``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import sympy

from qma.hypercomplex import HypercomplexFrame, conj_j, standard_frame

Q_POSITIVE_RTOL = 1e-10


def _is_exact(c) -> bool:
    return isinstance(c, sympy.Basic)


def _conj(c):
    if _is_exact(c):
        return sympy.conjugate(c)
    return complex(c).conjugate()


def _is_zero(c) -> bool:
    if _is_exact(c):
        return c == 0
    return c == 0j


def _sort_with_sign(idx):
    """Sort generator indices, returning (sign, sorted tuple) or (0, None) on repeats."""
    idx = list(idx)
    if len(set(idx)) != len(idx):
        return 0, None
    sign = 1
    # insertion sort counting transpositions
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            sign = -sign
            j -= 1
    return sign, tuple(idx)


class FormPQ:
    """A homogeneous form of bidegree (p, q) on H^n."""

    __slots__ = ("n", "p", "q", "_terms")

    def __init__(self, n: int, p: int, q: int, terms=None):
        self.n = n
        self.p = p
        self.q = q
        clean = {}
        m = 2 * n
        for idx, c in (terms or {}).items():
            sign, key = _sort_with_sign(idx)
            if sign == 0:
                continue
            hol = sum(1 for g in key if g < m)
            if hol != p or len(key) - hol != q:
                raise ValueError(f"monomial {idx} is not of type ({p},{q})")
            prev = clean.get(key, 0)
            clean[key] = prev + sign * c
        self._terms = {k: v for k, v in clean.items() if not _is_zero(v)}

    @classmethod
    def generator(cls, n: int, g: int) -> FormPQ:
        m = 2 * n
        if not 0 <= g < 2 * m:
            raise ValueError(f"generator index {g} out of range")
        return cls(n, int(g < m), int(g >= m), {(g,): 1})

    @classmethod
    def scalar(cls, n: int, c) -> FormPQ:
        return cls(n, 0, 0, {(): c})

    @classmethod
    def zero(cls, n: int, p: int, q: int) -> FormPQ:
        return cls(n, p, q)

    @property
    def degree(self) -> int:
        return self.p + self.q

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def coefficient(self, idx) -> object:
        sign, key = _sort_with_sign(idx)
        if sign == 0:
            return 0
        return sign * self._terms.get(key, 0)

    def is_zero(self) -> bool:
        return not self._terms

    def _check_compatible(self, other: FormPQ):
        if self.n != other.n:
            raise ValueError("forms live on different spaces")

    def __add__(self, other: FormPQ) -> FormPQ:
        self._check_compatible(other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        if (self.p, self.q) != (other.p, other.q):
            raise ValueError(f"cannot add ({self.p},{self.q}) and ({other.p},{other.q}) forms")
        terms = dict(self._terms)
        for k, v in other._terms.items():
            terms[k] = terms.get(k, 0) + v
        return FormPQ(self.n, self.p, self.q, terms)

    def __neg__(self) -> FormPQ:
        return FormPQ(self.n, self.p, self.q, {k: -v for k, v in self._terms.items()})

    def __sub__(self, other: FormPQ) -> FormPQ:
        return self + (-other)

    def scale(self, c) -> FormPQ:
        return FormPQ(self.n, self.p, self.q, {k: c * v for k, v in self._terms.items()})

    def __mul__(self, c) -> FormPQ:
        return self.scale(c)

    __rmul__ = __mul__

    def __xor__(self, other: FormPQ) -> FormPQ:
        return wedge(self, other)

    def conj(self) -> FormPQ:
        """Complex conjugate: conjugates coefficients and swaps dw with dwbar."""
        m = 2 * self.n
        terms = {}
        for k, v in self._terms.items():
            terms[tuple((g + m) % (2 * m) for g in k)] = _conj(v)
        return FormPQ(self.n, self.q, self.p, terms)

    def map_coefficients(self, fn) -> FormPQ:
        return FormPQ(self.n, self.p, self.q, {k: fn(v) for k, v in self._terms.items()})

    def equals(self, other: FormPQ, tol: float = 0.0) -> bool:
        diff = self - other
        if tol == 0.0:
            return all(sympy.expand(v) == 0 if _is_exact(v) else v == 0 for v in diff._terms.values())
        return all(abs(complex(v)) <= tol for v in diff._terms.values())

    def __repr__(self) -> str:
        return f"FormPQ(n={self.n}, ({self.p},{self.q}), {len(self._terms)} terms)"


def wedge(alpha: FormPQ, beta: FormPQ) -> FormPQ:
    """Exterior product; exact when the coefficients are sympy numbers."""
    alpha._check_compatible(beta)
    n = alpha.n
    if alpha.degree + beta.degree > 4 * n:
        raise ValueError(
            f"degree overflow: {alpha.degree} + {beta.degree} > {4 * n}"
        )
    terms = {}
    for ka, va in alpha._terms.items():
        sa = set(ka)
        for kb, vb in beta._terms.items():
            if sa.intersection(kb):
                continue
            sign, key = _sort_with_sign(ka + kb)
            terms[key] = terms.get(key, 0) + sign * va * vb
    return FormPQ(n, alpha.p + beta.p, alpha.q + beta.q, terms)


def wedge_power(alpha: FormPQ, k: int) -> FormPQ:
    out = FormPQ.scalar(alpha.n, 1)
    for _ in range(k):
        out = wedge(out, alpha)
    return out


def _generator_images(frame: HypercomplexFrame) -> list[list[tuple[int, int]]]:
    # J dw_a = sum_b E[a,b] dwbar_b and J dwbar_a = sum_b E[a,b] dw_b
    E = frame.jcov
    m = 2 * frame.n
    images = []
    for g in range(2 * m):
        a = g % m
        offset = m if g < m else 0
        images.append([(offset + b, int(E[a, b])) for b in range(m) if E[a, b] != 0])
    return images


def j_on_form(frame: HypercomplexFrame, alpha: FormPQ) -> FormPQ:
    """Left action of J on forms; complex linear, type (p,q) -> (q,p)."""
    images = _generator_images(frame)
    terms = {}
    for key, c in alpha._terms.items():
        for choice in itertools.product(*(images[g] for g in key)):
            gens = tuple(t[0] for t in choice)
            coeff = c
            for t in choice:
                coeff = coeff * t[1]
            sign, skey = _sort_with_sign(gens)
            if sign == 0:
                continue
            terms[skey] = terms.get(skey, 0) + sign * coeff
    return FormPQ(alpha.n, alpha.q, alpha.p, terms)


def j_inv_on_form(frame: HypercomplexFrame, alpha: FormPQ) -> FormPQ:
    """J^{-1}; since J^2 = (-1)^deg on forms, J^{-1} = (-1)^deg J."""
    out = j_on_form(frame, alpha)
    return -out if alpha.degree % 2 else out


# ---------------------------------------------------------------------------
# (2,0)-forms as matrices


@dataclass(frozen=True, eq=False)
class TwoFormQ:
    """(2,0)-form ``sum_{i<j} A[i, j] dw_i ^ dw_j`` with ``A`` antisymmetric."""

    A: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
            raise ValueError(f"expected an even square matrix, got shape {A.shape}")
        if not np.allclose(A, -A.T, rtol=0, atol=1e-14 * (1 + np.abs(A).max())):
            raise ValueError("coefficient matrix is not antisymmetric")
        A = 0.5 * (A - A.T)
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def n(self) -> int:
        return self.A.shape[0] // 2

    def __call__(self, u, v):
        """Evaluate on (1,0)-vectors given by components (vectorised over leading axes)."""
        return np.einsum("...i,ij,...j->...", u, self.A, v)

    def __add__(self, other):
        return TwoFormQ(self.A + other.A)

    def __sub__(self, other):
        return TwoFormQ(self.A - other.A)

    def __neg__(self):
        return TwoFormQ(-self.A)

    def __mul__(self, c):
        return TwoFormQ(c * self.A)

    __rmul__ = __mul__

    def conj_matrix(self) -> np.ndarray:
        return self.A.conj()

    def norm(self) -> float:
        return float(np.linalg.norm(self.A))

    def to_form(self) -> FormPQ:
        m = self.A.shape[0]
        terms = {(i, j): complex(self.A[i, j]) for i in range(m) for j in range(i + 1, m)}
        return FormPQ(self.n, 2, 0, terms)

    @classmethod
    def from_form(cls, alpha: FormPQ) -> TwoFormQ:
        if (alpha.p, alpha.q) != (2, 0):
            raise ValueError("expected a (2,0)-form")
        m = 2 * alpha.n
        A = np.zeros((m, m), dtype=complex)
        for (i, j), c in alpha.terms.items():
            A[i, j] = complex(c)
            A[j, i] = -complex(c)
        return cls(A)


def j_matrix(frame: HypercomplexFrame, alpha: TwoFormQ) -> np.ndarray:
    """Coefficient matrix of J(alpha) in the dwbar basis: ``E^T A E``."""
    E = frame.jcov
    return E.T @ alpha.A @ E


def q_real_defect(frame: HypercomplexFrame, alpha: TwoFormQ) -> float:
    return float(np.linalg.norm(j_matrix(frame, alpha) - alpha.A.conj()))


def is_q_real(frame: HypercomplexFrame, alpha: TwoFormQ, tol: float = 1e-12) -> bool:
    """True iff ``J alpha = conj(alpha)`` up to ``tol`` (Frobenius, scaled by 1 + |A|)."""
    return q_real_defect(frame, alpha) <= tol * (1.0 + alpha.norm())


def q_real_part(frame: HypercomplexFrame, alpha: TwoFormQ) -> TwoFormQ:
    """Projection ``(alpha + J conj(alpha)) / 2`` onto the q-real forms."""
    E = frame.jcov
    return TwoFormQ(0.5 * (alpha.A + E.T @ alpha.A.conj() @ E))


def pairing_matrix(frame: HypercomplexFrame, A: np.ndarray) -> np.ndarray:
    """Matrix ``H`` with ``alpha(Z, conj(Z) J) = Z^H H Z``; vectorised over leading axes.

    ``alpha(Z, conj(Z)J) = Z^T A E conj(Z)``, hence ``H = (A E)^T = -E^T A``.
    """
    E = frame.jcov
    return -np.einsum("ba,...bc->...ac", E, A)


def pairing_eigenvalues(frame: HypercomplexFrame, alpha: TwoFormQ) -> np.ndarray:
    H = pairing_matrix(frame, alpha.A)
    return np.linalg.eigvalsh(0.5 * (H + H.conj().T))


def is_q_positive(frame: HypercomplexFrame, alpha: TwoFormQ, tol: float = Q_POSITIVE_RTOL,
                  strict: bool = False) -> bool:
    """q-positivity of a q-real (2,0)-form.

    Eigenvalues of the pairing matrix must be ``>= -tol * (1 + max eigenvalue)``
    (``> +tol * (...)`` when ``strict``).

    Raises:
        ValueError: if ``alpha`` is not q-real.
    """
    if not is_q_real(frame, alpha, tol=max(tol, 1e-12)):
        raise ValueError("q-positivity is only defined for q-real forms")
    ev = pairing_eigenvalues(frame, alpha)
    scale = tol * (1.0 + max(ev.max(), 0.0))
    if strict:
        return bool(ev.min() > scale)
    return bool(ev.min() >= -scale)


def standard_omega(frame: HypercomplexFrame) -> TwoFormQ:
    """The flat HKT form ``sum_i e_i^* ^ J^{-1}(conj(e_i^*))`` with ``e_i^* = dw_{2i-1}``."""
    return TwoFormQ.from_form(standard_omega_form(frame))


def standard_omega_form(frame: HypercomplexFrame, exact: bool = False) -> FormPQ:
    n = frame.n
    one = sympy.Integer(1) if exact else 1
    out = FormPQ.zero(n, 2, 0)
    for i in range(n):
        e = FormPQ.generator(n, 2 * i).scale(one)
        out = out + wedge(e, j_inv_on_form(frame, e.conj()))
    return out


# ---------------------------------------------------------------------------
# Top-degree (2n,0) computations, vectorised over grid points


def pfaffian(A: np.ndarray) -> np.ndarray:
    """Pfaffian of antisymmetric matrices, vectorised over leading axes.

    Expansion along the first row; cost (2m-1)!! which is fine for 2m <= 8.
    """
    A = np.asarray(A)
    m = A.shape[-1]
    if m % 2:
        raise ValueError("Pfaffian needs an even dimension")
    if m == 0:
        return np.ones(A.shape[:-2], dtype=A.dtype)
    if m == 2:
        return A[..., 0, 1]
    out = 0
    rest = list(range(1, m))
    for pos, j in enumerate(rest):
        keep = [k for k in rest if k != j]
        sub = A[..., keep, :][..., :, keep]
        out = out + (-1) ** pos * A[..., 0, j] * pfaffian(sub)
    return out


def top_wedge(*two_forms: np.ndarray) -> np.ndarray:
    """Coefficient of ``X_1 ^ ... ^ X_n`` on ``dw_0 ^ ... ^ dw_{2n-1}``.

    Each argument is an array of antisymmetric coefficient matrices with shape
    ``(..., 2n, 2n)``; exactly ``n`` factors are required.  Uses polarisation
    ``X_1 ^ ... ^ X_n = (1/n!) sum_S (-1)^{n-|S|} (sum_{j in S} X_j)^n`` and
    ``Y^n = n! Pf(Y) dw_0 ^ ... ^ dw_{2n-1}``.
    """
    n = len(two_forms)
    if n == 0:
        raise ValueError("need at least one factor")
    m = two_forms[0].shape[-1]
    if m != 2 * n:
        raise ValueError(f"{n} two-forms do not make a top form in dimension {m}")
    out = 0
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            Y = sum(two_forms[j] for j in subset)
            out = out + (-1) ** (n - size) * pfaffian(Y)
    return out


def one_form_wedge(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficient matrix of ``a ^ b`` for (1,0)-forms with coefficient vectors ``a, b``."""
    return np.einsum("...i,...j->...ij", a, b) - np.einsum("...i,...j->...ij", b, a)


def top_ratio(frame: HypercomplexFrame, *two_forms: np.ndarray) -> np.ndarray:
    """``(X_1 ^ ... ^ X_n) / Omega^n`` pointwise."""
    omega = standard_omega(frame).A
    base = math.factorial(frame.n) * pfaffian(omega)
    return top_wedge(*two_forms) / base


# ---------------------------------------------------------------------------
# Volume element


@dataclass(frozen=True)
class VolumeConvention:
    """Relation between ``Omega^n ^ conj(Omega)^n`` and the Riemannian volume ``dx``.

    ``Omega^n ^ conj(Omega)^n = sign * constant * dx``; the volume element used
    for every integral and L^p norm is ``constant * dx``.
    """

    n: int
    constant: float
    sign: int


def volume_convention(frame: HypercomplexFrame) -> VolumeConvention:
    """Compute the constant by exact wedge expansion and the coordinate Jacobian."""
    n = frame.n
    om = standard_omega_form(frame, exact=True)
    top = wedge(wedge_power(om, n), wedge_power(om.conj(), n))
    (key, coeff), = top.terms.items()
    # dw_a = sum_r W[r, a] dx_r, so the wedge of all generators is det(M) dx
    M = np.hstack([frame.holo, frame.holo.conj()])
    det = complex(np.linalg.det(M))
    sign, _ = _sort_with_sign(key)
    value = complex(sympy.N(coeff)) * sign * det
    if abs(value.imag) > 1e-9 * abs(value):
        raise RuntimeError("Omega^n ^ conj(Omega)^n is not a real multiple of dx")
    real = value.real
    constant = float(round(abs(real)))
    return VolumeConvention(n, constant, 1 if real > 0 else -1)


# ---------------------------------------------------------------------------
# Symbolic identities for (2n,0)-forms in a diagonalising basis


def elementary_symmetric(values, k: int):
    total = 0
    for combo in itertools.combinations(values, k):
        term = 1
        for v in combo:
            term = term * v
        total = total + term
    return total


def relative_eigen_density(phis) -> float:
    """``Omega_phi^n / Omega^n`` for relative eigenvalues ``phis``: their product."""
    return float(np.prod(np.asarray(phis, dtype=float)))


class IdentityFailure(AssertionError):
    pass


def _diagonal_frame_forms(frame: HypercomplexFrame, phis, a, b):
    n = frame.n
    one = sympy.Integer(1)
    estar = [FormPQ.generator(n, 2 * i).scale(one) for i in range(n)]
    fstar = [j_inv_on_form(frame, e.conj()) for e in estar]
    omega = FormPQ.zero(n, 2, 0)
    omega_phi = FormPQ.zero(n, 2, 0)
    dphi = FormPQ.zero(n, 1, 0)
    beta = FormPQ.zero(n, 1, 0)
    for i in range(n):
        pair = wedge(estar[i], fstar[i])
        omega = omega + pair
        omega_phi = omega_phi + pair.scale(phis[i])
        dphi = dphi + estar[i].scale(a[2 * i]) + fstar[i].scale(a[2 * i + 1])
        beta = beta + estar[i].scale(b[2 * i]) + fstar[i].scale(b[2 * i + 1])
    dJphi = j_inv_on_form(frame, dphi.conj())
    return omega, omega_phi, dphi, dJphi, beta


def _residual(lhs: FormPQ, rhs_scalar, top: FormPQ):
    diff = lhs - top.scale(rhs_scalar)
    return sympy.expand(sum(diff.terms.values(), sympy.Integer(0)))


def verify_wedge_identities(n: int, values: dict | None = None) -> dict:
    """Check the three elementary-symmetric wedge identities for all admissible k.

    With ``values=None`` the coefficients are indeterminates and each residual
    is a polynomial that must expand to zero.  ``values`` may map symbol names
    (``phi1``, ``a1``, ``b1``, ...) to exact numbers for a specialised check.

    Returns a mapping ``(identity, k) -> residual`` (all zero).

    Raises:
        IdentityFailure: if any residual is nonzero.
    """
    if not 1 <= n <= 3:
        raise ValueError("identities are verified for n in 1..3")
    frame = standard_frame(n)
    phis = sympy.symbols(f"phi1:{n + 1}", real=True)
    a = sympy.symbols(f"a1:{2 * n + 1}")
    b = sympy.symbols(f"b1:{2 * n + 1}")
    if values:
        subs = {s: sympy.nsimplify(values[s.name]) for s in (*phis, *a, *b) if s.name in values}
        phis = [sympy.sympify(p).subs(subs) for p in phis]
        a = [sympy.sympify(x).subs(subs) for x in a]
        b = [sympy.sympify(x).subs(subs) for x in b]
    omega, omega_phi, dphi, dJphi, beta = _diagonal_frame_forms(frame, phis, a, b)
    top = wedge_power(omega, n)
    fact = sympy.factorial
    report = {}
    for k in range(n + 1):
        lhs = wedge(wedge_power(omega_phi, k), wedge_power(omega, n - k))
        rhs = fact(k) * fact(n - k) / fact(n) * elementary_symmetric(phis, k)
        report[("power", k)] = _residual(lhs, rhs, top)
    for k in range(n):
        base = wedge(wedge_power(omega_phi, k), wedge_power(omega, n - k - 1))
        coeff = fact(k) * fact(n - k - 1) / fact(n)
        grad_sum = 0
        mixed_sum = 0
        for subset in itertools.combinations(range(n), k):
            prod = sympy.Integer(1)
            for i in subset:
                prod *= phis[i]
            outside = [j for j in range(n) if j not in subset]
            grad_sum += prod * sum(a[2 * j] * _conj(a[2 * j]) + a[2 * j + 1] * _conj(a[2 * j + 1])
                                   for j in outside)
            mixed_sum += prod * sum(-_conj(a[2 * j + 1]) * b[2 * j + 1] - _conj(a[2 * j]) * b[2 * j]
                                    for j in outside)
        lhs = wedge(wedge(dphi, dJphi), base)
        report[("gradient", k)] = _residual(lhs, coeff * grad_sum, top)
        lhs = wedge(wedge(dJphi, beta), base)
        report[("mixed", k)] = _residual(lhs, coeff * mixed_sum, top)
    bad = {key: r for key, r in report.items() if r != 0}
    if bad:
        raise IdentityFailure(f"nonzero residuals for n={n}: {bad}")
    return report


def power_identity_coefficient(phis, k: int):
    """Exact coefficient ``c`` with ``Omega_phi^k ^ Omega^{n-k} = c Omega^n``, by wedge expansion."""
    n = len(phis)
    frame = standard_frame(n)
    phis = [sympy.nsimplify(p) for p in phis]
    zeros = [sympy.Integer(0)] * (2 * n)
    omega, omega_phi, *_ = _diagonal_frame_forms(frame, phis, zeros, zeros)
    lhs = wedge(wedge_power(omega_phi, k), wedge_power(omega, n - k))
    top = wedge_power(omega, n)
    (key, t), = top.terms.items()
    return sympy.nsimplify(lhs.coefficient(key) / t)
