"""Quaternions and the flat hypercomplex structure on H^n.

Endomorphisms act from the right.  A real tangent vector is a row vector
``x`` in R^{4n} and the action of ``L`` is ``x @ L``, so applying I, then J,
then K is the matrix product ``I @ J @ K``.  With ``L`` the right
multiplication by i, j, k this product is ``-Id``.

Coordinates: the a-th quaternionic coordinate is
``q_a = x_{4a-3} + i x_{4a-2} + j x_{4a-1} + k x_{4a}`` (1-based).  The
I-holomorphic coordinates are

    w_{2a-1} = x_{4a-3} + i x_{4a-2}
    w_{2a}   = x_{4a-1} - i x_{4a}

(the minus sign in ``w_{2a}`` is forced by right multiplication by i, which
sends ``x_{4a-1} + i x_{4a}`` to ``-i`` times itself).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Quaternion:
    w: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __mul__(self, other):
        if not isinstance(other, Quaternion):
            return Quaternion(self.w * other, self.x * other, self.y * other, self.z * other)
        return quat_mul(self, other)

    def __rmul__(self, scalar):
        return Quaternion(scalar * self.w, scalar * self.x, scalar * self.y, scalar * self.z)

    def __add__(self, other):
        return Quaternion(self.w + other.w, self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other):
        return Quaternion(self.w - other.w, self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self):
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def conj(self) -> Quaternion:
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def norm(self) -> float:
        return float(np.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    @classmethod
    def from_array(cls, a) -> Quaternion:
        return cls(*(a[k] for k in range(4)))


ONE = Quaternion(1, 0, 0, 0)
QI = Quaternion(0, 1, 0, 0)
QJ = Quaternion(0, 0, 1, 0)
QK = Quaternion(0, 0, 0, 1)


def quat_mul(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product ``a * b``."""
    return Quaternion(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def _right_mult_matrix(unit: Quaternion) -> np.ndarray:
    # row r holds the coordinates of e_r * unit
    basis = (ONE, QI, QJ, QK)
    rows = [quat_mul(e, unit).as_array() for e in basis]
    return np.rint(np.array(rows)).astype(np.int64)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HypercomplexFrame:
    """The triple I, J, K acting from the right on R^{4n}.

    Attributes:
        n: quaternionic dimension.
        I, J, K: integer 4n x 4n matrices, ``x -> x @ L``.
    """

    n: int
    I: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)

    @property
    def real_dim(self) -> int:
        return 4 * self.n

    @property
    def complex_dim(self) -> int:
        return 2 * self.n

    @cached_property
    def holo(self) -> np.ndarray:
        """4n x 2n matrix ``W`` with ``w = x @ W`` the holomorphic coordinates."""
        W = np.zeros((4 * self.n, 2 * self.n), dtype=complex)
        for a in range(self.n):
            W[4 * a, 2 * a] = 1
            W[4 * a + 1, 2 * a] = 1j
            W[4 * a + 2, 2 * a + 1] = 1
            W[4 * a + 3, 2 * a + 1] = -1j
        return _frozen(W)

    @cached_property
    def dual(self) -> np.ndarray:
        """2n x 4n matrix whose rows are the vectors d/dw_a in C^{4n}.

        ``dual @ holo = Id`` and ``dual @ conj(holo) = 0``.
        """
        full = np.hstack([self.holo, self.holo.conj()])
        inv = np.linalg.inv(full)
        return _frozen(inv[: 2 * self.n])

    @cached_property
    def jcov(self) -> np.ndarray:
        """Matrix ``E`` of J on (1,0)-covectors: ``J dw_a = sum_b E[a, b] dwbar_b``.

        Derived from the real matrix J, then rounded; entries are in {-1, 0, 1}.
        """
        # (J dw_a)(x) = dw_a(x @ J), i.e. J @ W = conj(W) @ E^T
        rhs = self.J @ self.holo
        ET, *_ = np.linalg.lstsq(self.holo.conj(), rhs, rcond=None)
        E = np.rint(ET.T.real).astype(np.int64)
        if not np.allclose(self.holo.conj() @ E.T, rhs):
            raise RuntimeError("J does not map (1,0)-covectors to (0,1)-covectors")
        return _frozen(E)

    def real_from_holo(self, c: np.ndarray) -> np.ndarray:
        """Real vector ``v + conj(v)`` of the (1,0)-vector with components ``c``."""
        return 2.0 * np.real(np.asarray(c) @ self.dual)


def standard_frame(n: int) -> HypercomplexFrame:
    """Flat hypercomplex structure on H^n induced by right multiplication by i, j, k."""
    if n < 1:
        raise ValueError(f"quaternionic dimension must be >= 1, got {n}")
    blocks = [_right_mult_matrix(u) for u in (QI, QJ, QK)]
    mats = [np.kron(np.eye(n, dtype=np.int64), b) for b in blocks]
    return HypercomplexFrame(n, *(_frozen(m) for m in mats))


@dataclass(frozen=True, eq=False)
class ComplexTangentVector:
    """A vector of type (1,0) or (0,1) given by its 2n coordinate components.

    ``kind == "10"``: components in the basis d/dw_a.
    ``kind == "01"``: components in the basis d/dwbar_a.
    """

    components: np.ndarray
    kind: str = "10"

    def __post_init__(self):
        if self.kind not in ("10", "01"):
            raise ValueError(f"kind must be '10' or '01', got {self.kind!r}")
        object.__setattr__(self, "components", _frozen(np.asarray(self.components, dtype=complex)))

    def ambient(self, frame: HypercomplexFrame) -> np.ndarray:
        """The vector as an element of C^{4n}."""
        basis = frame.dual if self.kind == "10" else frame.dual.conj()
        return self.components @ basis

    def __neg__(self):
        return ComplexTangentVector(-self.components, self.kind)

    def conj(self) -> ComplexTangentVector:
        return ComplexTangentVector(self.components.conj(), "01" if self.kind == "10" else "10")


def j_on_vector(frame: HypercomplexFrame, v: ComplexTangentVector) -> ComplexTangentVector:
    """Right action ``v -> v J``; swaps types (1,0) and (0,1)."""
    moved = v.ambient(frame) @ frame.J
    kind = "01" if v.kind == "10" else "10"
    return ComplexTangentVector(_read(frame, moved, kind), kind)


def _read(frame: HypercomplexFrame, z: np.ndarray, kind: str) -> np.ndarray:
    # components of z in the d/dw (kind "10") or d/dwbar (kind "01") basis
    return z @ (frame.holo if kind == "10" else frame.holo.conj())


def i_on_vector(frame: HypercomplexFrame, v: ComplexTangentVector) -> ComplexTangentVector:
    moved = v.ambient(frame) @ frame.I
    return ComplexTangentVector(_read(frame, moved, v.kind), v.kind)


def conj_j(frame: HypercomplexFrame, c: np.ndarray) -> np.ndarray:
    """Components of the (1,0)-vector ``conj(v) J`` for a (1,0)-vector ``v`` (antilinear).

    Vectorised over leading axes: ``c`` has shape ``(..., 2n)``.
    """
    return np.conj(c) @ frame.jcov.T
