"""Spectral calculus on the flat torus H^n / Z^{4n}.

Fields depend only on a subset ``active`` of the 4n real coordinates and are
sampled on ``N`` equispaced points per active axis of the unit period.  All
derivatives are Fourier multipliers with the Nyquist wavenumber set to zero, so
second derivatives are exact compositions of first derivatives and discrete
integration by parts holds to rounding.

Integrals use the volume element ``constant * dx`` where ``Omega^n ^
conj(Omega)^n = (-1)^n constant dx`` (see :func:`qma.forms.volume_convention`).
Wedge integrals ``int X ^ conj(Omega)^n`` of (2n,0)-forms X are evaluated as
``int (X / Omega^n) dvol``; the common sign ``(-1)^n`` is dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from qma.forms import (
    one_form_wedge,
    pairing_matrix,
    pfaffian,
    standard_omega,
    top_wedge,
    volume_convention,
)
from qma.hypercomplex import HypercomplexFrame, standard_frame


@dataclass(frozen=True)
class SpectralGrid:
    """Discrete torus with fields depending on the ``active`` coordinates (0-based)."""

    n: int
    active: tuple
    N: int

    def __post_init__(self):
        active = tuple(int(a) for a in self.active)
        object.__setattr__(self, "active", active)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.N < 4 or self.N % 2:
            raise ValueError(f"N must be even and >= 4, got {self.N}")
        if not active:
            raise ValueError("at least one active coordinate is required")
        if len(set(active)) != len(active) or not all(0 <= a < 4 * self.n for a in active):
            raise ValueError(f"invalid active coordinates {active} for n={self.n}")

    @classmethod
    def from_labels(cls, n: int, labels, N: int) -> SpectralGrid:
        """Build from 1-based coordinate labels (``x1 .. x_{4n}``)."""
        return cls(n, tuple(int(s) - 1 for s in labels), N)

    @property
    def labels(self) -> tuple:
        return tuple(a + 1 for a in self.active)

    @property
    def dim(self) -> int:
        return len(self.active)

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.dim

    @property
    def size(self) -> int:
        return self.N**self.dim

    def refine(self, factor: int = 2) -> SpectralGrid:
        return SpectralGrid(self.n, self.active, self.N * factor)

    def coordinates(self) -> list:
        """Mesh arrays for the active coordinates, in ``active`` order."""
        x = np.arange(self.N) / self.N
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def blocks_touched(self) -> set:
        return {a // 4 for a in self.active}


class Torus:
    """Operators and integrals for fields on a :class:`SpectralGrid`."""

    def __init__(self, grid: SpectralGrid):
        self.grid = grid
        self.frame: HypercomplexFrame = standard_frame(grid.n)
        self.omega = standard_omega(self.frame).A
        self.volume = volume_convention(self.frame).constant

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        k = 2 * np.pi * np.fft.fftfreq(self.grid.N, 1.0 / self.grid.N)
        k[self.grid.N // 2] = 0.0
        return k

    def _axis_symbol(self, axis: int) -> np.ndarray:
        shape = [1] * self.grid.dim
        shape[axis] = self.grid.N
        return (1j * self.wavenumbers).reshape(shape)

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        total = np.zeros(self.grid.shape)
        for ax in range(self.grid.dim):
            total = total + (self._axis_symbol(ax) ** 2).real
        return total

    @cached_property
    def kernel_mask(self) -> np.ndarray:
        """Fourier modes annihilated by every derivative (constants and Nyquist combinations)."""
        return self.laplacian_symbol == 0

    # -- differentiation ---------------------------------------------------

    def fft(self, f):
        return np.fft.fftn(f)

    def ifft(self, fh, real: bool):
        out = np.fft.ifftn(fh)
        return out.real if real else out

    def derivative(self, f: np.ndarray, coord: int) -> np.ndarray:
        """Partial derivative along real coordinate ``coord`` (0-based)."""
        if coord not in self.grid.active:
            return np.zeros_like(f)
        ax = self.grid.active.index(coord)
        return self.ifft(self.fft(f) * self._axis_symbol(ax), np.isrealobj(f))

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Real-coordinate gradient, shape ``(4n, *grid)``."""
        fh = self.fft(f)
        real = np.isrealobj(f)
        out = np.zeros((4 * self.grid.n, *self.grid.shape), dtype=float if real else complex)
        for ax, coord in enumerate(self.grid.active):
            out[coord] = self.ifft(fh * self._axis_symbol(ax), real)
        return out

    def hessian(self, f: np.ndarray) -> np.ndarray:
        """Real Hessian, shape ``(4n, 4n, *grid)``."""
        fh = self.fft(f)
        real = np.isrealobj(f)
        m = 4 * self.grid.n
        out = np.zeros((m, m, *self.grid.shape), dtype=float if real else complex)
        act = self.grid.active
        for i, ci in enumerate(act):
            for j in range(i, len(act)):
                cj = act[j]
                d = self.ifft(fh * self._axis_symbol(i) * self._axis_symbol(j), real)
                out[ci, cj] = d
                out[cj, ci] = d
        return out

    def del_(self, f: np.ndarray) -> np.ndarray:
        """Coefficients of the (1,0)-form ``del f`` on ``dw_a``; shape ``(2n, *grid)``."""
        return np.tensordot(self.frame.dual, self.gradient(f), axes=1)

    def del_bar(self, f: np.ndarray) -> np.ndarray:
        """Coefficients of the (0,1)-form ``delbar f`` on ``dwbar_a``."""
        return np.tensordot(self.frame.dual.conj(), self.gradient(f), axes=1)

    def j_inv_01(self, g: np.ndarray) -> np.ndarray:
        """J^{-1} of a (0,1)-form with coefficients ``g``; the result is (1,0).

        ``J dwbar_b = sum_c E[b, c] dw_c`` and ``J^{-1} = -J`` on 1-forms.
        """
        return -np.tensordot(self.frame.jcov.T, g, axes=1)

    def del_J(self, f: np.ndarray) -> np.ndarray:
        """``del_J f = J^{-1} delbar J f = J^{-1} delbar f`` for functions."""
        return self.j_inv_01(self.del_bar(f))

    def del_form(self, c: np.ndarray) -> np.ndarray:
        """``del`` of a (1,0)-form field, as antisymmetric matrices ``(*grid, 2n, 2n)``."""
        # M[a, k] = d_a c_k
        M = np.stack([self.del_(c[k]) for k in range(c.shape[0])], axis=1)
        M = np.moveaxis(M, (0, 1), (-2, -1))
        return M - np.swapaxes(M, -1, -2)

    def del_J_form(self, c: np.ndarray) -> np.ndarray:
        """``del_J = J^{-1} delbar J`` of a (1,0)-form field, as ``(*grid, 2n, 2n)``."""
        E = self.frame.jcov
        g = np.tensordot(E.T, c, axes=1)  # J gamma, a (0,1)-form
        Nm = np.stack([self.del_bar(g[k]) for k in range(g.shape[0])], axis=1)
        Nm = np.moveaxis(Nm, (0, 1), (-2, -1))
        Nm = Nm - np.swapaxes(Nm, -1, -2)
        # J^{-1} = J on 2-forms
        return np.einsum("ma,...ml,lb->...ab", E, Nm, E)

    def complex_hessian(self, f: np.ndarray) -> np.ndarray:
        """``d^2 f / dw_a dwbar_b`` with shape ``(*grid, 2n, 2n)``."""
        act = list(self.grid.active)
        D = self.frame.dual[:, act]
        H = self.hessian(f)[np.ix_(act, act)]
        out = np.tensordot(D, H, axes=(1, 0))  # (2n, m, *grid)
        out = np.tensordot(D.conj(), out, axes=(1, 1))  # (2n_b, 2n_a, *grid)
        return np.moveaxis(out, (1, 0), (-2, -1))

    def ddJ(self, phi: np.ndarray) -> np.ndarray:
        """Coefficient matrices of ``del del_J phi``, shape ``(*grid, 2n, 2n)``.

        With ``c = del_J phi = -E^T delbar phi`` one gets ``d_a c_k = -(Hc E)[a, k]``.
        """
        Hc = self.complex_hessian(phi)
        M = -np.einsum("...ab,bk->...ak", Hc, self.frame.jcov)
        return M - np.swapaxes(M, -1, -2)

    def omega_phi(self, phi: np.ndarray) -> np.ndarray:
        return self.omega + self.ddJ(phi)

    # -- pointwise algebra -------------------------------------------------

    def density_from_forms(self, A: np.ndarray) -> np.ndarray:
        """``Omega_phi^n / Omega^n = Pf(A) / Pf(Omega)``."""
        return (pfaffian(A) / pfaffian(self.omega)).real

    def relative_eigenvalues(self, A: np.ndarray) -> np.ndarray:
        """Relative eigenvalues of q-real forms against Omega, shape ``(*grid, n)``.

        Each eigenvalue of the pairing matrix appears twice; pairs are averaged.
        """
        H = pairing_matrix(self.frame, A)
        H0 = pairing_matrix(self.frame, self.omega)
        if not np.allclose(H0, np.eye(H0.shape[0])):
            raise RuntimeError("standard form must pair to the identity")
        H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
        ev = np.linalg.eigvalsh(H)
        return 0.5 * (ev[..., 0::2] + ev[..., 1::2])

    def ma_density(self, phi: np.ndarray, method: str = "exterior") -> np.ndarray:
        """Monge-Ampere density ``(Omega + del del_J phi)^n / Omega^n``.

        ``method``: ``"exterior"`` (Pfaffian of the top wedge), ``"eigen"``
        (product of relative eigenvalues from the pairing spectrum) or
        ``"simdiag"`` (product of relative eigenvalues from the simultaneous
        diagonalisation at every grid point; slow).
        """
        A = self.omega_phi(phi)
        if method == "exterior":
            return self.density_from_forms(A)
        if method == "eigen":
            return np.prod(self.relative_eigenvalues(A), axis=-1)
        if method == "simdiag":
            return self._density_simdiag(A)
        raise ValueError(f"unknown method {method!r}")

    def _density_simdiag(self, A: np.ndarray) -> np.ndarray:
        from qma.forms import TwoFormQ
        from qma.simdiag import normalize_to_standard, simultaneous_diagonalize

        om = TwoFormQ(self.omega)
        flat = A.reshape(-1, *A.shape[-2:])
        out = np.empty(len(flat))
        for i, Ai in enumerate(flat):
            om2 = TwoFormQ(Ai)
            res = simultaneous_diagonalize(self.frame, om, om2)
            out[i] = np.prod(normalize_to_standard(res, om, om2).phis)
        return out.reshape(A.shape[:-2])

    def wedge_ratio(self, *factors: np.ndarray) -> np.ndarray:
        """``(X_1 ^ ... ^ X_n) / Omega^n`` pointwise; constant factors broadcast."""
        shape = self.grid.shape
        full = [np.broadcast_to(f, (*shape, *f.shape[-2:])) for f in factors]
        base = math.factorial(self.grid.n) * pfaffian(self.omega)
        return (top_wedge(*full) / base).real

    # -- integration -------------------------------------------------------

    def integrate(self, f: np.ndarray) -> float:
        """Spectral quadrature: mean value times the volume."""
        return float(np.mean(f)) * self.volume

    def lp_norm(self, f: np.ndarray, p: float) -> float:
        if p < 1:
            raise ValueError("p must be >= 1")
        return self.integrate(np.abs(f) ** p) ** (1.0 / p)

    def log_exp_integral(self, g: np.ndarray) -> float:
        """``log int exp(g) dvol`` without overflow."""
        top = float(np.max(g))
        return top + math.log(float(np.mean(np.exp(g - top))) * self.volume)

    def log_norm_exp_neg(self, phi: np.ndarray, p: float) -> float:
        """``log || e^{-phi} ||_{L^p}``."""
        return self.log_exp_integral(-p * phi) / p

    def gradient_energy(self, u: np.ndarray, method: str = "wedge") -> float:
        """``int |del u|_g^2 dvol`` for a real field.

        ``"wedge"``: ``n int del u ^ del_J u ^ Omega^{n-1} ^ conj(Omega)^n``.
        ``"coordinate"``: ``int sum_a |du/dw_a|^2 = (1/4) int |grad u|^2``.
        """
        if method == "wedge":
            a = self.del_(u)
            b = self.del_J(u)
            X = one_form_wedge(np.moveaxis(a, 0, -1), np.moveaxis(b, 0, -1))
            ratio = self.wedge_ratio(X, *([self.omega] * (self.grid.n - 1)))
            return self.grid.n * self.integrate(ratio)
        if method == "coordinate":
            g = self.gradient(u)
            return 0.25 * self.integrate(np.sum(g * g, axis=0))
        raise ValueError(f"unknown method {method!r}")

    # -- spectral inverse of the flat operator -----------------------------

    def flat_operator_symbol(self) -> np.ndarray:
        """Symbol of ``psi -> n del del_J psi ^ Omega^{n-1} / Omega^n`` (a quarter Laplacian)."""
        return 0.25 * self.laplacian_symbol

    def apply_flat_inverse(self, r: np.ndarray) -> np.ndarray:
        """Pseudo-inverse of the flat operator; kernel modes are set to zero."""
        sym = self.flat_operator_symbol()
        rh = self.fft(r)
        safe = np.where(self.kernel_mask, 1.0, sym)
        out = np.where(self.kernel_mask, 0.0, rh / safe)
        return self.ifft(out, np.isrealobj(r))

    def project_kernel(self, r: np.ndarray) -> np.ndarray:
        """Component of ``r`` in the kernel modes."""
        rh = self.fft(r)
        return self.ifft(np.where(self.kernel_mask, rh, 0.0), np.isrealobj(r))


@dataclass
class ScalarField:
    grid: SpectralGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v


@dataclass
class TwoFormField:
    grid: SpectralGrid
    A: np.ndarray = field(repr=False)


def harmonic_field(grid: SpectralGrid, harmonics) -> np.ndarray:
    """Sum of ``amp * cos(2 pi freq x_coord + phase)`` over ``(coord, freq, amp, phase)``.

    ``coord`` is a 1-based coordinate label and must be active.
    """
    mesh = grid.coordinates()
    out = np.zeros(grid.shape)
    for coord, freq, amp, phase in harmonics:
        idx = int(coord) - 1
        if idx not in grid.active:
            raise ValueError(f"coordinate x{coord} is not active on this grid")
        x = mesh[grid.active.index(idx)]
        out = out + amp * np.cos(2 * np.pi * freq * x + phase)
    return out


def resample(values: np.ndarray, grid: SpectralGrid, target: SpectralGrid) -> np.ndarray:
    """Trigonometric interpolation between grids of the same active set."""
    if grid.active != target.active:
        raise ValueError("grids must share the active coordinates")
    fh = np.fft.fftn(values)
    N, M = grid.N, target.N
    out = np.zeros(target.shape, dtype=complex)
    half = min(N, M) // 2
    idx = list(range(half)) + list(range(-half + 1, 0))
    ix = np.ix_(*([np.array(idx) % N] * grid.dim))
    ox = np.ix_(*([np.array(idx) % M] * grid.dim))
    out[ox] = fh[ix]
    return np.real(np.fft.ifftn(out)) * (M / N) ** grid.dim
