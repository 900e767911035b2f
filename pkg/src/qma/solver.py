"""Quaternionic Monge-Ampere solver on the flat torus.

Solves ``(Omega + del del_J phi)^n = A e^F Omega^n`` with
``Omega + del del_J phi >= 0`` and ``sup phi = 0``.  On the flat torus
``Omega^n`` is holomorphic and the solvability constant is
``A = vol / int e^F``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from qma.torus import SpectralGrid, Torus

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Base class for solver failures."""


class NewtonDivergence(SolverError):
    def __init__(self, t: float, message: str):
        super().__init__(f"Newton failed at t={t:.6g}: {message}")
        self.t = t


class PositivityLoss(SolverError):
    pass


@dataclass
class SolveConfig:
    continuity_steps: int = 10
    newton_tol: float = 1e-12
    max_newton: int = 30
    damping: float = 1.0
    max_halvings: int = 8
    linear_tol: float = 1e-12
    gmres_restart: int = 60
    gmres_maxiter: int = 20
    # a stalled line search at or below this residual is the rounding floor
    floor_tol: float = 1e-10

    def __post_init__(self):
        if self.continuity_steps < 1:
            raise ValueError("continuity_steps must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.newton_tol <= 0 or self.linear_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveReport:
    grid: SpectralGrid
    phi: np.ndarray = field(repr=False)
    A: float
    residual: float
    min_eigenvalue: float
    iterations: list
    residual_history: list = field(repr=False)
    wall_time: float
    A_newton: float | None = None
    converged: bool = True

    def to_dict(self) -> dict:
        """JSON-ready summary; wall time is left out so artifacts are reproducible."""
        return {
            "n": self.grid.n,
            "active": list(self.grid.labels),
            "N": self.grid.N,
            "A": self.A,
            "A_newton": self.A_newton,
            "residual": self.residual,
            "min_relative_eigenvalue": self.min_eigenvalue,
            "iterations": list(self.iterations),
            "residual_history": [list(map(float, h)) for h in self.residual_history],
            "sup_phi": float(self.phi.max()),
            "inf_phi": float(self.phi.min()),
            "converged": self.converged,
        }


def normalization_constant(torus: Torus, F: np.ndarray) -> float:
    """``A = int Omega^n ^ conj(Omega)^n / int e^F Omega^n ^ conj(Omega)^n``."""
    return math.exp(math.log(torus.volume) - torus.log_exp_integral(F))


def _sup_normalize(phi: np.ndarray) -> np.ndarray:
    return phi - phi.max()


def solve_linear_n1(torus: Torus, F: np.ndarray, cfg: SolveConfig | None = None) -> SolveReport:
    """Direct spectral solve for n = 1, where the density ``1 + (1/4) Laplacian phi`` is affine.

    Raises:
        PositivityLoss: if the solved form is not q-positive on the grid.
    """
    if torus.grid.n != 1:
        raise ValueError("solve_linear_n1 requires n = 1")
    start = time.perf_counter()
    A = normalization_constant(torus, F)
    phi = torus.apply_flat_inverse(A * np.exp(F) - 1.0)
    phi = _sup_normalize(phi)
    density = torus.ma_density(phi)
    residual = float(np.max(np.abs(density - A * np.exp(F))))
    lam = float(torus.relative_eigenvalues(torus.omega_phi(phi)).min())
    if lam < -1e-9:
        raise PositivityLoss(f"minimum relative eigenvalue {lam:.3e} < 0")
    return SolveReport(torus.grid, phi, A, residual, lam, [0], [[residual]],
                       time.perf_counter() - start, A_newton=A)


def linearized_operator(torus: Torus, phi: np.ndarray, psi: np.ndarray,
                        _cache: dict | None = None) -> np.ndarray:
    """Derivative of ``log ma_density`` at ``phi`` in direction ``psi``.

    ``n del del_J psi ^ Omega_phi^{n-1} / Omega_phi^n``.

    Raises:
        PositivityLoss: if ``Omega_phi`` is not strictly positive on the grid.
    """
    if _cache is None:
        _cache = _linearization_data(torus, phi)
    Aphi, rho = _cache["A"], _cache["rho"]
    n = torus.grid.n
    num = torus.wedge_ratio(torus.ddJ(psi), *([Aphi] * (n - 1)))
    return n * num / rho


def _linearization_data(torus: Torus, phi: np.ndarray) -> dict:
    Aphi = torus.omega_phi(phi)
    lam = torus.relative_eigenvalues(Aphi)
    if lam.min() <= 0:
        raise PositivityLoss(f"Omega_phi is not strictly positive (min eigenvalue {lam.min():.3e})")
    return {"A": Aphi, "rho": torus.density_from_forms(Aphi), "lam": float(lam.min())}


class _NewtonSystem:
    """``K delta = L(delta~) - mean(delta) + nyquist(delta)`` on the grid.

    The constant mode of ``delta`` is the update of ``log A``; the Nyquist
    kernel modes carry no information and are mapped by the identity.
    """

    def __init__(self, torus: Torus, phi: np.ndarray):
        self.torus = torus
        self.shape = torus.grid.shape
        self.cache = _linearization_data(torus, phi)
        self.phi = phi

    def split(self, d: np.ndarray):
        k = self.torus.project_kernel(d)
        c = float(np.mean(d))
        return d - k, c, k - c

    def matvec(self, x):
        d = np.asarray(x).reshape(self.shape)
        smooth, c, nyq = self.split(d)
        out = linearized_operator(self.torus, self.phi, smooth, self.cache) - c + nyq
        return out.ravel()

    def precond(self, x):
        r = np.asarray(x).reshape(self.shape)
        k = self.torus.project_kernel(r)
        c = float(np.mean(r))
        out = self.torus.apply_flat_inverse(r) - c + (k - c)
        return out.ravel()

    def solve(self, rhs: np.ndarray, cfg: SolveConfig) -> np.ndarray:
        size = rhs.size
        # a vector whose entries are all 0.1 newton_tol has this 2-norm
        atol = 0.1 * cfg.newton_tol * math.sqrt(size)
        op = spla.LinearOperator((size, size), matvec=self.matvec, dtype=float)
        M = spla.LinearOperator((size, size), matvec=self.precond, dtype=float)
        sol, info = spla.gmres(op, rhs.ravel(), rtol=cfg.linear_tol, atol=atol,
                               restart=cfg.gmres_restart, maxiter=cfg.gmres_maxiter, M=M)
        if info < 0:
            raise SolverError(f"GMRES breakdown (info={info})")
        return sol.reshape(self.shape)


def _log_residual(torus: Torus, phi, logc, F):
    Aphi = torus.omega_phi(phi)
    lam = torus.relative_eigenvalues(Aphi)
    if lam.min() <= 0:
        return None, float(lam.min())
    rho = torus.density_from_forms(Aphi)
    return np.log(rho) - F - logc, float(lam.min())


def _reachable(torus: Torus, G: np.ndarray) -> np.ndarray:
    # Nyquist kernel modes lie outside the range of the linearisation
    nyq = torus.project_kernel(G) - np.mean(G)
    return G - nyq


def solve_qma(torus: Torus, F: np.ndarray, cfg: SolveConfig | None = None) -> SolveReport:
    """Continuity path ``F_t = t F`` with damped Newton-Krylov steps.

    Each Newton system is solved by preconditioned GMRES with the flat
    quarter-Laplacian inverse as preconditioner.

    Raises:
        NewtonDivergence: no acceptable step within the halving budget, or
            the iteration limit is reached.
    """
    cfg = cfg or SolveConfig()
    grid = torus.grid
    if grid.n not in (1, 2):
        raise ValueError("solve_qma supports n in {1, 2}")
    if grid.n == 2 and len(grid.blocks_touched()) < 2:
        raise ValueError("for n = 2 the active coordinates must meet both quaternionic blocks")
    start = time.perf_counter()
    phi = np.zeros(grid.shape)
    logc = 0.0
    iterations, history = [], []
    min_lam = 1.0
    m = cfg.continuity_steps
    for step in range(1, m + 1):
        t = step / m
        Ft = t * F
        G, lam = _log_residual(torus, phi, logc, Ft)
        if G is None:
            raise PositivityLoss(f"lost positivity entering t={t:.6g}")
        res = float(np.max(np.abs(_reachable(torus, G))))
        hist = [res]
        it = 0
        while res > cfg.newton_tol:
            if it >= cfg.max_newton:
                raise NewtonDivergence(t, f"no convergence in {cfg.max_newton} iterations "
                                          f"(residual {res:.3e})")
            system = _NewtonSystem(torus, phi)
            delta = system.solve(-_reachable(torus, G), cfg)
            smooth, dc, _ = system.split(delta)
            s = cfg.damping
            for _ in range(cfg.max_halvings + 1):
                trial_phi = phi + s * smooth
                trial_c = logc + s * dc
                trial_G, trial_lam = _log_residual(torus, trial_phi, trial_c, Ft)
                if trial_G is not None:
                    trial_res = float(np.max(np.abs(_reachable(torus, trial_G))))
                    if trial_res < res:
                        break
                s *= 0.5
            else:
                if res <= cfg.floor_tol:
                    break
                raise NewtonDivergence(t, f"no decrease after {cfg.max_halvings} halvings "
                                          f"(residual {res:.3e})")
            stalled = trial_res > 0.5 * res and trial_res <= cfg.floor_tol
            phi, logc, G, res, lam = trial_phi, trial_c, trial_G, trial_res, trial_lam
            phi = phi - np.mean(phi)
            hist.append(res)
            it += 1
            log.debug("t=%.3f it=%d residual=%.3e step=%.3g", t, it, res, s)
            if stalled:
                break
        iterations.append(it)
        history.append(hist)
        min_lam = min(min_lam, lam)
    phi = _sup_normalize(phi)
    A = normalization_constant(torus, F)
    density = torus.ma_density(phi)
    residual = float(np.max(np.abs(density - A * np.exp(F))))
    lam_final = float(torus.relative_eigenvalues(torus.omega_phi(phi)).min())
    return SolveReport(grid, phi, A, residual, min(min_lam, lam_final), iterations, history,
                       time.perf_counter() - start, A_newton=math.exp(logc))


def picard_solve(torus: Torus, F: np.ndarray, sigma: float = 0.7, tol: float = 1e-12,
                 maxiter: int = 2000) -> np.ndarray:
    """Damped fixed-point iteration ``phi <- phi - sigma L0^{-1}(log rho - log A e^F)``.

    ``L0`` is the flat operator (a quarter Laplacian); ``A`` is fixed by the
    normalisation.  Returns the sup-normalised solution.
    """
    A = normalization_constant(torus, F)
    target = np.log(A) + F
    phi = np.zeros(torus.grid.shape)
    for _ in range(maxiter):
        rho = torus.ma_density(phi)
        if rho.min() <= 0:
            raise PositivityLoss("Picard iterate left the positive cone")
        G = _reachable(torus, np.log(rho) - target)
        if np.max(np.abs(G)) <= tol:
            return _sup_normalize(phi)
        phi = phi - sigma * torus.apply_flat_inverse(G)
    raise SolverError(f"Picard iteration did not reach {tol:g} in {maxiter} steps")


def quadratic_tail_constants(report: SolveReport, floor: float = 1e-13) -> list:
    """``r_{k+1} / r_k^2`` for the last two iterations of each continuity step.

    Pairs whose later residual is at or below ``floor`` (the rounding level)
    are skipped.
    """
    out = []
    for hist in report.residual_history:
        tail = hist[-3:]
        for r0, r1 in zip(tail, tail[1:]):
            if r1 > floor and r0 > 0:
                out.append(r1 / r0**2)
    return out
