"""Verification suites shared by the command line and the acceptance tests.

Each suite returns a plain dict with the measured maxima and a ``passed``
flag; thresholds are keyword arguments so callers can state them explicitly.
"""

from __future__ import annotations

import numpy as np

from qma.forms import IdentityFailure, TwoFormQ, is_q_real, q_real_defect, verify_wedge_identities
from qma.hypercomplex import standard_frame
from qma.simdiag import (
    DiagonalizationError,
    build_omega_tilde,
    conj_equivariance_residual,
    lemma2_bound,
    orthogonality_residuals,
    random_pointwise_coefficients,
    random_q_positive,
    random_q_real,
    simultaneous_diagonalize,
)
from qma.torus import SpectralGrid, Torus


def wedge_suite(ns=(1, 2, 3)) -> dict:
    """Exact residual polynomials of the wedge identities; all must be literally zero."""
    out = {"residuals": {}, "passed": True}
    for n in ns:
        try:
            res = verify_wedge_identities(n)
        except IdentityFailure as exc:
            out["residuals"][f"n={n}"] = str(exc)
            out["passed"] = False
            continue
        for (kind, k), r in sorted(res.items()):
            out["residuals"][f"n={n}:{kind}:{k}"] = str(r)
            if r != 0:
                out["passed"] = False
    return out


def lemma3_suite(n: int, trials: int, rng: np.random.Generator, ortho_tol: float = 1e-10,
                 equiv_tol: float = 1e-11, eig_tol: float = 1e-9) -> dict:
    """Simultaneous diagonalisation on random (q-positive, q-real) and (q-positive, q-positive) pairs."""
    frame = standard_frame(n)
    worst = {"orthogonality": 0.0, "equivariance": 0.0, "imag_lambda": 0.0,
             "neg_real_lambda": 0.0}
    failures = 0
    for _ in range(trials):
        om1 = random_q_positive(frame, rng)
        for positive in (False, True):
            om2 = random_q_positive(frame, rng) if positive else random_q_real(frame, rng)
            try:
                res = simultaneous_diagonalize(frame, om1, om2)
            except (DiagonalizationError, ValueError):
                failures += 1
                continue
            ortho = max(orthogonality_residuals(frame, om1, om2, res.basis).values())
            worst["orthogonality"] = max(worst["orthogonality"], ortho)
            v = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
            v /= np.linalg.norm(v)
            T = build_omega_tilde(frame, om1, om2)
            scale = max(1.0, float(np.linalg.norm(T, 2)))
            eq = conj_equivariance_residual(frame, om1, om2, v) / scale
            worst["equivariance"] = max(worst["equivariance"], eq)
            if positive:
                lam = res.eigenvalues
                worst["imag_lambda"] = max(worst["imag_lambda"], float(np.abs(lam.imag).max()))
                worst["neg_real_lambda"] = max(worst["neg_real_lambda"], float(-lam.real.min()))
    passed = (failures == 0 and worst["orthogonality"] <= ortho_tol
              and worst["equivariance"] <= equiv_tol and worst["imag_lambda"] <= eig_tol
              and worst["neg_real_lambda"] <= eig_tol)
    return {"n": n, "trials": trials, "failures": failures, **worst, "passed": passed}


def lemma2_suite(count: int, rng: np.random.Generator, max_n: int = 4,
                 eps_values=(0.01, 1.0, 100.0)) -> dict:
    """Pointwise coefficient inequality with ``B = max |b_i|`` on random instances."""
    violations = 0
    worst = -np.inf
    checked = 0
    for j in range(count):
        n = 1 + j % max_n
        coeffs = random_pointwise_coefficients(n, rng)
        for eps in eps_values:
            for k in range(n):
                lhs, rhs = lemma2_bound(coeffs, k, eps)
                checked += 1
                if lhs > rhs:
                    violations += 1
                if rhs > 0:
                    worst = max(worst, lhs / rhs)
    return {"instances": count, "checks": checked, "violations": violations,
            "max_lhs_over_rhs": float(worst), "passed": violations == 0}


def band_limited(grid: SpectralGrid, rng: np.random.Generator, kmax: int = 3,
                 amp: float = 1.0) -> np.ndarray:
    """Random real field with Fourier support ``|k_i| <= kmax`` on each active axis."""
    shape = grid.shape
    coeffs = np.zeros(shape, dtype=complex)
    sel = tuple(np.r_[0:kmax + 1, grid.N - kmax:grid.N] for _ in shape)
    block = rng.standard_normal([len(s) for s in sel]) + 1j * rng.standard_normal([len(s) for s in sel])
    coeffs[np.ix_(*sel)] = block
    f = np.real(np.fft.ifftn(coeffs))
    f -= f.mean()
    return amp * f / np.abs(f).max()


def operator_suite(fields: int, rng: np.random.Generator, N: int = 12,
                   anticomm_tol: float = 1e-11, qreal_tol: float = 1e-12,
                   energy_tol: float = 1e-9, density_tol: float = 1e-10,
                   points: int = 100) -> dict:
    """Spectral operator identities on random band-limited fields (n = 2, S = {x1, x2, x5, x7})."""
    grid = SpectralGrid.from_labels(2, (1, 2, 5, 7), N)
    torus = Torus(grid)
    frame = torus.frame
    worst = {"anticommutator": 0.0, "q_real": 0.0, "gradient_energy": 0.0, "density": 0.0}
    for _ in range(fields):
        f = band_limited(grid, rng)
        a = torus.del_form(torus.del_J(f))
        b = torus.del_J_form(torus.del_(f))
        scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
        worst["anticommutator"] = max(worst["anticommutator"], float(np.abs(a + b).max() / scale))
        ddj = torus.ddJ(f)
        X = ddj.reshape(-1, 4, 4)
        for idx in rng.choice(len(X), size=min(points, len(X)), replace=False):
            d = q_real_defect(frame, TwoFormQ(X[idx])) / (1.0 + np.abs(X[idx]).max())
            worst["q_real"] = max(worst["q_real"], float(d))
        e1 = torus.gradient_energy(f, "wedge")
        e2 = torus.gradient_energy(f, "coordinate")
        worst["gradient_energy"] = max(worst["gradient_energy"], abs(e1 - e2) / abs(e2))
        small = 0.05 * f / max(np.abs(ddj).max(), 1e-300)
        d1 = torus.ma_density(small, "exterior")
        d2 = torus.ma_density(small, "eigen")
        worst["density"] = max(worst["density"], float(np.abs(d1 - d2).max()))
    passed = (worst["anticommutator"] <= anticomm_tol and worst["q_real"] <= qreal_tol
              and worst["gradient_energy"] <= energy_tol and worst["density"] <= density_tol)
    return {"fields": fields, "N": N, **worst, "passed": passed}


def is_q_real_field(torus: Torus, phi: np.ndarray, tol: float = 1e-12) -> bool:
    frame = torus.frame
    return all(is_q_real(frame, TwoFormQ(X), tol) for X in torus.ddJ(phi).reshape(-1, 4, 4))
