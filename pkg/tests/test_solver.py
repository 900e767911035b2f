import math

import numpy as np
import pytest
from scipy.special import iv

from qma.forms import TwoFormQ, is_q_positive
from qma.solver import (
    NewtonDivergence,
    SolveConfig,
    SolverError,
    linearized_operator,
    normalization_constant,
    picard_solve,
    quadratic_tail_constants,
    solve_linear_n1,
    solve_qma,
)
from qma.suites import band_limited
from qma.torus import SpectralGrid, Torus, harmonic_field


def _bessel_solution(x, eps, kmax=12):
    # e^{eps cos t} = I0 + 2 sum_k Ik cos kt, and (1/4) phi'' = A e^F - 1 with A = 1/I0
    phi = np.zeros_like(x)
    for k in range(1, kmax + 1):
        phi -= 8 * iv(k, eps) / iv(0, eps) / (2 * np.pi * k) ** 2 * np.cos(2 * np.pi * k * x)
    return phi - phi.max(), 1 / iv(0, eps)


def test_normalization_constant(rng):
    torus = Torus(SpectralGrid.from_labels(2, (1, 5), 16))
    zero = np.zeros(torus.grid.shape)
    assert normalization_constant(torus, zero) == pytest.approx(1, rel=1e-15)
    assert normalization_constant(torus, zero + 0.7) == pytest.approx(math.exp(-0.7), rel=1e-14)
    F = band_limited(torus.grid, rng)
    A = normalization_constant(torus, F)
    assert abs(torus.integrate(1 - A * np.exp(F))) <= 1e-12 * torus.volume


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(continuity_steps=0)
    with pytest.raises(ValueError):
        SolveConfig(damping=1.5)
    with pytest.raises(ValueError):
        SolveConfig(newton_tol=0)


def test_n1_zero():
    torus = Torus(SpectralGrid.from_labels(1, (1,), 16))
    rep = solve_linear_n1(torus, np.zeros(16))
    assert np.abs(rep.phi).max() == 0 and rep.A == 1


def test_n1_closed_form():
    torus = Torus(SpectralGrid.from_labels(1, (1,), 32))
    x = torus.grid.coordinates()[0]
    F = 0.1 * np.cos(2 * np.pi * x)
    rep = solve_linear_n1(torus, F)
    want, A = _bessel_solution(x, 0.1)
    assert np.abs(rep.phi - want).max() <= 1e-8
    assert rep.A == pytest.approx(A, rel=1e-12)
    assert rep.phi.max() == 0


def test_n1_random_and_positive(solved_n1, rng):
    torus, F, rep = solved_n1
    assert rep.residual <= 1e-10
    assert rep.min_eigenvalue > 0
    X = torus.omega_phi(rep.phi).reshape(-1, 2, 2)
    assert all(is_q_positive(torus.frame, TwoFormQ(A)) for A in X)
    G = band_limited(torus.grid, rng, amp=0.3)
    assert solve_linear_n1(torus, G).residual <= 1e-10


def test_n1_requires_n1():
    with pytest.raises(ValueError):
        solve_linear_n1(Torus(SpectralGrid.from_labels(2, (1, 5), 8)), np.zeros((8, 8)))


def test_n1_newton_agrees_on_full_grid():
    # amplitudes small enough that e^F is resolved on the coarse grid
    grid = SpectralGrid(1, (0, 1, 2, 3), 10)
    torus = Torus(grid)
    F = harmonic_field(grid, [(1, 1, 0.05, 0.0), (3, 1, 0.04, 0.5), (4, 1, 0.03, 0.0)])
    a = solve_linear_n1(torus, F)
    b = solve_qma(torus, F, SolveConfig(continuity_steps=2))
    assert np.abs(a.phi - b.phi).max() <= 1e-9


def test_solve_zero_field():
    torus = Torus(SpectralGrid.from_labels(2, (1, 5), 8))
    rep = solve_qma(torus, np.zeros((8, 8)), SolveConfig(continuity_steps=1))
    assert np.abs(rep.phi).max() == 0
    assert rep.iterations == [0] and rep.A == 1


def test_solve_preconditions():
    with pytest.raises(ValueError):
        solve_qma(Torus(SpectralGrid.from_labels(2, (1, 2), 8)), np.zeros((8, 8)))
    with pytest.raises(ValueError):
        solve_qma(Torus(SpectralGrid.from_labels(3, (1,), 8)), np.zeros(8))


def test_divergence_reported(small_n2):
    torus, F, _ = small_n2
    with pytest.raises(NewtonDivergence) as info:
        solve_qma(torus, F, SolveConfig(continuity_steps=1, max_newton=1))
    assert info.value.t == 1.0
    assert issubclass(NewtonDivergence, SolverError)


def test_default_problem(default_n2):
    torus, F, rep = default_n2
    assert rep.residual <= 1e-8
    assert rep.min_eigenvalue >= -1e-9
    assert rep.phi.max() == 0
    assert rep.A == pytest.approx(rep.A_newton, rel=1e-10)
    # mass conservation
    rho = torus.ma_density(rep.phi)
    assert torus.integrate(rho) == pytest.approx(torus.integrate(rep.A * np.exp(F)), rel=1e-12)
    assert max(quadratic_tail_constants(rep), default=0.0) < 1e3
    assert len(rep.iterations) == 10
    d = rep.to_dict()
    assert "wall_time" not in d and d["active"] == [1, 5]


def test_picard_agrees(small_n2):
    torus, F, rep = small_n2
    phi = picard_solve(torus, F)
    assert np.abs(phi - rep.phi).max() <= 1e-6


def test_gauge_invariance(small_n2):
    torus, F, rep = small_n2
    other = solve_qma(torus, F + 0.8)
    assert np.abs(other.phi - rep.phi).max() <= 1e-10
    assert other.A == pytest.approx(rep.A * math.exp(-0.8), rel=1e-12)


def test_linearized_operator_flat(small_n2, rng):
    torus = small_n2[0]
    psi = band_limited(torus.grid, rng)
    zero = np.zeros(torus.grid.shape)
    flat = torus.ifft(torus.flat_operator_symbol() * torus.fft(psi), True)
    np.testing.assert_allclose(linearized_operator(torus, zero, psi), flat, atol=1e-10)
    assert np.abs(linearized_operator(torus, zero, zero + 2.0)).max() < 1e-12


def test_linearized_operator_fd_order(small_n2, rng):
    torus, _, rep = small_n2
    phi = rep.phi
    psi = band_limited(torus.grid, rng, amp=0.1)
    L = linearized_operator(torus, phi, psi)
    errs = []
    for h in (1e-3, 1e-4):
        fd = (np.log(torus.ma_density(phi + h * psi))
              - np.log(torus.ma_density(phi - h * psi))) / (2 * h)
        errs.append(np.abs(fd - L).max())
    order = math.log10(errs[0] / errs[1])
    assert order >= 1.9
