"""Tests for norms, conserved quantities, energy functionals, and the
diagnostics collector.  Expected values come from closed-form mode sums
(cos^2 -> 1/2, cos^3 -> (3 cos + cos 3.)/4, cos^4 -> 3/8 + ...)."""

import math

import numpy as np
import pytest

from chic.functionals import (
    CSV_COLUMNS,
    DiagnosticsCollector,
    DiagnosticsRecord,
    FunctionalCoefficients,
    conserved,
    diff_hsigma,
    energy_E,
    flux_h1_norm_sq,
    flux_norm,
    hsigma_norm,
    lyapunov_L,
    norm,
    proof_functionals,
    psi_sigma,
    scalar_norm_sq,
    vsigma_norm,
)
from chic.model import InitialData, Parameters, Potential, State
from chic.spectral import Grid, MeanFreeError

LAM1 = math.pi ** 2


def _coeffs(n, **slots):
    c = np.zeros(n)
    for key, val in slots.items():
        c[int(key[1:])] = val
    return c


def _state(grid, theta, q, chi, chi_t, time=0.0):
    return State(grid, time, theta, q, chi, chi_t)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def test_scalar_norms_single_mode():
    grid = Grid(1, 16)
    c = _coeffs(16, s2=0.8)
    lam = (2 * np.pi) ** 2
    assert scalar_norm_sq(grid, c, "H") == pytest.approx(0.5 * 0.8**2, rel=1e-14)
    assert scalar_norm_sq(grid, c, "V") == pytest.approx(
        0.5 * (1 + lam) * 0.8**2, rel=1e-14)
    assert scalar_norm_sq(grid, c, "Vdual") == pytest.approx(
        0.5 * 0.8**2 / (1 + lam), rel=1e-14)
    assert scalar_norm_sq(grid, c, "V0r", r=-1.0) == pytest.approx(
        0.5 * 0.8**2 / lam, rel=1e-14)
    assert norm(grid, c, "H") == pytest.approx(math.sqrt(0.5) * 0.8, rel=1e-14)


def test_scalar_norms_constant_field():
    grid = Grid(1, 8)
    c = _coeffs(8, s0=0.7)
    assert scalar_norm_sq(grid, c, "H") == pytest.approx(0.7**2, rel=1e-14)
    assert scalar_norm_sq(grid, c, "Vdual") == pytest.approx(0.7**2, rel=1e-14)
    # positive exponents ignore the mean; negative ones require it absent
    assert scalar_norm_sq(grid, c, "V0r", r=1.0) == 0.0
    with pytest.raises(MeanFreeError):
        scalar_norm_sq(grid, c, "V0r", r=-1.0)


def test_scalar_norm_unknown_kind():
    grid = Grid(1, 8)
    with pytest.raises(ValueError):
        scalar_norm_sq(grid, np.zeros(8), "W2")


def test_flux_norms_single_slot():
    grid = Grid(1, 16)
    f = np.zeros((1, 16))
    f[0, 2] = 1.2          # 1.2 sin(3 pi x)
    assert flux_norm(grid, f) == pytest.approx(math.sqrt(0.5) * 1.2, rel=1e-14)
    lam = (3 * np.pi) ** 2
    assert flux_h1_norm_sq(grid, f) == pytest.approx(
        0.5 * (1 + lam) * 1.2**2, rel=1e-14)


def test_phase_space_norms_assemble():
    grid = Grid(1, 32)
    params = Parameters(1.0, 0.5, 0.5, Potential.quartic(1.0))
    theta = _coeffs(32, s1=0.3)
    chi = _coeffs(32, s0=0.2, s2=0.4)
    chi_t = _coeffs(32, s1=-0.1)
    q = np.zeros((1, 32))
    q[0, 0] = 0.25
    s = _state(grid, theta, q, chi, chi_t)

    l1, l2 = LAM1, (2 * np.pi) ** 2
    h_sq = (0.5 * 0.3**2
            + 0.5 * 0.5 * 0.25**2
            + (0.2**2 + 0.5 * (1 + l2) * 0.4**2)
            + 0.5 * 0.1**2 / (1 + l1))
    assert hsigma_norm(s, params) == pytest.approx(math.sqrt(h_sq), rel=1e-13)

    v_sq = (0.5 * (1 + l1) * 0.3**2
            + 0.5 * 0.5 * (1 + l1) * 0.25**2
            + (0.2**2 + 0.5 * 0.4**2) + 0.5 * (l2 * 0.4) ** 2
            + 0.5 * 0.1**2)
    assert vsigma_norm(s, params) == pytest.approx(math.sqrt(v_sq), rel=1e-13)


def test_diff_hsigma():
    grid = Grid(1, 16)
    params = Parameters(1.0, 0.5, 0.5, Potential.quartic(1.0))
    za = np.zeros(16)
    qa = np.zeros((1, 16))
    a = _state(grid, za, qa, za, za)
    theta = _coeffs(16, s1=0.3)
    b = _state(grid, theta, qa.copy(), za.copy(), za.copy())
    assert diff_hsigma(a, a, params) == 0.0
    assert diff_hsigma(a, b, params) == pytest.approx(
        math.sqrt(0.5) * 0.3, rel=1e-13)


# ---------------------------------------------------------------------------
# conserved quantities
# ---------------------------------------------------------------------------

def test_conserved_tuple_and_mean_defect():
    grid = Grid(1, 16)
    eps = 0.5
    params = Parameters(eps, 0.5, 0.0, Potential.quartic(1.0))
    init = InitialData(grid, _coeffs(16, s0=0.3), None,
                       _coeffs(16, s0=-0.1), _coeffs(16, s0=0.2))
    t = 1.3
    exact = 0.2 + eps * 0.2 * math.exp(-t / eps)   # theta_inf = 0.3 - 0.1
    theta = _coeffs(16, s0=exact + 1e-3, s2=0.5)
    chi = _coeffs(16, s0=0.05, s1=0.7)
    chi_t = _coeffs(16, s0=-0.02)
    s = _state(grid, theta, None, chi, chi_t, time=t)
    total, chi_mass, chi_t_mean, defect = conserved(s, params, init)
    assert total == pytest.approx(exact + 1e-3 + 0.05, abs=1e-15)
    assert chi_mass == pytest.approx(0.05, abs=1e-15)
    assert chi_t_mean == pytest.approx(-0.02, abs=1e-15)
    assert defect == pytest.approx(1e-3, rel=1e-10)


# ---------------------------------------------------------------------------
# energy functionals
# ---------------------------------------------------------------------------

def _double_well_means(m, c, a):
    """<Phi(m + c cos)> and <Phi(m + c cos)> - Phi(m) for Phi = y^4/4 - a y^2/2."""
    mean_full = (m**4 + 3 * m**2 * c**2 + 0.375 * c**4) / 4 \
        - a * (m**2 + 0.5 * c**2) / 2
    mean_shifted = mean_full - (m**4 / 4 - a * m**2 / 2)
    return mean_full, mean_shifted


def test_lyapunov_single_mode():
    grid = Grid(1, 64)
    a, eps, alpha, sigma = 1.5, 0.7, 0.4, 0.5
    params = Parameters(eps, alpha, sigma, Potential.quartic(a))
    m, c, d, th, qs = 0.2, 0.5, -0.3, 0.25, 0.4
    q = np.zeros((1, 64))
    q[0, 0] = qs
    s = _state(grid, _coeffs(64, s1=th), q,
               _coeffs(64, s0=m, s1=c), _coeffs(64, s1=d))
    _, phi_shift_mean = _double_well_means(m, c, a)
    expected = 0.5 * (0.5 * th**2
                      + sigma * 0.5 * qs**2
                      + LAM1 * 0.5 * c**2
                      + 2.0 * phi_shift_mean
                      + eps * 0.5 * d**2 / LAM1)
    assert lyapunov_L(s, params) == pytest.approx(expected, rel=1e-12)


def test_lyapunov_kinetic_term_scales_with_inertia():
    grid = Grid(1, 32)
    pot = Potential.quartic(1.0)
    d = 0.3
    s = _state(grid, np.zeros(32), None, np.zeros(32), _coeffs(32, s1=d))
    l1 = lyapunov_L(s, Parameters(1.0, 0.5, 0.0, pot))
    l2 = lyapunov_L(s, Parameters(3.0, 0.5, 0.0, pot))
    assert l2 - l1 == pytest.approx(0.5 * 2.0 * 0.5 * d**2 / LAM1, rel=1e-12)


def test_energy_single_mode():
    grid = Grid(1, 64)
    a = 2.0
    params = Parameters(1.0, 0.5, 0.0, Potential.quartic(a))
    m, c = -0.3, 0.6
    v = _coeffs(64, s1=c)
    _, phi_shift_mean = _double_well_means(m, c, a)
    expected = 0.5 * LAM1 * 0.5 * c**2 + phi_shift_mean
    assert energy_E(grid, v, m, params) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(MeanFreeError):
        energy_E(grid, _coeffs(64, s0=0.1, s1=c), m, params)


def test_psi_sigma_reduces_without_cross_terms():
    grid = Grid(1, 64)
    a, sigma = 1.0, 0.5
    params = Parameters(1.0, 0.5, sigma, Potential.quartic(a))
    m, c, d, th, qs = 0.2, 0.5, -0.3, 0.25, 0.4
    q = np.zeros((1, 64))
    q[0, 0] = qs
    s = _state(grid, _coeffs(64, s1=th), q,
               _coeffs(64, s0=m, s1=c), _coeffs(64, s1=d))
    bare = FunctionalCoefficients(beta=0.0, gamma1=0.0, gamma2=0.0)
    phi_full_mean, _ = _double_well_means(m, c, a)
    expected = (0.5 * th**2 + sigma * 0.5 * qs**2
                + 0.5 * d**2 / LAM1 + LAM1 * 0.5 * c**2
                + 2.0 * phi_full_mean)
    assert psi_sigma(s, params, bare) == pytest.approx(expected, rel=1e-12)


def test_functional_coefficient_defaults():
    pot = Potential.quartic(1.0)
    fc = FunctionalCoefficients()
    # sigma = 0 disables the flux cross-term
    assert fc.resolved_gamma2(Parameters(1.0, 0.5, 0.0, pot)) == 0.0
    # moderate sigma saturates the 1/2 cap
    assert fc.resolved_gamma2(Parameters(1.0, 0.5, 0.5, pot)) == pytest.approx(0.5)
    # small sigma: 0.5 (1 + pi^2) / (1 + 1/sigma)
    got = fc.resolved_gamma2(Parameters(1.0, 0.5, 0.01, pot))
    assert got == pytest.approx(0.5 * (1 + math.pi**2) / 101.0, rel=1e-12)
    assert fc.resolved_c_decay(Parameters(1.0, 0.25, 0.0, pot)) == pytest.approx(50.0)
    assert fc.resolved_c_decay(Parameters(1.0, 0.0, 0.0, pot)) == 0.0
    explicit = FunctionalCoefficients(gamma2=0.125, c_decay=7.0)
    assert explicit.resolved_gamma2(Parameters(1.0, 0.5, 0.5, pot)) == 0.125
    assert explicit.resolved_c_decay(Parameters(1.0, 0.5, 0.5, pot)) == 7.0


def test_proof_functionals_vanish_at_equilibrium():
    grid = Grid(1, 32)
    alpha = 0.5
    params = Parameters(1.0, alpha, 0.0, Potential.quartic(1.0))
    m = 0.4
    t = 2.0
    s = _state(grid, np.zeros(32), None, _coeffs(32, s0=m), np.zeros(32),
               time=t)
    G, M, N = proof_functionals(s, params)
    assert G == 0.0
    assert N == 0.0
    c_dec = 10.0 * (1.0 + 1.0 / alpha)
    assert M == pytest.approx(c_dec * math.exp(-2.0 * t), rel=1e-13)


def test_proof_functionals_single_mode():
    grid = Grid(1, 64)
    a, alpha = 1.5, 0.5
    params = Parameters(1.0, alpha, 0.0, Potential.quartic(a))
    m, c, d = 0.2, 0.5, -0.3
    s = _state(grid, np.zeros(64), None,
               _coeffs(64, s0=m, s1=c), _coeffs(64, s1=d))
    # steady defect f = A chi~ + phi(chi~ + m) with the mean removed:
    f1 = LAM1 * c + 3 * m**2 * c + 0.75 * c**3 - a * c
    f2 = 1.5 * m * c**2
    f3 = 0.25 * c**3
    lam = np.pi**2 * np.array([1.0, 4.0, 9.0])
    G, _, N = proof_functionals(s, params)
    assert G == pytest.approx(0.5 * (d / lam[0]) * (f1 / lam[0]), rel=1e-12)
    mu = nu = 0.05
    fsq = 0.5 * (f1**2 / lam[0] + f2**2 / lam[1] + f3**2 / lam[2])
    # q = -grad(theta) = 0 here, theta~ = 0
    n_sq = 0.5 * d**2 / lam[0] + nu * fsq
    assert N == pytest.approx(math.sqrt(n_sq), rel=1e-12)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def test_csv_schema_frozen():
    assert CSV_COLUMNS == (
        "t", "mass_total", "mass_chi", "mean_chi_t",
        "norm_theta_tilde", "norm_q", "norm_chi_V", "norm_chit_Vdual",
        "norm_Achi", "L", "Psi_sigma", "E", "G", "M", "N",
        "diss_q_int", "diss_chit_int",
    )
    assert len(CSV_COLUMNS) == 17


def test_record_row_order():
    values = {name: float(i + 1) for i, name in enumerate(CSV_COLUMNS)}
    rec = DiagnosticsRecord(**values)
    assert rec.row() == tuple(float(i + 1) for i in range(17))


def test_collector_dissipation_integrals():
    grid = Grid(1, 32)
    alpha = 0.4
    params = Parameters(1.0, alpha, 0.5, Potential.quartic(1.0))
    init = InitialData(grid, np.zeros(32), None, np.zeros(32), np.zeros(32))
    coll = DiagnosticsCollector(params, init)

    q = np.zeros((1, 32))
    q[0, 0] = 0.6
    d = -0.3
    s = _state(grid, np.zeros(32), q, np.zeros(32), _coeffs(32, s1=d))
    coll.dissipation_increment(s, 0.1)
    coll.dissipation_increment(s, 0.1)

    q_int = 2 * 0.1 * 0.5 * 0.6**2
    chit_int = 2 * 0.1 * (0.5 * d**2 / LAM1 + alpha * 0.5 * d**2)
    assert coll.diss_q == pytest.approx(q_int, rel=1e-13)
    assert coll.diss_chit == pytest.approx(chit_int, rel=1e-13)

    rec = coll.record(s)
    assert rec.diss_q_int == coll.diss_q
    assert rec.diss_chit_int == coll.diss_chit
    assert rec.norm_q == pytest.approx(math.sqrt(0.5) * 0.6, rel=1e-13)
    assert rec.mass_total == 0.0
    assert rec.L == pytest.approx(lyapunov_L(s, params), rel=1e-14)


def test_collector_record_matches_direct_calls():
    grid = Grid(1, 32)
    params = Parameters(0.8, 0.5, 0.0, Potential.quartic(1.0))
    init = InitialData(grid, _coeffs(32, s0=0.1), None,
                       _coeffs(32, s0=0.2), np.zeros(32))
    coll = DiagnosticsCollector(params, init)
    s = _state(grid, _coeffs(32, s0=0.1, s1=0.3), None,
               _coeffs(32, s0=0.2, s2=0.4), _coeffs(32, s1=-0.05),
               time=0.7)
    rec = coll.record(s)
    assert rec.t == 0.7
    assert rec.mass_total == pytest.approx(0.1 + 0.2, abs=1e-15)
    assert rec.mass_chi == pytest.approx(0.2, abs=1e-15)
    assert rec.norm_theta_tilde == pytest.approx(math.sqrt(0.5) * 0.3, rel=1e-13)
    assert rec.norm_chi_V == pytest.approx(norm(grid, s.chi, "V"), rel=1e-14)
    assert rec.norm_chit_Vdual == pytest.approx(
        norm(grid, s.chi_t, "Vdual"), rel=1e-14)
    lam2 = (2 * np.pi) ** 2
    assert rec.norm_Achi == pytest.approx(
        math.sqrt(0.5) * lam2 * 0.4, rel=1e-13)
    # sigma = 0: norm_q reports |grad theta|
    assert rec.norm_q == pytest.approx(math.sqrt(0.5) * np.pi * 0.3, rel=1e-13)
    assert rec.Psi_sigma == pytest.approx(psi_sigma(s, params), rel=1e-13)
