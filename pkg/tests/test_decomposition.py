"""Tests for the decaying/controlled trajectory split, the shift selection
rule, the decay fit, the coercivity certificate, and the discrete curl."""

import math

import numpy as np
import pytest

from chic.decomposition import (
    choose_ell,
    decay_check,
    flux_curl_norm,
    split_certificate,
    split_integrate,
)
from chic.dynamics import SchemeConfig, integrate
from chic.functionals import diff_hsigma
from chic.model import InitialData, Parameters, Potential
from chic.spectral import Grid, gradient


def _smooth_data(grid, rng, amp=0.1, means=(0.05, -0.1, 0.02)):
    def field(mean):
        c = amp * rng.standard_normal(grid.shape) / (1.0 + grid.lam)
        c[(0,) * grid.dim] = mean
        return c

    return InitialData(grid, field(means[0]), None, field(means[1]),
                       field(means[2]))


# ---------------------------------------------------------------------------
# shift selection
# ---------------------------------------------------------------------------

def test_choose_ell_arithmetic():
    # quartic(1) over [-1, 1]: slope bound 1, sup phi' = 2, so ell = 4
    assert choose_ell(Potential.quartic(1.0), (-1.0, 1.0)) == pytest.approx(4.0)
    # a vanishing order parameter: sup phi' = phi'(0) = -1 is discarded
    assert choose_ell(Potential.quartic(1.0),
                      (-1e-9, 1e-9)) == pytest.approx(2.0)
    assert choose_ell(Potential.quartic(2.0), (-2.0, 1.0)) == pytest.approx(
        4.0 + (3 * 4 - 2))


def test_choose_ell_validation():
    with pytest.raises(ValueError):
        choose_ell(Potential.polynomial([0.0, 0.0, 1.0]))  # unbounded slope
    with pytest.raises(ValueError):
        choose_ell(Potential.quartic(1.0), (1.0, -1.0))


# ---------------------------------------------------------------------------
# the split run
# ---------------------------------------------------------------------------

def test_split_recombines_and_decays():
    grid = Grid(1, 32)
    rng = np.random.default_rng(17)
    init = _smooth_data(grid, rng)
    params = Parameters(1.0, 0.5, 0.5, Potential.quartic(1.0))
    cfg = SchemeConfig(dt=0.01, t_end=2.0, stride=4)
    run = split_integrate(init, cfg, params, keep_states=True)

    assert run.ell >= params.potential.c4
    assert run.recombination_error < 1e-10
    # the full lane of the co-run is the production scheme itself
    ref = integrate(init, SchemeConfig(dt=0.01, t_end=2.0, stride=4,
                                       stabilization=run.ell_s), params)
    assert diff_hsigma(run.full_states[-1], ref.states[-1], params) < 1e-10

    rate, r2, n_used = decay_check(run.times, run.decay_norms)
    assert rate > 0.0
    assert r2 >= 0.95
    assert n_used >= 10

    # controlled part stays bounded (compactness proxy)
    for series in (run.control_grad_theta, run.control_chi_t,
                   run.control_Achi):
        assert np.all(np.isfinite(series))
        tail = series[len(series) // 2:].max()
        peak = max(series.max(), 1e-30)
        assert tail <= peak  # no late growth


def test_split_initial_conditions_mean_free_data():
    grid = Grid(1, 16)
    rng = np.random.default_rng(3)
    init = _smooth_data(grid, rng, means=(0.0, 0.0, 0.0))
    params = Parameters(1.0, 0.5, 0.5, Potential.quartic(1.0))
    run = split_integrate(init, SchemeConfig(dt=0.02, t_end=0.1, stride=1),
                          params, keep_states=True)
    # controlled part starts from the zero constant state
    assert run.control_norms[0] == 0.0
    zc0 = run.control_states[0]
    assert np.abs(zc0.theta).max() == 0.0
    assert np.abs(zc0.chi).max() == 0.0
    # decaying part carries the full data
    assert run.decay_norms[0] == pytest.approx(run.full_norms[0], rel=1e-14)


def test_split_instant_flux_limit():
    grid = Grid(1, 16)
    rng = np.random.default_rng(23)
    init = _smooth_data(grid, rng)
    params = Parameters(1.0, 0.5, 0.0, Potential.quartic(1.0))
    run = split_integrate(init, SchemeConfig(dt=0.01, t_end=1.0, stride=5),
                          params)
    assert run.recombination_error < 1e-10
    rate, r2, _ = decay_check(run.times, run.decay_norms)
    assert rate > 0.0
    assert r2 >= 0.95


def test_split_validation():
    grid = Grid(1, 16)
    init = InitialData(grid, np.zeros(16), None, np.zeros(16), np.zeros(16))
    no_viscosity = Parameters(1.0, 0.0, 0.0, Potential.quartic(1.0))
    with pytest.raises(ValueError):
        split_integrate(init, SchemeConfig(dt=0.01, t_end=0.1), no_viscosity)
    params = Parameters(1.0, 0.5, 0.0, Potential.quartic(1.0))
    with pytest.raises(ValueError):
        split_integrate(init, SchemeConfig(dt=0.01, t_end=0.1), params,
                        ell=0.5)


# ---------------------------------------------------------------------------
# decay fit
# ---------------------------------------------------------------------------

def test_decay_check_synthetic_exponential():
    t = np.linspace(0.0, 10.0, 40)
    rate, r2, n_used = decay_check(t, 5.0 * np.exp(-0.3 * t))
    assert rate == pytest.approx(0.3, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)
    assert n_used == 32  # 20% transient skip


def test_decay_check_constant_series():
    t = np.linspace(0.0, 5.0, 20)
    rate, r2, _ = decay_check(t, np.full(20, 2.5))
    assert rate == pytest.approx(0.0, abs=1e-14)
    assert r2 == 1.0


def test_decay_check_floor_and_validation():
    t = np.linspace(0.0, 5.0, 20)
    v = 5.0 * np.exp(-0.3 * t)
    v[-8:] = 1e-16          # at the rounding floor: excluded from the fit
    rate, _, n_used = decay_check(t, v)
    assert rate == pytest.approx(0.3, abs=1e-10)
    assert n_used == 8
    with pytest.raises(ValueError):
        decay_check(t[:3], v[:3])
    with pytest.raises(ValueError):
        decay_check(t, np.full(20, 1e-16))


# ---------------------------------------------------------------------------
# coercivity certificate
# ---------------------------------------------------------------------------

def test_certificate_nonnegative_with_chosen_ell():
    grid = Grid(1, 32)
    rng = np.random.default_rng(17)
    init = _smooth_data(grid, rng)
    params = Parameters(1.0, 0.5, 0.5, Potential.quartic(1.0))
    run = split_integrate(init, SchemeConfig(dt=0.01, t_end=1.0, stride=10),
                          params, keep_states=True)
    snaps = [s.chi for s in run.full_states]
    worst = split_certificate(grid, params.potential, run.ell, snaps,
                              n_fields=20, seed=7)
    assert worst >= -1e-10


def test_certificate_shifts_exactly_with_ell():
    # test fields are L2-normalized, so raising ell by delta raises every
    # sampled value (hence the minimum) by exactly delta
    grid = Grid(1, 16)
    pot = Potential.quartic(1.0)
    chi = np.zeros(16)
    chi[0], chi[1] = 0.3, 0.5
    base = split_certificate(grid, pot, 4.0, [chi], n_fields=10, seed=1)
    shifted = split_certificate(grid, pot, 6.5, [chi], n_fields=10, seed=1)
    assert shifted - base == pytest.approx(2.5, abs=1e-12)


# ---------------------------------------------------------------------------
# discrete curl
# ---------------------------------------------------------------------------

def test_curl_of_gradient_vanishes():
    grid = Grid(2, 16)
    rng = np.random.default_rng(5)
    scal = rng.standard_normal(grid.shape) / (1.0 + grid.lam)
    f = gradient(grid, scal)
    assert flux_curl_norm(grid, f) < 1e-13


def test_curl_single_mode_analytic():
    # f = (sin(pi x) cos(pi y), 0): curl = pi sin(pi x) sin(pi y), whose
    # L2 norm is pi/2
    grid = Grid(2, 8)
    f = np.zeros(grid.flux_shape)
    f[0][0, 1] = 1.0
    assert flux_curl_norm(grid, f) == pytest.approx(np.pi / 2, rel=1e-13)


def test_curl_zero_in_1d():
    grid = Grid(1, 8)
    f = np.ones((1, 8))
    assert flux_curl_norm(grid, f) == 0.0


def test_controlled_flux_stays_curl_free_2d():
    grid = Grid(2, 8)
    rng = np.random.default_rng(9)
    init = _smooth_data(grid, rng, amp=0.05)
    params = Parameters(1.0, 0.5, 0.5, Potential.quartic(1.0))
    run = split_integrate(init, SchemeConfig(dt=0.02, t_end=0.5, stride=5),
                          params)
    assert run.curl_controlled <= 1e-10
