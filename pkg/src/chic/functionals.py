"""Norms, conserved quantities, and the monitored energy functionals.

Everything is evaluated in coefficient space.  Conventions:

- H is the plain L2 norm; V = H^1; W pairs L2 with the Laplacian image.
- "Vdual" is the duality surrogate ||(I + A)^{-1/2} v|| usable for any
  field; for mean-free fields the sharper mean-free dual norm
  ||A0^{-1/2} v|| (kind "V0r" with r = -1; exponent r means the squared
  norm carries lam**r) is the one the energy identities use.
- A tilde always means the mean-free part of a field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import InitialData, Parameters, State, shift_potential
from .spectral import (
    Grid,
    MeanFreeError,
    apply_operator,
    flux_inner,
    gradient,
    mean_and_deflate,
    nonlinear_coeffs,
    oversampled_mean,
    scalar_inner,
)

__all__ = [
    "FunctionalCoefficients",
    "DiagnosticsRecord",
    "DiagnosticsCollector",
    "norm",
    "flux_norm",
    "flux_h1_norm_sq",
    "hsigma_norm",
    "vsigma_norm",
    "conserved",
    "lyapunov_L",
    "psi_sigma",
    "energy_E",
    "proof_functionals",
    "CSV_COLUMNS",
]


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def _sq(x: float) -> float:
    return float(max(0.0, x))


def scalar_norm_sq(grid: Grid, c: np.ndarray, kind: str, r: float = None) -> float:
    """Squared norm of a scalar coefficient array.

    kind in {"H", "V", "Vdual", "V0r"}; "V0r" needs the exponent r and a
    mean-free input when r < 0.
    """
    c = np.asarray(c)
    if kind == "H":
        return _sq(np.sum(grid.wcos * c * c))
    if kind == "V":
        return _sq(np.sum(grid.wcos * (1.0 + grid.lam) * c * c))
    if kind == "Vdual":
        return _sq(np.sum(grid.wcos * c * c / (1.0 + grid.lam)))
    if kind == "V0r":
        if r is None:
            raise ValueError("V0r needs the exponent r")
        zero = (0,) * grid.dim
        if r < 0 and abs(c[zero]) > 1e-12 * max(1.0, float(np.abs(c).max())):
            raise MeanFreeError("V0r with negative exponent needs a mean-free field")
        mask = grid.lam > 0
        return _sq(np.sum((grid.wcos * c * c)[mask] * grid.lam[mask] ** r))
    raise ValueError(f"unknown scalar norm kind {kind!r}")


def norm(grid: Grid, c: np.ndarray, kind: str, r: float = None) -> float:
    return math.sqrt(scalar_norm_sq(grid, c, kind, r))


def flux_norm_sq(grid: Grid, f: np.ndarray) -> float:
    return _sq(flux_inner(grid, f, f))


def flux_norm(grid: Grid, f: np.ndarray) -> float:
    return math.sqrt(flux_norm_sq(grid, f))


def flux_h1_norm_sq(grid: Grid, f: np.ndarray) -> float:
    """Squared H^1 norm of a flux field (componentwise gradients)."""
    s = 0.0
    for i in range(grid.dim):
        fi = np.asarray(f[i])
        s += float(np.sum(grid.wflux[i] * (1.0 + grid.lam_flux[i]) * fi * fi))
    return _sq(s)


def hsigma_norm(state: State, params: Parameters) -> float:
    """Phase-space norm: ||theta||^2 + sigma||q||^2 + ||chi||_V^2 + ||chi_t||_Vdual^2."""
    g = state.grid
    s = scalar_norm_sq(g, state.theta, "H")
    if params.sigma > 0 and state.q is not None:
        s += params.sigma * flux_norm_sq(g, state.q)
    s += scalar_norm_sq(g, state.chi, "V")
    s += scalar_norm_sq(g, state.chi_t, "Vdual")
    return math.sqrt(s)


def vsigma_norm(state: State, params: Parameters) -> float:
    """Smoother phase-space norm: H^1 on theta/q, W on chi, L2 on chi_t."""
    g = state.grid
    s = scalar_norm_sq(g, state.theta, "V")
    if params.sigma > 0 and state.q is not None:
        s += params.sigma * flux_h1_norm_sq(g, state.q)
    achi = apply_operator(g, state.chi, "A")
    s += scalar_norm_sq(g, state.chi, "H") + scalar_norm_sq(g, achi, "H")
    s += scalar_norm_sq(g, state.chi_t, "H")
    return math.sqrt(s)


def diff_hsigma(a: State, b: State, params: Parameters) -> float:
    """Phase-space distance between two states on the same grid."""
    d = State(a.grid, a.time, a.theta - b.theta,
              None if a.q is None else a.q - b.q,
              a.chi - b.chi, a.chi_t - b.chi_t)
    return hsigma_norm(d, params)


# ---------------------------------------------------------------------------
# conserved quantities and mean identities
# ---------------------------------------------------------------------------

def conserved(state: State, params: Parameters, init: InitialData):
    """(total mass, order-parameter mass, <chi_t>, temperature-mean defect).

    The defect is |<theta>(t) - theta_inf - eps <chi1> e^{-t/eps}| with
    theta_inf = <theta0 - eps chi1>; it vanishes identically for the exact
    mean dynamics.
    """
    z = (0,) * state.grid.dim
    total = float(state.theta[z] + state.chi[z])
    chi_mass = float(state.chi[z])
    chi_t_mean = float(state.chi_t[z])
    theta_inf = init.theta_limit_mean(params)
    chi1_mean = float(init.chi1[z])
    expected = theta_inf + params.epsilon * chi1_mean * math.exp(-state.time / params.epsilon)
    defect = abs(float(state.theta[z]) - expected)
    return total, chi_mass, chi_t_mean, defect


def _conserved_mass(state: State, params: Parameters) -> float:
    """<chi> + eps <chi_t>: constant along trajectories; equals the
    long-time order-parameter mean the shifted potential is centred at."""
    z = (0,) * state.grid.dim
    return float(state.chi[z] + params.epsilon * state.chi_t[z])


# ---------------------------------------------------------------------------
# energy functionals
# ---------------------------------------------------------------------------

def lyapunov_L(state: State, params: Parameters) -> float:
    """Dissipated free energy of the deflated system.

    L = 1/2 ( ||theta~||^2 + sigma ||q||^2 + ||grad chi~||^2
              + 2 <Phi~(chi~), 1> + eps ||chi~_t||^2_{V0^{-1}} )

    with Phi~ the antiderivative of the mass-recentred well.  With a
    mean-free chi_t datum its time derivative balances the dissipation
    channels exactly; the inertial weight eps multiplies the kinetic term
    so the balance closes for every eps.
    """
    g = state.grid
    m = _conserved_mass(state, params)
    _, th = mean_and_deflate(g, state.theta)
    _, cht = mean_and_deflate(g, state.chi_t)
    _, ch = mean_and_deflate(g, state.chi)

    val = scalar_norm_sq(g, th, "H")
    if params.sigma > 0 and state.q is not None:
        val += params.sigma * flux_norm_sq(g, state.q)
    val += scalar_norm_sq(g, ch, "V0r", r=1)
    shifted = shift_potential(params.potential, m)
    val += 2.0 * oversampled_mean(g, shifted.Phi, ch)
    val += params.epsilon * scalar_norm_sq(g, cht, "V0r", r=-1)
    return 0.5 * val


def energy_E(grid: Grid, v: np.ndarray, m: float, params: Parameters) -> float:
    """Interface energy of a mean-free profile about mass m:
    E(v) = 1/2 ||grad v||^2 + <Phi~(v), 1>."""
    mean, _ = mean_and_deflate(grid, v)
    if abs(mean) > 1e-10 * max(1.0, float(np.abs(v).max())):
        raise MeanFreeError("energy_E expects a mean-free profile")
    shifted = shift_potential(params.potential, m)
    grad_sq = scalar_norm_sq(grid, v, "V0r", r=1)
    return 0.5 * grad_sq + oversampled_mean(grid, shifted.Phi, v)


@dataclass(frozen=True)
class FunctionalCoefficients:
    """Weights of the auxiliary functionals.  None picks the defaults:
    beta = 0.05, gamma1 = 0.01, gamma2 = min(1/2, 1/2 / (kappa2 (1+1/sigma)))
    with kappa2 = 1/(1+pi^2), mu = nu = 0.05, c_decay = 10 (1 + 1/alpha)."""

    beta: float = 0.05
    gamma1: float = 0.01
    gamma2: Optional[float] = None
    mu: float = 0.05
    nu: float = 0.05
    c_decay: Optional[float] = None

    def resolved_gamma2(self, params: Parameters) -> float:
        if self.gamma2 is not None:
            return self.gamma2
        if params.sigma == 0:
            return 0.0
        kappa2 = 1.0 / (1.0 + math.pi ** 2)
        return min(0.5, 0.5 / (kappa2 * (1.0 + 1.0 / params.sigma)))

    def resolved_c_decay(self, params: Parameters) -> float:
        if self.c_decay is not None:
            return self.c_decay
        if params.alpha <= 0:
            return 0.0
        return 10.0 * (1.0 + 1.0 / params.alpha)


def _flux_theta_cross(grid: Grid, q, theta_tilde) -> float:
    """<q, grad A0^{-1} theta~> evaluated spectrally."""
    lifted = apply_operator(grid, theta_tilde, "A0_pow", r=-2)
    return flux_inner(grid, q, gradient(grid, lifted))


def psi_sigma(state: State, params: Parameters,
              coeffs: FunctionalCoefficients = FunctionalCoefficients()) -> float:
    """Stabilized energy with the coupling cross-terms.

    Reduces, for beta = gamma1 = gamma2 = 0, to
    ||theta~||^2 + sigma||q||^2 + ||chi~_t||^2_{V0^{-1}} + ||grad chi~||^2
    + 2 <Phi(chi), 1>.  Monitored, not asserted, except through the
    verification report.
    """
    g = state.grid
    beta = coeffs.beta
    g1 = coeffs.gamma1
    g2 = coeffs.resolved_gamma2(params)

    _, th = mean_and_deflate(g, state.theta)
    _, ch = mean_and_deflate(g, state.chi)
    _, cht = mean_and_deflate(g, state.chi_t)

    val = scalar_norm_sq(g, th, "H")
    if params.sigma > 0 and state.q is not None:
        val += params.sigma * flux_norm_sq(g, state.q)
    val += scalar_norm_sq(g, cht, "V0r", r=-1)
    val += scalar_norm_sq(g, ch, "V0r", r=1)

    lift_t = apply_operator(g, cht, "A0_pow", r=-1)
    lift_c = apply_operator(g, ch, "A0_pow", r=-1)
    val += 2.0 * beta * scalar_inner(g, lift_t, lift_c)
    val += beta * scalar_norm_sq(g, ch, "V0r", r=-1)
    val += params.alpha * beta * scalar_norm_sq(g, ch, "H")

    val += 2.0 * oversampled_mean(g, params.potential.Phi, state.chi)
    val += g1 * (2.0 * scalar_inner(g, cht, ch)
                 + scalar_norm_sq(g, ch, "H")
                 + params.alpha * scalar_norm_sq(g, ch, "V0r", r=1))
    if params.sigma > 0 and state.q is not None and g2 != 0.0:
        val -= g2 * _flux_theta_cross(g, state.q, th)
    return float(val)


def _steady_defect_coeffs(state: State, params: Parameters):
    """Coefficients of A0 chi~ + phi~(chi~) - <phi~(chi~)> (mean-free)."""
    g = state.grid
    m = _conserved_mass(state, params)
    _, ch = mean_and_deflate(g, state.chi)
    shifted = shift_potential(params.potential, m)
    f = apply_operator(g, ch, "A") + nonlinear_coeffs(g, ch, shifted.phi)
    _, f = mean_and_deflate(g, f)
    return f, ch, m


def proof_functionals(state: State, params: Parameters,
                      coeffs: FunctionalCoefficients = FunctionalCoefficients(),
                      e_ref: float = 0.0):
    """The convergence-proof triple (G, M, N).

    G couples the lifted kinetic field to the lifted steady-state defect;
    M is the damped total energy whose discrete increments are checked to
    be nonpositive after the transient (e_ref subtracts the limit
    interface energy when the caller knows it); N^2 collects the
    dissipation channels and vanishes exactly at equilibria.
    """
    g = state.grid
    q = state.flux()
    f, ch, m = _steady_defect_coeffs(state, params)
    _, th = mean_and_deflate(g, state.theta)
    _, cht = mean_and_deflate(g, state.chi_t)

    lift_t = apply_operator(g, cht, "A0_pow", r=-2)
    lift_f = apply_operator(g, f, "A0_pow", r=-2)
    G = scalar_inner(g, lift_t, lift_f)

    mu, nu = coeffs.mu, coeffs.nu
    c_dec = coeffs.resolved_c_decay(params)
    e_val = energy_E(g, ch, m, params)
    M = 0.5 * (scalar_norm_sq(g, th, "H") + flux_norm_sq(g, q)
               + scalar_norm_sq(g, cht, "V0r", r=-1))
    M += e_val - e_ref
    M -= mu * _flux_theta_cross(g, q, th)
    M += nu * G
    M += c_dec * math.exp(-2.0 * state.time)

    n_sq = flux_norm_sq(g, q) + scalar_norm_sq(g, cht, "V0r", r=-1) \
        + mu * scalar_norm_sq(g, th, "H") + nu * scalar_norm_sq(g, f, "V0r", r=-1)
    return float(G), float(M), math.sqrt(_sq(n_sq))


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "t", "mass_total", "mass_chi", "mean_chi_t",
    "norm_theta_tilde", "norm_q", "norm_chi_V", "norm_chit_Vdual",
    "norm_Achi", "L", "Psi_sigma", "E", "G", "M", "N",
    "diss_q_int", "diss_chit_int",
)


@dataclass
class DiagnosticsRecord:
    """One row of the diagnostics series (the CSV schema, in order)."""

    t: float
    mass_total: float
    mass_chi: float
    mean_chi_t: float
    norm_theta_tilde: float
    norm_q: float
    norm_chi_V: float
    norm_chit_Vdual: float
    norm_Achi: float
    L: float
    Psi_sigma: float
    E: float
    G: float
    M: float
    N: float
    diss_q_int: float
    diss_chit_int: float

    def row(self):
        return tuple(getattr(self, name) for name in CSV_COLUMNS)


class DiagnosticsCollector:
    """Accumulates the dissipation integrals every step and materializes
    DiagnosticsRecord rows at snapshot times.

    The flux integral is int ||q||^2 dt; the kinetic integral is
    int ( ||chi~_t||^2_{V0^{-1}} + alpha ||chi~_t||^2 ) dt.  Both use the
    right-endpoint rule, matching the implicit side of the stepper.
    """

    def __init__(self, params: Parameters, init: InitialData,
                 coeffs: FunctionalCoefficients = FunctionalCoefficients()):
        self.params = params
        self.init = init
        self.coeffs = coeffs
        self.diss_q = 0.0
        self.diss_chit = 0.0
        self.diss_theta = 0.0

    def dissipation_increment(self, state: State, dt: float) -> None:
        g = state.grid
        q = state.flux()
        _, cht = mean_and_deflate(g, state.chi_t)
        _, th = mean_and_deflate(g, state.theta)
        self.diss_q += dt * flux_norm_sq(g, q)
        self.diss_chit += dt * (scalar_norm_sq(g, cht, "V0r", r=-1)
                                + self.params.alpha * scalar_norm_sq(g, cht, "H"))
        self.diss_theta += dt * scalar_norm_sq(g, th, "H")

    def record(self, state: State) -> DiagnosticsRecord:
        g = state.grid
        p = self.params
        total, chi_mass, chi_t_mean, _ = conserved(state, p, self.init)
        _, th = mean_and_deflate(g, state.theta)
        _, ch = mean_and_deflate(g, state.chi)
        q = state.flux()
        achi = apply_operator(g, state.chi, "A")
        m = _conserved_mass(state, p)
        G, M, N = proof_functionals(state, p, self.coeffs)
        return DiagnosticsRecord(
            t=state.time,
            mass_total=total,
            mass_chi=chi_mass,
            mean_chi_t=chi_t_mean,
            norm_theta_tilde=norm(g, th, "H"),
            norm_q=flux_norm(g, q),
            norm_chi_V=norm(g, state.chi, "V"),
            norm_chit_Vdual=norm(g, state.chi_t, "Vdual"),
            norm_Achi=norm(g, achi, "H"),
            L=lyapunov_L(state, p),
            Psi_sigma=psi_sigma(state, p, self.coeffs),
            E=energy_E(g, ch, m, p),
            G=G, M=M, N=N,
            diss_q_int=self.diss_q,
            diss_chit_int=self.diss_chit,
        )
