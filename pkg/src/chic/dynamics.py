"""Time integration: first-order IMEX stepping plus reference oracles.

The scheme treats the full linear coupling implicitly, mode by mode, and
the shifted nonlinearity phi(chi) - ell_s chi explicitly with dealiasing.
Per cosine mode k the implicit update is one small dense linear solve
(size d+3 when the flux relaxes, size 3 when sigma = 0 and the flux is
eliminated); the solve is carried out by its exact block elimination,
which is the same linear algebra vectorized over all modes.  The mean
(k = 0) block is advanced by its exact ODE solution, so the mass
identities hold to machine precision by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.linalg import expm

from .functionals import (
    DiagnosticsCollector,
    FunctionalCoefficients,
    hsigma_norm,
)
from .model import InitialData, Parameters, State, StabilityError
from .spectral import Grid, divergence, gradient, nonlinear_coeffs

__all__ = [
    "SchemeConfig",
    "BlowupError",
    "ImexStepper",
    "step_imex",
    "integrate",
    "Trajectory",
    "step_oracle",
    "integrate_oracle",
    "linear_mode_matrix",
    "linear_mode_solution",
    "linear_trajectory",
]


class BlowupError(RuntimeError):
    """The discrete solution left the admissible ball."""

    def __init__(self, time: float, step: int, value: float):
        super().__init__(
            f"solution norm {value:.3e} exceeded the blow-up threshold "
            f"at t = {time:.6g} (step {step})"
        )
        self.time = time
        self.step = step
        self.value = value


@dataclass(frozen=True)
class SchemeConfig:
    """Stepping configuration.

    dt : step size; None picks min(1e-2, 1/sqrt(1 + max lam)).
    t_end : final time (rounded to a whole number of steps).
    stride : snapshot/diagnostics cadence in steps.
    stabilization : explicit-term shift ell_s; None means the potential's
        slope bound c4.  Must be >= c4 and finite.
    blowup_threshold : phase-space norm above which integration aborts.
    """

    dt: Optional[float] = None
    t_end: float = 1.0
    stride: int = 1
    stabilization: Optional[float] = None
    blowup_threshold: float = 1e8

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def resolved_dt(self, grid: Grid) -> float:
        if self.dt is not None:
            return self.dt
        return min(1e-2, 1.0 / math.sqrt(1.0 + float(grid.lam.max())))

    def resolved_shift(self, params: Parameters) -> float:
        c4 = params.potential.c4
        if self.stabilization is None:
            if not np.isfinite(c4):
                raise StabilityError(
                    "potential has no finite slope bound; set stabilization explicitly"
                )
            return float(c4)
        if np.isfinite(c4) and self.stabilization < c4 - 1e-12:
            raise StabilityError(
                f"stabilization {self.stabilization} is below the slope bound {c4}"
            )
        return float(self.stabilization)


class ImexStepper:
    """Reusable stepper with precomputed per-mode solve coefficients."""

    def __init__(self, grid: Grid, params: Parameters, cfg: SchemeConfig):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        self.dt = cfg.resolved_dt(grid)
        self.ell_s = cfg.resolved_shift(params)

        dt = self.dt
        lam = grid.lam
        eps, sig, alpha = params.epsilon, params.sigma, params.alpha
        kc = 1.0 if params.coupling else 0.0
        if sig > 0:
            self._a11 = 1.0 + dt * dt * lam / (sig + dt)
            self._qfac = sig / (sig + dt)
            self._gfac = dt / (sig + dt)
        else:
            self._a11 = 1.0 + dt * lam
        self._a22 = eps + dt * (1.0 + alpha * lam) + dt * dt * lam * (lam + self.ell_s)
        self._det = self._a11 * self._a22 + kc * dt * dt * lam
        self._kc = kc
        self._decay = math.exp(-dt / eps)
        self._zero = (0,) * grid.dim

    def step(self, state: State, step_index: int = 0) -> State:
        expl = nonlinear_coeffs(self.grid, state.chi, self.params.potential.phi) \
            - self.ell_s * state.chi
        return self.step_with_explicit(state, expl, step_index)

    def step_with_explicit(self, state: State, expl: np.ndarray,
                           step_index: int = 0) -> State:
        """Advance one step with a caller-supplied explicit chemical term.

        ``expl`` replaces phi(chi^n) - ell_s chi^n in the update; the
        implicit operator is untouched.  This is the hook the phase-split
        co-integration uses so that its subsystems share the exact linear
        algebra of the full system.
        """
        g, p, dt = self.grid, self.params, self.dt
        lam = g.lam

        if p.sigma > 0:
            div_q = divergence(g, state.q)
            r1 = state.theta - dt * self._qfac * div_q
        else:
            r1 = state.theta
        r2 = p.epsilon * state.chi_t - dt * lam * expl \
            - dt * lam * (lam + self.ell_s) * state.chi

        theta_new = (self._a22 * r1 - dt * r2) / self._det
        v_new = (self._a11 * r2 + self._kc * dt * lam * r1) / self._det
        chi_new = state.chi + dt * v_new

        q_new = None
        if p.sigma > 0:
            q_new = self._qfac * state.q - self._gfac * gradient(g, theta_new)

        # exact mean-block update: d<theta+chi>/dt = 0, eps <chi_t>' = -<chi_t>
        z = self._zero
        chit0 = state.chi_t[z]
        dmean = p.epsilon * (1.0 - self._decay) * chit0
        v_new[z] = chit0 * self._decay
        chi_new[z] = state.chi[z] + dmean
        theta_new[z] = state.theta[z] - dmean

        new = State(g, state.time + dt, theta_new, q_new, chi_new, v_new)
        nrm = hsigma_norm(new, p)
        if not np.isfinite(nrm) or nrm > self.cfg.blowup_threshold:
            raise BlowupError(new.time, step_index, nrm)
        return new


def step_imex(state: State, cfg: SchemeConfig, params: Parameters) -> State:
    """Single IMEX step (convenience wrapper around ImexStepper)."""
    return ImexStepper(state.grid, params, cfg).step(state)


@dataclass
class Trajectory:
    """Snapshots and diagnostics of one run."""

    grid: Grid
    dt: float
    stride: int
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    records: list = field(default_factory=list)

    def series(self, name: str) -> np.ndarray:
        """Column of the diagnostics table as an array."""
        return np.array([getattr(r, name) for r in self.records])


def integrate(init: InitialData, cfg: SchemeConfig, params: Parameters,
              observers: Iterable[Callable[[State], None]] = (),
              func_coeffs: FunctionalCoefficients = FunctionalCoefficients(),
              ) -> Trajectory:
    """Run the IMEX scheme from t = 0 to t_end, collecting diagnostics.

    Dissipation integrals accumulate every step (right-endpoint rule);
    snapshots, diagnostics rows, and observer calls happen at step 0,
    every ``stride`` steps, and at the final step.
    """
    grid = init.grid
    stepper = ImexStepper(grid, params, cfg)
    dt = stepper.dt
    n_steps = max(1, int(round(cfg.t_end / dt)))
    collector = DiagnosticsCollector(params, init, func_coeffs)
    traj = Trajectory(grid, dt, cfg.stride)

    state = init.state(params)

    def snapshot(s: State):
        traj.times.append(s.time)
        traj.states.append(s.copy())
        traj.records.append(collector.record(s))
        for obs in observers:
            obs(s.copy())

    snapshot(state)
    for i in range(1, n_steps + 1):
        state = stepper.step(state, i)
        state.time = i * dt  # keep snapshot times free of accumulation drift
        collector.dissipation_increment(state, dt)
        if i % cfg.stride == 0 or i == n_steps:
            snapshot(state)
    return traj


# ---------------------------------------------------------------------------
# classical RK4 reference integrator
# ---------------------------------------------------------------------------

def _rhs(state: State, params: Parameters):
    g = state.grid
    p = params
    lam = g.lam
    kc = 1.0 if p.coupling else 0.0
    phi_c = nonlinear_coeffs(g, state.chi, p.potential.phi)
    v_dot = -(state.chi_t
              + lam * (lam * state.chi + p.alpha * state.chi_t - kc * state.theta)
              + lam * phi_c) / p.epsilon
    chi_dot = state.chi_t
    if p.sigma > 0:
        theta_dot = -state.chi_t - divergence(g, state.q)
        q_dot = (-state.q - gradient(g, state.theta)) / p.sigma
    else:
        theta_dot = -state.chi_t - lam * state.theta
        q_dot = None
    return theta_dot, q_dot, chi_dot, v_dot


def step_oracle(state: State, dt: float, params: Parameters) -> State:
    """One classical fourth-order Runge-Kutta step of the full semi-discrete
    system (explicit; the caller owns the stability constraint)."""

    def axpy(s: State, k, h: float) -> State:
        return State(s.grid, s.time, s.theta + h * k[0],
                     None if s.q is None else s.q + h * k[1],
                     s.chi + h * k[2], s.chi_t + h * k[3])

    k1 = _rhs(state, params)
    k2 = _rhs(axpy(state, k1, dt / 2), params)
    k3 = _rhs(axpy(state, k2, dt / 2), params)
    k4 = _rhs(axpy(state, k3, dt), params)
    g = state.grid
    theta = state.theta + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    q = None
    if state.q is not None:
        q = state.q + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    chi = state.chi + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    chi_t = state.chi_t + dt / 6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    return State(g, state.time + dt, theta, q, chi, chi_t)


def integrate_oracle(init: InitialData, params: Parameters, t_end: float,
                     dt: float) -> State:
    """Integrate to t_end with the RK4 reference at fixed dt."""
    state = init.state(params)
    n = max(1, int(round(t_end / dt)))
    h = t_end / n
    for i in range(n):
        state = step_oracle(state, h, params)
        if not np.isfinite(state.chi).all():
            raise BlowupError(state.time, i, float("inf"))
    state.time = t_end
    return state


# ---------------------------------------------------------------------------
# exact linear oracle (linear_test potential)
# ---------------------------------------------------------------------------

def _require_linear(params: Parameters):
    if params.potential.kind != "linear_test":
        raise ValueError("the exact mode oracle needs the linear_test potential")


def linear_mode_matrix(params: Parameters, grid: Grid, k) -> np.ndarray:
    """Generator of the per-mode linear ODE block.

    Variables are (theta, q_1..q_d, chi, chi_t) for sigma > 0 and
    (theta, chi, chi_t) for sigma = 0.  Inactive flux components (axes
    with k_i = 0) are carried as decoupled decaying entries.
    """
    _require_linear(params)
    k = tuple(int(v) for v in np.atleast_1d(k))
    if len(k) != grid.dim:
        raise ValueError("multi-index length does not match the grid dimension")
    lam = float(np.pi ** 2 * sum(v * v for v in k))
    a = params.potential.a
    eps, sig, alpha = params.epsilon, params.sigma, params.alpha
    kc = 1.0 if params.coupling else 0.0
    d = grid.dim
    if sig > 0:
        size = d + 3
        B = np.zeros((size, size))
        it, ic, iv = 0, d + 1, d + 2
        for i in range(d):
            m_i = np.pi * k[i]
            B[it, 1 + i] = -m_i
            B[1 + i, it] = m_i / sig
            B[1 + i, 1 + i] = -1.0 / sig
        B[it, iv] = -1.0
        B[ic, iv] = 1.0
        B[iv, it] = kc * lam / eps
        B[iv, ic] = -lam * (lam - a) / eps
        B[iv, iv] = -(1.0 + alpha * lam) / eps
        return B
    B = np.zeros((3, 3))
    B[0, 0] = -lam
    B[0, 2] = -1.0
    B[1, 2] = 1.0
    B[2, 0] = kc * lam / eps
    B[2, 1] = -lam * (lam - a) / eps
    B[2, 2] = -(1.0 + alpha * lam) / eps
    return B


def linear_mode_solution(params: Parameters, grid: Grid, k, t: float,
                         init_vec: np.ndarray) -> np.ndarray:
    """Exact solution of one mode block: expm(t B) applied to the datum."""
    B = linear_mode_matrix(params, grid, k)
    v = np.asarray(init_vec, dtype=float)
    if v.shape != (B.shape[0],):
        raise ValueError(f"mode vector must have length {B.shape[0]}")
    return expm(t * B) @ v


def linear_trajectory(init: InitialData, params: Parameters, t: float) -> State:
    """Exact solution at time t for the linear_test potential, assembled
    mode by mode with dense matrix exponentials.

    Flux slots at the top sine frequency belong to no scalar mode and
    decay exactly as exp(-t/sigma).
    """
    _require_linear(params)
    g = init.grid
    n, d = g.n, g.dim
    state0 = init.state(params)
    theta = np.zeros(g.shape)
    chi = np.zeros(g.shape)
    chi_t = np.zeros(g.shape)
    q = np.zeros(g.flux_shape) if params.sigma > 0 else None

    for k in np.ndindex(g.shape):
        if params.sigma > 0:
            x0 = np.zeros(d + 3)
            x0[0] = state0.theta[k]
            for i in range(d):
                if k[i] >= 1:
                    idx = list(k)
                    idx[i] = k[i] - 1
                    x0[1 + i] = state0.q[(i,) + tuple(idx)]
            x0[d + 1] = state0.chi[k]
            x0[d + 2] = state0.chi_t[k]
            x = linear_mode_solution(params, g, k, t, x0)
            theta[k] = x[0]
            for i in range(d):
                if k[i] >= 1:
                    idx = list(k)
                    idx[i] = k[i] - 1
                    q[(i,) + tuple(idx)] = x[1 + i]
            chi[k] = x[d + 1]
            chi_t[k] = x[d + 2]
        else:
            x0 = np.array([state0.theta[k], state0.chi[k], state0.chi_t[k]])
            x = linear_mode_solution(params, g, k, t, x0)
            theta[k], chi[k], chi_t[k] = x

    if params.sigma > 0:
        fac = math.exp(-t / params.sigma)
        for i in range(d):
            sl = [slice(None)] * d
            sl[i] = n - 1
            q[(i,) + tuple(sl)] = state0.q[(i,) + tuple(sl)] * fac
    return State(g, t, theta, q, chi, chi_t)
