"""Steady states of the order parameter at fixed mass, and the local
energy-landscape diagnostics around them.

A steady profile at mass m is a mean-free v solving

    F(v) = A0 v + phi~(v) - <phi~(v)> = 0,

phi~ the m-recentred well.  The solver is a damped Newton iteration whose
linear systems H w = -F (H the projected Hessian) are solved by conjugate
directions preconditioned with the shifted inverse Laplacian; when H shows
negative curvature or the line search stalls, it falls back to the
mass-conserving gradient flow in the lifted metric (which decreases the
interface energy at every accepted step) until Newton can take over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .functionals import energy_E, scalar_norm_sq
from .model import InitialData, Parameters, Potential, shift_potential
from .spectral import (
    Grid,
    apply_operator,
    mean_and_deflate,
    nonlinear_coeffs,
    oversampled_nodal,
    project_oversampled,
)

__all__ = [
    "EquilibriumSolution",
    "ConvergenceError",
    "solve_steady",
    "equilibrium_from_data",
    "hessian_spectrum",
    "LojaFit",
    "loja_fit",
    "gradient_flow",
]


class ConvergenceError(RuntimeError):
    """The steady-state iteration did not reach the requested residual."""


@dataclass
class EquilibriumSolution:
    """A converged steady profile.

    chi_inf : mean-free coefficients of the profile (add m for the field).
    m : the mass it was solved at.
    residual : ||A0 chi_inf + phi~(chi_inf) - mean||_{L2} at the solution.
    energy : interface energy E at the solution.
    hessian_min_eig : smallest eigenvalue of the projected Hessian.
    newton_iterations / flow_steps : work counters.
    """

    grid: Grid
    chi_inf: np.ndarray
    m: float
    residual: float
    energy: float
    hessian_min_eig: float
    newton_iterations: int
    flow_steps: int


def _steady_map(grid: Grid, shifted: Potential, v: np.ndarray) -> np.ndarray:
    """F(v) = A0 v + phi~(v) - <phi~(v)>, mean-free coefficients."""
    f = apply_operator(grid, v, "A") + nonlinear_coeffs(grid, v, shifted.phi)
    _, f = mean_and_deflate(grid, f)
    return f


def _hessian_apply(grid: Grid, w: np.ndarray,
                   dphi_nodal_over: np.ndarray) -> np.ndarray:
    """H w = A0 w + P0( phi~'(v) w ), dealiased product."""
    w_over = oversampled_nodal(grid, w)
    proj = project_oversampled(grid, dphi_nodal_over * w_over)
    _, proj = mean_and_deflate(grid, proj)
    return apply_operator(grid, w, "A") + proj


def _pcg(grid: Grid, apply_h, rhs: np.ndarray, shift: float,
         tol: float, max_iter: int):
    """Preconditioned conjugate directions for H x = rhs on mean-free fields.

    Returns (x, converged, indefinite).  Indefinite means a direction of
    nonpositive curvature was met; the partial iterate is still returned.
    """
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = apply_operator(grid, r, "inv_shifted", c=shift)
    _, z = mean_and_deflate(grid, z)
    p = z.copy()
    rz = float(np.sum(grid.wcos * r * z))
    rhs_norm = math.sqrt(max(1e-300, float(np.sum(grid.wcos * rhs * rhs))))
    for _ in range(max_iter):
        hp = apply_h(p)
        php = float(np.sum(grid.wcos * p * hp))
        if php <= 0.0:
            return x, False, True
        a = rz / php
        x = x + a * p
        r = r - a * hp
        if math.sqrt(max(0.0, float(np.sum(grid.wcos * r * r)))) <= tol * rhs_norm:
            return x, True, False
        z = apply_operator(grid, r, "inv_shifted", c=shift)
        _, z = mean_and_deflate(grid, z)
        rz_new = float(np.sum(grid.wcos * r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, False, False


def gradient_flow(grid: Grid, potential: Potential, m: float, v0: np.ndarray,
                  tol: float = 1e-10, max_steps: int = 200000,
                  tau0: float = None, shift: float = None):
    """Mass-conserving gradient flow of the interface energy in the lifted
    metric, v_t = -A0 F(v), discretized semi-implicitly with an
    energy-decrease acceptance test.  Returns (v, steps, residual)."""
    shifted = shift_potential(potential, m)
    ell = shift if shift is not None else max(1.0, potential.c4)
    lam = grid.lam
    denom_base = lam * (lam + ell)
    v = v0.copy()
    _, v = mean_and_deflate(grid, v)
    params = Parameters(epsilon=1.0, alpha=0.0, sigma=0.0, potential=potential)
    e = energy_E(grid, v, m, params)
    tau = tau0 if tau0 is not None else 1e-2
    steps = 0
    for _ in range(max_steps):
        f = _steady_map(grid, shifted, v)
        res = math.sqrt(max(0.0, float(np.sum(grid.wcos * f * f))))
        if res <= tol:
            return v, steps, res
        expl = nonlinear_coeffs(grid, v, shifted.phi) - ell * v
        _, expl = mean_and_deflate(grid, expl)
        accepted = False
        for _ in range(60):
            v_new = (v - tau * lam * expl) / (1.0 + tau * denom_base)
            _, v_new = mean_and_deflate(grid, v_new)
            e_new = energy_E(grid, v_new, m, params)
            if e_new <= e + 1e-14 * max(1.0, abs(e)):
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            raise ConvergenceError("gradient flow cannot decrease the energy further")
        v, e = v_new, e_new
        tau = min(tau * 1.3, 10.0)
        steps += 1
    raise ConvergenceError(
        f"gradient flow did not reach tol {tol:g}; last residual {res:.3e}"
    )


def solve_steady(grid: Grid, potential: Potential, m: float, guess: np.ndarray,
                 tol: float = 1e-12, max_newton: int = 80,
                 compute_spectrum: bool = True) -> EquilibriumSolution:
    """Newton iteration for a steady profile at mass m.

    guess : mean-free coefficient array (the mean slot is ignored after a
        defensive deflation).
    tol : required L2 residual of the steady map.
    """
    shifted = shift_potential(potential, m)
    _, v = mean_and_deflate(grid, np.asarray(guess, dtype=float))
    flow_steps = 0
    newton_iters = 0

    def res_norm(f):
        return math.sqrt(max(0.0, float(np.sum(grid.wcos * f * f))))

    f = _steady_map(grid, shifted, v)
    res = res_norm(f)
    stall_budget = 3
    while res > tol:
        if newton_iters >= max_newton:
            raise ConvergenceError(
                f"Newton did not converge in {max_newton} iterations; residual {res:.3e}"
            )
        v_over = oversampled_nodal(grid, v)
        dphi_over = shifted.dphi(v_over)
        shift = float(max(1.0, -dphi_over.min()))

        def apply_h(w):
            return _hessian_apply(grid, w, dphi_over)

        step, converged, indefinite = _pcg(
            grid, apply_h, -f, shift, tol=1e-10, max_iter=400
        )
        took_newton = False
        if not indefinite:
            alpha = 1.0
            while alpha >= 1e-6:
                v_try = v + alpha * step
                f_try = _steady_map(grid, shifted, v_try)
                r_try = res_norm(f_try)
                if r_try <= (1.0 - 1e-4 * alpha) * res:
                    v, f, res = v_try, f_try, r_try
                    took_newton = True
                    break
                alpha *= 0.5
        newton_iters += 1
        if took_newton:
            continue
        # negative curvature or stalled line search: relax with the flow
        stall_budget -= 1
        if stall_budget < 0:
            raise ConvergenceError("Newton stalled repeatedly; residual " f"{res:.3e}")
        target = max(tol * 1e3, res * 1e-3, 1e-10)
        v, steps, _ = gradient_flow(grid, potential, m, v, tol=target,
                                    max_steps=20000)
        flow_steps += steps
        f = _steady_map(grid, shifted, v)
        res = res_norm(f)

    min_eig = float("nan")
    if compute_spectrum:
        eigs = hessian_spectrum(grid, potential, v, m, k_max=1)
        min_eig = float(eigs[0])
    params = Parameters(epsilon=1.0, alpha=0.0, sigma=0.0, potential=potential)
    return EquilibriumSolution(
        grid=grid, chi_inf=v, m=m, residual=res,
        energy=energy_E(grid, v, m, params),
        hessian_min_eig=min_eig,
        newton_iterations=newton_iters, flow_steps=flow_steps,
    )


def equilibrium_from_data(init: InitialData, params: Parameters):
    """(theta_inf, m): the limit temperature mean <theta0 - eps chi1> and
    the conserved order-parameter mass <chi0 + eps chi1>."""
    return init.theta_limit_mean(params), init.chi_limit_mean(params)


def hessian_spectrum(grid: Grid, potential: Potential, v_inf: np.ndarray,
                     m: float, k_max: int = 6) -> np.ndarray:
    """Smallest k_max eigenvalues of the projected Hessian at a profile.

    The operator acts on mean-free fields: w -> A0 w + P0(phi~'(v) w).
    Assembled densely in coefficient space (desk scales keep the mean-free
    dimension at a few thousand).
    """
    shifted = shift_potential(potential, m)
    _, v = mean_and_deflate(grid, np.asarray(v_inf, dtype=float))
    v_over = oversampled_nodal(grid, v)
    dphi_over = shifted.dphi(v_over)
    size = int(np.prod(grid.shape))
    dim_free = size - 1
    if dim_free > 5000:
        raise ValueError("hessian_spectrum: grid too large for dense assembly")

    # weighted coordinates: the coefficient inner product carries the
    # Parseval weights, so symmetrize with sqrt(w)
    sqw = np.sqrt(grid.wcos).ravel()
    H = np.empty((dim_free, dim_free))
    basis = np.zeros(size)
    for j in range(dim_free):
        basis[:] = 0.0
        basis[j + 1] = 1.0 / sqw[j + 1]
        w = basis.reshape(grid.shape)
        hw = _hessian_apply(grid, w, dphi_over)
        H[:, j] = (hw.ravel() * sqw)[1:]
    H = 0.5 * (H + H.T)
    eigs = np.linalg.eigvalsh(H)
    return eigs[: min(k_max, dim_free)]


# ---------------------------------------------------------------------------
# Lojasiewicz fit
# ---------------------------------------------------------------------------

@dataclass
class LojaFit:
    """Fitted gradient inequality |E - E_inf|^{1-rho} <= L ||F||_{V0^{-1}}.

    rho is clamped to (0, 1/2]; raw_slope is the unclamped log-log slope;
    regime labels the boundary case ("nondegenerate") vs interior
    ("degenerate").
    """

    rho: float
    L_const: float
    eta: float
    r_squared: float
    raw_slope: float
    regime: str
    n_samples: int
    energies: np.ndarray = field(repr=False)
    gradients: np.ndarray = field(repr=False)


def loja_fit(eq: EquilibriumSolution, potential: Potential,
             eta: Optional[float] = None, n_directions: int = 5,
             n_radii: int = 8, seed: int = 0,
             energy_floor: float = 1e-13) -> LojaFit:
    """Sample the energy landscape near a steady profile and fit the
    gradient inequality.

    Perturbations are smooth random mean-free directions, normalized in
    the H^1-type metric the inequality's neighbourhood is stated in, at
    radii log-spaced up to eta.  eta defaults to 0.1 sqrt(spectral gap)
    when the Hessian is definite, 0.01 otherwise.
    """
    grid = eq.grid
    if eta is None:
        gap = eq.hessian_min_eig
        eta = 0.1 * math.sqrt(gap) if np.isfinite(gap) and gap > 0 else 0.01
    shifted = shift_potential(potential, eq.m)
    params = Parameters(epsilon=1.0, alpha=0.0, sigma=0.0, potential=potential)
    e_inf = energy_E(grid, eq.chi_inf, eq.m, params)

    rng = np.random.default_rng(seed)
    radii = np.geomspace(eta / 100.0, eta, n_radii)
    es, fs = [], []
    for _ in range(n_directions):
        w = rng.standard_normal(grid.shape) / (1.0 + grid.lam)
        _, w = mean_and_deflate(grid, w)
        wn = math.sqrt(scalar_norm_sq(grid, w, "V0r", r=1))
        if wn == 0.0:
            continue
        w = w / wn
        for delta in radii:
            v = eq.chi_inf + delta * w
            e = abs(energy_E(grid, v, eq.m, params) - e_inf)
            f = _steady_map(grid, shifted, v)
            fn = math.sqrt(scalar_norm_sq(grid, f, "V0r", r=-1))
            if e > energy_floor and fn > 0.0:
                es.append(e)
                fs.append(fn)
    if len(es) < 8:
        raise ValueError(
            "too few samples above the energy floor; eta is too small "
            f"(got {len(es)})"
        )
    es = np.array(es)
    fs = np.array(fs)
    x = np.log(fs)
    y = np.log(es)
    slope, intercept = np.polyfit(x, y, 1)
    y_hat = slope * x + intercept
    ss_res = float(np.sum((y - y_hat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    raw_rho = 1.0 - 1.0 / slope if slope != 0 else 0.0
    rho = min(max(raw_rho, 1e-6), 0.5)
    regime = "nondegenerate" if rho >= 0.45 else "degenerate"
    L = float(np.max(es ** (1.0 - rho) / fs)) * (1.0 + 1e-9)
    return LojaFit(rho=rho, L_const=L, eta=eta, r_squared=r2,
                   raw_slope=float(slope), regime=regime,
                   n_samples=len(es), energies=es, gradients=fs)
