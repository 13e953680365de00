"""Split of a trajectory into an exponentially decaying part and a
uniformly controlled part.

With the monotone rewrite psi(r) = phi(r) + ell r (ell at least the slope
bound, so psi is nondecreasing), the solution z = (theta, q, chi, chi_t)
splits as z = z_d + z_c where both parts solve the same linear equations
and the chemical terms are

    decaying part    : psi(chi) - psi(chi_c)
    controlled part  : psi(chi_c) - ell chi

which sum to phi(chi).  The decaying part carries the mean-free initial
data and relaxes to zero at the linear rate (the monotone difference only
adds dissipation); the controlled part starts from the spatial means and
stays bounded in terms of the forcing ell chi.

Discretely all three systems - full, decaying, controlled - are advanced
by one shared implicit solve with the explicit terms above, so the sum of
the two parts reproduces the full iterate to rounding at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dynamics import ImexStepper, SchemeConfig
from .functionals import hsigma_norm, scalar_norm_sq
from .model import InitialData, Parameters, Potential, State
from .spectral import (
    Grid,
    mean_and_deflate,
    nonlinear_coeffs,
    oversampled_mean,
    oversampled_nodal,
    scalar_inner,
)

__all__ = [
    "choose_ell",
    "SplitRun",
    "split_integrate",
    "decay_check",
    "split_certificate",
    "flux_curl_norm",
]


def choose_ell(potential: Potential, chi_range=(-2.0, 2.0),
               n_samples: int = 4097) -> float:
    """Monotonization shift for the split: twice the slope bound plus the
    largest derivative of phi over the expected range of the order
    parameter.  The margin beyond the minimal monotone choice (the slope
    bound itself) is what gives the decaying part its rate."""
    c4 = potential.c4
    if not np.isfinite(c4):
        raise ValueError(
            "the potential's slope is unbounded below; no finite shift "
            "makes the split monotone"
        )
    lo, hi = float(chi_range[0]), float(chi_range[1])
    if not hi > lo:
        raise ValueError("chi_range must be an increasing pair")
    y = np.linspace(lo, hi, n_samples)
    sup_dphi = float(potential.dphi(y).max())
    return 2.0 * c4 + max(0.0, sup_dphi)


@dataclass
class SplitRun:
    """Co-integrated full/decaying/controlled trajectories.

    Norms are phase-space norms at snapshot times; recombination_error is
    the largest phase-space distance between the full iterate and the sum
    of the parts; curl_controlled is the largest discrete curl norm of the
    controlled part's flux (zero for dim = 1).
    """

    grid: Grid
    dt: float
    stride: int
    ell: float
    ell_s: float
    times: np.ndarray
    full_norms: np.ndarray
    decay_norms: np.ndarray
    control_norms: np.ndarray
    # monitored regularity norms of the controlled part
    control_grad_theta: np.ndarray
    control_chi_t: np.ndarray
    control_Achi: np.ndarray
    recombination_error: float
    curl_controlled: float
    full_states: list = field(default_factory=list, repr=False)
    decay_states: list = field(default_factory=list, repr=False)
    control_states: list = field(default_factory=list, repr=False)


def _mean_only(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    out = np.zeros_like(coeffs)
    zero = (0,) * grid.dim
    out[zero] = coeffs[zero]
    return out


def _split_initial(init: InitialData, params: Parameters):
    """Decaying part takes the mean-free data plus the whole flux; the
    controlled part starts from the spatial means at rest."""
    g = init.grid
    state = init.state(params)
    mean_t, tilde_t = mean_and_deflate(g, state.theta)
    mean_c, tilde_c = mean_and_deflate(g, state.chi)
    mean_v, tilde_v = mean_and_deflate(g, state.chi_t)
    qd = qc = None
    if params.sigma > 0:
        qd = state.q.copy()
        qc = np.zeros_like(state.q)
    zd = State(g, 0.0, tilde_t, qd, tilde_c, tilde_v)
    zc = State(g, 0.0, _mean_only(g, state.theta), qc,
               _mean_only(g, state.chi), _mean_only(g, state.chi_t))
    return state, zd, zc


def split_integrate(init: InitialData, cfg: SchemeConfig, params: Parameters,
                    ell: Optional[float] = None,
                    keep_states: bool = False) -> SplitRun:
    """Advance the full system and both parts of the split side by side.

    ell : monotonization shift; None derives it from the initial range of
        the order parameter via choose_ell (with a 50% margin).
    keep_states : retain full State snapshots of all three systems (memory
        permitting) in addition to the norm series.

    When cfg.stabilization is None the shared shift is raised to
    max(c4, ell - c4): the split's explicit terms carry slopes up to
    ell + sup phi', so the full-system default would sit below the
    one-sided stability threshold of the co-run.
    """
    g = init.grid
    if params.alpha == 0.0:
        raise ValueError(
            "the split run needs alpha > 0; the controlled part is not "
            "damped enough without the viscous term"
        )
    state0 = init.state(params)
    if ell is None:
        # the margin must cover the range chi explores later, not just the
        # initial one; order-one overshoot beyond the wells is typical
        vals = oversampled_nodal(g, state0.chi)
        lo, hi = float(vals.min()), float(vals.max())
        pad = max(1.0, hi - lo)
        ell = choose_ell(params.potential, (lo - pad, hi + pad))
    ell = float(ell)
    c4 = params.potential.c4
    if ell < c4 - 1e-12:
        raise ValueError(f"ell = {ell} is below the slope bound {c4}")

    if cfg.stabilization is None:
        cfg = replace(cfg, stabilization=max(float(c4), ell - float(c4)))
    stepper = ImexStepper(g, params, cfg)
    dt = stepper.dt
    ell_s = stepper.ell_s
    n_steps = max(1, int(round(cfg.t_end / dt)))

    full, zd, zc = _split_initial(init, params)
    phi = params.potential.phi

    def control_regularity(zc_: State):
        gt = math.sqrt(scalar_norm_sq(g, zc_.theta, "V0r", r=1))
        ct = math.sqrt(scalar_inner(g, zc_.chi_t, zc_.chi_t))
        ac = math.sqrt(scalar_norm_sq(g, zc_.chi, "V0r", r=2))
        return gt, ct, ac

    times = [0.0]
    fn = [hsigma_norm(full, params)]
    dn = [hsigma_norm(zd, params)]
    cn = [hsigma_norm(zc, params)]
    reg = [control_regularity(zc)]
    recomb = [_recombination_defect(full, zd, zc, params)]
    curl = [flux_curl_norm(g, zc.flux())]
    keep = ([full.copy()], [zd.copy()], [zc.copy()]) if keep_states else None

    for i in range(1, n_steps + 1):
        # dealiased psi projections; psi(u) = phi(u) + ell u with u already
        # band-limited, so only phi needs the oversampled product rule
        psi_full = nonlinear_coeffs(g, full.chi, phi) + ell * full.chi
        psi_ctrl = nonlinear_coeffs(g, zc.chi, phi) + ell * zc.chi

        expl_full = (psi_full - ell * full.chi) - ell_s * full.chi
        expl_d = (psi_full - psi_ctrl) - ell_s * zd.chi
        expl_c = (psi_ctrl - ell * full.chi) - ell_s * zc.chi

        full = stepper.step_with_explicit(full, expl_full, i)
        zd = stepper.step_with_explicit(zd, expl_d, i)
        zc = stepper.step_with_explicit(zc, expl_c, i)
        full.time = zd.time = zc.time = i * dt

        if i % cfg.stride == 0 or i == n_steps:
            times.append(full.time)
            fn.append(hsigma_norm(full, params))
            dn.append(hsigma_norm(zd, params))
            cn.append(hsigma_norm(zc, params))
            reg.append(control_regularity(zc))
            recomb.append(_recombination_defect(full, zd, zc, params))
            curl.append(flux_curl_norm(g, zc.flux()))
            if keep is not None:
                keep[0].append(full.copy())
                keep[1].append(zd.copy())
                keep[2].append(zc.copy())

    reg_arr = np.array(reg)
    run = SplitRun(
        grid=g, dt=dt, stride=cfg.stride, ell=ell, ell_s=ell_s,
        times=np.array(times), full_norms=np.array(fn),
        decay_norms=np.array(dn), control_norms=np.array(cn),
        control_grad_theta=reg_arr[:, 0], control_chi_t=reg_arr[:, 1],
        control_Achi=reg_arr[:, 2],
        recombination_error=float(max(recomb)),
        curl_controlled=float(max(curl)),
    )
    if keep is not None:
        run.full_states, run.decay_states, run.control_states = keep
    return run


def _recombination_defect(full: State, zd: State, zc: State,
                          params: Parameters) -> float:
    g = full.grid
    q = None
    if full.q is not None:
        q = full.q - zd.q - zc.q
    diff = State(g, full.time, full.theta - zd.theta - zc.theta, q,
                 full.chi - zd.chi - zc.chi, full.chi_t - zd.chi_t - zc.chi_t)
    return hsigma_norm(diff, params)


def decay_check(times: np.ndarray, norms: np.ndarray,
                skip_fraction: float = 0.2, floor: float = 1e-13):
    """Least-squares exponential rate of a norm series.

    Fits log(norm) against t after dropping the leading transient and any
    values at the rounding floor.  Returns (rate, r_squared, n_used); the
    rate is positive for decay.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(norms, dtype=float)
    if t.shape != v.shape or t.size < 4:
        raise ValueError("need matching series with at least 4 points")
    start = int(math.floor(skip_fraction * t.size))
    mask = np.zeros(t.size, dtype=bool)
    mask[start:] = True
    mask &= v > floor
    if mask.sum() < 4:
        raise ValueError("too few usable points above the floor")
    x = t[mask]
    y = np.log(v[mask])
    slope, intercept = np.polyfit(x, y, 1)
    y_hat = slope * x + intercept
    ss_res = float(np.sum((y - y_hat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return -float(slope), float(r2), int(mask.sum())


def split_certificate(grid: Grid, potential: Potential, ell: float,
                      chi_snapshots, n_fields: int = 10,
                      seed: int = 0) -> float:
    """Smallest sampled value of the split's coercivity form,

        Q_t(z) = 1/2 ||grad z||^2 + (ell - 2 c4) ||z||^2
                 - <phi'(chi(t)) z, z>,

    over the given order-parameter snapshots and n_fields random smooth
    fields z per snapshot, each normalized in L2.  Nonnegative (up to
    rounding) whenever ell carries the margin choose_ell builds in, on
    snapshots whose values stay inside the range it was derived for.
    """
    c4 = potential.c4
    rng = np.random.default_rng(seed)
    worst = math.inf
    for chi in chi_snapshots:
        chi = np.asarray(chi, dtype=float)
        grid.check_scalar(chi)
        for _ in range(n_fields):
            z = rng.standard_normal(grid.shape) / (1.0 + grid.lam)
            z /= math.sqrt(scalar_inner(grid, z, z))
            quad = 0.5 * scalar_norm_sq(grid, z, "V0r", r=1) \
                + (ell - 2.0 * c4) * scalar_inner(grid, z, z) \
                - oversampled_mean(grid, lambda c, w: potential.dphi(c) * w * w,
                                   chi, z)
            worst = min(worst, float(quad))
    return worst


def flux_curl_norm(grid: Grid, flux: np.ndarray) -> float:
    """L2 norm of the discrete curl of a flux field.

    Component (i, j) of the curl, d_i f_j - d_j f_i, lives in the basis
    with sines along axes i and j and cosines elsewhere; its coefficients
    follow from the one-axis rules cos k -> sine slot k-1 (factor -pi k)
    and the mixed layout of the flux components.  Returns 0 for dim = 1.
    """
    a = np.asarray(flux, dtype=float)
    grid.check_flux(a)
    d, n = grid.dim, grid.n
    if d == 1:
        return 0.0
    total = 0.0
    w_sin = np.full(n, 0.5)
    w_cos = np.full(n, 0.5)
    w_cos[0] = 1.0
    for i in range(d):
        for j in range(i + 1, d):
            # coefficient array indexed by sine slots p (axis i), r (axis j)
            c = np.zeros(grid.shape)
            # d_i f_j : f_j has cosine index p+1 on axis i, sine slot r on j
            src = [slice(None)] * d
            dst = [slice(None)] * d
            src[i] = slice(1, n)
            dst[i] = slice(0, n - 1)
            fac = grid._along(np.pi * np.arange(1, n), i)
            c[tuple(dst)] -= fac * a[j][tuple(src)]
            # d_j f_i : f_i has sine slot p on axis i, cosine index r+1 on j
            src = [slice(None)] * d
            dst = [slice(None)] * d
            src[j] = slice(1, n)
            dst[j] = slice(0, n - 1)
            fac = grid._along(np.pi * np.arange(1, n), j)
            c[tuple(dst)] += fac * a[i][tuple(src)]
            w = np.ones(grid.shape)
            for ax in range(d):
                w = w * grid._along(w_sin if ax in (i, j) else w_cos, ax)
            total += float(np.sum(w * c * c))
    return math.sqrt(max(0.0, total))
