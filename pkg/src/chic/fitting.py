"""Decay-law fits for diagnostic time series, and the translation between
an algebraic decay exponent and the gradient-inequality exponent it is
evidence for.

Two decay templates are supported:

    exponential : v(t) ~ C exp(-rate t)   (log v linear in t)
    algebraic   : v(t) ~ C t^(-rate)      (log v linear in log t)

"auto" fits both over the same window and keeps the one with the smaller
root-mean-square residual in log space.  When the fitted series plays a
known role in the energy-decay picture, the algebraic rate e maps to an
implied inequality exponent rho:

    dual-norm series (V* distances to the limit) : rho = e / (1 + 2e)
    plain-norm series (L2/H temperature norm)    : rho = 2 e / (1 + 4 e)

Both maps invert rationally, so fits can be cross-checked in either
direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "DecayFitResult",
    "fit_decay",
    "rho_from_rate",
    "rate_from_rho",
    "SERIES_ROLES",
]

# column-name -> role used when fitting CSV output
SERIES_ROLES = {
    "norm_chit_Vdual": "dual_norm",
    "norm_theta_tilde": "h_norm",
}


@dataclass(frozen=True)
class DecayFitResult:
    """Outcome of one decay fit.

    kind : "exponential" or "algebraic".
    rate : decay rate (exponential) or exponent (algebraic); positive
        means decay.
    amplitude : prefactor C.
    r_squared : coefficient of determination of the log-space line.
    rms_residual : root-mean-square log-space residual (the auto
        selector's criterion).
    n_points : samples used after windowing and flooring.
    implied_rho : inequality exponent from the algebraic rate, when a
        series role was given (None otherwise or for exponential fits).
    role : the role the implied exponent was computed for.
    window : the (t_min, t_max) actually spanned by the points used.
    """

    kind: str
    rate: float
    amplitude: float
    r_squared: float
    rms_residual: float
    n_points: int
    implied_rho: Optional[float] = None
    role: Optional[str] = None
    window: Optional[tuple] = None


def rho_from_rate(e: float, role: str) -> float:
    """Implied inequality exponent for an algebraic decay rate e.

    Maps (0, inf) onto (0, 1/2): dual-norm series decay like
    t^(-rho/(1-2 rho)), plain-norm series like t^(-rho/(2-4 rho)).
    """
    if e <= 0:
        raise ValueError("algebraic rate must be positive")
    if role == "dual_norm":
        return e / (1.0 + 2.0 * e)
    if role == "h_norm":
        return 2.0 * e / (1.0 + 4.0 * e)
    raise ValueError(f"unknown series role {role!r}")


def rate_from_rho(rho: float, role: str) -> float:
    """Inverse of rho_from_rate on (0, 1/2)."""
    if not 0.0 < rho < 0.5:
        raise ValueError("rho must lie in (0, 1/2) for an algebraic rate")
    if role == "dual_norm":
        return rho / (1.0 - 2.0 * rho)
    if role == "h_norm":
        return rho / (2.0 * (1.0 - 2.0 * rho))
    raise ValueError(f"unknown series role {role!r}")


def _line_fit(x: np.ndarray, y: np.ndarray):
    slope, intercept = np.polyfit(x, y, 1)
    y_hat = slope * x + intercept
    res = y - y_hat
    rms = math.sqrt(float(np.mean(res * res)))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res * res)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), rms, r2


def fit_decay(times, values, kind: str = "auto",
              window: Optional[tuple] = None, floor: float = 1e-14,
              role: Optional[str] = None) -> DecayFitResult:
    """Fit a decay law to a positive time series.

    times, values : equal-length 1-D series.
    kind : "exponential", "algebraic", or "auto".
    window : optional (t_min, t_max) restriction.
    floor : values at or below this are treated as rounding noise and
        dropped.
    role : series role for the implied inequality exponent (see
        SERIES_ROLES for the CSV column mapping).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and values must be matching 1-D series")
    if kind not in ("exponential", "algebraic", "auto"):
        raise ValueError(f"unknown fit kind {kind!r}")
    in_window = np.isfinite(t)
    if window is not None:
        t_min, t_max = window
        if t_min is not None:
            in_window &= t >= t_min
        if t_max is not None:
            in_window &= t <= t_max
    if np.any(v[in_window] <= 0):
        raise ValueError("nonpositive values in the fit window")
    mask = in_window & np.isfinite(v) & (v > floor)
    if kind in ("algebraic", "auto") and (mask & (t > 0)).sum() >= 10:
        # both templates must see the same points for their residuals to
        # be comparable, and the algebraic one needs t > 0
        mask &= t > 0
    elif kind == "algebraic":
        mask &= t > 0
    x_t = t[mask]
    y = np.log(v[mask])
    if x_t.size < 10:
        raise ValueError(f"too few usable points ({x_t.size}) for a fit")

    def build(kind_: str) -> DecayFitResult:
        if kind_ == "exponential":
            slope, intercept, rms, r2 = _line_fit(x_t, y)
        else:
            slope, intercept, rms, r2 = _line_fit(np.log(x_t), y)
        rate = -slope
        rho = None
        if kind_ == "algebraic" and role is not None and rate > 0:
            rho = rho_from_rate(rate, role)
        return DecayFitResult(
            kind=kind_, rate=rate, amplitude=math.exp(intercept),
            r_squared=r2, rms_residual=rms, n_points=int(x_t.size),
            implied_rho=rho, role=role if rho is not None else None,
            window=(float(x_t.min()), float(x_t.max())),
        )

    if kind == "auto":
        fits = [build("exponential")]
        if (x_t > 0).all():
            fits.append(build("algebraic"))
        return min(fits, key=lambda f: f.rms_residual)
    return build(kind)
