"""Cosine/sine pseudospectral core on the unit box.

Scalars live in the tensor-product cosine basis, whose elements satisfy
homogeneous Neumann conditions on [0, 1]^d exactly; flux (vector) fields
use a mixed basis whose component i is a sine in direction i and cosines
in the others, so the normal trace of every component vanishes on its own
boundary faces exactly.  Collocation nodes are the midpoint nodes of the
type-II cosine transform, x_j = (2j+1)/(2n).

Coefficient conventions
-----------------------
Scalar coefficients ``c`` of shape ``(n,)*dim`` represent

    v(x) = sum_k c[k] * prod_i cos(k_i pi x_i),

so ``c[0,...,0]`` is the spatial mean.  Flux component ``i`` of shape
``(n,)*dim`` uses slot ``s`` along axis ``i`` for the sine of frequency
``s + 1``:

    f_i(x) = sum_k f[k] * sin((k_i+1) pi x_i) * prod_{j!=i} cos(k_j pi x_j).

The negative Laplacian acts diagonally on the scalar basis with
eigenvalues ``lam[k] = pi^2 |k|^2``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

__all__ = [
    "Grid",
    "DimensionMismatchError",
    "MeanFreeError",
    "to_spectral",
    "to_nodal",
    "flux_to_spectral",
    "flux_to_nodal",
    "apply_operator",
    "gradient",
    "divergence",
    "mean_and_deflate",
    "scalar_inner",
    "flux_inner",
    "nonlinear_coeffs",
    "oversampled_mean",
    "oversampled_nodal",
    "project_oversampled",
]


class DimensionMismatchError(ValueError):
    """Array shape does not match the grid."""


class MeanFreeError(ValueError):
    """A mean-free field was required but the mean coefficient is not zero."""


def _workers() -> int:
    """Worker cap for the FFT backend, from the CHIC_THREADS variable."""
    try:
        return max(1, int(os.environ.get("CHIC_THREADS", "1")))
    except ValueError:
        return 1


def _is_pow2(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Tensor-product collocation grid on [0, 1]^dim.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1, 2 or 3.
    n : int
        Points (and retained modes) per axis; a power of two.

    Derived arrays (filled in ``__post_init__``):

    - ``nodes1d``: midpoint collocation nodes of one axis.
    - ``lam1d``: one-axis eigenvalues pi^2 k^2 of the negative Laplacian.
    - ``lam``: full tensor eigenvalue array, shape ``(n,)*dim``.
    - ``wcos``: Parseval weights of the cosine basis (1 for k=0 factors,
      1/2 otherwise), same shape.
    - ``wflux[i]``: Parseval weights of flux component i.
    - ``lam_flux[i]``: squared-frequency array pi^2 |k'|^2 of flux
      component i (sine slot s has frequency s+1 along axis i).
    """

    dim: int
    n: int
    nodes1d: np.ndarray = field(init=False, repr=False, compare=False)
    lam1d: np.ndarray = field(init=False, repr=False, compare=False)
    lam: np.ndarray = field(init=False, repr=False, compare=False)
    wcos: np.ndarray = field(init=False, repr=False, compare=False)
    wflux: tuple = field(init=False, repr=False, compare=False)
    lam_flux: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DimensionMismatchError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not _is_pow2(self.n):
            raise ValueError(f"n must be a power of two >= 2, got {self.n}")
        n, d = self.n, self.dim
        j = np.arange(n)
        object.__setattr__(self, "nodes1d", (2 * j + 1) / (2 * n))
        k = np.arange(n)
        lam1d = (np.pi * k) ** 2
        object.__setattr__(self, "lam1d", lam1d)

        lam = np.zeros((n,) * d)
        for ax in range(d):
            lam = lam + self._along(lam1d, ax)
        object.__setattr__(self, "lam", lam)

        w1 = np.full(n, 0.5)
        w1[0] = 1.0
        wcos = np.ones((n,) * d)
        for ax in range(d):
            wcos = wcos * self._along(w1, ax)
        object.__setattr__(self, "wcos", wcos)

        wflux = []
        lam_flux = []
        half = np.full(n, 0.5)
        freq_sin = (np.pi * (k + 1)) ** 2
        for i in range(d):
            w = np.ones((n,) * d)
            lf = np.zeros((n,) * d)
            for ax in range(d):
                if ax == i:
                    w = w * self._along(half, ax)
                    lf = lf + self._along(freq_sin, ax)
                else:
                    w = w * self._along(w1, ax)
                    lf = lf + self._along(lam1d, ax)
            wflux.append(w)
            lam_flux.append(lf)
        object.__setattr__(self, "wflux", tuple(wflux))
        object.__setattr__(self, "lam_flux", tuple(lam_flux))

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def flux_shape(self) -> tuple:
        return (self.dim,) + self.shape

    def _along(self, arr1d: np.ndarray, axis: int) -> np.ndarray:
        """Reshape a 1-D factor for broadcasting along one tensor axis."""
        shape = [1] * self.dim
        shape[axis] = arr1d.size
        return arr1d.reshape(shape)

    def check_scalar(self, a: np.ndarray) -> None:
        if a.shape != self.shape:
            raise DimensionMismatchError(
                f"scalar field shape {a.shape} does not match grid {self.shape}"
            )

    def check_flux(self, a: np.ndarray) -> None:
        if a.shape != self.flux_shape:
            raise DimensionMismatchError(
                f"flux field shape {a.shape} does not match grid {self.flux_shape}"
            )


# ---------------------------------------------------------------------------
# transforms (any per-axis size; the public wrappers validate against a Grid)
# ---------------------------------------------------------------------------

def _cos_analysis(v: np.ndarray) -> np.ndarray:
    """Nodal -> cosine coefficients, every axis."""
    c = np.asarray(v, dtype=float)
    for ax in range(c.ndim):
        m = c.shape[ax]
        c = sp_fft.dct(c, type=2, axis=ax, workers=_workers()) / (2.0 * m)
        sl = [slice(None)] * c.ndim
        sl[ax] = slice(1, None)
        c[tuple(sl)] *= 2.0
    return c

def _cos_synthesis(c: np.ndarray) -> np.ndarray:
    """Cosine coefficients -> nodal values, every axis."""
    v = np.array(c, dtype=float, copy=True)
    for ax in range(v.ndim):
        sl = [slice(None)] * v.ndim
        sl[ax] = slice(1, None)
        v[tuple(sl)] *= 0.5
        v = sp_fft.dct(v, type=3, axis=ax, workers=_workers())
    return v

def _mixed_analysis(v: np.ndarray, sin_axis: int) -> np.ndarray:
    """Nodal -> coefficients with a sine basis along one axis."""
    c = np.asarray(v, dtype=float)
    for ax in range(c.ndim):
        m = c.shape[ax]
        if ax == sin_axis:
            c = sp_fft.dst(c, type=2, axis=ax, workers=_workers()) / m
            sl = [slice(None)] * c.ndim
            sl[ax] = slice(m - 1, m)
            c[tuple(sl)] *= 0.5
        else:
            c = sp_fft.dct(c, type=2, axis=ax, workers=_workers()) / (2.0 * m)
            sl = [slice(None)] * c.ndim
            sl[ax] = slice(1, None)
            c[tuple(sl)] *= 2.0
    return c

def _mixed_synthesis(c: np.ndarray, sin_axis: int) -> np.ndarray:
    """Coefficients with a sine axis -> nodal values."""
    v = np.array(c, dtype=float, copy=True)
    for ax in range(v.ndim):
        m = v.shape[ax]
        sl = [slice(None)] * v.ndim
        if ax == sin_axis:
            sl[ax] = slice(0, m - 1)
            v[tuple(sl)] *= 0.5
            v = sp_fft.dst(v, type=3, axis=ax, workers=_workers())
        else:
            sl[ax] = slice(1, None)
            v[tuple(sl)] *= 0.5
            v = sp_fft.dct(v, type=3, axis=ax, workers=_workers())
    return v


def to_spectral(grid: Grid, nodal: np.ndarray) -> np.ndarray:
    """Scalar nodal values -> cosine coefficients."""
    grid.check_scalar(np.asarray(nodal))
    return _cos_analysis(nodal)


def to_nodal(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Cosine coefficients -> scalar nodal values."""
    grid.check_scalar(np.asarray(coeffs))
    return _cos_synthesis(coeffs)


def flux_to_spectral(grid: Grid, nodal: np.ndarray) -> np.ndarray:
    """Flux nodal values (leading component axis) -> mixed coefficients."""
    a = np.asarray(nodal, dtype=float)
    grid.check_flux(a)
    return np.stack([_mixed_analysis(a[i], i) for i in range(grid.dim)])


def flux_to_nodal(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Mixed flux coefficients -> nodal values."""
    a = np.asarray(coeffs, dtype=float)
    grid.check_flux(a)
    return np.stack([_mixed_synthesis(a[i], i) for i in range(grid.dim)])


# ---------------------------------------------------------------------------
# diagonal operators
# ---------------------------------------------------------------------------

def apply_operator(grid: Grid, coeffs: np.ndarray, op: str, *, r: float = None,
                   c: float = None) -> np.ndarray:
    """Apply a diagonal operator to scalar cosine coefficients.

    op = "A"              : negative Laplacian, multiply by lam.
    op = "A0_pow"         : fractional power of the mean-free negative
                            Laplacian, multiply nonzero modes by lam**(r/2)
                            and zero the mean slot.  Negative r requires a
                            mean-free input.
    op = "inv_shifted"    : resolvent (c + A)^{-1}, multiply by 1/(c + lam);
                            requires c > 0.
    """
    grid.check_scalar(np.asarray(coeffs))
    a = np.asarray(coeffs, dtype=float)
    if op == "A":
        return a * grid.lam
    if op == "A0_pow":
        if r is None:
            raise ValueError("A0_pow requires the exponent r")
        zero = (0,) * grid.dim
        if r < 0 and abs(a[zero]) > 1e-13 * max(1.0, np.abs(a).max()):
            raise MeanFreeError(
                "negative power of the mean-free Laplacian needs a mean-free field"
            )
        out = np.zeros_like(a)
        mask = grid.lam > 0
        out[mask] = a[mask] * grid.lam[mask] ** (r / 2.0)
        return out
    if op == "inv_shifted":
        if c is None or c <= 0:
            raise ValueError("inv_shifted requires a positive shift c")
        return a / (c + grid.lam)
    raise ValueError(f"unknown operator {op!r}")


def gradient(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Gradient of a scalar: cosine coefficients -> flux coefficients.

    d/dx cos(k pi x) = -k pi sin(k pi x), so cosine mode k feeds sine slot
    k-1 with factor -pi k; the top sine slot (frequency n) is never
    populated.
    """
    grid.check_scalar(np.asarray(coeffs))
    n, d = grid.n, grid.dim
    out = np.zeros(grid.flux_shape)
    kfac = np.pi * np.arange(1, n)
    for i in range(d):
        src = [slice(None)] * d
        dst_sl = [slice(None)] * d
        src[i] = slice(1, n)
        dst_sl[i] = slice(0, n - 1)
        fac = grid._along(kfac, i)
        out[i][tuple(dst_sl)] = -fac * np.asarray(coeffs)[tuple(src)]
    return out


def divergence(grid: Grid, flux: np.ndarray) -> np.ndarray:
    """Divergence of a flux: mixed coefficients -> cosine coefficients.

    d/dx sin(k pi x) = k pi cos(k pi x); the top sine slot would map to
    cosine frequency n, outside the retained band, and is dropped (the
    Galerkin projection of the divergence).
    """
    a = np.asarray(flux, dtype=float)
    grid.check_flux(a)
    n, d = grid.n, grid.dim
    out = np.zeros(grid.shape)
    kfac = np.pi * np.arange(1, n)
    for i in range(d):
        src = [slice(None)] * d
        dst_sl = [slice(None)] * d
        src[i] = slice(0, n - 1)
        dst_sl[i] = slice(1, n)
        fac = grid._along(kfac, i)
        out[tuple(dst_sl)] += fac * a[i][tuple(src)]
    return out


def mean_and_deflate(grid: Grid, coeffs: np.ndarray):
    """Split a scalar into (mean, mean-free coefficients)."""
    grid.check_scalar(np.asarray(coeffs))
    out = np.array(coeffs, dtype=float, copy=True)
    zero = (0,) * grid.dim
    mean = float(out[zero])
    out[zero] = 0.0
    return mean, out


# ---------------------------------------------------------------------------
# inner products (exact in coefficient space)
# ---------------------------------------------------------------------------

def scalar_inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """L2 inner product of two scalars from their cosine coefficients."""
    return float(np.sum(grid.wcos * np.asarray(a) * np.asarray(b)))


def flux_inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """L2 inner product of two flux fields from their mixed coefficients."""
    s = 0.0
    for i in range(grid.dim):
        s += float(np.sum(grid.wflux[i] * np.asarray(a[i]) * np.asarray(b[i])))
    return s


# ---------------------------------------------------------------------------
# dealiased nonlinear evaluation (2x oversampling per axis)
# ---------------------------------------------------------------------------

def _pad(coeffs: np.ndarray, factor: int = 2) -> np.ndarray:
    shape = tuple(factor * m for m in coeffs.shape)
    out = np.zeros(shape)
    out[tuple(slice(0, m) for m in coeffs.shape)] = coeffs
    return out


def oversampled_nodal(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Evaluate scalar coefficients on the 2x-oversampled midpoint grid."""
    grid.check_scalar(np.asarray(coeffs))
    return _cos_synthesis(_pad(np.asarray(coeffs, dtype=float)))


def nonlinear_coeffs(grid: Grid, coeffs: np.ndarray, func) -> np.ndarray:
    """Dealiased coefficients of a pointwise function of a scalar field.

    The field is synthesized on the doubled grid, func is applied nodally,
    and the result is projected back onto the retained cosine band.  For
    polynomial func up to quartic degree the projection is alias-free.
    """
    vals = func(oversampled_nodal(grid, coeffs))
    big = _cos_analysis(vals)
    return big[tuple(slice(0, m) for m in grid.shape)]


def project_oversampled(grid: Grid, nodal_over: np.ndarray) -> np.ndarray:
    """Project 2x-oversampled nodal values onto the retained cosine band.

    Companion to ``oversampled_nodal`` for workflows that combine several
    oversampled fields pointwise (e.g. a product) before projecting once.
    """
    a = np.asarray(nodal_over, dtype=float)
    if a.shape != tuple(2 * m for m in grid.shape):
        raise DimensionMismatchError(
            f"oversampled field shape {a.shape} does not match "
            f"{tuple(2 * m for m in grid.shape)}"
        )
    big = _cos_analysis(a)
    return big[tuple(slice(0, m) for m in grid.shape)]


def oversampled_mean(grid: Grid, func, *coeff_fields) -> float:
    """Mean of a pointwise function of one or more scalar fields.

    Each field is synthesized on the 2x-oversampled grid; the collocation
    mean there is the midpoint quadrature of the unit box and is exact for
    products up to quartic total degree of retained-band fields.
    """
    nodals = [oversampled_nodal(grid, c) for c in coeff_fields]
    return float(np.mean(func(*nodals)))
