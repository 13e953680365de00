"""Transform conventions, operator algebra, and dealiasing.

The expected values here are built independently with explicit cosine/sine
sums (np.cos/np.sin on the midpoint nodes), never through the module under
test, so these tests pin the basis conventions rather than echo them.
"""

import numpy as np
import pytest

from chic.spectral import (
    DimensionMismatchError,
    Grid,
    apply_operator,
    divergence,
    flux_inner,
    flux_to_nodal,
    flux_to_spectral,
    gradient,
    mean_and_deflate,
    nonlinear_coeffs,
    oversampled_mean,
    oversampled_nodal,
    project_oversampled,
    scalar_inner,
    to_nodal,
    to_spectral,
)

RNG = np.random.default_rng(1234)


def midpoints(n):
    return (2.0 * np.arange(n) + 1.0) / (2.0 * n)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(0, 8)
    with pytest.raises(ValueError):
        Grid(4, 8)
    with pytest.raises(ValueError):
        Grid(1, 12)
    with pytest.raises(ValueError):
        Grid(1, 1)
    g = Grid(2, 16)
    assert g.shape == (16, 16)
    assert g.flux_shape == (2, 16, 16)


def test_scalar_single_mode_synthesis():
    # slot k must be cos(k pi x) with unit coefficient
    g = Grid(1, 16)
    x = midpoints(16)
    for k in (0, 1, 5, 15):
        c = np.zeros(g.shape)
        c[k] = 1.0
        np.testing.assert_allclose(to_nodal(g, c), np.cos(k * np.pi * x),
                                   atol=1e-14)


def test_scalar_roundtrip():
    for dim in (1, 2, 3):
        g = Grid(dim, 8)
        c = RNG.standard_normal(g.shape)
        c2 = to_spectral(g, to_nodal(g, c))
        np.testing.assert_allclose(c2, c, atol=1e-13)


def test_scalar_analysis_of_plain_cosine():
    g = Grid(2, 8)
    x = midpoints(8)
    nodal = (np.cos(2 * np.pi * x)[:, None]
             * np.cos(3 * np.pi * x)[None, :])
    c = to_spectral(g, nodal)
    expected = np.zeros(g.shape)
    expected[2, 3] = 1.0
    np.testing.assert_allclose(c, expected, atol=1e-14)


def test_flux_single_mode_synthesis():
    # flux component i: slot s along axis i is sin((s+1) pi x); cosine
    # elsewhere
    g = Grid(2, 8)
    x = midpoints(8)
    c = np.zeros(g.flux_shape)
    c[0, 2, 3] = 1.0
    nodal = flux_to_nodal(g, c)
    expected0 = np.sin(3 * np.pi * x)[:, None] * np.cos(3 * np.pi * x)[None, :]
    np.testing.assert_allclose(nodal[0], expected0, atol=1e-14)
    np.testing.assert_allclose(nodal[1], 0.0, atol=1e-14)


def test_flux_roundtrip():
    for dim in (1, 2, 3):
        g = Grid(dim, 8)
        c = RNG.standard_normal(g.flux_shape)
        c2 = flux_to_spectral(g, flux_to_nodal(g, c))
        np.testing.assert_allclose(c2, c, atol=1e-13)


def test_laplacian_eigenvalues():
    g = Grid(2, 8)
    for k in ((0, 0), (1, 0), (2, 5), (7, 7)):
        c = np.zeros(g.shape)
        c[k] = 1.0
        lam = np.pi ** 2 * (k[0] ** 2 + k[1] ** 2)
        np.testing.assert_allclose(apply_operator(g, c, "A"), lam * c,
                                   rtol=1e-14, atol=1e-14)


def test_fractional_operator_and_shifted_inverse():
    g = Grid(1, 16)
    c = RNG.standard_normal(g.shape)
    c[0] = 0.0
    lam = np.pi ** 2 * np.arange(16) ** 2
    np.testing.assert_allclose(apply_operator(g, c, "A0_pow", r=-2)[1:],
                               (c / lam.clip(min=1))[1:], rtol=1e-13)
    c[0] = 0.3
    shifted = apply_operator(g, c, "inv_shifted", c=2.5)
    np.testing.assert_allclose(shifted, c / (2.5 + lam), rtol=1e-13)


def test_a0_pow_requires_mean_free():
    from chic.spectral import MeanFreeError
    g = Grid(1, 8)
    c = np.ones(g.shape)
    with pytest.raises(MeanFreeError):
        apply_operator(g, c, "A0_pow", r=-1)


def test_gradient_analytic():
    # d/dx cos(k pi x) = -k pi sin(k pi x): slot k-1, factor -pi k
    g = Grid(1, 16)
    for k in (1, 4, 15):
        c = np.zeros(g.shape)
        c[k] = 1.0
        grad = gradient(g, c)
        expected = np.zeros(g.flux_shape)
        expected[0, k - 1] = -np.pi * k
        np.testing.assert_allclose(grad, expected, atol=1e-13)


def test_divergence_is_negative_adjoint_of_gradient():
    for dim in (1, 2):
        g = Grid(dim, 8)
        u = RNG.standard_normal(g.shape)
        f = RNG.standard_normal(g.flux_shape)
        lhs = flux_inner(g, gradient(g, u), f)
        rhs = -scalar_inner(g, u, divergence(g, f))
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


def test_div_grad_is_minus_laplacian():
    g = Grid(2, 8)
    u = RNG.standard_normal(g.shape)
    np.testing.assert_allclose(divergence(g, gradient(g, u)),
                               -apply_operator(g, u, "A"),
                               rtol=1e-12, atol=1e-12)


def test_parseval_scalar():
    g = Grid(2, 16)
    a = RNG.standard_normal(g.shape)
    b = RNG.standard_normal(g.shape)
    na = to_nodal(g, a)
    nb = to_nodal(g, b)
    assert abs(scalar_inner(g, a, b) - np.mean(na * nb)) < 1e-13


def test_parseval_flux():
    # nodal quadrature is exact only below the top sine slot (its square
    # aliases cos(2 n pi x) to a constant), so zero that slot first
    g = Grid(2, 16)
    a = RNG.standard_normal(g.flux_shape)
    b = RNG.standard_normal(g.flux_shape)
    for i in range(2):
        idx = [slice(None)] * 2
        idx[i] = g.n - 1
        a[i][tuple(idx)] = 0.0
        b[i][tuple(idx)] = 0.0
    na = flux_to_nodal(g, a)
    nb = flux_to_nodal(g, b)
    assert abs(flux_inner(g, a, b) - np.mean(np.sum(na * nb, axis=0))) < 1e-12


def test_flux_inner_top_slot_weight():
    # the orphan slot is sin(n pi x); its true L2 norm squared is 1/2 even
    # though its midpoint samples are all +-1
    g = Grid(1, 8)
    c = np.zeros(g.flux_shape)
    c[0, 7] = 1.0
    assert flux_inner(g, c, c) == pytest.approx(0.5, abs=1e-15)
    nodal = flux_to_nodal(g, c)
    np.testing.assert_allclose(np.abs(nodal[0]), 1.0, atol=1e-14)


def test_mean_and_deflate():
    g = Grid(2, 8)
    c = RNG.standard_normal(g.shape)
    mean, tilde = mean_and_deflate(g, c)
    assert mean == c[0, 0]
    assert tilde[0, 0] == 0.0
    # and the rest is untouched
    c2 = tilde.copy()
    c2[0, 0] = mean
    np.testing.assert_array_equal(c2, c)


def brute_force_band_projection(n, nodal_over):
    """Independent oracle: fit 2n cosine coefficients at the 2n midpoints
    by solving the full collocation system, then truncate to the band."""
    x = midpoints(2 * n)
    basis = np.cos(np.outer(x, np.arange(2 * n)) * np.pi)
    coeffs = np.linalg.solve(basis, nodal_over)
    return coeffs[:n]


def test_nonlinear_coeffs_matches_brute_force():
    n = 8
    g = Grid(1, n)
    c = RNG.standard_normal(g.shape) / (1.0 + np.arange(n))
    cubic = nonlinear_coeffs(g, c, lambda y: y ** 3 - y)
    x = midpoints(2 * n)
    nodal_over = np.zeros(2 * n)
    for k in range(n):
        nodal_over += c[k] * np.cos(k * np.pi * x)
    expected = brute_force_band_projection(n, nodal_over ** 3 - nodal_over)
    np.testing.assert_allclose(cubic, expected, rtol=1e-12, atol=1e-12)


def test_dealiasing_exact_for_cubics():
    # a cubic of band-limited data has frequencies < 4n-4 < 4n, so the
    # oversampled product is an exact projection: comparing against a
    # 4x-oversampled evaluation must agree to rounding
    n = 16
    g = Grid(1, n)
    c = RNG.standard_normal(n) / (1.0 + np.arange(n)) ** 2
    cubic = nonlinear_coeffs(g, c, lambda y: y ** 3)
    x4 = midpoints(4 * n)
    nodal4 = np.zeros(4 * n)
    for k in range(n):
        nodal4 += c[k] * np.cos(k * np.pi * x4)
    basis = np.cos(np.outer(x4, np.arange(4 * n)) * np.pi)
    full = np.linalg.solve(basis, nodal4 ** 3)
    np.testing.assert_allclose(cubic, full[:n], rtol=1e-11, atol=1e-12)


def test_oversampled_mean_analytic():
    # mean of (c1 cos(pi x))^4 over [0,1] is c1^4 * 3/8
    g = Grid(1, 16)
    c = np.zeros(g.shape)
    c[1] = 0.7
    val = oversampled_mean(g, lambda y: y ** 4, c)
    assert abs(val - 0.7 ** 4 * 3.0 / 8.0) < 1e-14


def test_oversampled_mean_multiple_fields():
    g = Grid(1, 16)
    a = np.zeros(g.shape)
    b = np.zeros(g.shape)
    a[1] = 2.0
    b[1] = 0.5
    # mean of a*b = 2*0.5*<cos^2> = 0.5
    val = oversampled_mean(g, lambda u, v: u * v, a, b)
    assert abs(val - 0.5) < 1e-14


def test_project_oversampled_roundtrip():
    for dim in (1, 2):
        g = Grid(dim, 8)
        c = RNG.standard_normal(g.shape)
        np.testing.assert_allclose(
            project_oversampled(g, oversampled_nodal(g, c)), c,
            rtol=1e-13, atol=1e-13)


def test_no_flux_normal_trace():
    # every flux basis function has zero normal component on the walls
    g = Grid(2, 8)
    c = RNG.standard_normal(g.flux_shape)
    freqs = np.pi * np.arange(1, g.n + 1)
    for i in range(2):
        comp = np.moveaxis(c[i], i, -1)
        for x in (0.0, 1.0):
            trace = comp @ np.sin(freqs * x)
            assert np.abs(trace).max() < 1e-12 * max(1.0, np.abs(c).max())


def test_shape_mismatch_raises():
    g = Grid(2, 8)
    with pytest.raises(DimensionMismatchError):
        to_nodal(g, np.zeros((8, 4)))
    with pytest.raises(DimensionMismatchError):
        flux_to_nodal(g, np.zeros((8, 8)))
    with pytest.raises(DimensionMismatchError):
        project_oversampled(g, np.zeros((8, 8)))


def test_operator_self_adjoint_and_nonnegative():
    g = Grid(2, 8)
    vals = []
    for _ in range(20):
        u = RNG.standard_normal(g.shape)
        v = RNG.standard_normal(g.shape)
        au_v = scalar_inner(g, apply_operator(g, u, "A"), v)
        u_av = scalar_inner(g, u, apply_operator(g, v, "A"))
        assert abs(au_v - u_av) <= 1e-12 * max(1.0, abs(au_v))
        vals.append(scalar_inner(g, apply_operator(g, u, "A"), u))
    assert min(vals) > 0.0
    const = np.zeros(g.shape)
    const[0, 0] = 3.0
    assert scalar_inner(g, apply_operator(g, const, "A"), const) == 0.0
