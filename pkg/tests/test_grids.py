import math

import numpy as np
import pytest

from visclimit import grids
from visclimit.grids import (
    BoundaryTrace,
    Grid,
    ScalarField,
    TopologyError,
    boundary_integrate,
    curl2d,
    det_sum,
    divergence,
    gradient,
    integrate,
    scalar,
    vector,
    wall_distance,
    wall_extrapolate,
)

from conftest import fit_slope


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(4, 16, 1.0, 1.0)
    with pytest.raises(ValueError):
        Grid(16, 16, -1.0, 1.0)
    with pytest.raises(ValueError):
        Grid(16, 16, 1.0, 1.0, "disk")


def test_cell_centers():
    g = Grid(8, 16, 2.0, 1.0)
    assert g.hx == 0.25
    assert g.hy == 0.0625
    assert g.xcenters()[0] == 0.125
    assert g.ycenters()[-1] == pytest.approx(1.0 - 0.03125)


def test_field_validation(torus16):
    with pytest.raises(ValueError):
        ScalarField(torus16, np.ones((4, 4)))
    with pytest.raises(ValueError):
        ScalarField(torus16, np.full((16, 16), np.nan))


def test_gradient_affine_channel():
    g = Grid(32, 32, 1.0, 1.0, "channel")
    X, Y = g.mesh()
    u = vector(g, Y, np.zeros_like(Y))
    G = gradient(u).values
    exact = np.zeros_like(G)
    exact[:, :, 0, 1] = 1.0
    assert np.abs(G - exact).max() <= 1e-12


def test_gradient_constant_zero(torus16):
    f = scalar(torus16, np.full((16, 16), 3.7))
    assert np.abs(gradient(f).values).max() == 0.0


def test_gradient_refinement_torus():
    errs, hs = [], []
    for n in (32, 64, 128):
        g = Grid(n, n, 1.0, 1.0)
        X, Y = g.mesh()
        f = scalar(g, np.sin(2 * np.pi * X))
        gx = gradient(f).values[..., 0]
        errs.append(np.abs(gx - 2 * np.pi * np.cos(2 * np.pi * X)).max())
        hs.append(g.hx)
    assert abs(fit_slope(hs, errs) - 2.0) <= 0.1


def test_curl_div_shear():
    g = Grid(16, 16, 1.0, 1.0, "channel")
    X, Y = g.mesh()
    v = vector(g, Y, np.zeros_like(Y))
    assert np.abs(divergence(v).values).max() <= 1e-12
    assert np.abs(curl2d(v).values + 1.0).max() <= 1e-12


def test_curl_of_gradient_vanishes():
    # periodic shift operators commute, so the discrete curl of a discrete
    # gradient is exact (stronger than the O(h^2) consistency bound)
    for n in (32, 64):
        g = Grid(n, n, 1.0, 1.0)
        X, Y = g.mesh()
        f = scalar(g, np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y))
        assert np.abs(curl2d(gradient(f)).values).max() <= 1e-12


def test_zero_vector_field(torus16):
    v = vector(torus16, np.zeros((16, 16)), np.zeros((16, 16)))
    assert np.abs(divergence(v).values).max() == 0.0
    assert np.abs(curl2d(v).values).max() == 0.0


def test_operator_linearity():
    g = Grid(24, 24, 1.0, 1.0, "channel")
    rng = np.random.RandomState(11)
    f1 = scalar(g, rng.randn(24, 24))
    f2 = scalar(g, rng.randn(24, 24))
    a, b = 1.7, -0.4
    combo = scalar(g, a * f1.values + b * f2.values)
    lhs = gradient(combo).values
    rhs = a * gradient(f1).values + b * gradient(f2).values
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_wall_distance():
    g = Grid(16, 16, 1.0, 1.0, "channel")
    d = wall_distance(g).values
    assert d[0, 3] == pytest.approx((3 + 0.5) / 16)
    assert d[:, 8].max() == pytest.approx(0.5 - 0.5 / 16)
    gt = Grid(16, 16, 1.0, 1.0)
    assert np.all(np.isinf(wall_distance(gt).values))


def test_wall_distance_midline():
    g = Grid(16, 17 * 2, 1.0, 1.0, "channel")
    d = wall_distance(g).values
    # the row nearest the midline approaches Ly/2
    assert d.max() <= 0.5
    assert d.max() == pytest.approx(0.5 - 0.5 / 34)


def test_integrate_constant():
    g = Grid(16, 16, 1.0, 1.0)
    assert integrate(scalar(g, np.ones((16, 16)))) == pytest.approx(1.0, abs=1e-15)


def test_integrate_strip():
    g = Grid(16, 64, 2.0, 1.0, "channel")
    one = scalar(g, np.ones((16, 64)))
    w = 4 / 64  # multiple of hy: exact
    assert integrate(one, strip_width=w) == pytest.approx(2 * w * 2.0, abs=1e-14)
    with pytest.raises(TopologyError):
        integrate(scalar(Grid(16, 16, 1.0, 1.0), np.ones((16, 16))), strip_width=0.1)


def test_integrate_sin_squared_refinement():
    # oracle: exact integral of sin^2(2 pi x) over the unit square is 1/2
    errs, hs = [], []
    for n in (16, 32, 64):
        g = Grid(n, n, 1.0, 1.0)
        X, _ = g.mesh()
        val = integrate(scalar(g, np.sin(2 * np.pi * X) ** 2))
        errs.append(abs(val - 0.5) + 1e-18)
        hs.append(g.hx)
    # midpoint rule on a periodic smooth integrand: spectrally small here
    assert errs[-1] <= 1e-12


def test_boundary_integrate():
    g = Grid(16, 16, 2.0, 1.0, "channel")
    tr = BoundaryTrace(g, np.ones(16), np.ones(16))
    assert boundary_integrate(tr) == pytest.approx(2 * 2.0, abs=1e-14)
    assert boundary_integrate(BoundaryTrace(g, np.zeros(16), np.zeros(16))) == 0.0
    x = g.xcenters()
    tr_sin = BoundaryTrace(g, np.sin(2 * np.pi * x / g.Lx), np.zeros(16))
    assert abs(boundary_integrate(tr_sin)) <= 1e-12
    assert det_sum(tr.weights) == pytest.approx(g.Lx)


def test_integration_by_parts_torus():
    g = Grid(32, 32, 1.0, 1.0)
    X, Y = g.mesh()
    f = scalar(g, np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y) + 0.3)
    v = vector(g, np.cos(2 * np.pi * Y) + 0.1, np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y))
    total = integrate(scalar(g, f.values * divergence(v).values)) + integrate(
        scalar(g, np.einsum("...a,...a->...", gradient(f).values, v.values))
    )
    # central differences are skew-adjoint under midpoint quadrature on the torus
    assert abs(total) <= 1e-12


def test_wall_extrapolate_quadratic_exact():
    g = Grid(16, 32, 1.0, 1.0, "channel")
    _, Y = g.mesh()
    vals = 2.0 - 3.0 * Y + 0.5 * Y**2
    b, t = wall_extrapolate(vals, g)
    assert np.abs(b - 2.0).max() <= 1e-12
    assert np.abs(t - (2.0 - 3.0 + 0.5)).max() <= 1e-12
    with pytest.raises(TopologyError):
        wall_extrapolate(vals, Grid(16, 32, 1.0, 1.0))


def test_restrict_block2():
    a = np.arange(16.0).reshape(4, 4)
    r = grids.restrict_block2(a)
    assert r.shape == (2, 2)
    assert r[0, 0] == pytest.approx((0 + 1 + 4 + 5) / 4)


def test_det_sum_matches_fsum():
    rng = np.random.RandomState(0)
    a = rng.randn(1000) * 10.0**rng.randint(-8, 8, 1000)
    assert det_sum(a) == math.fsum(a.tolist())
