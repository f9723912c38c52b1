import math

import numpy as np
import pytest

from visclimit import grids, stress
from visclimit.grids import Grid, TensorField, TopologyError, vector
from visclimit.thermo import GasModel

from conftest import fit_slope


def tensor_field(grid, mat):
    vals = np.broadcast_to(np.asarray(mat, float), (grid.nx, grid.ny, 2, 2)).copy()
    return TensorField(grid, vals)


def test_stress_identity_gradient(model, torus16):
    sig = stress.stress_tensor(model, tensor_field(torus16, np.eye(2))).values
    assert np.allclose(sig, (8.0 / 3.0) * np.eye(2), atol=1e-14)


def test_stress_pure_rotation(model, torus16):
    sig = stress.stress_tensor(model, tensor_field(torus16, [[0, 1], [-1, 0]])).values
    assert np.abs(sig).max() <= 1e-14


def test_stress_trace_free_input(torus16):
    # the bulk term vanishes on trace-free gradients for any eta
    for eta in (1.0, 2.5):
        m = GasModel(mu=1.0, eta=eta)
        sig = stress.stress_tensor(m, tensor_field(torus16, [[1, 0], [0, -1]])).values
        assert np.allclose(sig, 2.0 * np.diag([1.0, -1.0]), atol=1e-14)


def test_stress_symmetry_and_linearity(model, torus16):
    rng = np.random.RandomState(5)
    A = TensorField(torus16, rng.randn(16, 16, 2, 2))
    B = TensorField(torus16, rng.randn(16, 16, 2, 2))
    sa = stress.stress_tensor(model, A).values
    assert np.array_equal(sa[..., 0, 1], sa[..., 1, 0])
    combo = TensorField(torus16, 1.3 * A.values - 0.7 * B.values)
    lhs = stress.stress_tensor(model, combo).values
    rhs = 1.3 * sa - 0.7 * stress.stress_tensor(model, B).values
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_dissipation_examples(model, torus16):
    d = stress.dissipation(model, tensor_field(torus16, np.eye(2))).values
    assert np.allclose(d, 16.0 / 3.0, atol=1e-14)
    d = stress.dissipation(model, tensor_field(torus16, [[0, 2], [-2, 0]])).values
    assert np.abs(d).max() <= 1e-14


def test_dissipation_nonnegative_sampled(torus16):
    # Rayleigh quotient over 10^5 random gradient tensors, eta > 2 mu / 3
    m = GasModel(mu=1.0, eta=1.0)
    rng = np.random.RandomState(42)
    G = rng.randn(100000, 2, 2)
    sym = G + np.swapaxes(G, 1, 2)
    div = G[:, 0, 0] + G[:, 1, 1]
    sig = m.mu * sym
    sig[:, 0, 0] += (m.eta - 2 * m.mu / 3) * div
    sig[:, 1, 1] += (m.eta - 2 * m.mu / 3) * div
    quot = np.einsum("nab,nab->n", sig, G) / np.einsum("nab,nab->n", G, G)
    assert quot.min() > 0


def test_dissipation_coercivity_shear(model):
    g = Grid(32, 32, 1.0, 1.0, "channel")
    _, Y = g.mesh()
    u = vector(g, Y, np.zeros_like(Y))
    lhs, rhs, theta = stress.dissipation_coercivity(model, u)
    # closed form: sigma:grad u = mu (dy u1)^2 = 1 pointwise and |grad u|^2 = 1
    assert lhs == pytest.approx(1.0, rel=1e-12)
    assert rhs == pytest.approx(1.0, rel=1e-12)
    assert theta == pytest.approx(1.0, rel=1e-12)


def test_dissipation_coercivity_zero_field(model, channel32):
    lhs, rhs, theta = stress.dissipation_coercivity(model, vector(channel32, np.zeros((32, 32)), np.zeros((32, 32))))
    assert lhs == 0.0 and rhs == 0.0
    assert math.isnan(theta)


def test_dissipation_coercivity_refinement(model):
    vals = {}
    for n in (128, 256):
        g = Grid(n, n, 1.0, 1.0, "channel")
        X, Y = g.mesh()
        u = vector(g, np.sin(np.pi * Y) * np.cos(2 * np.pi * X),
                   0.5 * np.sin(np.pi * Y) ** 2 * np.sin(2 * np.pi * X))
        vals[n] = stress.dissipation_coercivity(model, u)[2]
    # stabilizes to three significant digits between the two finest grids
    assert abs(vals[128] - vals[256]) / vals[256] <= 1e-3


def test_boundary_stress_tangential_linear_shear(model):
    g = Grid(32, 32, 1.0, 1.0, "channel")
    _, Y = g.mesh()
    tr = stress.boundary_stress_tangential(model, vector(g, Y, np.zeros_like(Y)))
    assert np.abs(tr.bottom + 1.0).max() <= 1e-12
    assert np.abs(tr.top + 1.0).max() <= 1e-12


def test_boundary_stress_zero_field(model, channel32):
    tr = stress.boundary_stress_tangential(
        model, vector(channel32, np.zeros((32, 32)), np.zeros((32, 32)))
    )
    assert np.abs(tr.bottom).max() == 0.0


def test_boundary_stress_sin_profile(model):
    # closed-form derivative oracle: bottom trace = -mu pi cos(0) = -pi, O(h^2)
    errs, hs = [], []
    for n in (64, 128):
        g = Grid(n, n, 1.0, 1.0, "channel")
        _, Y = g.mesh()
        tr = stress.boundary_stress_tangential(model, vector(g, np.sin(np.pi * Y), np.zeros_like(Y)))
        errs.append(np.abs(tr.bottom + np.pi).max())
        hs.append(g.hy)
    assert errs[0] <= 8e-3
    assert fit_slope(hs, errs) >= 1.8


def test_boundary_ops_require_channel(model, torus16):
    u = vector(torus16, np.zeros((16, 16)), np.zeros((16, 16)))
    with pytest.raises(TopologyError):
        stress.boundary_stress_tangential(model, u)
    with pytest.raises(TopologyError):
        stress.vorticity_trace_form(model, u)


def test_vorticity_trace_flat_wall(model):
    g = Grid(32, 32, 1.0, 1.0, "channel")
    _, Y = g.mesh()
    u = vector(g, Y, np.zeros_like(Y))
    tr = stress.vorticity_trace_form(model, u)
    # omega = -1, kappa = 0: trace = mu * omega = -1, matching the direct route
    assert np.abs(tr.bottom + 1.0).max() <= 1e-12
    direct = stress.boundary_stress_tangential(model, u)
    assert np.abs(tr.bottom - direct.bottom).max() <= 1e-12


def test_vorticity_trace_zero_field(model, channel32):
    tr = stress.vorticity_trace_form(
        model, vector(channel32, np.zeros((32, 32)), np.zeros((32, 32)))
    )
    assert np.abs(tr.bottom).max() == 0.0 and np.abs(tr.top).max() == 0.0


def test_vorticity_trace_prescribed_kappa(model):
    # operator-level curvature term: trace = mu omega - kappa u.tau
    g = Grid(32, 32, 1.0, 1.0, "channel")
    _, Y = g.mesh()
    u = vector(g, Y + 2.0, np.zeros_like(Y))
    base = stress.vorticity_trace_form(model, u, kappa=0.0)
    shifted = stress.vorticity_trace_form(model, u, kappa=0.5)
    utau = stress.wall_tangential_velocity(u)
    assert np.allclose(shifted.bottom, base.bottom - 0.5 * utau.bottom, atol=1e-12)
    assert np.allclose(shifted.top, base.top - 0.5 * utau.top, atol=1e-12)


LEMMA_CASES = [
    lambda X, Y: (np.sin(np.pi * Y) * np.cos(2 * np.pi * X), np.sin(np.pi * Y) ** 2 * np.sin(2 * np.pi * X)),
    lambda X, Y: (np.cos(np.pi * Y) * np.cos(2 * np.pi * X), 0.5 * np.sin(np.pi * Y) * np.sin(2 * np.pi * X)),
    lambda X, Y: (np.exp(Y) * np.cos(2 * np.pi * X), 0.3 * Y * (1 - Y) * np.exp(Y) * np.sin(2 * np.pi * X)),
]


@pytest.mark.parametrize("case", range(len(LEMMA_CASES)))
def test_trace_identity_refinement(model, case):
    # the two wall-trace routes agree at second order for smooth u with u.n = 0
    errs, hs = [], []
    for n in (64, 128, 256):
        g = Grid(n, n, 1.0, 1.0, "channel")
        X, Y = g.mesh()
        u1, u2 = LEMMA_CASES[case](X, Y)
        u = vector(g, u1, u2)
        a = stress.boundary_stress_tangential(model, u)
        b = stress.vorticity_trace_form(model, u)
        errs.append(max(np.abs(a.bottom - b.bottom).max(), np.abs(a.top - b.top).max()))
        hs.append(g.hy)
    assert fit_slope(hs, errs) >= 1.8
