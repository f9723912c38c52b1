"""Reference/test pairs (r, w): closed-form families, numeric Euler runs, fake layers.

A test pair carries a positive density r and a velocity w with w.n = 0 on
walls, together with the residual of the isentropic velocity equation
E = dw/dt + (w.grad)w + grad H'(r) and the mass-equation residual.
"""

import math
from dataclasses import replace

import numpy as np
import sympy as sp

from . import grids, solver, thermo
from .grids import ScalarField, TensorField, TopologyError, VectorField

X, Y, T = sp.symbols("x y t")


class ReferenceNotSmoothError(RuntimeError):
    """Euler reference run left the smooth regime (gradient growth heuristic)."""


def _bind(expr):
    """Sympify and bind free symbols named x, y, t to the module symbols."""
    expr = sp.sympify(expr)
    names = {"x": X, "y": Y, "t": T}
    sub = {}
    for s in expr.free_symbols:
        if s.name not in names:
            raise ValueError(f"test-pair expression has unknown symbol {s.name!r}")
        sub[s] = names[s.name]
    return expr.subs(sub)


def _lamb(expr):
    fn = sp.lambdify((X, Y, T), expr, modules="numpy")

    def wrapped(xs, ys, t):
        out = fn(xs, ys, t)
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(xs)).copy()

    return wrapped


def _sym_spectral_max(g11, g12s, g22):
    """Max |eigenvalue| of the symmetric 2x2 field [[g11, g12s], [g12s, g22]]."""
    mean = 0.5 * (g11 + g22)
    rad = np.sqrt(0.25 * (g11 - g22) ** 2 + g12s**2)
    return float(np.max(np.abs(mean) + rad))


class AnalyticTestPair:
    """Closed-form (r, w) with symbolic derivatives and residuals."""

    kind = "analytic"

    def __init__(self, grid, model, r_expr, w1_expr, w2_expr, t_max=1.0, name="manufactured"):
        self.grid = grid
        self.model = model
        self.name = name
        self.t_max = t_max
        r_expr = _bind(r_expr)
        w1_expr = _bind(w1_expr)
        w2_expr = _bind(w2_expr)
        self.exprs = (r_expr, w1_expr, w2_expr)

        g = model.gamma
        hp = model.a0 * g / (g - 1.0) * r_expr ** (g - 1)
        e1 = sp.diff(w1_expr, T) + w1_expr * sp.diff(w1_expr, X) + w2_expr * sp.diff(w1_expr, Y) + sp.diff(hp, X)
        e2 = sp.diff(w2_expr, T) + w1_expr * sp.diff(w2_expr, X) + w2_expr * sp.diff(w2_expr, Y) + sp.diff(hp, Y)
        mass = sp.diff(r_expr, T) + sp.diff(r_expr * w1_expr, X) + sp.diff(r_expr * w2_expr, Y)

        self._r = _lamb(r_expr)
        self._w1 = _lamb(w1_expr)
        self._w2 = _lamb(w2_expr)
        self._dr_dt = _lamb(sp.diff(r_expr, T))
        self._dr_dx = _lamb(sp.diff(r_expr, X))
        self._dr_dy = _lamb(sp.diff(r_expr, Y))
        self._dw = {
            (a, v): _lamb(sp.diff(w, var))
            for a, w in ((0, w1_expr), (1, w2_expr))
            for v, var in (("t", T), ("x", X), ("y", Y))
        }
        self._e1 = _lamb(sp.simplify(e1))
        self._e2 = _lamb(sp.simplify(e2))
        self._mass = _lamb(sp.simplify(mass))

        self._validate()

    def _validate(self):
        Xc, Yc = self.grid.mesh()
        rmin, rmax = np.inf, -np.inf
        for t in np.linspace(0.0, self.t_max, 9):
            rv = self._r(Xc, Yc, t)
            rmin = min(rmin, rv.min())
            rmax = max(rmax, rv.max())
            if self.grid.has_walls:
                wb, wt = self.wall_normal_velocity(t)
                if max(np.abs(wb).max(), np.abs(wt).max()) > 1e-12:
                    raise ValueError("test pair must satisfy w.n = 0 at the walls")
        if rmin <= 0:
            raise ValueError("test pair density must stay positive")
        self.r_bounds = (float(rmin), float(rmax))

    # grid-sampled fields -------------------------------------------------
    def _mesh(self):
        return self.grid.mesh()

    def r(self, t):
        Xc, Yc = self._mesh()
        return ScalarField(self.grid, self._r(Xc, Yc, t))

    def w(self, t):
        Xc, Yc = self._mesh()
        return VectorField(self.grid, np.stack([self._w1(Xc, Yc, t), self._w2(Xc, Yc, t)], axis=-1))

    def dr_dt(self, t):
        Xc, Yc = self._mesh()
        return ScalarField(self.grid, self._dr_dt(Xc, Yc, t))

    def dw_dt(self, t):
        Xc, Yc = self._mesh()
        return VectorField(
            self.grid,
            np.stack([self._dw[(0, "t")](Xc, Yc, t), self._dw[(1, "t")](Xc, Yc, t)], axis=-1),
        )

    def grad_r(self, t):
        Xc, Yc = self._mesh()
        return VectorField(
            self.grid, np.stack([self._dr_dx(Xc, Yc, t), self._dr_dy(Xc, Yc, t)], axis=-1)
        )

    def grad_w(self, t):
        Xc, Yc = self._mesh()
        out = np.empty((self.grid.nx, self.grid.ny, 2, 2))
        for a in range(2):
            out[:, :, a, 0] = self._dw[(a, "x")](Xc, Yc, t)
            out[:, :, a, 1] = self._dw[(a, "y")](Xc, Yc, t)
        return TensorField(self.grid, out)

    def residual_E(self, t):
        Xc, Yc = self._mesh()
        return VectorField(self.grid, np.stack([self._e1(Xc, Yc, t), self._e2(Xc, Yc, t)], axis=-1))

    def mass_residual(self, t):
        Xc, Yc = self._mesh()
        return ScalarField(self.grid, self._mass(Xc, Yc, t))

    def div_w_inf(self, t):
        g = self.grad_w(t).values
        return float(np.max(np.abs(g[..., 0, 0] + g[..., 1, 1])))

    def grad_w_sym_inf(self, t):
        g = self.grad_w(t).values
        return _sym_spectral_max(g[..., 0, 0], 0.5 * (g[..., 0, 1] + g[..., 1, 0]), g[..., 1, 1])

    # wall values ----------------------------------------------------------
    def wall_normal_velocity(self, t):
        xs = self.grid.xcenters()
        y0 = np.zeros_like(xs)
        return self._w2(xs, y0, t), self._w2(xs, y0 + self.grid.Ly, t)

    def wall_tangential_velocity(self, t):
        xs = self.grid.xcenters()
        y0 = np.zeros_like(xs)
        return self._w1(xs, y0, t), -self._w1(xs, y0 + self.grid.Ly, t)


def family_shear(W_expr, r0, grid, model):
    """Steady shear (r, w) = (r0, (W(y), 0)): an exact Euler solution, E = 0."""
    if r0 <= 0:
        raise ValueError("shear density must be positive")
    W = sp.sympify(W_expr)
    return AnalyticTestPair(grid, model, sp.Float(r0), W, sp.Integer(0), name="shear")


def family_manufactured(r_expr, w_expr, grid, model, t_max=1.0, name="manufactured"):
    """General closed-form pair; residuals are computed, not assumed zero."""
    w1, w2 = w_expr
    return AnalyticTestPair(grid, model, r_expr, w1, w2, t_max=t_max, name=name)


def family_traveling(grid, model, r0=1.0, amp=0.2, speed=1.0, flux=0.5, t_max=1.0):
    """Traveling wave r = R(x - ct), w = (c + K/R, 0): solves the mass equation
    exactly with nonzero div w, so the velocity residual E is genuinely exercised."""
    if r0 <= abs(amp):
        raise ValueError("traveling family needs r0 > |amp|")
    xi = X - speed * T
    R = r0 + amp * sp.sin(2 * sp.pi * xi / grid.Lx)
    w1 = speed + flux / R
    return AnalyticTestPair(grid, model, R, w1, sp.Integer(0), t_max=t_max, name="traveling")


def family_vortex(grid, model, psi_expr, r0=1.0, t_max=1.0):
    """Divergence-free w from a stream function, constant r: exact mass equation."""
    psi = sp.sympify(psi_expr)
    return AnalyticTestPair(
        grid, model, sp.Float(r0), sp.diff(psi, Y), -sp.diff(psi, X), t_max=t_max, name="vortex"
    )


def residual_via_fd(pair, xs, ys, t, step=4e-3):
    """Velocity and mass residuals by 6th-order finite differences on a fine
    auxiliary stencil, independent of the symbolic-derivative path."""
    if pair.kind != "analytic":
        raise TypeError("finite-difference residual needs a closed-form pair")
    w1, w2, r = pair._w1, pair._w2, pair._r
    g = pair.model.gamma
    coef = pair.model.a0 * g / (g - 1.0)

    def hp(x, y, tt):
        return coef * r(x, y, tt) ** (g - 1.0)

    def d6(f, var):
        offs = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]) * step
        wts = np.array([-1.0, 9.0, -45.0, 45.0, -9.0, 1.0]) / (60.0 * step)
        acc = 0.0
        for o, wgt in zip(offs, wts):
            if var == "x":
                acc = acc + wgt * f(xs + o, ys, t)
            elif var == "y":
                acc = acc + wgt * f(xs, ys + o, t)
            else:
                acc = acc + wgt * f(xs, ys, t + o)
        return acc

    w1v = w1(xs, ys, t)
    w2v = w2(xs, ys, t)
    e1 = d6(w1, "t") + w1v * d6(w1, "x") + w2v * d6(w1, "y") + d6(hp, "x")
    e2 = d6(w2, "t") + w1v * d6(w2, "x") + w2v * d6(w2, "y") + d6(hp, "y")
    mass = d6(r, "t") + d6(lambda x, y, tt: r(x, y, tt) * w1(x, y, tt), "x") + d6(
        lambda x, y, tt: r(x, y, tt) * w2(x, y, tt), "y"
    )
    return e1, e2, mass


# ---------------------------------------------------------------------------
# numeric Euler references


class NumericTestPair:
    """A high-resolution Euler run restricted to the diagnostics grid."""

    kind = "numeric"

    def __init__(self, grid, model, times, r_snaps, w_snaps, name="euler"):
        self.grid = grid
        self.model = model
        self.name = name
        self.times = np.asarray(times, float)
        self._r_snaps = r_snaps
        self._w_snaps = w_snaps
        self.r_bounds = (
            float(min(r.min() for r in r_snaps)),
            float(max(r.max() for r in r_snaps)),
        )

    def _locate(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no reference snapshot at t={t}; cadences must align")
        return k

    def r(self, t):
        return ScalarField(self.grid, self._r_snaps[self._locate(t)])

    def w(self, t):
        return VectorField(self.grid, self._w_snaps[self._locate(t)])

    def dr_dt(self, t):
        return ScalarField(self.grid, self._time_diff(self._r_snaps, t))

    def dw_dt(self, t):
        return VectorField(self.grid, self._time_diff(self._w_snaps, t))

    def _time_diff(self, snaps, t):
        k = self._locate(t)
        if len(self.times) == 1:
            return np.zeros_like(snaps[0])
        if k == 0:
            return (snaps[1] - snaps[0]) / (self.times[1] - self.times[0])
        if k == len(self.times) - 1:
            return (snaps[-1] - snaps[-2]) / (self.times[-1] - self.times[-2])
        return (snaps[k + 1] - snaps[k - 1]) / (self.times[k + 1] - self.times[k - 1])

    def grad_r(self, t):
        return grids.gradient(self.r(t))

    def grad_w(self, t):
        return grids.gradient(self.w(t))

    def residual_E(self, t):
        """A-posteriori residual of the velocity equation under grid operators."""
        w = self.w(t).values
        gw = self.grad_w(t).values
        hp = thermo.h_prime(self.model, self.r(t).values)
        ghp = grids.gradient(ScalarField(self.grid, hp)).values
        adv = np.einsum("...b,...ab->...a", w, gw)
        return VectorField(self.grid, self.dw_dt(t).values + adv + ghp)

    def mass_residual(self, t):
        rw = VectorField(self.grid, self.r(t).values[..., None] * self.w(t).values)
        return ScalarField(self.grid, self.dr_dt(t).values + grids.divergence(rw).values)

    def div_w_inf(self, t):
        return float(np.max(np.abs(grids.divergence(self.w(t)).values)))

    def grad_w_sym_inf(self, t):
        g = self.grad_w(t).values
        return _sym_spectral_max(g[..., 0, 0], 0.5 * (g[..., 0, 1] + g[..., 1, 0]), g[..., 1, 1])

    def wall_normal_velocity(self, t):
        if not self.grid.has_walls:
            raise TopologyError("no walls on the torus")
        b, tp = grids.wall_extrapolate(self.w(t).values[..., 1], self.grid)
        return b, tp

    def wall_tangential_velocity(self, t):
        b, tp = grids.wall_extrapolate(self.w(t).values[..., 0], self.grid)
        return b, -tp


def euler_numeric_reference(config, refine=2, growth_limit=10.0):
    """Run the Euler mode at `refine` times the resolution and wrap it as a pair.

    Raises ReferenceNotSmoothError when the max velocity gradient grows beyond
    `growth_limit` times its initial value during the run.
    """
    if refine < 1:
        raise ValueError("refine must be >= 1")
    fine_grid = replace(config.grid, nx=config.grid.nx * refine, ny=config.grid.ny * refine)
    bc = solver.BcSpec.none() if not config.grid.has_walls else solver.BcSpec.navier_slip(0.0)
    fine_cfg = replace(config, grid=fine_grid, epsilon=0.0, bc=bc)
    traj = solver.run(fine_cfg)

    grad_inf = []
    for snap in traj.snapshots:
        g = grids.gradient(snap.state.velocity(config.rho_floor)).values
        grad_inf.append(float(np.max(np.abs(g))))
    base = max(grad_inf[0], 1e-12)
    if max(grad_inf) > growth_limit * base:
        raise ReferenceNotSmoothError(
            f"gradient grew {max(grad_inf) / base:.1f}x during the reference run"
        )

    times, r_snaps, w_snaps = [], [], []
    for snap in traj.snapshots:
        rho = snap.state.rho.values
        mom = snap.state.mom.values
        if refine > 1:
            for _ in range(int(round(math.log2(refine)))):
                rho = grids.restrict_block2(rho)
                mom = grids.restrict_block2(mom)
        w = np.zeros_like(mom)
        np.divide(mom, rho[..., None], out=w, where=rho[..., None] > config.rho_floor)
        times.append(snap.state.time)
        r_snaps.append(rho)
        w_snaps.append(w)
    return NumericTestPair(config.grid, config.model, times, r_snaps, w_snaps)


# ---------------------------------------------------------------------------
# Kato fake layer


def chi(z):
    """C1 cutoff: chi(0) = 1, chi(z >= 1) = 0, chi' <= 0 on [0, 1]."""
    z = np.asarray(z, dtype=float)
    zc = np.clip(z, 0.0, 1.0)
    return (1.0 - zc) ** 2 * (1.0 + 2.0 * zc)


def chi_prime(z):
    z = np.asarray(z, dtype=float)
    inside = (z > 0.0) & (z < 1.0)
    return np.where(inside, -6.0 * z * (1.0 - z), 0.0)


class FakeLayer:
    """w_eps = w * chi(d / (c0 eps)): equals w at the walls, supported in the strip."""

    def __init__(self, pair, epsilon, c0=0.5):
        if not pair.grid.has_walls:
            raise TopologyError("fake layer requires a channel domain")
        if epsilon <= 0 or c0 <= 0:
            raise ValueError("fake layer needs epsilon > 0 and c0 > 0")
        self.pair = pair
        self.epsilon = float(epsilon)
        self.c0 = float(c0)
        self.width = self.c0 * self.epsilon
        self.grid = pair.grid
        d = grids.wall_distance(self.grid).values
        self._z = d / self.width
        # grad d: +e_y in the lower half, -e_y in the upper half
        ys = self.grid.ycenters()
        self._dsign = np.where(ys <= 0.5 * self.grid.Ly, 1.0, -1.0)[None, :]

    def field(self, t):
        return VectorField(self.grid, self.pair.w(t).values * chi(self._z)[..., None])

    def ddt(self, t):
        return VectorField(self.grid, self.pair.dw_dt(t).values * chi(self._z)[..., None])

    def grad(self, t):
        """chi grad w + (chi'/(c0 eps)) w (x) grad d, assembled from the pair's derivatives."""
        w = self.pair.w(t).values
        gw = self.pair.grad_w(t).values
        c = chi(self._z)[..., None, None]
        cp = (chi_prime(self._z) / self.width)[..., None]
        out = c * gw
        out[..., :, 1] += cp * w * self._dsign[..., None]
        return TensorField(self.grid, out)

    def div(self, t):
        g = self.grad(t).values
        return ScalarField(self.grid, g[..., 0, 0] + g[..., 1, 1])


def fake_layer(pair, epsilon, c0=0.5):
    return FakeLayer(pair, epsilon, c0)


def fake_layer_bounds(pair, epsilon, c0=0.5, times=(0.0,), n_layer=257, nx_samples=None):
    """Sup-norms of (div w_eps, d/dt w_eps, eps grad w_eps) on an eps-adapted sampling.

    The strip is sampled with n_layer points across its width regardless of eps,
    so the measured sup-norms track the continuum values for every sweep member.
    Requires a closed-form pair.
    """
    if pair.kind != "analytic":
        raise TypeError("fake-layer bounds need a closed-form pair")
    grid = pair.grid
    if not grid.has_walls:
        raise TopologyError("fake layer requires a channel domain")
    width = c0 * epsilon
    nxs = nx_samples or grid.nx
    xs = (np.arange(nxs) + 0.5) * grid.Lx / nxs
    zs = np.linspace(0.0, 1.0, n_layer)
    div_inf = ddt_inf = grad_inf = 0.0
    for t in times:
        for wall in ("bottom", "top"):
            if wall == "bottom":
                ys = zs * width
                dsign = 1.0
            else:
                ys = grid.Ly - zs * width
                dsign = -1.0
            Xs, Ys = np.meshgrid(xs, ys, indexing="ij")
            Zs = np.broadcast_to(zs, Xs.shape)
            c = chi(Zs)
            cp = chi_prime(Zs) / width
            w1 = pair._w1(Xs, Ys, t)
            w2 = pair._w2(Xs, Ys, t)
            d = pair._dw
            g11 = c * d[(0, "x")](Xs, Ys, t) + 0.0
            g12 = c * d[(0, "y")](Xs, Ys, t) + cp * w1 * dsign
            g21 = c * d[(1, "x")](Xs, Ys, t) + 0.0
            g22 = c * d[(1, "y")](Xs, Ys, t) + cp * w2 * dsign
            div_inf = max(div_inf, float(np.max(np.abs(g11 + g22))))
            ddt_inf = max(
                ddt_inf,
                float(np.max(np.hypot(c * d[(0, "t")](Xs, Ys, t), c * d[(1, "t")](Xs, Ys, t)))),
            )
            fro = np.sqrt(g11**2 + g12**2 + g21**2 + g22**2)
            grad_inf = max(grad_inf, float(epsilon * np.max(fro)))
    return {
        "div_inf": div_inf,
        "ddt_inf": ddt_inf,
        "eps_grad_inf": grad_inf,
        "total": div_inf + ddt_inf + grad_inf,
    }
