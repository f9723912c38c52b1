"""Vanishing-viscosity diagnostics: relative energy, remainder, Gronwall bound,
strip integrals, boundary-stress pairings, and one-sided vorticity margins."""

from dataclasses import dataclass, field

import numpy as np

from . import grids, reference, solver, stress, thermo
from .grids import ScalarField, TopologyError
from .solver import NAVIER_SLIP


def relative_energy(state, model, testpair):
    """E(rho, u; r, w) = integral of rho |u - w|^2 / 2 + H(rho; r); nonnegative."""
    rho = state.rho.values
    u = state.velocity().values
    r = testpair.r(state.time).values
    if np.any(r <= 0):
        raise ValueError("reference density must be positive")
    w = testpair.w(state.time).values
    du = u - w
    dens = 0.5 * rho * (du[..., 0] ** 2 + du[..., 1] ** 2) + thermo.h_relative(model, rho, r)
    return grids.integrate(ScalarField(state.grid, dens))


def _snapshot_at(trajectory, t):
    times = trajectory.times
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"no snapshot at t={t}")
    return trajectory.snapshots[k]


def _wall_friction_pairing(state, bc, testpair):
    """Integral over the walls of lambda (u.tau)(w.tau); zero unless Navier slip."""
    if not state.grid.has_walls or bc.kind != NAVIER_SLIP or bc.lam == 0:
        return 0.0
    utau = stress.wall_tangential_velocity(state.velocity())
    wb, wt = testpair.wall_tangential_velocity(state.time)
    return bc.lam * state.grid.hx * (grids.det_sum(utau.bottom * wb) + grids.det_sum(utau.top * wt))


def remainder(trajectory, model, bc, testpair, t):
    """Remainder of the relative energy inequality, evaluated term by term.

    Includes the wall friction pairing and the Bregman divergence term against
    div w; the test pair supplies all reference derivatives.
    """
    snap = _snapshot_at(trajectory, t)
    state = snap.state
    grid = state.grid
    rho = state.rho.values
    u = state.velocity().values
    eps = state.epsilon

    r = testpair.r(t).values
    w = testpair.w(t).values
    dw_dt = testpair.dw_dt(t).values
    dr_dt = testpair.dr_dt(t).values
    grad_r = testpair.grad_r(t).values
    grad_w = testpair.grad_w(t).values
    div_w = grad_w[..., 0, 0] + grad_w[..., 1, 1]

    wu = w - u
    # rho (d_t + u . grad) w . (w - u)
    conv = dw_dt + np.einsum("...b,...ab->...a", u, grad_w)
    term1 = rho * np.einsum("...a,...a->...", conv, wu)
    # eps sigma(grad u) : grad w
    term2 = np.zeros_like(term1)
    if eps > 0:
        sig = stress.stress_tensor(model, grids.gradient(state.velocity())).values
        term2 = eps * np.einsum("...ab,...ab->...", sig, grad_w)
    # (r - rho) d_t H'(r) + (r w - rho u) . grad H'(r)
    hpp = thermo.h_double_prime(model, r)
    dtHp = hpp * dr_dt
    gHp = hpp[..., None] * grad_r
    term3 = (r - rho) * dtHp + np.einsum(
        "...a,...a->...", r[..., None] * w - rho[..., None] * u, gHp
    )
    # -(rho (H'(rho) - H'(r)) - H(rho; r)) div w
    term4 = -(
        rho * (thermo.h_prime(model, rho) - thermo.h_prime(model, r))
        - thermo.h_relative(model, rho, r)
    ) * div_w

    vol = grids.det_sum(term1 + term2 + term3 + term4) * grid.cell_volume
    return vol + _wall_friction_pairing(state, bc, testpair)


def remainder_reduced(trajectory, model, bc, testpair, t):
    """Remainder in its reduced form, valid when (r, w) solves the reference system.

    Algebraically identical to `remainder` given the pair's mass equation: the
    reference material derivative collapses onto the residual E, leaving the
    convective coupling rho ((u-w).grad)w . (w-u) and the Bregman term with the
    extra r (rho - r) H''(r) contribution.
    """
    snap = _snapshot_at(trajectory, t)
    state = snap.state
    grid = state.grid
    rho = state.rho.values
    u = state.velocity().values
    eps = state.epsilon

    r = testpair.r(t).values
    w = testpair.w(t).values
    E = testpair.residual_E(t).values
    grad_w = testpair.grad_w(t).values
    div_w = grad_w[..., 0, 0] + grad_w[..., 1, 1]

    wu = w - u
    term1 = rho * np.einsum("...a,...a->...", E, wu)
    coupling = -rho * np.einsum("...a,...ab,...b->...", wu, grad_w, wu)
    term2 = np.zeros_like(term1)
    if eps > 0:
        sig = stress.stress_tensor(model, grids.gradient(state.velocity())).values
        term2 = eps * np.einsum("...ab,...ab->...", sig, grad_w)
    hpp = thermo.h_double_prime(model, r)
    term4 = -(
        rho * (thermo.h_prime(model, rho) - thermo.h_prime(model, r))
        - r * (rho - r) * hpp
        - thermo.h_relative(model, rho, r)
    ) * div_w

    vol = grids.det_sum(term1 + coupling + term2 + term4) * grid.cell_volume
    return vol + _wall_friction_pairing(state, bc, testpair)


@dataclass
class GronwallResult:
    passed: bool
    margin: float
    slack: float
    bound: np.ndarray


def gronwall_check(times, erel, div_w_inf, forcing, c0, grad_w_sym_inf=None, slack_fraction=0.05):
    """Check E_rel(t) against its Gronwall bound built from the forcing series.

    The growth rate is c0 * ||div w||_inf plus, when supplied, twice the sup of
    the symmetric reference gradient (the convective coupling contribution).
    Passes when max(E_rel - bound) stays within the discretization slack.
    """
    times = np.asarray(times, float)
    erel = np.asarray(erel, float)
    rate = c0 * np.asarray(div_w_inf, float)
    if grad_w_sym_inf is not None:
        rate = rate + 2.0 * np.asarray(grad_w_sym_inf, float)
    forcing = np.asarray(forcing, float)

    dt = np.diff(times)
    I = np.concatenate([[0.0], np.cumsum(0.5 * dt * (rate[1:] + rate[:-1]))])
    # int_0^t e^{I(t)-I(s)} F(s) ds, trapezoid in s
    damped = np.exp(-I) * forcing
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (damped[1:] + damped[:-1]))])
    bound = np.exp(I) * (erel[0] + cum)

    margin = float(np.max(erel - bound))
    duration = float(times[-1] - times[0]) if len(times) > 1 else 0.0
    scale = erel[0] + float(np.max(np.abs(forcing))) * duration if len(times) else 0.0
    slack = slack_fraction * scale + 1e-12
    return GronwallResult(margin <= slack, margin, slack, bound)


def kato_components(state, model, epsilon, strip_width):
    """Instantaneous strip integrals (H term, weighted-velocity term, gradient term)."""
    grid = state.grid
    mask = grids.strip_mask(grid, strip_width)
    vol = grid.cell_volume
    rho = state.rho.values
    u = state.velocity().values
    d = grids.wall_distance(grid).values
    kH = grids.det_sum(thermo.h_energy(model, rho)[mask]) * vol
    usq = u[..., 0] ** 2 + u[..., 1] ** 2
    ku = epsilon * grids.det_sum((rho * usq / d**2)[mask]) * vol
    g = grids.gradient(state.velocity()).values
    gsq = np.einsum("...ab,...ab->...", g, g)
    kg = epsilon * grids.det_sum(gsq[mask]) * vol
    return kH, ku, kg


def kato_integral(trajectory, model, epsilon, strip_width=None):
    """Time-integrated strip functional (K_total, K_H, K_u, K_grad).

    The strip width defaults to epsilon itself; distances are evaluated at cell
    centers, so the weighted-velocity term never divides by zero.
    """
    if not trajectory.config.grid.has_walls:
        raise TopologyError("strip integral requires a channel domain")
    if strip_width is None:
        strip_width = epsilon
    times = trajectory.times
    comps = np.array(
        [kato_components(s.state, model, epsilon, strip_width) for s in trajectory.snapshots]
    )
    out = [solver._trapz(times, comps[:, i]) for i in range(3)]
    return (sum(out), *out)


@dataclass
class PairingResult:
    direct: float
    volume: float
    discrepancy: float
    direct_series: np.ndarray


def bardos_titi_pairing(trajectory, model, testpair, c0=0.5, layer_epsilon=None, t_start=0.0):
    """Boundary-stress pairing int eps sigma n.tau (w.tau), two independent ways.

    Route (a) integrates the extrapolated wall trace directly; route (b) pairs
    the momentum dynamics against the fake layer in the volume, using the
    layer's product-rule derivatives.  Their discrepancy measures the discrete
    weak-form identity.  `t_start` restricts the time window, which avoids the
    quadrature penalty of an initial-layer transient.
    """
    grid = trajectory.config.grid
    if not grid.has_walls:
        raise TopologyError("boundary pairing requires a channel domain")
    eps = trajectory.epsilon
    window = [s for s in trajectory.snapshots if s.state.time >= t_start - 1e-13]
    if len(window) < 2:
        raise ValueError("pairing window needs at least two snapshots")
    times = np.array([s.state.time for s in window])
    layer = reference.fake_layer(testpair, layer_epsilon or max(eps, 1e-12), c0)

    direct_series = []
    vol_series = []
    for snap in window:
        state = snap.state
        t = state.time
        u = state.velocity()
        rho = state.rho.values

        trace = stress.boundary_stress_tangential(model, u)
        wb, wt = testpair.wall_tangential_velocity(t)
        direct_series.append(
            eps * grid.hx * (grids.det_sum(trace.bottom * wb) + grids.det_sum(trace.top * wt))
        )

        we = layer.field(t).values
        dwe = layer.ddt(t).values
        gwe = layer.grad(t).values
        div_we = gwe[..., 0, 0] + gwe[..., 1, 1]
        p = thermo.pressure(model, rho)
        adv = np.einsum("...a,...b,...ab->...", rho[..., None] * u.values, u.values, gwe)
        integrand = (
            rho * np.einsum("...a,...a->...", u.values, dwe) + adv + p * div_we
        )
        if eps > 0:
            sig = stress.stress_tensor(model, grids.gradient(u)).values
            integrand -= eps * np.einsum("...ab,...ab->...", sig, gwe)
        vol_series.append(grids.det_sum(integrand) * grid.cell_volume)

    direct_series = np.array(direct_series)
    P_direct = solver._trapz(times, direct_series)

    def mom_pairing(snap):
        rho = snap.state.rho.values
        u = snap.state.velocity().values
        we = layer.field(snap.state.time).values
        return grids.det_sum(rho * np.einsum("...a,...a->...", u, we)) * grid.cell_volume

    P_volume = (
        mom_pairing(window[-1]) - mom_pairing(window[0]) - solver._trapz(times, vol_series)
    )
    return PairingResult(P_direct, P_volume, abs(P_direct - P_volume), direct_series)


def wall_vorticity(state):
    """Scaled wall vorticity eps (omega x n).tau = eps * omega at each wall."""
    omega = grids.curl2d(state.velocity()).values
    ob, ot = grids.wall_extrapolate(omega, state.grid)
    return state.epsilon * ob, state.epsilon * ot


def ckv_margin(trajectory, model, reference_pair=None):
    """One-sided vorticity defect M(t) = max(0, -min_wall eps omega), its time
    integral, and whether the reference keeps w.tau >= 0 on the walls."""
    grid = trajectory.config.grid
    if not grid.has_walls:
        raise TopologyError("vorticity margin requires a channel domain")
    times = trajectory.times
    M = []
    for snap in trajectory.snapshots:
        ob, ot = wall_vorticity(snap.state)
        M.append(max(0.0, -min(float(ob.min()), float(ot.min()))))
    M = np.array(M)
    flag = True
    if reference_pair is not None:
        for t in times:
            wb, wt = reference_pair.wall_tangential_velocity(t)
            if min(float(wb.min()), float(wt.min())) < -1e-10:
                flag = False
                break
    return M, solver._trapz(times, M), flag


@dataclass
class ReportOptions:
    kato_strip_width: float | None = None  # defaults to epsilon
    kato_min_rows: int = 0  # floor the strip at this many wall-adjacent cell rows
    fake_layer_c0: float = 0.5
    gronwall_slack: float = 0.05
    forcing_split: float = 0.5
    bregman_c0: float | None = None  # measured from the pair's r-range when None


@dataclass
class CriteriaReport:
    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    boundary_dissipation: np.ndarray
    erel: np.ndarray
    remainder: np.ndarray
    kato_h: np.ndarray
    kato_u: np.ndarray
    kato_grad: np.ndarray
    pairing_inc: np.ndarray
    ckv_m: np.ndarray
    scalars: dict = field(default_factory=dict)

    COLUMNS = ("time", "E", "diss", "bdiss", "Erel", "R", "K_H", "K_u", "K_grad", "P_inc", "M")

    def csv_text(self):
        rows = [",".join(self.COLUMNS)]
        data = (
            self.times,
            self.energy,
            self.dissipation,
            self.boundary_dissipation,
            self.erel,
            self.remainder,
            self.kato_h,
            self.kato_u,
            self.kato_grad,
            self.pairing_inc,
            self.ckv_m,
        )
        for k in range(len(self.times)):
            rows.append(",".join(f"{col[k]:.17g}" for col in data))
        return "\n".join(rows) + "\n"


def effective_strip_width(grid, epsilon, options):
    """Strip width for sweep diagnostics: epsilon (or the configured width),
    floored to keep at least `kato_min_rows` wall rows inside the strip."""
    width = options.kato_strip_width if options.kato_strip_width is not None else epsilon
    if options.kato_min_rows > 0:
        width = max(width, (options.kato_min_rows - 0.5) * grid.hy + 1e-12 * grid.hy)
    return width


def criteria_report(trajectory, model, bc, testpair, options=None):
    """Run every diagnostic on a trajectory and aggregate the results."""
    options = options or ReportOptions()
    grid = trajectory.config.grid
    eps = trajectory.epsilon
    times = trajectory.times
    snaps = trajectory.snapshots
    channel = grid.has_walls
    nt = len(times)

    energy = np.array([solver.energy_total(s.state, model) for s in snaps])
    erel = np.array([relative_energy(s.state, model, testpair) for s in snaps])
    rem = np.array([remainder(trajectory, model, bc, testpair, t) for t in times])

    diss = np.empty(nt)
    bdiss = np.zeros(nt)
    theta_vals = []
    for k, s in enumerate(snaps):
        u = s.state.velocity()
        lhs, rhs, theta = stress.dissipation_coercivity(model, u)
        diss[k] = lhs
        if rhs > 1e-14:
            theta_vals.append(theta)
        if channel and bc.kind == NAVIER_SLIP and bc.lam > 0:
            utau = stress.wall_tangential_velocity(u)
            bdiss[k] = bc.lam * grid.hx * (
                grids.det_sum(utau.bottom**2) + grids.det_sum(utau.top**2)
            )

    kato_h = np.zeros(nt)
    kato_u = np.zeros(nt)
    kato_g = np.zeros(nt)
    pairing_inc = np.zeros(nt)
    ckv_m = np.zeros(nt)
    scalars = {
        "epsilon": eps,
        "erel_final": float(erel[-1]),
        "theta0_hat": float(min(theta_vals)) if theta_vals else float("nan"),
        "floor_count": int(snaps[-1].floor_count),
    }

    mass = np.array([solver.total_mass(s.state) for s in snaps])
    scalars["mass_drift"] = float(np.max(np.abs(mass - mass[0])) / abs(mass[0]))

    if channel:
        width = effective_strip_width(grid, eps, options)
        for k, s in enumerate(snaps):
            kato_h[k], kato_u[k], kato_g[k] = kato_components(s.state, model, eps, width)
        scalars["kato_strip_width"] = width
        scalars["K_H"] = solver._trapz(times, kato_h)
        scalars["K_u"] = solver._trapz(times, kato_u)
        scalars["K_grad"] = solver._trapz(times, kato_g)
        scalars["K_total"] = scalars["K_H"] + scalars["K_u"] + scalars["K_grad"]

        pairing = bardos_titi_pairing(
            trajectory, model, testpair, c0=options.fake_layer_c0
        )
        pairing_inc = pairing.direct_series
        scalars["P_direct"] = pairing.direct
        scalars["P_volume"] = pairing.volume
        scalars["P_discrepancy"] = pairing.discrepancy

        ckv_m, int_m, flag = ckv_margin(trajectory, model, testpair)
        scalars["int_M_dt"] = float(int_m)
        scalars["ckv_reference_flag"] = bool(flag)

    # Gronwall bound against the reduced-form forcing
    r_min, r_max = testpair.r_bounds
    if options.bregman_c0 is not None:
        c0 = options.bregman_c0
    else:
        rho_max = max(max(float(s.state.rho.values.max()) for s in snaps), 1.5 * r_max) + 0.5
        c0 = thermo.bregman_coercivity_constant(model, max(r_min, 1e-3), r_max, rho_max)
    theta0 = scalars["theta0_hat"]
    csig = 2.0 * model.mu + 2.0 * abs(model.eta - 2.0 * model.mu / 3.0)
    C0 = csig**2 / (4.0 * theta0 * options.forcing_split) if theta0 and np.isfinite(theta0) else 0.0

    div_w_inf = np.array([testpair.div_w_inf(t) for t in times])
    grad_w_sym = np.array([testpair.grad_w_sym_inf(t) for t in times])
    forcing = np.empty(nt)
    for k, s in enumerate(snaps):
        t = times[k]
        rho = s.state.rho.values
        u = s.state.velocity().values
        E = testpair.residual_E(t).values
        w = testpair.w(t).values
        gw = testpair.grad_w(t).values
        f = grids.det_sum(
            rho * np.einsum("...a,...a->...", E, w - u)
        ) * grid.cell_volume
        f += C0 * eps * grids.det_sum(np.einsum("...ab,...ab->...", gw, gw)) * grid.cell_volume
        f += _wall_friction_pairing(s.state, bc, testpair)
        forcing[k] = f
    gron = gronwall_check(
        times, erel, div_w_inf, forcing, c0,
        grad_w_sym_inf=grad_w_sym, slack_fraction=options.gronwall_slack,
    )
    scalars["c0_bregman"] = float(c0)
    scalars["C0_forcing"] = float(C0)
    scalars["gronwall_margin"] = gron.margin
    scalars["gronwall_slack"] = gron.slack
    scalars["gronwall_passed"] = bool(gron.passed)

    return CriteriaReport(
        times=times,
        energy=energy,
        dissipation=diss,
        boundary_dissipation=bdiss,
        erel=erel,
        remainder=rem,
        kato_h=kato_h,
        kato_u=kato_u,
        kato_grad=kato_g,
        pairing_inc=pairing_inc,
        ckv_m=ckv_m,
        scalars=scalars,
    )
