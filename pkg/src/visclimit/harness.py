"""Sweep orchestration, rate estimation, and deterministic CSV/plot emission."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics, reference, snapshots, solver

SUMMARY_COLUMNS = (
    "epsilon",
    "status",
    "erel_final",
    "K_total",
    "K_H",
    "K_u",
    "K_grad",
    "P_direct",
    "P_volume",
    "P_discrepancy",
    "int_M_dt",
    "theta0_hat",
    "gronwall_margin",
    "gronwall_passed",
    "mass_drift",
    "floor_count",
)


@dataclass
class SweepConfig:
    base: solver.RunConfig  # epsilon and bc are overridden per sweep member
    epsilons: list
    lam0: float = 0.0
    alpha: float = 1.0
    noslip: bool = False
    testpair: dict = field(default_factory=lambda: {"name": "euler", "refine": 2})
    outdir: str = "out"
    parallelism: int = 1
    write_snapshots: bool = False
    options: diagnostics.ReportOptions = field(default_factory=diagnostics.ReportOptions)

    def __post_init__(self):
        eps = list(self.epsilons)
        positive = eps[:-1] if eps and eps[-1] == 0.0 else eps
        if not positive:
            raise ValueError("sweep needs at least one positive epsilon")
        if any(e <= 0 for e in positive):
            raise ValueError("sweep epsilons must be positive (optional trailing 0 excepted)")
        if any(a <= b for a, b in zip(positive, positive[1:])):
            raise ValueError("sweep epsilons must be strictly decreasing")
        if self.lam0 < 0:
            raise ValueError("lam0 must be nonnegative")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")


def bc_for(sweep, eps):
    grid = sweep.base.grid
    if not grid.has_walls:
        return solver.BcSpec.none()
    if sweep.noslip:
        return solver.BcSpec.no_slip() if eps > 0 else solver.BcSpec.navier_slip(0.0)
    return solver.BcSpec.navier_slip(sweep.lam0 * eps**sweep.alpha)


def build_testpair(spec, grid, model, base_config=None):
    """Construct a test pair from its config mapping."""
    spec = dict(spec)
    name = spec.pop("name")
    if name == "shear":
        return reference.family_shear(spec.get("W", "0.5*cos(pi*y)"), spec.get("r0", 1.0), grid, model)
    if name == "traveling":
        return reference.family_traveling(
            grid, model,
            r0=spec.get("r0", 1.0), amp=spec.get("amp", 0.2),
            speed=spec.get("speed", 1.0), flux=spec.get("flux", 0.5),
            t_max=spec.get("t_max", 1.0),
        )
    if name == "vortex":
        return reference.family_vortex(
            grid, model, spec.get("psi", "0.05*sin(2*pi*x)*sin(2*pi*y)"),
            r0=spec.get("r0", 1.0), t_max=spec.get("t_max", 1.0),
        )
    if name == "manufactured":
        return reference.family_manufactured(
            spec["r"], (spec["w1"], spec.get("w2", "0")), grid, model,
            t_max=spec.get("t_max", 1.0),
        )
    if name == "euler":
        if base_config is None:
            raise ValueError("euler reference needs the base run config")
        return reference.euler_numeric_reference(base_config, refine=spec.get("refine", 2))
    raise ValueError(f"unknown test pair {name!r}")


def _fmt(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return f"{float(value):.17g}"


def summary_csv_text(rows):
    lines = [",".join(SUMMARY_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(col)) for col in SUMMARY_COLUMNS))
    return "\n".join(lines) + "\n"


@dataclass
class SweepResult:
    rows: list
    reports: dict  # epsilon -> CriteriaReport (omitted for blown-up runs)
    testpair: object
    outdir: Path


def _run_one(sweep, eps, pair):
    cfg = replace(sweep.base, epsilon=eps, bc=bc_for(sweep, eps))
    traj = solver.run(cfg)
    report = diagnostics.criteria_report(traj, cfg.model, cfg.bc, pair, sweep.options)
    return traj, report


def run_sweep(sweep):
    """Execute every sweep member, write per-run reports and the summary table.

    Runs may execute concurrently; outputs are written per-run to distinct
    paths and the summary is assembled single-threaded in the configured
    epsilon order, so results do not depend on the parallelism degree.
    Blow-ups are recorded per epsilon and the sweep continues.
    """
    outdir = Path(sweep.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    pair = build_testpair(sweep.testpair, sweep.base.grid, sweep.base.model, sweep.base)

    def worker(eps):
        try:
            return _run_one(sweep, eps, pair)
        except solver.SolverBlowupError as err:
            return err

    eps_list = list(sweep.epsilons)
    if sweep.parallelism > 1:
        with ThreadPoolExecutor(max_workers=sweep.parallelism) as pool:
            outcomes = list(pool.map(worker, eps_list))
    else:
        outcomes = [worker(e) for e in eps_list]

    rows = []
    reports = {}
    for k, (eps, outcome) in enumerate(zip(eps_list, outcomes)):
        run_dir = outdir / f"run_{k:02d}_eps_{eps:.6g}"
        run_dir.mkdir(parents=True, exist_ok=True)
        if isinstance(outcome, solver.SolverBlowupError):
            rows.append({"epsilon": eps, "status": f"blowup_t={outcome.time:.6g}"})
            continue
        traj, report = outcome
        (run_dir / "report.csv").write_text(report.csv_text())
        if sweep.write_snapshots:
            snapshots.write_trajectory(run_dir / "snapshots", traj, sweep.base.model)
        row = {"epsilon": eps, "status": "ok"}
        row.update(report.scalars)
        rows.append(row)
        reports[eps] = report
    (outdir / "summary.csv").write_text(summary_csv_text(rows))
    return SweepResult(rows=rows, reports=reports, testpair=pair, outdir=outdir)


@dataclass
class RateEstimate:
    name: str
    pairs: list
    slope: float
    r_squared: float


def estimate_rate(pairs, name="quantity"):
    """Log-log least-squares slope of value against epsilon, with R^2."""
    pairs = [(float(e), float(v)) for e, v in pairs]
    if len(pairs) < 3:
        raise ValueError(f"rate estimation needs at least 3 points, got {len(pairs)}")
    bad = [(e, v) for e, v in pairs
           if not (math.isfinite(e) and math.isfinite(v)) or e <= 0 or v <= 0]
    if bad:
        raise ValueError(f"rate estimation needs positive values; offending entries: {bad}")
    x = np.log([e for e, _ in pairs])
    y = np.log([v for _, v in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateEstimate(name, pairs, float(slope), float(r2))


def rates_from_rows(rows, columns=("erel_final", "K_total")):
    """Fit sweep-summary columns against epsilon; zero/absent entries are skipped."""
    out = {}
    for col in columns:
        pairs = [
            (row["epsilon"], row.get(col))
            for row in rows
            if row.get("status") == "ok" and row["epsilon"] > 0
            and row.get(col) not in (None, "") and row.get(col) > 0
        ]
        if len(pairs) >= 3:
            out[col] = estimate_rate(pairs, name=col)
    return out


PLOT_TEMPLATE = """\
# gnuplot script: vanishing-viscosity sweep summary (log-log)
set datafile separator ","
set logscale xy
set key outside
set xlabel "epsilon"
set terminal pngcairo size 900,600
set output "{stem}_erel.png"
set ylabel "relative energy at T"
plot "{csv}" using 1:3 with linespoints title "E_rel(T)"
set output "{stem}_kato.png"
set ylabel "strip integral"
plot "{csv}" using 1:4 with linespoints title "K_total"
set output "{stem}_pairing.png"
set ylabel "|boundary pairing|"
plot "{csv}" using 1:(abs($8)) with linespoints title "|P|"
"""


def emit_plotscript(summary_csv, path):
    """Self-contained gnuplot commands rendering the sweep summary; byte-deterministic."""
    text = PLOT_TEMPLATE.format(csv=summary_csv, stem=Path(summary_csv).stem)
    Path(path).write_text(text)
    return path


def emit_report(rows, outdir, fmt="csv"):
    """Write the summary table (csv) or the plot script (plotscript)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path = outdir / "summary.csv"
        path.write_text(summary_csv_text(rows))
        return path
    if fmt == "plotscript":
        return emit_plotscript("summary.csv", outdir / "plots.plt")
    raise ValueError(f"unknown report format {fmt!r}")
