"""Command-line interface: run, sweep, diagnose, rate, report."""

import argparse
import os
import sys
from pathlib import Path

import yaml

from . import diagnostics, harness, snapshots, solver, thermo
from .grids import Grid


def _parse_override_value(raw):
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        # YAML leaves exponent forms like 5e-3 as strings
        try:
            return float(value)
        except ValueError:
            return value
    return value


def load_config(path, overrides=()):
    with open(path) as fh:
        cfg = yaml.safe_load(fh) or {}
    for item in overrides:
        key, _, raw = item.partition("=")
        if not _:
            raise SystemExit(f"override {item!r} must look like section.key=value")
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _parse_override_value(raw)
    return cfg


def build_run_config(cfg):
    g = cfg.get("grid", {})
    grid = Grid(
        nx=g.get("nx", 128),
        ny=g.get("ny", 128),
        Lx=g.get("Lx", 1.0),
        Ly=g.get("Ly", 1.0),
        topology=g.get("topology", "torus"),
    )
    gas = cfg.get("gas", {})
    model = thermo.GasModel(
        a0=gas.get("a0", 1.0),
        gamma=gas.get("gamma", 2.0),
        mu=gas.get("mu", 1.0),
        eta=gas.get("eta", 1.0),
    )
    b = cfg.get("bc", {"kind": "none" if not grid.has_walls else "navier_slip"})
    bc = solver.BcSpec(b.get("kind"), b.get("lam", 0.0))
    r = cfg.get("run", {})
    init = cfg.get("initial", {"name": "uniform"})
    return solver.RunConfig(
        grid=grid,
        model=model,
        bc=bc,
        epsilon=r.get("epsilon", 1e-2),
        t_final=r.get("t_final", 0.5),
        cfl=r.get("cfl", 0.4),
        snapshot_interval=r.get("snapshot_interval"),
        initial_name=init.get("name", "uniform"),
        initial_params=init.get("params", {}),
        rho_floor=r.get("rho_floor", 1e-10),
    )


def build_report_options(cfg):
    rep = cfg.get("report", {})
    return diagnostics.ReportOptions(
        kato_strip_width=rep.get("kato_strip_width"),
        kato_min_rows=rep.get("kato_min_rows", 0),
        fake_layer_c0=rep.get("fake_layer_c0", 0.5),
        gronwall_slack=rep.get("gronwall_slack", 0.05),
        forcing_split=rep.get("forcing_split", 0.5),
        bregman_c0=rep.get("bregman_c0"),
    )


def build_sweep_config(cfg, outdir, parallel=None):
    base = build_run_config(cfg)
    sw = cfg.get("sweep", {})
    out = cfg.get("output", {})
    return harness.SweepConfig(
        base=base,
        epsilons=sw.get("epsilons", [1e-2, 3e-3, 1e-3]),
        lam0=sw.get("lam0", 0.0),
        alpha=sw.get("alpha", 1.0),
        noslip=sw.get("noslip", False),
        testpair=cfg.get("testpair", {"name": "euler", "refine": 2}),
        outdir=str(outdir),
        parallelism=parallel or sw.get("parallelism", 1),
        write_snapshots=out.get("write_snapshots", False),
        options=build_report_options(cfg),
    )


def resolve_outdir(arg_outdir, cfg):
    out = arg_outdir or cfg.get("output", {}).get("dir", "out")
    root = os.environ.get("VISCLIMIT_OUTPUT_ROOT")
    path = Path(out)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def cmd_run(args):
    cfg = load_config(args.config, args.set or ())
    run_cfg = build_run_config(cfg)
    outdir = resolve_outdir(args.outdir, cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    traj = solver.run(run_cfg)
    snapshots.write_trajectory(outdir / "snapshots", traj, run_cfg.model)
    pair_spec = cfg.get("testpair")
    if pair_spec:
        pair = harness.build_testpair(pair_spec, run_cfg.grid, run_cfg.model, run_cfg)
        report = diagnostics.criteria_report(traj, run_cfg.model, run_cfg.bc, pair, build_report_options(cfg))
        (outdir / "report.csv").write_text(report.csv_text())
        print(f"wrote {outdir}/report.csv")
    B = solver.energy_balance_residual(traj, run_cfg.model, run_cfg.bc)
    print(f"run complete: t={traj.times[-1]:.6g}, snapshots={len(traj.snapshots)}, "
          f"max|B|={float(abs(B).max()):.3e}")
    return 0


def cmd_sweep(args):
    cfg = load_config(args.config, args.set or ())
    outdir = resolve_outdir(args.outdir, cfg)
    sweep = build_sweep_config(cfg, outdir, args.parallel)
    result = harness.run_sweep(sweep)
    harness.emit_plotscript("summary.csv", outdir / "plots.plt")
    for row in result.rows:
        print(f"eps={row['epsilon']:.3e} status={row['status']} "
              f"E_rel(T)={row.get('erel_final', float('nan')):.6e}")
    print(f"wrote {outdir}/summary.csv")
    return 0


def cmd_diagnose(args):
    cfg = load_config(args.config, args.set or ())
    run_cfg = build_run_config(cfg)
    traj = snapshots.read_trajectory(args.snapshots, run_cfg)
    pair = harness.build_testpair(
        cfg.get("testpair", {"name": "euler", "refine": 2}), run_cfg.grid, run_cfg.model, run_cfg
    )
    report = diagnostics.criteria_report(traj, run_cfg.model, run_cfg.bc, pair, build_report_options(cfg))
    outdir = resolve_outdir(args.outdir, cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.csv").write_text(report.csv_text())
    print(f"wrote {outdir}/report.csv")
    return 0


def cmd_rate(args):
    import math

    rows = []
    with open(args.summary) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            vals = line.strip().split(",")
            row = dict(zip(header, vals))
            if row.get("status") != "ok":
                continue
            eps, value = float(row["epsilon"]), float(row[args.column])
            if eps > 0 and value > 0 and math.isfinite(value):
                rows.append((eps, value))
    est = harness.estimate_rate(rows, name=args.column)
    print(f"{est.name}: slope={est.slope:.6g} R2={est.r_squared:.6g} over {len(est.pairs)} points")
    return 0


def cmd_report(args):
    outdir = Path(args.outdir)
    path = harness.emit_plotscript("summary.csv", outdir / "plots.plt")
    print(f"wrote {path}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="visclimit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", "-c", required=True)
        p.add_argument("--outdir", "-o", default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (dotted keys)")

    p = sub.add_parser("run", help="single run with snapshots and diagnostics")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="epsilon sweep with summary table")
    common(p)
    p.add_argument("--parallel", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagnose", help="re-run diagnostics on stored snapshots")
    common(p)
    p.add_argument("--snapshots", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("rate", help="log-log rate fit from a summary table")
    p.add_argument("--summary", required=True)
    p.add_argument("--column", default="erel_final")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("report", help="emit the plot script for a sweep directory")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
