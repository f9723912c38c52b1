"""Binary snapshot persistence (little-endian, fixed header, row-major payloads)."""

import struct
from dataclasses import dataclass

import numpy as np

from . import solver, thermo
from .grids import CHANNEL, TORUS, Grid

MAGIC = b"CNSE"
VERSION = 1
_HEADER = struct.Struct("<4sIII8dBB")
_TRACE_TAIL = struct.Struct("<ddQ")

FLAG_TRACES = 1
FLAG_REFERENCE = 2
FLAG_ACCUM = 4

_TOPOLOGY_CODE = {TORUS: 0, CHANNEL: 1}
_TOPOLOGY_NAME = {0: TORUS, 1: CHANNEL}


@dataclass
class SnapshotPayload:
    state: solver.State
    model: thermo.GasModel
    is_reference: bool
    utau_bottom: np.ndarray | None = None
    utau_top: np.ndarray | None = None
    stress_tau_bottom: np.ndarray | None = None
    stress_tau_top: np.ndarray | None = None
    diss_int: float = 0.0
    bdiss_int: float = 0.0
    floor_count: int = 0


def _array_bytes(a):
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def write_snapshot(path, state, model, snap=None, is_reference=False):
    """Write one snapshot: header, then rho, m1, m2 row-major, then wall traces."""
    grid = state.grid
    flags = FLAG_REFERENCE if is_reference else 0
    has_traces = snap is not None and snap.utau_bottom is not None
    if has_traces:
        flags |= FLAG_TRACES
    if snap is not None:
        flags |= FLAG_ACCUM
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        grid.nx,
        grid.ny,
        grid.Lx,
        grid.Ly,
        state.time,
        model.a0,
        model.gamma,
        model.mu,
        model.eta,
        state.epsilon,
        _TOPOLOGY_CODE[grid.topology],
        flags,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(_array_bytes(state.rho.values))
        fh.write(_array_bytes(state.mom.values[:, :, 0]))
        fh.write(_array_bytes(state.mom.values[:, :, 1]))
        if has_traces:
            for arr in (
                snap.utau_bottom,
                snap.utau_top,
                snap.stress_tau_bottom,
                snap.stress_tau_top,
            ):
                fh.write(_array_bytes(arr))
        if snap is not None:
            fh.write(_TRACE_TAIL.pack(snap.diss_int, snap.bdiss_int, snap.floor_count))


def read_snapshot(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    (magic, version, nx, ny, Lx, Ly, time, a0, gamma, mu, eta, eps, topo, flags) = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    grid = Grid(nx, ny, Lx, Ly, _TOPOLOGY_NAME[topo])
    off = _HEADER.size
    n = nx * ny

    def take(count):
        nonlocal off
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=off).copy()
        off += count * 8
        return a

    rho = take(n).reshape(nx, ny)
    m1 = take(n).reshape(nx, ny)
    m2 = take(n).reshape(nx, ny)
    state = solver.make_state(grid, rho, m1, m2, time, eps)
    model = thermo.GasModel(a0=a0, gamma=gamma, mu=mu, eta=eta)
    payload = SnapshotPayload(state, model, bool(flags & FLAG_REFERENCE))
    if flags & FLAG_TRACES:
        payload.utau_bottom = take(nx)
        payload.utau_top = take(nx)
        payload.stress_tau_bottom = take(nx)
        payload.stress_tau_top = take(nx)
    if flags & FLAG_ACCUM:
        payload.diss_int, payload.bdiss_int, payload.floor_count = _TRACE_TAIL.unpack_from(raw, off)
    return payload


def write_trajectory(outdir, trajectory, model):
    """One file per snapshot: snap_000000.bin, snap_000001.bin, ..."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, snap in enumerate(trajectory.snapshots):
        path = outdir / f"snap_{k:06d}.bin"
        write_snapshot(path, snap.state, model, snap=snap)
        paths.append(path)
    return paths


def read_trajectory(outdir, config):
    """Rebuild a trajectory from a snapshot directory; needs the run config for
    the boundary condition and tolerances."""
    from pathlib import Path

    paths = sorted(Path(outdir).glob("snap_*.bin"))
    if not paths:
        raise FileNotFoundError(f"no snapshots under {outdir}")
    snaps = []
    for k, path in enumerate(paths):
        p = read_snapshot(path)
        snaps.append(
            solver.Snapshot(
                state=p.state,
                diss_int=p.diss_int,
                bdiss_int=p.bdiss_int,
                floor_count=p.floor_count,
                step_index=k,
                utau_bottom=p.utau_bottom,
                utau_top=p.utau_top,
                stress_tau_bottom=p.stress_tau_bottom,
                stress_tau_top=p.stress_tau_top,
            )
        )
    return solver.Trajectory(config=config, snapshots=snaps)


def write_reference(outdir, pair, times):
    """Serialize a test pair in the snapshot format with the reference flag set
    (rho = r, momentum = r w)."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, t in enumerate(times):
        r = pair.r(t).values
        w = pair.w(t).values
        state = solver.make_state(pair.grid, r, r * w[..., 0], r * w[..., 1], t, 0.0)
        path = outdir / f"ref_{k:06d}.bin"
        write_snapshot(path, state, pair.model, is_reference=True)
        paths.append(path)
    return paths
