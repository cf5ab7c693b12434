"""Binary field snapshot files.

Layout: one UTF-8 text header line terminated by '\\n' with the grid and time
metadata, followed by little-endian float64 interleaved (re, im) samples for
psi1 and then psi2. Filenames follow ``snap_<traj>_<time_ms>.fld``.
"""

from __future__ import annotations

import os

import numpy as np

from .twa import Grid1D, TrajectoryState

_MAGIC = "kerrbeam-field-v1"


def snapshot_filename(traj_index: int, t: float) -> str:
    return f"snap_{traj_index}_{t * 1e3:g}.fld"


def write_snapshot(path: str | os.PathLike, state: TrajectoryState,
                   grid: Grid1D, config_hash: str) -> None:
    if state.psi1.shape != (grid.n_points,) or state.psi2.shape != (grid.n_points,):
        raise ValueError("field shape does not match the grid")
    header = (f"{_MAGIC} n_points={grid.n_points} z_min={grid.z_min!r} "
              f"z_max={grid.z_max!r} t={state.t!r} config_hash={config_hash}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        for psi in (state.psi1, state.psi2):
            fh.write(np.ascontiguousarray(psi, dtype="<c16").tobytes())


def read_snapshot(path: str | os.PathLike) -> tuple[TrajectoryState, Grid1D, str]:
    """Read a snapshot; returns (state, grid, config_hash)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("utf-8").strip()
        fields = header.split()
        if not fields or fields[0] != _MAGIC:
            raise ValueError(f"{path}: not a field snapshot file")
        meta = dict(part.split("=", 1) for part in fields[1:])
        n = int(meta["n_points"])
        raw = fh.read()
    expected = 2 * n * 16
    if len(raw) != expected:
        raise ValueError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<c16")
    state = TrajectoryState(psi1=data[:n].astype(np.complex128),
                            psi2=data[n:].astype(np.complex128),
                            t=float(meta["t"]))
    grid = Grid1D(z_min=float(meta["z_min"]), z_max=float(meta["z_max"]), n_points=n)
    return state, grid, meta["config_hash"]
