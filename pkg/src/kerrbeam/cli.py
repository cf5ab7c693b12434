"""Command-line interface: one executable, one subcommand per study.

All numeric artifacts are CSV with 17-significant-digit decimal formatting;
field snapshots are the only binary outputs. Progress goes to stderr, results
only to files under --out. (config, seed) determines every output byte except
the wall-clock timestamps recorded in the manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np
from scipy.constants import hbar as HBAR

from . import __version__, beam_models, quadrature, runconfig, single_mode, snapshots, twa
from .runconfig import ConfigError, RunConfig


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    def __init__(self, command: str, cfg: RunConfig, seed):
        self.command = command
        self.config_hash = cfg.config_hash
        self.seed = seed
        self.started = datetime.now(timezone.utc).isoformat()
        self.files: list[str] = []

    def add(self, path: str):
        self.files.append(path)

    def write(self, out_dir: str):
        path = os.path.join(out_dir, "manifest.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("kerrbeam manifest\n")
            fh.write(f"version = {__version__}\n")
            fh.write(f"command = {self.command}\n")
            fh.write(f"config_hash = {self.config_hash}\n")
            fh.write(f"master_seed = {self.seed}\n")
            fh.write(f"started_utc = {self.started}\n")
            fh.write(f"finished_utc = {datetime.now(timezone.utc).isoformat()}\n")
            for f in sorted(self.files):
                fh.write(f"file = {os.path.basename(f)} sha256={_sha256(f)}\n")


def _progress(msg: str):
    print(msg, file=sys.stderr, flush=True)


def cmd_single_mode(cfg: RunConfig, out_dir: str, seed, threads: int,
                    manifest: Manifest) -> None:
    s = cfg.require("single_mode")
    times = np.linspace(s["t_start_s"], s["t_stop_s"], s["n_times"])
    for i, (chi, alpha) in enumerate(runconfig.single_mode_params(cfg)):
        params = single_mode.KerrParams(chi=chi, omega=0.0, alpha=alpha)
        trace = single_mode.min_variance_trace(params, times)
        path = os.path.join(out_dir, f"single_mode_{i}.csv")
        write_csv(path, ["t_s", "var_min", "phi_opt_rad", "var_anti"],
                  zip(trace.times, trace.var_min, trace.phi_opt, trace.var_anti))
        manifest.add(path)
        _progress(f"single-mode curve {i}: chi/hbar={chi / HBAR:g} alpha={alpha:g}")


def _observer_times(cfg: RunConfig) -> np.ndarray:
    ev = cfg.require("evolution")
    return np.linspace(ev["observer_start_s"], ev["observer_stop_s"],
                       ev["n_observer_times"])


def _run_twa_ensemble(cfg: RunConfig, out_dir: str, seed, threads: int,
                      manifest: Manifest):
    """Shared ensemble driver: returns (times, window psi2 records, lo, grid)."""
    grid = runconfig.build_grid(cfg)
    raman = runconfig.build_raman(cfg)
    spec = runconfig.build_ensemble(cfg, seed)
    ev = cfg.require("evolution")
    win = cfg.require("window")
    obs_times = _observer_times(cfg)
    snap_times = sorted(set(ev["snapshot_times_s"]))
    snap_trajs = set(ev["snapshot_trajectories"])
    all_times = sorted(set(np.concatenate([obs_times, snap_times]).tolist())
                       if snap_times else set(obs_times.tolist()))

    window = quadrature.LocalOscillator(z1=win["z1_m"], z2=win["z2_m"],
                                        k_L=raman.k0, omega_L=0.0)
    sl = window.window_slice(grid)

    def observe(state, traj, t):
        if traj in snap_trajs and any(abs(t - ts) < 1e-15 + 1e-12 * abs(ts)
                                      for ts in snap_times):
            name = snapshots.snapshot_filename(traj, t)
            path = os.path.join(out_dir, name)
            snapshots.write_snapshot(path, state, grid, cfg.config_hash)
            manifest.add(path)
        return state.psi2[sl].copy()

    _progress(f"twa: {spec.n_traj} trajectories, {len(all_times)} observer times, "
              f"t_final={ev['t_final_s']:g} s, dt={ev['dt_s']:g} s")
    t0 = time.monotonic()
    records, failures = twa.run_ensemble(raman, grid, spec, all_times, observe,
                                         ev["t_final_s"], ev["dt_s"],
                                         workers=threads)
    _progress(f"twa: ensemble done in {time.monotonic() - t0:.1f} s, "
              f"{len(failures)} failed trajectories")
    for traj, msg in failures:
        _progress(f"twa: trajectory {traj} diverged: {msg}")
    obs_index = [all_times.index(t) for t in obs_times.tolist()]
    kept = [records[i] for i in obs_index]
    return obs_times, kept, grid, raman, sl


def _window_records_to_series(cfg, obs_times, records, grid, raman, sl):
    """Build the local oscillator and reduce windowed fields to statistics."""
    win = cfg.require("window")
    records = [[f for f in row if f is not None] for row in records]
    if min(len(row) for row in records) < 2:
        raise RuntimeError("fewer than 2 surviving trajectories; cannot form statistics")
    dz = grid.dz
    length = win["z2_m"] - win["z1_m"]
    steady = obs_times >= win["steady_state_start_s"]
    if not np.any(steady):
        raise ConfigError("no observer times at or after steady_state_start_s")

    def window_atoms(field):
        return float(np.sum(np.abs(field) ** 2 - 0.5 / dz) * dz)

    if win["lo_density_per_m"] is not None:
        rho = win["lo_density_per_m"]
    else:
        vals = [window_atoms(f) / length
                for ti in np.flatnonzero(steady) for f in records[ti]]
        rho = max(float(np.mean(vals)), 0.0)
    lo = quadrature.build_local_oscillator(raman, rho, win["z1_m"], win["z2_m"])
    z = grid.z[sl]
    b_records, n_records = [], []
    for ti, t in enumerate(obs_times):
        mode = np.conj(lo.mode(z, float(t)))
        b_records.append([complex(np.sum(mode * f) * dz) for f in records[ti]])
        n_records.append([window_atoms(f) for f in records[ti]])
    series = quadrature.analyze_series(obs_times, b_records, n_records)
    return series, lo, rho, steady


def _write_quadrature_outputs(cfg, out_dir, manifest, series, lo, rho, steady,
                              raman, csv_name="quadrature.csv"):
    path = os.path.join(out_dir, csv_name)
    write_csv(path, ["t_s", "var_sq", "se_sq", "var_anti", "se_anti",
                     "phi_opt_rad", "n_region"],
              zip(series.times, series.var_sq, series.se_sq, series.var_anti,
                  series.se_anti, series.phi_opt, series.n_region))
    manifest.add(path)
    n_steady = float(np.mean(series.n_region[steady]))
    if n_steady > 0 and raman.u22 != 0.0:
        var_sq_a, var_anti_a = quadrature.integrated_analytic_prediction(
            raman, lo, n_steady)
    else:
        var_sq_a, var_anti_a = 1.0, 1.0
    apath = os.path.join(out_dir, "analytic_prediction.csv")
    write_csv(apath, ["n_atoms", "chi_eff_over_hbar_rad_per_s", "k_L_rad_per_m",
                      "omega_L_rad_per_s", "rho_per_m", "var_sq_analytic",
                      "var_anti_analytic"],
              [[n_steady, raman.u22 / lo.length / HBAR, lo.k_L, lo.omega_L, rho,
                var_sq_a, var_anti_a]])
    manifest.add(apath)
    _progress(f"quadrature: steady-state N={n_steady:.1f}, "
              f"var_sq={float(np.mean(series.var_sq[steady])):.4f}, "
              f"var_anti={float(np.mean(series.var_anti[steady])):.4f}")


def cmd_twa(cfg: RunConfig, out_dir: str, seed, threads: int,
            manifest: Manifest) -> None:
    obs_times, records, grid, raman, sl = _run_twa_ensemble(
        cfg, out_dir, seed, threads, manifest)
    series, lo, rho, steady = _window_records_to_series(
        cfg, obs_times, records, grid, raman, sl)
    _write_quadrature_outputs(cfg, out_dir, manifest, series, lo, rho, steady, raman)


def cmd_analyze(cfg: RunConfig, out_dir: str, seed, threads: int,
                manifest: Manifest, snapshot_dir: str | None = None) -> None:
    """Recompute quadrature statistics from field snapshots on disk."""
    src = snapshot_dir or out_dir
    grid = runconfig.build_grid(cfg)
    raman = runconfig.build_raman(cfg)
    win = cfg.require("window")
    window = quadrature.LocalOscillator(z1=win["z1_m"], z2=win["z2_m"],
                                        k_L=raman.k0, omega_L=0.0)
    sl = window.window_slice(grid)
    by_time: dict[float, list] = {}
    names = sorted(n for n in os.listdir(src) if n.endswith(".fld"))
    if not names:
        raise ConfigError(f"no .fld snapshots found in {src}")
    for name in names:
        state, snap_grid, _ = snapshots.read_snapshot(os.path.join(src, name))
        if snap_grid != grid:
            raise ConfigError(f"{name}: snapshot grid does not match the config grid")
        by_time.setdefault(state.t, []).append(state.psi2[sl].copy())
    times = np.array(sorted(by_time))
    records = [by_time[t] for t in times.tolist()]
    if min(len(r) for r in records) < 2:
        raise ConfigError("need at least 2 snapshots per time for statistics")
    series, lo, rho, steady = _window_records_to_series(
        cfg, times, records, grid, raman, sl)
    _write_quadrature_outputs(cfg, out_dir, manifest, series, lo, rho, steady,
                              raman, csv_name="quadrature_analyze.csv")


def cmd_beam3d(cfg: RunConfig, out_dir: str, seed, threads: int,
               manifest: Manifest) -> None:
    b = cfg.require("beam3d")
    model = runconfig.build_fall_model(cfg)
    t_arrive = beam_models.fall_time_to_depth(model, b["region_depth_m"],
                                              b["kinematics"])
    sched = beam_models.falling_chi_schedule(model, b["n_mode"], t_arrive,
                                             n_samples=20001,
                                             kinematics=b["kinematics"])
    alpha = math.sqrt(b["n_mode"])
    theta = sched.theta(t_arrive)
    phi, var_sq = single_mode.optimal_phase_from_theta(alpha, theta)
    var_anti = float(single_mode.variance_from_theta(alpha, theta,
                                                     phi + math.pi / 2))
    path = os.path.join(out_dir, "beam3d.csv")
    write_csv(path, ["depth_m", "t_arrive_s", "n_mode", "theta_rad",
                     "phi_opt_rad", "var_sq", "var_anti"],
              [[b["region_depth_m"], t_arrive, b["n_mode"], theta, phi,
                var_sq, var_anti]])
    manifest.add(path)
    zs = np.linspace(0.0, b["scan_depth_max_m"], b["n_scan"])
    rhos = beam_models.density_at_depth(model, zs)
    spath = os.path.join(out_dir, "density_scan.csv")
    write_csv(spath, ["z_m", "rho_m3"], zip(zs, rhos))
    manifest.add(spath)
    _progress(f"beam3d: var_sq={var_sq:.4f}, var_anti={var_anti:.3f}")


def cmd_two_beam(cfg: RunConfig, out_dir: str, seed, threads: int,
                 manifest: Manifest) -> None:
    tb = cfg.require("two_beam")
    chi = tb["chi_over_hbar_rad_per_s"] * HBAR
    summary = []
    for r in tb["intensity_ratios"]:
        config = beam_models.TwoBeamConfig(
            alpha_main=tb["alpha_main"],
            alpha_ref=tb["alpha_main"] * math.sqrt(r),
            chi=chi, t=tb["t_s"],
            splitter_transmissivity=tb["splitter_transmissivity"],
            equal_chi=tb["equal_chi"])
        theta_m, theta_r = config.thetas()
        a_mom = beam_models._beam_moments(config.alpha_main, theta_m, None)
        b_mom = beam_models._beam_moments(config.alpha_ref, theta_r, None)
        phases = np.linspace(0.0, 2.0 * math.pi, tb["n_phase"], endpoint=False)
        rows = []
        for phase in phases:
            mean, var = beam_models._port_stats(
                a_mom, b_mom, config.splitter_transmissivity, float(phase))
            rows.append((phase, var / mean))
        path = os.path.join(out_dir, f"two_beam_sweep_r{r:g}.csv")
        write_csv(path, ["mix_phase_rad", "fano"], rows)
        manifest.add(path)
        phase_opt, fano_min = beam_models.phase_optimized_fano(config)
        _, mean_at_opt = beam_models.two_beam_intensity_noise(
            beam_models.TwoBeamConfig(
                config.alpha_main, config.alpha_ref, chi, tb["t_s"],
                mix_phase=phase_opt,
                splitter_transmissivity=config.splitter_transmissivity,
                equal_chi=config.equal_chi))
        summary.append((r, phase_opt, fano_min, mean_at_opt))
        _progress(f"two-beam r={r:g}: fano_min={fano_min:.4f} "
                  f"at phase={phase_opt:.4f}")
    path = os.path.join(out_dir, "two_beam.csv")
    write_csv(path, ["intensity_ratio", "mix_phase_opt_rad", "fano_min",
                     "mean_intensity"], summary)
    manifest.add(path)


def _mean_field_observables(cfg: RunConfig, grid, dt: float) -> dict:
    raman = runconfig.build_raman(cfg)
    win = cfg.require("window")
    ev = cfg.require("evolution")
    state = twa.initial_state(grid, raman, None)
    final, drift = twa.evolve(state, raman, grid, ev["t_final_s"], dt)
    window = quadrature.LocalOscillator(z1=win["z1_m"], z2=win["z2_m"],
                                        k_L=raman.k0, omega_L=0.0)
    sl = window.window_slice(grid)
    beam = np.abs(final.psi2[sl]) ** 2
    return {
        "window_atoms": float(np.sum(beam) * grid.dz),
        "peak_window_density": float(np.max(beam)),
        "total_number": float(np.sum(np.abs(final.psi1) ** 2
                                     + np.abs(final.psi2) ** 2) * grid.dz),
    }


def cmd_convergence(cfg: RunConfig, out_dir: str, seed, threads: int,
                    manifest: Manifest) -> None:
    """Mean-field observable deltas under dt and dz halving."""
    ev = cfg.require("evolution")
    tol = cfg.require("convergence")["tolerance_rel"]
    grid = runconfig.build_grid(cfg)
    fine_grid = twa.Grid1D(grid.z_min, grid.z_max, 2 * grid.n_points)
    _progress("convergence: base run")
    base = _mean_field_observables(cfg, grid, ev["dt_s"])
    _progress("convergence: dt/2 run")
    dt_half = _mean_field_observables(cfg, grid, ev["dt_s"] / 2)
    # halving dz quadruples the stability-limited kinetic rate, so dt drops by 4
    _progress("convergence: dz/2 run")
    dz_half = _mean_field_observables(cfg, fine_grid, ev["dt_s"] / 4)
    rows = []
    ok = True
    for name in base:
        d_dt = abs(dt_half[name] - base[name]) / max(abs(base[name]), 1e-300)
        d_dz = abs(dz_half[name] - base[name]) / max(abs(base[name]), 1e-300)
        status = "pass" if (d_dt <= tol and d_dz <= tol) else "fail"
        ok = ok and status == "pass"
        rows.append((name, base[name], dt_half[name], dz_half[name],
                     d_dt, d_dz, tol, status))
        _progress(f"convergence: {name}: ddt={d_dt:.2e} ddz={d_dz:.2e} [{status}]")
    path = os.path.join(out_dir, "convergence.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("observable,base,dt_half,dz_half,rel_delta_dt,rel_delta_dz,"
                 "tolerance_rel,status\n")
        for row in rows:
            fh.write(row[0] + "," + ",".join(_fmt(v) for v in row[1:-1])
                     + "," + row[-1] + "\n")
    manifest.add(path)
    if not ok:
        raise RuntimeError(f"convergence check failed; see {path}")


_COMMANDS = {
    "single-mode": cmd_single_mode,
    "twa": cmd_twa,
    "analyze": cmd_analyze,
    "beam3d": cmd_beam3d,
    "two-beam": cmd_two_beam,
    "convergence": cmd_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kerrbeam",
        description="Kerr-squeezed atom laser numerical laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config master seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: hardware parallelism)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value")
        p.add_argument("--out", default="out", help="output directory")
        if name == "analyze":
            p.add_argument("--snapshots", default=None,
                           help="directory of .fld files (default: --out)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects SECTION.KEY=VALUE, got {item!r}",
                  file=sys.stderr)
            return 2
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    try:
        cfg = runconfig.load_config(args.config, overrides)
        for section in runconfig.COMMAND_SECTIONS[args.command]:
            cfg.require(section)
        os.makedirs(args.out, exist_ok=True)
        threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
        manifest = Manifest(args.command, cfg, args.seed if args.seed is not None
                            else cfg.sections.get("ensemble", {}).get("master_seed"))
        kwargs = {}
        if args.command == "analyze":
            kwargs["snapshot_dir"] = args.snapshots
        _COMMANDS[args.command](cfg, args.out, args.seed, threads, manifest,
                                **kwargs)
        manifest.write(args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
