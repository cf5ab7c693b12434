"""Run configuration: INI-style files with a strict, unit-suffixed schema.

Every physical key carries its unit in the name (e.g. ``k0_rad_per_m``);
unknown sections or keys are hard errors with line numbers, as are type or
range violations. Parsed configs are plain nested dicts; builder helpers
construct the domain objects.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from scipy.constants import hbar as HBAR

from . import twa
from .beam_models import KINEMATICS, FallModel
from .twa import EnsembleSpec, Grid1D, RamanConfig


class ConfigError(ValueError):
    pass


def _float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}")
    if math.isnan(value):
        raise ConfigError("NaN is not a valid value")
    return value


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _float_list(text: str) -> list[float]:
    return [_float(part.strip()) for part in text.split(",") if part.strip()]


def _int_list(text: str) -> list[int]:
    return [_int(part.strip()) for part in text.split(",") if part.strip()]


def _str(text: str) -> str:
    return text.strip()


def _kinematics(text: str) -> str:
    value = text.strip()
    if value not in KINEMATICS:
        raise ConfigError(f"kinematics must be one of {KINEMATICS}, got {value!r}")
    return value


_REQUIRED = object()

# schema: section -> key -> (converter, default); _REQUIRED marks mandatory keys
SCHEMA = {
    "single_mode": {
        "chi_over_hbar_rad_per_s": (_float_list, _REQUIRED),
        "alpha": (_float_list, _REQUIRED),
        "t_start_s": (_float, _REQUIRED),
        "t_stop_s": (_float, _REQUIRED),
        "n_times": (_int, 300),
    },
    "grid": {
        "z_min_m": (_float, _REQUIRED),
        "z_max_m": (_float, _REQUIRED),
        "n_points": (_int, _REQUIRED),
    },
    "physics": {
        "mass_kg": (_float, 1.44e-25),
        "omega_trap_rad_per_s": (_float, 80.0),
        "omega_rabi_rad_per_s": (_float, 50.0),
        "k0_rad_per_m": (_float, 2e7),
        "n_bec": (_float, 5e5),
        "scattering_length_m": (_float, twa.DEFAULT_SCATTERING_LENGTH),
        "area_m2": (_float, twa.DEFAULT_AREA),
        "u11_J_m": (_float, 0.0),
        "u12_J_m": (_float, None),
        "u22_J_m": (_float, None),
        "delta_rad_per_s": (_float, None),
        "light_shift_1_rad_per_s": (_float, 0.0),
        "light_shift_2_rad_per_s": (_float, 0.0),
        "absorber_width_m": (_float, 0.0),
        "absorber_strength_rad_per_s": (_float, 0.0),
    },
    "ensemble": {
        "n_traj": (_int, _REQUIRED),
        "master_seed": (_int, _REQUIRED),
    },
    "evolution": {
        "dt_s": (_float, _REQUIRED),
        "t_final_s": (_float, _REQUIRED),
        "observer_start_s": (_float, _REQUIRED),
        "observer_stop_s": (_float, _REQUIRED),
        "n_observer_times": (_int, _REQUIRED),
        "snapshot_times_s": (_float_list, ()),
        "snapshot_trajectories": (_int_list, ()),
    },
    "window": {
        "z1_m": (_float, _REQUIRED),
        "z2_m": (_float, _REQUIRED),
        "lo_density_per_m": (_float, None),   # None: estimate from steady state
        "steady_state_start_s": (_float, _REQUIRED),
    },
    "beam3d": {
        "rho0_per_m3": (_float, 3e18),
        "k0_rad_per_m": (_float, 3.2e7),
        "mass_kg": (_float, 1.44e-25),
        "region_depth_m": (_float, 0.01),
        "region_extent_m": (_float, 25e-6),
        "n_mode": (_float, 1100.0),
        "kinematics": (_kinematics, "free-fall"),
        "scan_depth_max_m": (_float, 0.02),
        "n_scan": (_int, 200),
    },
    "two_beam": {
        "alpha_main": (_float, _REQUIRED),
        "intensity_ratios": (_float_list, (0.25, 0.3, 0.4, 0.5)),
        "chi_over_hbar_rad_per_s": (_float, _REQUIRED),
        "t_s": (_float, _REQUIRED),
        "splitter_transmissivity": (_float, 0.5),
        "equal_chi": (_bool, True),
        "n_phase": (_int, 720),
    },
    "convergence": {
        "tolerance_rel": (_float, 0.01),
    },
}

# sections each subcommand needs; the rest may be absent from the file
COMMAND_SECTIONS = {
    "single-mode": ("single_mode",),
    "twa": ("grid", "physics", "ensemble", "evolution", "window"),
    "analyze": ("grid", "physics", "window"),
    "beam3d": ("beam3d",),
    "two-beam": ("two_beam",),
    "convergence": ("grid", "physics", "ensemble", "evolution", "window",
                    "convergence"),
}


@dataclass
class RunConfig:
    """Validated configuration: sections of typed values plus the source text."""

    sections: dict
    source_text: str

    @property
    def config_hash(self) -> str:
        """Hash of the canonicalized (post-override) configuration."""
        canon = []
        for sec in sorted(self.sections):
            for key in sorted(self.sections[sec]):
                canon.append(f"{sec}.{key}={self.sections[sec][key]!r}")
        return hashlib.sha256("\n".join(canon).encode("utf-8")).hexdigest()

    def require(self, section: str) -> dict:
        if section not in self.sections:
            raise ConfigError(f"missing required config section [{section}]")
        return self.sections[section]


def _parse_lines(text: str):
    """Yield (line_number, section, key, raw_value) from INI-style text."""
    section = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"line {ln}: empty section name")
            yield ln, section, None, None
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"line {ln}: key outside of any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {ln}: empty key")
        yield ln, section, key, value


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse and validate configuration text; overrides are 'section.key' -> raw value."""
    raw: dict[str, dict[str, str]] = {}
    lines: dict[tuple[str, str], int] = {}
    for ln, section, key, value in _parse_lines(text):
        if section not in SCHEMA:
            raise ConfigError(
                f"line {ln}: unknown section [{section}] "
                f"(known: {', '.join(sorted(SCHEMA))})")
        if key is None:
            raw.setdefault(section, {})
            continue
        if key not in SCHEMA[section]:
            raise ConfigError(
                f"line {ln}: unknown key {key!r} in [{section}] "
                f"(known: {', '.join(sorted(SCHEMA[section]))})")
        if key in raw.get(section, {}):
            raise ConfigError(f"line {ln}: duplicate key {key!r} in [{section}]")
        raw.setdefault(section, {})[key] = value
        lines[(section, key)] = ln

    for spec, value in (overrides or {}).items():
        if "." not in spec:
            raise ConfigError(f"override {spec!r} must be section.key")
        section, key = spec.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"override targets unknown key {spec!r}")
        raw.setdefault(section, {})[key] = value

    sections: dict[str, dict] = {}
    for section, keys in raw.items():
        out = {}
        for key, (convert, default) in SCHEMA[section].items():
            if key in keys:
                try:
                    out[key] = convert(keys[key])
                except ConfigError as exc:
                    where = lines.get((section, key))
                    loc = f"line {where}: " if where is not None else ""
                    raise ConfigError(f"{loc}[{section}] {key}: {exc}") from None
            elif default is _REQUIRED:
                raise ConfigError(f"[{section}] is missing required key {key!r}")
            else:
                out[key] = default
        sections[section] = out
    return RunConfig(sections=sections, source_text=text)


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)


def build_grid(cfg: RunConfig) -> Grid1D:
    g = cfg.require("grid")
    return Grid1D(z_min=g["z_min_m"], z_max=g["z_max_m"], n_points=g["n_points"])


def build_raman(cfg: RunConfig) -> RamanConfig:
    p = cfg.require("physics")
    u_default = twa.u_1d_from_scattering_length(
        p["scattering_length_m"], p["mass_kg"], p["area_m2"])
    u12 = p["u12_J_m"] if p["u12_J_m"] is not None else u_default
    u22 = p["u22_J_m"] if p["u22_J_m"] is not None else u_default
    return RamanConfig(
        m=p["mass_kg"], omega_trap=p["omega_trap_rad_per_s"],
        omega_rabi=p["omega_rabi_rad_per_s"], k0=p["k0_rad_per_m"],
        n_bec=p["n_bec"], u11=p["u11_J_m"], u12=u12, u22=u22,
        delta=p["delta_rad_per_s"], light_shift_1=p["light_shift_1_rad_per_s"],
        light_shift_2=p["light_shift_2_rad_per_s"], area=p["area_m2"],
        absorber_width=p["absorber_width_m"],
        absorber_strength=p["absorber_strength_rad_per_s"])


def build_ensemble(cfg: RunConfig, seed_override: int | None = None) -> EnsembleSpec:
    e = cfg.require("ensemble")
    seed = e["master_seed"] if seed_override is None else seed_override
    return EnsembleSpec(n_traj=e["n_traj"], master_seed=seed)


def build_fall_model(cfg: RunConfig) -> FallModel:
    b = cfg.require("beam3d")
    return FallModel(rho0=b["rho0_per_m3"], k0=b["k0_rad_per_m"], m=b["mass_kg"])


def single_mode_params(cfg: RunConfig) -> list[tuple[float, float]]:
    """(chi in J, alpha) pairs; lists must have equal length."""
    s = cfg.require("single_mode")
    chis = s["chi_over_hbar_rad_per_s"]
    alphas = s["alpha"]
    if len(chis) != len(alphas):
        raise ConfigError("[single_mode] chi and alpha lists differ in length")
    return [(chi * HBAR, alpha) for chi, alpha in zip(chis, alphas)]
