"""Analytic beam-scale estimators: gravitational dilution, the falling
time-dependent chi schedule, and two-beam intensity squeezing.

The fall model treats the outcoupled beam as a classical stream whose 3D
density dilutes with depth as rho0/(1 + m sqrt(2 g z)/hbar k0); the local Kerr
rate for a falling packet of N_mode atoms is chi(t) = U22_3d rho(z(t))/N_mode.
The two-beam analysis evolves two independent coherent states under the Kerr
Hamiltonian, mixes them on a beamsplitter, and evaluates the output-port
intensity statistics exactly from truncated Fock sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import g as G_EARTH
from scipy.constants import hbar as HBAR
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .single_mode import ChiSchedule, TruncationError, _coherent_amplitudes, default_n_max
from .twa import DEFAULT_SCATTERING_LENGTH

# Discussion-section Rb beam defaults
PAPER_RHO0 = 3e18        # m^-3 at the outcoupling point
PAPER_K0_3D = 3.2e7      # rad/m
PAPER_MASS = 1.44e-25    # kg

KINEMATICS = ("free-fall", "kick-plus-gravity")


def u_3d_from_scattering_length(a: float = DEFAULT_SCATTERING_LENGTH,
                                m: float = PAPER_MASS) -> float:
    """3D interaction strength 4*pi*hbar^2*a/m, in J*m^3."""
    return 4.0 * math.pi * HBAR ** 2 * a / m


@dataclass(frozen=True)
class FallModel:
    """Gravitationally diluting beam below the condensate."""

    rho0: float = PAPER_RHO0
    k0: float = PAPER_K0_3D
    m: float = PAPER_MASS
    g: float = G_EARTH
    area: float | None = None       # m^2; None until back-solved (see area_for_count)
    u22_3d: float | None = None     # J*m^3; None = Rb default

    def __post_init__(self):
        if self.rho0 <= 0 or self.k0 <= 0 or self.m <= 0 or self.g < 0:
            raise ValueError("rho0, k0, m must be > 0 and g >= 0")

    @property
    def u22(self) -> float:
        return self.u22_3d if self.u22_3d is not None else u_3d_from_scattering_length(m=self.m)


def density_at_depth(model: FallModel, z) -> np.ndarray | float:
    """3D beam density rho0/(1 + m sqrt(2 g z)/hbar k0) at depth z >= 0."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("depth z must be >= 0")
    out = model.rho0 / (1.0 + model.m * np.sqrt(2.0 * model.g * z) / (HBAR * model.k0))
    return float(out) if out.ndim == 0 else out


def atoms_in_fall_region(model: FallModel, z_center: float, extent: float) -> float:
    """Atom count rho(z_center) * area * extent of a beam slice."""
    if extent <= 0:
        raise ValueError("extent must be > 0")
    if model.area is None:
        raise ValueError("model.area is not set; back-solve it with area_for_count")
    return density_at_depth(model, z_center) * model.area * extent


def area_for_count(model: FallModel, n_atoms: float, z_center: float,
                   extent: float) -> float:
    """Cross-section that makes a slice at z_center hold n_atoms."""
    return n_atoms / (density_at_depth(model, z_center) * extent)


def depth_at_time(model: FallModel, t, kinematics: str = "free-fall"):
    """Depth below the outcoupling point after fall time t.

    "free-fall": z = g t^2 / 2 (release from rest; the kick is horizontal or
    already spent at the densities the dilution formula describes).
    "kick-plus-gravity": z = (hbar k0/m) t + g t^2 / 2.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    if kinematics not in KINEMATICS:
        raise ValueError(f"kinematics must be one of {KINEMATICS}")
    z = 0.5 * model.g * t ** 2
    if kinematics == "kick-plus-gravity":
        z = z + (HBAR * model.k0 / model.m) * t
    return float(z) if z.ndim == 0 else z


def fall_time_to_depth(model: FallModel, depth: float,
                       kinematics: str = "free-fall") -> float:
    """Inverse of depth_at_time."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if kinematics not in KINEMATICS:
        raise ValueError(f"kinematics must be one of {KINEMATICS}")
    v0 = 0.0 if kinematics == "free-fall" else HBAR * model.k0 / model.m
    if model.g == 0:
        if v0 == 0:
            raise ValueError("no motion: g = 0 and no kick")
        return depth / v0
    return (-v0 + math.sqrt(v0 ** 2 + 2.0 * model.g * depth)) / model.g


def falling_chi(model: FallModel, n_mode: float, t,
                kinematics: str = "free-fall"):
    """chi(t) = U22_3d * rho(z(t)) / N_mode for a falling packet of N_mode atoms."""
    if n_mode <= 0:
        raise ValueError("n_mode must be > 0")
    z = depth_at_time(model, t, kinematics)
    return model.u22 * density_at_depth(model, z) / n_mode


def falling_chi_schedule(model: FallModel, n_mode: float, t_final: float,
                         n_samples: int = 2001,
                         kinematics: str = "free-fall") -> ChiSchedule:
    """Tabulated ChiSchedule of falling_chi on [0, t_final]."""
    if t_final <= 0:
        raise ValueError("t_final must be > 0")
    times = np.linspace(0.0, t_final, n_samples)
    return ChiSchedule.from_table(times, falling_chi(model, n_mode, times, kinematics))


@dataclass(frozen=True)
class TwoBeamConfig:
    """Two Kerr-evolved coherent beams recombined on a beamsplitter.

    The reference is the weaker beam: r = alpha_ref^2/alpha_main^2 in (0, 1].
    Both beams evolve for the same time under the same chi by default
    (equal_chi); with equal_chi=False the reference's chi is scaled by its own
    relative intensity r (lower density, weaker self-interaction).
    """

    alpha_main: float
    alpha_ref: float
    chi: float            # J
    t: float              # s
    mix_phase: float = 0.0
    splitter_transmissivity: float = 0.5
    equal_chi: bool = True

    def __post_init__(self):
        if self.alpha_main <= 0 or self.alpha_ref < 0:
            raise ValueError("alpha_main must be > 0 and alpha_ref >= 0")
        if self.alpha_ref > self.alpha_main:
            raise ValueError("reference must be the weaker beam (r <= 1)")
        if not 0.0 < self.splitter_transmissivity <= 1.0:
            raise ValueError("splitter_transmissivity must be in (0, 1]")
        if self.t < 0:
            raise ValueError("t must be >= 0")

    @property
    def intensity_ratio(self) -> float:
        return (self.alpha_ref / self.alpha_main) ** 2

    def thetas(self) -> tuple[float, float]:
        theta = self.chi * self.t / HBAR
        if self.equal_chi:
            return theta, theta
        return theta, theta * self.intensity_ratio


def kerr_fock_moment(alpha: float, theta: float, p: int, q: int,
                     n_max: int | None = None) -> complex:
    """Normally-ordered moment <a^dag^p a^q> of a Kerr-evolved coherent state.

    Evaluated by direct truncated Fock summation with the evolved amplitudes
    c_n(t) = c_n(0) exp[-i theta n(n-1)/2]; same truncation rule and loss
    check as the single-mode oracle.
    """
    if p < 0 or q < 0:
        raise ValueError("p, q must be >= 0")
    if n_max is None:
        n_max = default_n_max(alpha)
    elif n_max < alpha ** 2 + 10 * alpha:
        raise ValueError(f"n_max={n_max} below the truncation rule alpha^2 + 10*alpha")
    c0 = _coherent_amplitudes(alpha, n_max)
    norm = float(np.sum(c0 ** 2))
    if norm < 1.0 - 1e-12:
        raise TruncationError(f"retained norm {norm} < 1 - 1e-12 at n_max={n_max}")
    n = np.arange(n_max + 1)
    c = c0 * np.exp(-0.5j * theta * n * (n - 1))
    # <a^dag^p a^q> = sum_n conj(c_{n-q+p}) c_n sqrt(n!/(n-q)!) sqrt((n-q+p)!/(n-q)!)
    valid = (n >= q) & (n - q + p <= n_max)
    nv = n[valid]
    logw = 0.5 * (gammaln(nv + 1) - gammaln(nv - q + 1)
                  + gammaln(nv - q + p + 1) - gammaln(nv - q + 1))
    return complex(np.sum(np.conj(c[nv - q + p]) * c[nv] * np.exp(logw)))


_MOMENT_ORDERS = ((0, 1), (1, 0), (1, 1), (0, 2), (2, 0), (1, 2), (2, 1), (2, 2))


def _beam_moments(alpha: float, theta: float, n_max: int | None) -> dict:
    return {pq: kerr_fock_moment(alpha, theta, *pq, n_max=n_max)
            for pq in _MOMENT_ORDERS}


def _port_stats(a_mom: dict, b_mom: dict, transmissivity: float,
                mix_phase: float) -> tuple[float, float]:
    """(mean, variance) of I = c^dag c for c = u a + v b (independent modes)."""
    u = math.sqrt(transmissivity)
    v = math.sqrt(1.0 - transmissivity) * np.exp(1j * mix_phase)
    uc, vc = np.conj(u), np.conj(v)
    A, B = a_mom.__getitem__, b_mom.__getitem__
    mean = (abs(u) ** 2 * A((1, 1)) + abs(v) ** 2 * B((1, 1))
            + uc * v * A((1, 0)) * B((0, 1)) + vc * u * A((0, 1)) * B((1, 0)))
    # <c^dag^2 c^2>: c^dag^2 = uc^2 a^dag^2 + 2 uc vc a^dag b^dag + vc^2 b^dag^2
    n22 = (uc ** 2 * u ** 2 * A((2, 2))
           + 2 * uc ** 2 * u * v * A((2, 1)) * B((0, 1))
           + uc ** 2 * v ** 2 * A((2, 0)) * B((0, 2))
           + 2 * uc * vc * u ** 2 * A((1, 2)) * B((1, 0))
           + 4 * uc * vc * u * v * A((1, 1)) * B((1, 1))
           + 2 * uc * vc * v ** 2 * A((1, 0)) * B((1, 2))
           + vc ** 2 * u ** 2 * A((0, 2)) * B((2, 0))
           + 2 * vc ** 2 * u * v * A((0, 1)) * B((2, 1))
           + vc ** 2 * v ** 2 * B((2, 2)))
    mean = float(np.real(mean))
    var = float(np.real(n22)) + mean - mean ** 2
    return mean, var


def two_beam_intensity_noise(cfg: TwoBeamConfig,
                             n_max: int | None = None) -> tuple[float, float]:
    """(Fano factor, mean intensity) of one output port of the beamsplitter.

    Output mode c = u a + v b with u = sqrt(T), v = sqrt(1-T) e^{i mix_phase};
    I = c^dag c. Mean and variance assembled from the per-mode normally-ordered
    moments <a^dag^p a^q>, p+q <= 4 (the beams are independent, so cross terms
    factorize).
    """
    theta_m, theta_r = cfg.thetas()
    a_mom = _beam_moments(cfg.alpha_main, theta_m, n_max)
    b_mom = _beam_moments(cfg.alpha_ref, theta_r, n_max)
    mean, var = _port_stats(a_mom, b_mom, cfg.splitter_transmissivity, cfg.mix_phase)
    if mean <= 0:
        raise ValueError("output port has non-positive mean intensity")
    return var / mean, mean


def phase_optimized_fano(cfg: TwoBeamConfig, n_max: int | None = None,
                         n_grid: int = 720) -> tuple[float, float]:
    """(mix_phase_opt, fano_min) over mix_phase in [0, 2 pi), to 1e-6 rad.

    chi = 0 is a flat landscape; returns phase 0 by convention.
    """
    if cfg.chi == 0.0 or cfg.t == 0.0:
        fano, _ = two_beam_intensity_noise(cfg, n_max)
        return 0.0, fano

    theta_m, theta_r = cfg.thetas()
    a_mom = _beam_moments(cfg.alpha_main, theta_m, n_max)
    b_mom = _beam_moments(cfg.alpha_ref, theta_r, n_max)

    def fano_at(phase):
        mean, var = _port_stats(a_mom, b_mom, cfg.splitter_transmissivity,
                                float(phase))
        return var / mean

    grid = np.linspace(0.0, 2.0 * np.pi, n_grid, endpoint=False)
    vals = [fano_at(p) for p in grid]
    p0 = grid[int(np.argmin(vals))]
    span = 2.0 * np.pi / n_grid
    res = minimize_scalar(fano_at, bounds=(p0 - span, p0 + span),
                          method="bounded", options={"xatol": 1e-7})
    phase = float(res.x) % (2.0 * np.pi)
    return phase, float(res.fun)
