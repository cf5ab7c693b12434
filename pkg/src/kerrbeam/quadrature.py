"""Local-oscillator projection and quadrature statistics for beam ensembles.

The measurement model: project the beam field onto a normalized plane-wave
mode L(z) = e^{i(k_L z - omega_L t + phi)}/sqrt(z2-z1) restricted to a window
[z1, z2], then treat the projection b as a single-mode amplitude whose
symmetric-ordered quadrature statistics follow from the trajectory ensemble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar as HBAR
from scipy.optimize import minimize_scalar

from . import single_mode
from .twa import Grid1D, RamanConfig, TrajectoryState


@dataclass(frozen=True)
class LocalOscillator:
    """Plane-wave measurement mode on [z1, z2], zero outside."""

    z1: float
    z2: float
    k_L: float
    omega_L: float
    phi: float = 0.0

    def __post_init__(self):
        if not self.z2 > self.z1:
            raise ValueError("z2 must exceed z1")

    @property
    def length(self) -> float:
        return self.z2 - self.z1

    def window_slice(self, grid: Grid1D) -> slice:
        if self.z1 < grid.z_min - 1e-15 or self.z2 > grid.z_max + 1e-15:
            raise ValueError("local-oscillator window extends outside the grid")
        j1 = int(round((self.z1 - grid.z_min) / grid.dz))
        j2 = int(round((self.z2 - grid.z_min) / grid.dz))
        return slice(j1, j2)

    def mode(self, z: np.ndarray, t: float) -> np.ndarray:
        """L(z, t) on the given points (caller restricts to the window)."""
        norm = 1.0 / math.sqrt(self.length)
        return norm * np.exp(1j * (self.k_L * z - self.omega_L * t + self.phi))


def build_local_oscillator(config: RamanConfig, rho: float, z1: float, z2: float,
                           phi: float = 0.0) -> LocalOscillator:
    """Mode matched to the mean-field dispersion of a beam of 1D density rho.

    k_L = k0 - U22 rho m / (k0 hbar^2) and omega_L = hbar k_L^2/2m + U22 rho/hbar:
    the plane wave that rides the beam once the mean-field phase shift from the
    beam's own density is accounted for.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    k_L = config.k0 - config.u22 * rho * config.m / (config.k0 * HBAR ** 2)
    omega_L = HBAR * k_L ** 2 / (2.0 * config.m) + config.u22 * rho / HBAR
    return LocalOscillator(z1=z1, z2=z2, k_L=k_L, omega_L=omega_L, phi=phi)


def project(state: TrajectoryState, lo: LocalOscillator, grid: Grid1D) -> complex:
    """b = sum over the window of L*(z, t) psi2(z) dz."""
    sl = lo.window_slice(grid)
    z = grid.z[sl]
    return complex(np.sum(np.conj(lo.mode(z, state.t)) * state.psi2[sl]) * grid.dz)


def atoms_in_region(state: TrajectoryState, lo: LocalOscillator,
                    grid: Grid1D) -> float:
    """Wigner-corrected atom count of the beam field inside the window."""
    sl = lo.window_slice(grid)
    return float(np.sum(np.abs(state.psi2[sl]) ** 2 - 0.5 / grid.dz) * grid.dz)


def window_mean_density(states, lo: LocalOscillator, grid: Grid1D) -> float:
    """Ensemble- and window-averaged Wigner-corrected 1D beam density."""
    states = list(states)
    if not states:
        raise ValueError("need at least one state")
    return float(np.mean([atoms_in_region(s, lo, grid) for s in states])) / lo.length


def _as_samples(b_samples) -> np.ndarray:
    b = np.asarray(b_samples, dtype=np.complex128)
    if b.ndim != 1 or b.size < 2:
        raise ValueError("need at least 2 projection samples")
    return b


def _jackknife_se_of_variance(x: np.ndarray) -> float:
    n = x.size
    total = np.sum(x)
    total_sq = np.sum(x ** 2)
    mean_i = (total - x) / (n - 1)
    var_i = (total_sq - x ** 2 - (n - 1) * mean_i ** 2) / (n - 2)
    return float(math.sqrt(max((n - 1) / n * np.sum((var_i - np.mean(var_i)) ** 2), 0.0)))


def quadrature_variance(b_samples, phi: float) -> tuple[float, float]:
    """Unbiased ensemble variance of X^phi = e^{i phi} b + c.c., with jackknife SE.

    Wigner samples carry symmetric ordering, so vacuum gives variance 1 with
    no commutator correction.
    """
    b = _as_samples(b_samples)
    x = 2.0 * np.real(np.exp(1j * phi) * b)
    var = float(np.var(x, ddof=1))
    if b.size < 3:
        return var, float("nan")
    return var, _jackknife_se_of_variance(x)


def optimal_quadrature(b_samples):
    """Phase minimizing var(X^phi) via covariance eigen-decomposition.

    Returns (phi_opt, (var_sq, se_sq), (var_anti, se_anti)). With
    X^phi = 2(Re b cos phi - Im b sin phi), the variance is 4 u^T C u for
    u = (cos phi, -sin phi) and C the sample covariance of (Re b, Im b), so the
    extremal phases come from the eigenvectors of C. Degenerate (isotropic)
    clouds return the smallest non-negative angle.
    """
    b = _as_samples(b_samples)
    c = np.cov(np.stack([b.real, b.imag]), ddof=1)
    evals, evecs = np.linalg.eigh(c)
    u = evecs[:, 0]  # eigenvector of the smaller eigenvalue
    phi_opt = math.atan2(-u[1], u[0]) % math.pi
    if math.isclose(evals[0], evals[1], rel_tol=1e-12, abs_tol=0.0):
        phi_opt = 0.0
    var_sq, se_sq = quadrature_variance(b, phi_opt)
    var_anti, se_anti = quadrature_variance(b, phi_opt + math.pi / 2)
    if var_sq > var_anti:  # guard against roundoff flipping the eigenpair
        phi_opt = (phi_opt + math.pi / 2) % math.pi
        (var_sq, se_sq), (var_anti, se_anti) = (var_anti, se_anti), (var_sq, se_sq)
    return phi_opt, (var_sq, se_sq), (var_anti, se_anti)


@dataclass
class QuadratureSeries:
    """Per-observer-time quadrature statistics for one ensemble."""

    times: np.ndarray
    var_sq: np.ndarray
    se_sq: np.ndarray
    var_anti: np.ndarray
    se_anti: np.ndarray
    phi_opt: np.ndarray
    n_region: np.ndarray


def analyze_series(times, b_records, n_records) -> QuadratureSeries:
    """Reduce per-time projection samples to a QuadratureSeries.

    b_records[time_index][traj] are projections; n_records[time_index][traj]
    the per-trajectory window atom counts (ensemble-averaged for reporting).
    """
    times = np.asarray(times, dtype=float)
    out = {k: np.empty(times.size) for k in
           ("var_sq", "se_sq", "var_anti", "se_anti", "phi_opt", "n_region")}
    for ti in range(times.size):
        phi, (vs, es), (va, ea) = optimal_quadrature(np.asarray(b_records[ti]))
        out["phi_opt"][ti] = phi
        out["var_sq"][ti] = vs
        out["se_sq"][ti] = es
        out["var_anti"][ti] = va
        out["se_anti"][ti] = ea
        out["n_region"][ti] = float(np.mean(np.asarray(n_records[ti], dtype=float)))
    return QuadratureSeries(times=times, **out)


def integrated_analytic_prediction(config: RamanConfig, lo: LocalOscillator,
                                   n_atoms: float, n_ages: int = 257):
    """Single-mode prediction averaged over atom transit ages through the window.

    chi_eff = U22 * integral |L|^4 dz = U22/(z2-z1); alpha = sqrt(N). Each atom
    at position z has accumulated Kerr phase for an age z/v (v = hbar k_L/m),
    so the model variance is averaged over ages t in [z1/v, z2/v] at the phase
    minimizing that average; the pi/2-rotated average is reported alongside.
    """
    if n_atoms <= 0:
        raise ValueError("n_atoms must be > 0")
    if config.u22 == 0.0:
        return 1.0, 1.0
    chi_eff = config.u22 / lo.length
    alpha = math.sqrt(n_atoms)
    v = HBAR * lo.k_L / config.m
    ages = np.linspace(lo.z1 / v, lo.z2 / v, n_ages)
    thetas = chi_eff * ages / HBAR

    def avg_var(phi):
        return float(np.mean(single_mode.variance_from_theta(alpha, thetas, phi)))

    grid = np.linspace(0.0, np.pi, 721)
    coarse = [avg_var(p) for p in grid]
    p0 = grid[int(np.argmin(coarse))]
    res = minimize_scalar(avg_var, bounds=(p0 - 0.01, p0 + 0.01),
                          method="bounded", options={"xatol": 1e-9})
    phi_min = float(res.x)
    return avg_var(phi_min), avg_var(phi_min + math.pi / 2)
