"""Exact single-mode Kerr squeezing model.

Closed-form quadrature variance of a coherent state evolving under the
Kerr Hamiltonian H = hbar*omega*n + (chi/2)*a^dag a^dag a a, a brute-force
Fock-basis cross-check, phase optimisation, and the generalisation to a
time-dependent nonlinearity via phase accumulation.

Quadrature angles phi are measured in the frame rotating at omega, so all
results depend on (alpha, chi*t/hbar, phi) only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar as HBAR
from scipy.optimize import minimize_scalar


class TruncationError(RuntimeError):
    """Fock-space truncation lost too much norm."""


@dataclass(frozen=True)
class KerrParams:
    """Single-mode Kerr parameters: chi in joules, omega in rad/s, alpha real >= 0."""

    chi: float
    omega: float
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.chi) and math.isfinite(self.omega) and math.isfinite(self.alpha)):
            raise ValueError("KerrParams fields must be finite")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @classmethod
    def from_chi_rate(cls, chi_rate: float, alpha: float, omega: float = 0.0) -> "KerrParams":
        """Build from chi/hbar in rad/s (the paper-style 'chi = 0.1 hbar' input)."""
        return cls(chi=chi_rate * HBAR, omega=omega, alpha=alpha)

    @property
    def n(self) -> float:
        """Mean particle number alpha^2 (not rounded)."""
        return self.alpha ** 2


@dataclass(frozen=True)
class QuadratureSample:
    t: float
    phi: float
    variance: float


def variance_from_theta(alpha, theta, phi):
    """Quadrature variance as a function of the dimensionless Kerr phase theta = chi*t/hbar.

    Broadcasts over array arguments.
    """
    alpha = np.asarray(alpha, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n = alpha ** 2
    out = (
        1.0
        + 2.0 * n
        + 2.0 * n * np.exp(-2.0 * n * np.sin(theta) ** 2)
        * np.cos(theta + n * np.sin(2.0 * theta) - 2.0 * phi)
        - 4.0 * n * np.exp(-4.0 * n * np.sin(theta / 2.0) ** 2)
        * np.cos(phi - n * np.sin(theta)) ** 2
    )
    return out if out.ndim else float(out)


def analytic_variance(params: KerrParams, t, phi):
    """Closed-form var(X^phi) at time t (seconds). phi in the rotating frame."""
    t = np.asarray(t, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(phi))):
        raise ValueError("t and phi must be finite")
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return variance_from_theta(params.alpha, params.chi * t / HBAR, phi)


def default_n_max(alpha: float) -> int:
    # Poisson tail beyond 10 sigma is far below 1e-12
    return math.ceil(alpha ** 2 + 10.0 * alpha + 20.0)


def _coherent_amplitudes(alpha: float, n_max: int) -> np.ndarray:
    """c_n(0) = exp(-alpha^2/2) alpha^n / sqrt(n!), computed in log space."""
    c = np.zeros(n_max + 1)
    if alpha == 0.0:
        c[0] = 1.0
        return c
    # multiplicative recurrence c_{n+1} = c_n * alpha / sqrt(n+1), started at the
    # Poisson mode to avoid underflow for large alpha
    n_peak = min(int(alpha ** 2), n_max)
    c[n_peak] = 1.0
    for n in range(n_peak, n_max):
        c[n + 1] = c[n] * alpha / math.sqrt(n + 1)
    for n in range(n_peak, 0, -1):
        c[n - 1] = c[n] * math.sqrt(n) / alpha
    c /= math.sqrt(np.sum(c ** 2) / _poisson_norm(alpha, n_max))
    return c


def _poisson_norm(alpha: float, n_max: int) -> float:
    """sum_{n<=n_max} of the Poisson(alpha^2) pmf, i.e. the retained norm."""
    from scipy.stats import poisson

    return float(poisson.cdf(n_max, alpha ** 2))


def fock_oracle_variance(params: KerrParams, t: float, phi: float, n_max: int | None = None) -> float:
    """Brute-force var(X^phi) by direct Fock-basis summation.

    Independent of analytic_variance: expands |alpha> up to n_max, applies the
    exact phase evolution c_n(t) = c_n(0) exp[-i(n*omega + chi*n(n-1)/2hbar)t],
    and assembles the quadrature moments. <a> and <a^2> are rotated back by
    exp(i*omega*t) and exp(2i*omega*t) to match the rotating-frame phi
    convention of the analytic formula.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    alpha = params.alpha
    if n_max is None:
        n_max = default_n_max(alpha)
    if n_max < alpha ** 2 + 10.0 * alpha:
        raise ValueError("n_max below the truncation rule alpha^2 + 10*alpha")

    c0 = _coherent_amplitudes(alpha, n_max)
    norm = float(np.sum(c0 ** 2))
    if norm < 1.0 - 1e-12:
        raise TruncationError(f"coherent-state norm {norm} below 1 - 1e-12 at n_max={n_max}")

    n = np.arange(n_max + 1)
    phase = -(n * params.omega + params.chi * n * (n - 1) / (2.0 * HBAR)) * t
    c = c0 * np.exp(1j * phase)

    sqrt_n = np.sqrt(n)
    # <a> = sum_n conj(c_n) sqrt(n+1) c_{n+1}
    a_mean = np.sum(np.conj(c[:-1]) * sqrt_n[1:] * c[1:])
    # <a^2> = sum_n conj(c_n) sqrt((n+1)(n+2)) c_{n+2}
    a2_mean = np.sum(np.conj(c[:-2]) * sqrt_n[1:-1] * sqrt_n[2:] * c[2:])
    n_mean = np.sum(n * np.abs(c) ** 2)

    # rotating frame at omega
    a_mean *= np.exp(1j * params.omega * t)
    a2_mean *= np.exp(2j * params.omega * t)

    ephi = np.exp(1j * phi)
    x_mean = 2.0 * np.real(ephi * a_mean)
    x2_mean = 2.0 * np.real(ephi ** 2 * a2_mean) + 2.0 * n_mean + 1.0
    return float(x2_mean - x_mean ** 2)


def _minimize_phase(variance_of_phi, n_grid: int = 720, tol: float = 1e-9) -> tuple[float, float]:
    """Grid scan over [0, 2pi) followed by bounded local refinement."""
    phis = np.linspace(0.0, 2.0 * np.pi, n_grid, endpoint=False)
    vals = np.asarray(variance_of_phi(phis))  # callables broadcast over phi
    i = int(np.argmin(vals))
    lo = phis[i] - 2.0 * np.pi / n_grid
    hi = phis[i] + 2.0 * np.pi / n_grid
    res = minimize_scalar(variance_of_phi, bounds=(lo, hi), method="bounded",
                          options={"xatol": tol})
    phi = float(res.x) % (2.0 * np.pi)
    var = float(res.fun)
    # degenerate landscape: keep the smallest phi convention
    if abs(var - vals[i]) <= 1e-13 * max(1.0, abs(var)) and vals[i] <= var:
        phi, var = float(phis[i]), float(vals[i])
    return phi, var


def optimal_phase(params: KerrParams, t: float) -> tuple[float, float]:
    """(phi_min, var_min) minimising the analytic variance over phi in [0, 2pi)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0 or params.chi == 0.0:
        return 0.0, 1.0
    theta = params.chi * t / HBAR
    return _minimize_phase(lambda p: variance_from_theta(params.alpha, theta, p))


def optimal_phase_from_theta(alpha: float, theta: float) -> tuple[float, float]:
    """As optimal_phase but parametrised directly by theta = chi*t/hbar."""
    if theta == 0.0:
        return 0.0, 1.0
    return _minimize_phase(lambda p: variance_from_theta(alpha, theta, p))


@dataclass
class MinVarianceTrace:
    times: np.ndarray
    phi_opt: np.ndarray
    var_min: np.ndarray
    var_anti: np.ndarray


def min_variance_trace(params: KerrParams, t_grid) -> MinVarianceTrace:
    """Optimal-phase squeezing and the conjugate antisqueezing on a time grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise ValueError("t_grid must be nonempty")
    if np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be nondecreasing")
    phi_opt = np.empty_like(t_grid)
    var_min = np.empty_like(t_grid)
    var_anti = np.empty_like(t_grid)
    for i, t in enumerate(t_grid):
        phi, v = optimal_phase(params, float(t))
        phi_opt[i] = phi
        var_min[i] = v
        var_anti[i] = analytic_variance(params, float(t), phi + np.pi / 2.0)
    return MinVarianceTrace(t_grid, phi_opt, var_min, var_anti)


@dataclass(frozen=True)
class ChiSchedule:
    """Nonlinearity chi(t) (joules): constant, or tabulated piecewise-linear."""

    times: np.ndarray | None = None
    chi_values: np.ndarray | None = None
    constant: float | None = None
    _cumulative: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if (self.constant is None) == (self.times is None):
            raise ValueError("provide exactly one of constant or (times, chi_values)")
        if self.constant is not None:
            if self.constant < 0:
                raise ValueError("chi must be >= 0")
            return
        times = np.asarray(self.times, dtype=float)
        chis = np.asarray(self.chi_values, dtype=float)
        if times.ndim != 1 or times.shape != chis.shape or times.size < 2:
            raise ValueError("times and chi_values must be matching 1D arrays, length >= 2")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(chis < 0):
            raise ValueError("chi_values must be >= 0")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "chi_values", chis)
        # exact integral of the piecewise-linear interpolant
        cum = np.concatenate(([0.0], np.cumsum(np.diff(times) * (chis[:-1] + chis[1:]) / 2.0)))
        object.__setattr__(self, "_cumulative", cum)

    @classmethod
    def from_constant(cls, chi: float) -> "ChiSchedule":
        return cls(constant=chi)

    @classmethod
    def from_table(cls, times, chi_values) -> "ChiSchedule":
        return cls(times=np.asarray(times, float), chi_values=np.asarray(chi_values, float))

    def chi(self, t: float) -> float:
        if self.constant is not None:
            return self.constant
        self._check_domain(t)
        return float(np.interp(t, self.times, self.chi_values))

    def theta(self, t: float) -> float:
        """Accumulated Kerr phase (1/hbar) * integral_0^t chi(t') dt'."""
        if self.constant is not None:
            return self.constant * t / HBAR
        self._check_domain(t)
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(i, self.times.size - 2)
        t0, t1 = self.times[i], self.times[i + 1]
        c0, c1 = self.chi_values[i], self.chi_values[i + 1]
        frac = (t - t0) / (t1 - t0)
        c_at_t = c0 + (c1 - c0) * frac
        partial = (t - t0) * (c0 + c_at_t) / 2.0
        return (self._cumulative[i] + partial) / HBAR

    def _check_domain(self, t: float):
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"t={t} outside tabulated schedule range "
                             f"[{self.times[0]}, {self.times[-1]}]")


def accumulated_phase_variance(schedule: ChiSchedule, alpha: float, t: float, phi: float) -> float:
    """var(X^phi) with the constant Kerr phase chi*t/hbar replaced by Theta(t).

    Valid because the Kerr Hamiltonian commutes with itself at different
    times, so a time-dependent chi only changes the accumulated phase.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    return float(variance_from_theta(alpha, schedule.theta(t), phi))


def _theta_of_global_minimum(alpha: float, n_scan: int = 4096) -> float:
    """Dimensionless Kerr phase at which the phi-minimised variance is smallest.

    Scans one full Kerr period theta in (0, 2pi] and refines.
    """
    thetas = np.linspace(2.0 * np.pi / n_scan, 2.0 * np.pi, n_scan)
    vals = np.array([optimal_phase_from_theta(alpha, th)[1] for th in thetas])
    # the landscape is symmetric about theta = pi (Kerr revival); take the
    # earliest global minimum
    i = int(np.flatnonzero(vals <= vals.min() + 1e-12 * max(1.0, abs(vals.min())))[0])
    lo = thetas[max(i - 1, 0)]
    hi = thetas[min(i + 1, n_scan - 1)]
    res = minimize_scalar(lambda th: optimal_phase_from_theta(alpha, th)[1],
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(res.x)


def required_suppression(params: KerrParams, t_experiment: float) -> float:
    """Smallest s >= 1 with the squeezing minimum of chi/s pushed past t_experiment.

    Bisection on s; the minimum's location scales as s/chi because the
    variance depends on chi*t/hbar only.
    """
    if t_experiment <= 0:
        raise ValueError("t_experiment must be > 0")
    if params.chi == 0.0:
        return 1.0
    theta_min = _theta_of_global_minimum(params.alpha)
    t_min = theta_min * HBAR / abs(params.chi)

    def min_time_ge(s: float) -> bool:
        # time of minimum for chi/s
        return s * t_min >= t_experiment

    if min_time_ge(1.0):
        return 1.0
    lo, hi = 1.0, 2.0
    while not min_time_ge(hi):
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if min_time_ge(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-9 * hi:
            break
    return hi
