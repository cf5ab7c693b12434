"""1D truncated-Wigner simulation of a Raman atom laser.

Two coupled c-number fields on a periodic grid: psi1 (trapped condensate)
and psi2 (outcoupled beam), advanced by a symmetric split-step spectral
integrator. The solver's z axis points along the momentum kick, so the
outcoupled beam travels toward +z. There are no noise terms during
evolution; all quantum noise enters through the initial conditions
(half a vacuum particle per grid mode in each field).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba
import numpy as np
import scipy.fft
from scipy.constants import hbar as HBAR

DEFAULT_SCATTERING_LENGTH = 5.77e-9  # m, Rb
DEFAULT_AREA = 1.2e-11  # m^2, cross-section used to reduce 3D U to 1D


class TrajectoryDiverged(RuntimeError):
    """A trajectory produced NaN/Inf field values."""


class NonlinearPhaseError(RuntimeError):
    """The per-substep nonlinear phase exceeded the integrator's accuracy range."""


class GridResolutionError(ValueError):
    pass


def u_1d_from_scattering_length(a: float, m: float, area: float) -> float:
    """1D-reduced interaction strength 4*pi*hbar^2*a/(m*area), in J*m."""
    return 4.0 * math.pi * HBAR ** 2 * a / (m * area)


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on [z_min, z_max) with a power-of-two point count."""

    z_min: float
    z_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2 or self.n_points & (self.n_points - 1):
            raise ValueError("n_points must be a power of two")
        if not self.z_max > self.z_min:
            raise ValueError("z_max must exceed z_min")

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / self.n_points

    @property
    def z(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in standard spectral (FFT) ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dz)

    @property
    def k_max(self) -> float:
        return np.pi / self.dz

    def require_resolves_kick(self, k0: float):
        if self.k_max < 2.5 * abs(k0):
            raise GridResolutionError(
                f"k_max={self.k_max:.3e} < 2.5*k0={2.5 * abs(k0):.3e}; refine the grid")


@dataclass(frozen=True)
class RamanConfig:
    """Physical constants and couplings for the two-field stochastic PDEs."""

    m: float                 # kg
    omega_trap: float        # rad/s
    omega_rabi: float        # two-photon Rabi frequency, rad/s
    k0: float                # kick wavenumber, rad/m (beam moves toward +z)
    n_bec: float             # initial condensate atom number
    u11: float = 0.0         # J*m (1D-reduced)
    u12: float = 0.0
    u22: float = 0.0
    delta: float | None = None   # two-photon detuning, rad/s; None = resonant kick
    light_shift_1: float = 0.0   # rad/s
    light_shift_2: float = 0.0
    area: float = DEFAULT_AREA   # m^2, bookkeeping for the 1D reduction
    absorber_width: float = 0.0       # m; 0 disables the +z-edge absorber
    absorber_strength: float = 0.0    # rad/s peak damping rate

    def __post_init__(self):
        for name in ("m", "omega_trap", "omega_rabi", "k0", "u11", "u12", "u22",
                     "light_shift_1", "light_shift_2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.n_bec <= 0:
            raise ValueError("n_bec must be > 0")

    @property
    def delta_effective(self) -> float:
        """delta, defaulting to hbar*k0^2/2m (outcoupling resonant with the kick)."""
        if self.delta is not None:
            return self.delta
        return HBAR * self.k0 ** 2 / (2.0 * self.m)

    @property
    def kick_velocity(self) -> float:
        return HBAR * self.k0 / self.m

    @classmethod
    def rb_default(cls, n_bec: float = 5e5, **overrides) -> "RamanConfig":
        """Rb Raman atom laser parameter set (U11 = 0, U12 = U22 from a = 5.77 nm)."""
        m = 1.44e-25
        u = u_1d_from_scattering_length(DEFAULT_SCATTERING_LENGTH, m, DEFAULT_AREA)
        base = dict(m=m, omega_trap=80.0, omega_rabi=50.0, k0=2e7,
                    n_bec=n_bec, u11=0.0, u12=u, u22=u, area=DEFAULT_AREA)
        base.update(overrides)
        return cls(**base)


@dataclass
class TrajectoryState:
    """Pair of complex field amplitudes (units m^-1/2) at time t."""

    psi1: np.ndarray
    psi2: np.ndarray
    t: float

    def copy(self) -> "TrajectoryState":
        return TrajectoryState(self.psi1.copy(), self.psi2.copy(), self.t)


@dataclass(frozen=True)
class EnsembleSpec:
    """Trajectory count and the counter-based seeding rule."""

    n_traj: int
    master_seed: int

    def __post_init__(self):
        if self.n_traj < 2:
            raise ValueError("n_traj must be >= 2")

    def rng(self, traj_index: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.master_seed, spawn_key=(traj_index,)))


def ground_state(grid: Grid1D, config: RamanConfig) -> np.ndarray:
    """Harmonic-oscillator ground state scaled to n_bec atoms (valid for U11 = 0)."""
    width = math.sqrt(HBAR / (config.m * config.omega_trap))
    if width < 16 * grid.dz:
        raise GridResolutionError(
            f"trap ground state width {width:.3e} m spans fewer than 16 grid points")
    z = grid.z
    phi0 = (config.m * config.omega_trap / (math.pi * HBAR)) ** 0.25 * np.exp(
        -config.m * config.omega_trap * z ** 2 / (2.0 * HBAR))
    return np.sqrt(config.n_bec) * phi0.astype(np.complex128)


def vacuum_noise(grid: Grid1D, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian field with <|eta|^2> = 1/(2 dz) per grid point."""
    sigma = math.sqrt(1.0 / (4.0 * grid.dz))
    return sigma * (rng.standard_normal(grid.n_points)
                    + 1j * rng.standard_normal(grid.n_points))


def initial_state(grid: Grid1D, config: RamanConfig,
                  rng: np.random.Generator | None) -> TrajectoryState:
    """Condensate ground state plus coherent-state (Wigner) vacuum noise.

    Pass rng=None for the noise-free mean field. Noise draw order is fixed:
    psi1 first, then psi2.
    """
    psi1 = ground_state(grid, config)
    psi2 = np.zeros(grid.n_points, dtype=np.complex128)
    if rng is not None:
        psi1 = psi1 + vacuum_noise(grid, rng)
        psi2 = psi2 + vacuum_noise(grid, rng)
    return TrajectoryState(psi1, psi2, 0.0)


def density(state: TrajectoryState, field: int, grid: Grid1D) -> np.ndarray:
    """Wigner-corrected density |psi|^2 - 1/(2 dz) of field 1 or 2 (m^-1)."""
    psi = state.psi1 if field == 1 else state.psi2
    return np.abs(psi) ** 2 - 1.0 / (2.0 * grid.dz)


def corrected_number(state: TrajectoryState, grid: Grid1D) -> float:
    """Total Wigner-corrected atom number over both fields."""
    dz = grid.dz
    return float(np.sum(np.abs(state.psi1) ** 2 + np.abs(state.psi2) ** 2
                        - 1.0 / dz) * dz)


# The nonlinear phase per quarter-step must stay within the validity range
# of the polynomial exp(-ix) used in the hot loop (cos to x^10, sin to x^11,
# error < 1e-13 for |x| <= PHASE_LIMIT). Enforced periodically during
# evolution; exceeding it means dt is too large for the peak density.
PHASE_LIMIT = 0.35


@numba.njit(cache=True, fastmath=True)
def _position_half_step(p1v, p2v, st1r, st1i, st2r, st2i, c11, c12, c22,
                        inv_dz, half_inv_dz, cos_rabi, s12r, s12i, s21r, s21i):
    """In-place position-space half-step: diag(dt/4), Raman(dt/2), diag(dt/4).

    Operates on float64 views of the complex batches (interleaved re/im) with
    all factors split into real/imag parts: complex arithmetic and libm calls
    both block SIMD vectorization, so exp(-ix) is a branch-free polynomial
    (accurate to ~1e-13 for |x| <= PHASE_LIMIT; see StepPlan.phase_bound).
    c_ij = U_ij * dt / (4 hbar); st1/st2 are the precomputed static diagonal
    factors for dt/4; s12/s21 the off-diagonal Raman unitary entries.
    Each diagonal quarter-step is exact for its entry density (a pure phase
    rotation leaves |psi| unchanged), so densities are re-evaluated after the
    Raman rotation; freezing them across the whole half-step would demote the
    splitting to first order in dt.
    """
    nt, n2 = p1v.shape
    n = n2 // 2
    for i in range(nt):
        for j in range(n):
            ar = p1v[i, 2 * j]
            ai = p1v[i, 2 * j + 1]
            br = p2v[i, 2 * j]
            bi = p2v[i, 2 * j + 1]
            d1 = ar * ar + ai * ai
            d2 = br * br + bi * bi
            x1 = c11 * (d1 - inv_dz) + c12 * (d2 - half_inv_dz)
            x2 = c22 * (d2 - inv_dz) + c12 * (d1 - half_inv_dz)
            q = x1 * x1
            cr = 1.0 - q * (0.5 - q * (1.0 / 24.0 - q * (1.0 / 720.0
                 - q * (1.0 / 40320.0 - q / 3628800.0))))
            ci = -x1 * (1.0 - q * (1.0 / 6.0 - q * (1.0 / 120.0 - q * (1.0 / 5040.0
                 - q * (1.0 / 362880.0 - q / 39916800.0)))))
            f1r = st1r[j] * cr - st1i[j] * ci
            f1i = st1r[j] * ci + st1i[j] * cr
            q = x2 * x2
            cr = 1.0 - q * (0.5 - q * (1.0 / 24.0 - q * (1.0 / 720.0
                 - q * (1.0 / 40320.0 - q / 3628800.0))))
            ci = -x2 * (1.0 - q * (1.0 / 6.0 - q * (1.0 / 120.0 - q * (1.0 / 5040.0
                 - q * (1.0 / 362880.0 - q / 39916800.0)))))
            f2r = st2r[j] * cr - st2i[j] * ci
            f2i = st2r[j] * ci + st2i[j] * cr
            tar = ar * f1r - ai * f1i
            tai = ar * f1i + ai * f1r
            tbr = br * f2r - bi * f2i
            tbi = br * f2i + bi * f2r
            nar = cos_rabi * tar + s12r[j] * tbr - s12i[j] * tbi
            nai = cos_rabi * tai + s12r[j] * tbi + s12i[j] * tbr
            nbr = cos_rabi * tbr + s21r[j] * tar - s21i[j] * tai
            nbi = cos_rabi * tbi + s21r[j] * tai + s21i[j] * tar
            d1 = nar * nar + nai * nai
            d2 = nbr * nbr + nbi * nbi
            x1 = c11 * (d1 - inv_dz) + c12 * (d2 - half_inv_dz)
            x2 = c22 * (d2 - inv_dz) + c12 * (d1 - half_inv_dz)
            q = x1 * x1
            cr = 1.0 - q * (0.5 - q * (1.0 / 24.0 - q * (1.0 / 720.0
                 - q * (1.0 / 40320.0 - q / 3628800.0))))
            ci = -x1 * (1.0 - q * (1.0 / 6.0 - q * (1.0 / 120.0 - q * (1.0 / 5040.0
                 - q * (1.0 / 362880.0 - q / 39916800.0)))))
            f1r = st1r[j] * cr - st1i[j] * ci
            f1i = st1r[j] * ci + st1i[j] * cr
            q = x2 * x2
            cr = 1.0 - q * (0.5 - q * (1.0 / 24.0 - q * (1.0 / 720.0
                 - q * (1.0 / 40320.0 - q / 3628800.0))))
            ci = -x2 * (1.0 - q * (1.0 / 6.0 - q * (1.0 / 120.0 - q * (1.0 / 5040.0
                 - q * (1.0 / 362880.0 - q / 39916800.0)))))
            f2r = st2r[j] * cr - st2i[j] * ci
            f2i = st2r[j] * ci + st2i[j] * cr
            p1v[i, 2 * j] = nar * f1r - nai * f1i
            p1v[i, 2 * j + 1] = nar * f1i + nai * f1r
            p2v[i, 2 * j] = nbr * f2r - nbi * f2i
            p2v[i, 2 * j + 1] = nbr * f2i + nbi * f2r


@numba.njit(cache=True, fastmath=True)
def _max_nonlinear_phase(p1v, p2v, c11, c12, c22, inv_dz, half_inv_dz):
    """Largest |nonlinear phase| per quarter-step over a batch (float views)."""
    nt, n2 = p1v.shape
    n = n2 // 2
    mx = 0.0
    for i in range(nt):
        for j in range(n):
            ar = p1v[i, 2 * j]
            ai = p1v[i, 2 * j + 1]
            br = p2v[i, 2 * j]
            bi = p2v[i, 2 * j + 1]
            d1 = ar * ar + ai * ai
            d2 = br * br + bi * bi
            x1 = c11 * (d1 - inv_dz) + c12 * (d2 - half_inv_dz)
            x2 = c22 * (d2 - inv_dz) + c12 * (d1 - half_inv_dz)
            mx = max(mx, abs(x1), abs(x2))
    return mx


class StepPlan:
    """Precomputed factors for repeated split-steps at fixed (config, grid, dt)."""

    def __init__(self, config: RamanConfig, grid: Grid1D, dt: float):
        if dt <= 0:
            raise ValueError("dt must be > 0")
        kin_rate = HBAR * grid.k_max ** 2 / (2.0 * config.m)
        if dt * kin_rate > np.pi / 4.0 + 1e-12:
            raise ValueError(
                f"dt={dt:.3e} too large: dt*hbar*k_max^2/2m = {dt * kin_rate:.3f} > pi/4")
        self.config = config
        self.grid = grid
        self.dt = dt

        z = grid.z
        k = grid.k
        m = config.m

        self.kinetic_phase = np.exp(-1j * HBAR * k ** 2 * dt / (2.0 * m))

        # static diagonal parts, applied for dt/4 on each side of the Raman unitary
        v1 = 0.5 * m * config.omega_trap ** 2 * z ** 2 - HBAR * config.light_shift_1
        v2 = -HBAR * config.light_shift_2 - HBAR * config.delta_effective
        v2 = np.full_like(z, v2)
        quarter = dt / (4.0 * HBAR)
        stat1 = np.exp(-1j * v1 * quarter)
        stat2 = np.exp(-1j * v2 * quarter)
        if config.absorber_width > 0.0 and config.absorber_strength > 0.0:
            edge = grid.z_max - config.absorber_width
            ramp = np.clip((z - edge) / config.absorber_width, 0.0, 1.0)
            damp = np.exp(-config.absorber_strength * ramp ** 2 * dt / 4.0)
            stat1 = stat1 * damp
            stat2 = stat2 * damp
        self.st1r = np.ascontiguousarray(stat1.real)
        self.st1i = np.ascontiguousarray(stat1.imag)
        self.st2r = np.ascontiguousarray(stat2.real)
        self.st2i = np.ascontiguousarray(stat2.imag)

        # exact 2x2 Raman unitary over dt/2 for the local coupling
        # H_c = -hbar [[0, Omega e^{-i k0 z}], [Omega* e^{+i k0 z}, 0]]
        # (z axis oriented along the kick: the beam acquires momentum +hbar k0)
        omega = config.omega_rabi
        half = dt / 2.0
        if omega == 0.0:
            s12 = np.zeros_like(z, dtype=np.complex128)
            s21 = np.zeros_like(z, dtype=np.complex128)
            self.cos_rabi = 1.0
        else:
            mag = abs(omega)
            self.cos_rabi = math.cos(mag * half)
            sin = math.sin(mag * half)
            phase = np.exp(-1j * config.k0 * z)
            s12 = 1j * sin * (omega / mag) * phase
            s21 = 1j * sin * (omega / mag) * np.conj(phase)
        self.s12r = np.ascontiguousarray(s12.real)
        self.s12i = np.ascontiguousarray(s12.imag)
        self.s21r = np.ascontiguousarray(s21.real)
        self.s21i = np.ascontiguousarray(s21.imag)

        self.c11 = config.u11 * quarter
        self.c12 = config.u12 * quarter
        self.c22 = config.u22 * quarter
        self.inv_dz = 1.0 / grid.dz
        self.half_inv_dz = 0.5 / grid.dz

    def advance(self, psi1: np.ndarray, psi2: np.ndarray, workers: int = 1):
        """One Strang step, in place, on (n_traj, n_points) batches."""
        p1v = psi1.view(np.float64)
        p2v = psi2.view(np.float64)
        _position_half_step(p1v, p2v, self.st1r, self.st1i, self.st2r, self.st2i,
                            self.c11, self.c12, self.c22,
                            self.inv_dz, self.half_inv_dz, self.cos_rabi,
                            self.s12r, self.s12i, self.s21r, self.s21i)
        f = scipy.fft.fft(psi1, axis=-1, workers=workers)
        f *= self.kinetic_phase
        psi1[:] = scipy.fft.ifft(f, axis=-1, overwrite_x=True, workers=workers)
        f = scipy.fft.fft(psi2, axis=-1, workers=workers)
        f *= self.kinetic_phase
        psi2[:] = scipy.fft.ifft(f, axis=-1, overwrite_x=True, workers=workers)
        _position_half_step(p1v, p2v, self.st1r, self.st1i, self.st2r, self.st2i,
                            self.c11, self.c12, self.c22,
                            self.inv_dz, self.half_inv_dz, self.cos_rabi,
                            self.s12r, self.s12i, self.s21r, self.s21i)

    def phase_bound(self, psi1: np.ndarray, psi2: np.ndarray) -> float:
        """Current worst-case nonlinear phase per quarter-step over a batch."""
        return _max_nonlinear_phase(psi1.view(np.float64), psi2.view(np.float64),
                                    self.c11, self.c12, self.c22,
                                    self.inv_dz, self.half_inv_dz)

    def check_phase(self, psi1: np.ndarray, psi2: np.ndarray, t: float):
        mx = self.phase_bound(psi1, psi2)
        if mx > PHASE_LIMIT:
            raise NonlinearPhaseError(
                f"nonlinear phase per quarter-step {mx:.3f} > {PHASE_LIMIT} "
                f"at t={t:.6e}; reduce dt")


def step(state: TrajectoryState, config: RamanConfig, grid: Grid1D,
         dt: float, plan: StepPlan | None = None) -> TrajectoryState:
    """One symmetric split-step of duration dt. Returns a new state."""
    if plan is None or plan.dt != dt:
        plan = StepPlan(config, grid, dt)
    psi1 = state.psi1[np.newaxis, :].copy()
    psi2 = state.psi2[np.newaxis, :].copy()
    plan.check_phase(psi1, psi2, state.t)
    plan.advance(psi1, psi2)
    if not (np.all(np.isfinite(psi1)) and np.all(np.isfinite(psi2))):
        raise TrajectoryDiverged(f"non-finite field values at t={state.t + dt:.6e}")
    return TrajectoryState(psi1[0], psi2[0], state.t + dt)


def _evolve_batch(psi1, psi2, t0, config, grid, t_final, dt,
                  on_time=None, times=(), workers: int = 1,
                  check_every: int = 64):
    """Advance a batch from t0 to t_final, firing on_time(t) at requested times.

    Steps are fixed-dt; the step before each requested time (and before
    t_final) is shortened to land exactly. Returns the final time.
    """
    plan = StepPlan(config, grid, dt)
    plan.check_phase(psi1, psi2, t0)
    targets = sorted(set(float(t) for t in times if t0 < t <= t_final)) + [t_final]
    t = t0
    steps_done = 0
    for target in targets:
        while t < target - 1e-15 * max(1.0, abs(target)):
            h = min(dt, target - t)
            if h >= dt * (1.0 - 1e-12):
                plan.advance(psi1, psi2, workers=workers)
                t += dt
            else:
                short = StepPlan(config, grid, h)
                short.advance(psi1, psi2, workers=workers)
                t = target
            steps_done += 1
            if steps_done % check_every == 0:
                if not np.all(np.isfinite(psi1[:, :: max(1, psi1.shape[1] // 64)])):
                    _raise_diverged(psi1, psi2, t)
                plan.check_phase(psi1, psi2, t)
        t = target
        if on_time is not None and (times is not None) and any(
                abs(target - float(tt)) <= 1e-15 * max(1.0, abs(target)) for tt in times):
            on_time(t)
    if not (np.all(np.isfinite(psi1)) and np.all(np.isfinite(psi2))):
        _raise_diverged(psi1, psi2, t)
    return t


def _raise_diverged(psi1, psi2, t):
    bad = ~(np.all(np.isfinite(psi1), axis=1) & np.all(np.isfinite(psi2), axis=1))
    idx = np.flatnonzero(bad)
    raise TrajectoryDiverged(f"non-finite fields in trajectories {idx.tolist()} at t={t:.6e}")


def evolve(state: TrajectoryState, config: RamanConfig, grid: Grid1D,
           t_final: float, dt: float, observers=()):
    """Advance a single trajectory, invoking observers at their requested times.

    observers: sequence of (times, callback) pairs; callback(state) is called
    whenever the evolution lands on one of the times. Returns the final state
    and the relative drift of the Wigner-corrected total number.
    """
    if t_final < state.t:
        raise ValueError("t_final must be >= state.t")
    work = state.copy()
    if t_final == state.t:
        return work, 0.0
    n0 = corrected_number(work, grid)
    psi1 = work.psi1[np.newaxis, :]
    psi2 = work.psi2[np.newaxis, :]
    all_times = sorted({float(t) for times, _ in observers for t in times})

    def fire(t):
        work.t = t
        for times, callback in observers:
            if any(abs(t - float(tt)) <= 1e-15 * max(1.0, abs(t)) for tt in times):
                callback(work)

    t = _evolve_batch(psi1, psi2, work.t, config, grid, t_final, dt,
                      on_time=fire, times=all_times)
    work.t = t
    drift = abs(corrected_number(work, grid) - n0) / max(abs(n0), 1.0)
    return work, drift


_ENSEMBLE_CHUNK = 16  # fixed: results must not depend on worker count or chunking


def run_ensemble(config: RamanConfig, grid: Grid1D, spec: EnsembleSpec,
                 observer_times, observe, t_final: float, dt: float,
                 workers: int = 1, max_failure_fraction: float = 0.01):
    """Evolve n_traj seeded trajectories and collect observer records.

    observe(state, traj_index, time) -> record is called at every time in
    observer_times for every trajectory. Returns (records, failures) where
    records[time_index][traj_index] holds the observation and failures lists
    (traj_index, message) for diverged trajectories. Trajectories are evolved
    in fixed-size chunks; output is ordered by trajectory index and bitwise
    independent of the worker count.
    """
    grid.require_resolves_kick(config.k0)
    observer_times = [float(t) for t in observer_times]
    n_times = len(observer_times)
    records = [[None] * spec.n_traj for _ in range(n_times)]
    failures: list[tuple[int, str]] = []

    for start in range(0, spec.n_traj, _ENSEMBLE_CHUNK):
        idx = list(range(start, min(start + _ENSEMBLE_CHUNK, spec.n_traj)))
        states = [initial_state(grid, config, spec.rng(i)) for i in idx]
        psi1 = np.stack([s.psi1 for s in states])
        psi2 = np.stack([s.psi2 for s in states])

        def fire(t, psi1=psi1, psi2=psi2, idx=idx):
            ti = min(range(n_times), key=lambda q: abs(observer_times[q] - t))
            for row, traj in enumerate(idx):
                st = TrajectoryState(psi1[row], psi2[row], t)
                records[ti][traj] = observe(st, traj, t)

        try:
            _evolve_batch(psi1, psi2, 0.0, config, grid, t_final, dt,
                          on_time=fire, times=observer_times, workers=workers)
        except TrajectoryDiverged as exc:
            # fall back to per-trajectory evolution to isolate failures
            for row, traj in enumerate(idx):
                st = initial_state(grid, config, spec.rng(traj))
                p1 = st.psi1[np.newaxis, :]
                p2 = st.psi2[np.newaxis, :]

                def fire_one(t, p1=p1, p2=p2, traj=traj):
                    ti = min(range(n_times), key=lambda q: abs(observer_times[q] - t))
                    records[ti][traj] = observe(TrajectoryState(p1[0], p2[0], t), traj, t)

                try:
                    _evolve_batch(p1, p2, 0.0, config, grid, t_final, dt,
                                  on_time=fire_one, times=observer_times,
                                  workers=workers)
                except TrajectoryDiverged as exc_one:
                    failures.append((traj, str(exc_one)))
            del exc

    if len(failures) > max_failure_fraction * spec.n_traj:
        raise TrajectoryDiverged(
            f"{len(failures)}/{spec.n_traj} trajectories diverged: {failures[:5]}")
    return records, failures
