import math

import numpy as np
import pytest
from scipy.constants import hbar as HBAR

from kerrbeam import snapshots, twa


M_RB = 1.44e-25


def flat_state(grid, rho1=0.0, rho2=0.0):
    return twa.TrajectoryState(
        np.full(grid.n_points, math.sqrt(rho1), dtype=np.complex128),
        np.full(grid.n_points, math.sqrt(rho2), dtype=np.complex128), 0.0)


class TestGrid:
    def test_spacing_and_spectrum(self):
        g = twa.Grid1D(-1.0, 3.0, 8)
        assert g.dz == pytest.approx(0.5)
        assert g.z[0] == -1.0 and g.z[-1] == pytest.approx(2.5)
        assert g.k_max == pytest.approx(np.pi / 0.5)
        assert g.k[1] == pytest.approx(2 * np.pi / 4.0)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            twa.Grid1D(0.0, 1.0, 100)
        with pytest.raises(ValueError):
            twa.Grid1D(1.0, 1.0, 64)

    def test_kick_resolution_guard(self):
        g = twa.Grid1D(-20e-6, 20e-6, 256)  # k_max ~ 2.0e7
        with pytest.raises(twa.GridResolutionError):
            g.require_resolves_kick(2e7)
        g.require_resolves_kick(2e6)


class TestInitialState:
    def test_ground_state_number(self):
        g = twa.Grid1D(-20e-6, 20e-6, 512)
        cfg = twa.RamanConfig.rb_default(n_bec=3e4, k0=1e6)
        phi = twa.ground_state(g, cfg)
        assert np.sum(np.abs(phi) ** 2) * g.dz == pytest.approx(3e4, rel=1e-10)

    def test_ground_state_needs_resolution(self):
        g = twa.Grid1D(-200e-6, 200e-6, 256)  # dz ~ 1.6 um vs width ~ 3 um
        cfg = twa.RamanConfig.rb_default()
        with pytest.raises(twa.GridResolutionError):
            twa.ground_state(g, cfg)

    def test_vacuum_noise_statistics(self):
        g = twa.Grid1D(0.0, 1e-4, 4096)
        rng = np.random.default_rng(11)
        draws = np.concatenate([twa.vacuum_noise(g, rng) for _ in range(40)])
        target = 1.0 / (2.0 * g.dz)
        assert np.mean(np.abs(draws) ** 2) == pytest.approx(target, rel=0.02)
        assert np.var(draws.real) == pytest.approx(target / 2, rel=0.03)
        assert np.var(draws.imag) == pytest.approx(target / 2, rel=0.03)

    def test_corrected_number_matches_n_bec(self):
        g = twa.Grid1D(-20e-6, 20e-6, 512)
        cfg = twa.RamanConfig.rb_default(n_bec=5e4, k0=1e6)
        vals = [twa.corrected_number(twa.initial_state(g, cfg, np.random.default_rng(s)), g)
                for s in range(30)]
        # noise-averaged corrected number is unbiased; single draws scatter
        assert np.mean(vals) == pytest.approx(5e4, rel=0.01)

    def test_mean_field_without_rng(self):
        g = twa.Grid1D(-20e-6, 20e-6, 512)
        cfg = twa.RamanConfig.rb_default(n_bec=5e4, k0=1e6)
        st = twa.initial_state(g, cfg, None)
        assert np.all(st.psi2 == 0.0)


class TestSolverPhysics:
    def test_free_dispersion_matches_spectral_solution(self):
        g = twa.Grid1D(-50e-6, 50e-6, 1024)
        cfg = twa.RamanConfig(m=M_RB, omega_trap=0.0, omega_rabi=0.0, k0=0.0, n_bec=1.0)
        w, kc = 4e-6, 2e6
        z = g.z
        psi = (1 / (math.pi * w ** 2)) ** 0.25 * np.exp(-z ** 2 / (2 * w ** 2) + 1j * kc * z)
        st = twa.TrajectoryState(psi.astype(np.complex128),
                                 np.zeros(g.n_points, dtype=np.complex128), 0.0)
        t = 2e-3
        exact = np.fft.ifft(np.fft.fft(psi) * np.exp(-1j * HBAR * g.k ** 2 * t / (2 * M_RB)))
        out, drift = twa.evolve(st, cfg, g, t, dt=1e-6)
        assert np.max(np.abs(out.psi1 - exact)) < 1e-10
        assert drift < 1e-12

    def test_resonant_rabi_closed_form(self):
        g = twa.Grid1D(-20e-6, 20e-6, 256)
        k0 = 2 * np.pi * 8 / (40e-6)
        om, t = 50.0, 0.013
        cfg = twa.RamanConfig(m=M_RB, omega_trap=0.0, omega_rabi=om, k0=k0,
                              n_bec=1.0, delta=HBAR * k0 ** 2 / (2 * M_RB))
        out, _ = twa.evolve(flat_state(g, rho1=3.0), cfg, g, t, dt=2e-6)
        p2 = (np.sum(np.abs(out.psi2) ** 2)
              / np.sum(np.abs(out.psi1) ** 2 + np.abs(out.psi2) ** 2))
        assert abs(p2 - math.sin(om * t) ** 2) < 1e-6

    def test_detuned_rabi_closed_form(self):
        g = twa.Grid1D(-20e-6, 20e-6, 256)
        k0 = 2 * np.pi * 8 / (40e-6)
        om, extra, t = 50.0, 120.0, 0.013
        cfg = twa.RamanConfig(m=M_RB, omega_trap=0.0, omega_rabi=om, k0=k0,
                              n_bec=1.0, delta=HBAR * k0 ** 2 / (2 * M_RB) + extra)
        out, _ = twa.evolve(flat_state(g, rho1=3.0), cfg, g, t, dt=2e-6)
        p2 = (np.sum(np.abs(out.psi2) ** 2)
              / np.sum(np.abs(out.psi1) ** 2 + np.abs(out.psi2) ** 2))
        omega_gen = math.sqrt(om ** 2 + (extra / 2) ** 2)
        exact = (om / omega_gen) ** 2 * math.sin(omega_gen * t) ** 2
        assert abs(p2 - exact) < 1e-6

    def test_uniform_nonlinear_phase(self):
        g = twa.Grid1D(-20e-6, 20e-6, 256)
        u22, rho, t = 1e-40, 5.0, 1e-3
        cfg = twa.RamanConfig(m=M_RB, omega_trap=0.0, omega_rabi=0.0, k0=0.0,
                              n_bec=1.0, u22=u22, delta=0.0)
        out, _ = twa.evolve(flat_state(g, rho2=rho), cfg, g, t, dt=1e-6)
        # self-interaction sees density with the -1/dz vacuum compensation
        expected = -(u22 / HBAR) * (rho - 1.0 / g.dz) * t
        got = np.angle(out.psi2[10])
        wrapped = (expected + np.pi) % (2 * np.pi) - np.pi
        assert got == pytest.approx(wrapped, abs=1e-10)

    def test_number_conservation_with_noise(self):
        g = twa.Grid1D(-20e-6, 20e-6, 512)
        cfg = twa.RamanConfig.rb_default(n_bec=5e4, k0=2 * np.pi * 64 / (40e-6))
        st = twa.initial_state(g, cfg, np.random.default_rng(7))
        t = 2e-3
        _, drift = twa.evolve(st, cfg, g, t, dt=5e-7)
        assert drift / (t * 1e3) < 1e-6  # relative drift per ms

    def test_strang_second_order(self):
        g = twa.Grid1D(-20e-6, 20e-6, 512)
        cfg = twa.RamanConfig.rb_default(n_bec=5e4, k0=2 * np.pi * 64 / (40e-6))
        st = twa.initial_state(g, cfg, None)
        t = 1e-3
        ref, _ = twa.evolve(st, cfg, g, t, dt=6.25e-8)
        errs = []
        for dt in (1e-6, 5e-7):
            out, _ = twa.evolve(st, cfg, g, t, dt=dt)
            errs.append(np.sqrt(np.sum(np.abs(out.psi1 - ref.psi1) ** 2
                                       + np.abs(out.psi2 - ref.psi2) ** 2) * g.dz))
        assert errs[0] / errs[1] == pytest.approx(4.0, abs=0.5)

    def test_absorber_removes_atoms(self):
        g = twa.Grid1D(-20e-6, 20e-6, 256)
        cfg = twa.RamanConfig(m=M_RB, omega_trap=0.0, omega_rabi=0.0, k0=0.0,
                              n_bec=1.0, delta=0.0,
                              absorber_width=10e-6, absorber_strength=2e3)
        st = flat_state(g, rho2=4.0)
        n0 = np.sum(np.abs(st.psi2) ** 2) * g.dz
        out, _ = twa.evolve(st, cfg, g, 2e-3, dt=1e-6)
        n_final = np.sum(np.abs(out.psi2) ** 2) * g.dz
        # only the trailing quarter of the box is damped
        assert 0.5 * n0 < n_final < 0.9 * n0


class TestGuards:
    def test_dt_guard(self):
        g = twa.Grid1D(-20e-6, 20e-6, 2048)
        cfg = twa.RamanConfig.rb_default(k0=1e6)
        with pytest.raises(ValueError, match="dt"):
            twa.StepPlan(cfg, g, 1e-5)

    def test_nonlinear_phase_guard(self):
        g = twa.Grid1D(-20e-6, 20e-6, 256)
        cfg = twa.RamanConfig(m=M_RB, omega_trap=0.0, omega_rabi=0.0, k0=0.0,
                              n_bec=1.0, u22=1e-30, delta=0.0)
        st = flat_state(g, rho2=1e12)
        with pytest.raises(twa.NonlinearPhaseError):
            twa.evolve(st, cfg, g, 1e-4, dt=1e-6)


class TestObserversAndEnsembles:
    def test_observer_fires_between_steps(self):
        g = twa.Grid1D(-20e-6, 20e-6, 256)
        cfg = twa.RamanConfig(m=M_RB, omega_trap=0.0, omega_rabi=10.0,
                              k0=2 * np.pi * 8 / (40e-6), n_bec=1.0)
        seen = []
        times = [3.3e-6, 7.7e-6]  # not multiples of dt
        twa.evolve(flat_state(g, rho1=1.0), cfg, g, 1e-5, dt=2e-6,
                   observers=[(times, lambda s: seen.append(s.t))])
        assert seen == pytest.approx(times)

    def test_shortened_step_consistency(self):
        # observing mid-run must not change the final state
        g = twa.Grid1D(-20e-6, 20e-6, 256)
        cfg = twa.RamanConfig.rb_default(n_bec=1e4, k0=2 * np.pi * 8 / (40e-6))
        st = twa.initial_state(g, cfg, np.random.default_rng(3))
        a, _ = twa.evolve(st, cfg, g, 1e-4, dt=2e-6)
        b, _ = twa.evolve(st, cfg, g, 1e-4, dt=2e-6,
                          observers=[([4e-6], lambda s: None)])
        np.testing.assert_allclose(b.psi1, a.psi1, rtol=1e-12)

    def test_seeding_is_counter_based(self):
        spec = twa.EnsembleSpec(n_traj=4, master_seed=123)
        a = spec.rng(2).standard_normal(5)
        b = spec.rng(2).standard_normal(5)
        c = spec.rng(3).standard_normal(5)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_ensemble_bitwise_deterministic(self):
        g = twa.Grid1D(-20e-6, 20e-6, 256)
        cfg = twa.RamanConfig.rb_default(n_bec=1e4, k0=2 * np.pi * 8 / (40e-6))
        spec = twa.EnsembleSpec(n_traj=3, master_seed=99)

        def observe(state, traj, t):
            return state.psi2.copy()

        r1, f1 = twa.run_ensemble(cfg, g, spec, [5e-5, 1e-4], observe, 1e-4, 2e-6)
        r2, f2 = twa.run_ensemble(cfg, g, spec, [5e-5, 1e-4], observe, 1e-4, 2e-6)
        assert f1 == f2 == []
        for ti in range(2):
            for traj in range(3):
                np.testing.assert_array_equal(r1[ti][traj], r2[ti][traj])

    def test_ensemble_chunking_matches_single_trajectory(self):
        g = twa.Grid1D(-20e-6, 20e-6, 256)
        cfg = twa.RamanConfig.rb_default(n_bec=1e4, k0=2 * np.pi * 8 / (40e-6))
        spec = twa.EnsembleSpec(n_traj=3, master_seed=42)
        records, _ = twa.run_ensemble(cfg, g, spec, [1e-4],
                                      lambda s, i, t: s.psi2.copy(), 1e-4, 2e-6)
        st = twa.initial_state(g, cfg, spec.rng(1))
        solo, _ = twa.evolve(st, cfg, g, 1e-4, dt=2e-6)
        np.testing.assert_array_equal(records[0][1], solo.psi2)


class TestSnapshots:
    def test_round_trip(self, tmp_path):
        g = twa.Grid1D(-20e-6, 20e-6, 256)
        cfg = twa.RamanConfig.rb_default(n_bec=1e4, k0=2 * np.pi * 8 / (40e-6))
        st = twa.initial_state(g, cfg, np.random.default_rng(5))
        st.t = 1.25e-3
        path = tmp_path / snapshots.snapshot_filename(7, st.t)
        assert path.name == "snap_7_1.25.fld"
        snapshots.write_snapshot(path, st, g, "abc123")
        back, grid_back, digest = snapshots.read_snapshot(path)
        np.testing.assert_array_equal(back.psi1, st.psi1)
        np.testing.assert_array_equal(back.psi2, st.psi2)
        assert back.t == st.t
        assert grid_back == g
        assert digest == "abc123"

    def test_rejects_corrupt_file(self, tmp_path):
        p = tmp_path / "bad.fld"
        p.write_bytes(b"not a snapshot\n1234")
        with pytest.raises(ValueError):
            snapshots.read_snapshot(p)
