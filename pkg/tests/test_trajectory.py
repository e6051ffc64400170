"""Single-step jump rules, the vectorized ensemble engine and determinism.

The parity tests drive the same random streams through the one-molecule
step_once path and through run_ensemble, so the fast engine is checked
against the reference semantics rather than against itself.
"""

import numpy as np
import pytest

from spinjump import (
    ConfigError,
    ContractError,
    Model,
    ModelSpec,
    MoleculeState,
    StepSizeError,
    TrajectoryConfig,
    build_spin_system,
    density_from_preset,
    jump_probabilities,
    molecule_stream,
    run_ensemble,
    step_once,
    unnormalized_mean,
    unnormalized_se,
    zeeman_hamiltonian,
)

SYS = build_spin_system(0)
UD = density_from_preset(SYS, "ud")
T0 = density_from_preset(SYS, "T0")
SINGLET = density_from_preset(SYS, "S")


def make_spec(hamiltonian=None, k_s=1.0):
    return ModelSpec(system=SYS, k_s=k_s, hamiltonian=hamiltonian)


class TestJumpProbabilities:
    def test_ud_splits_evenly(self):
        jp = jump_probabilities(SYS, UD, 1.0, 0.01)
        assert jp.ps == pytest.approx(0.005, abs=1e-15)
        assert jp.pt == pytest.approx(0.005, abs=1e-15)
        assert jp.p0 == pytest.approx(0.99, abs=1e-15)

    def test_pure_singlet_only_recombines(self):
        jp = jump_probabilities(SYS, SINGLET, 1.0, 0.01)
        assert jp.ps == pytest.approx(0.01, abs=1e-15)
        assert jp.pt == 0.0

    def test_pure_triplet_only_projects(self):
        jp = jump_probabilities(SYS, T0, 1.0, 0.01)
        assert jp.ps == 0.0
        assert jp.pt == pytest.approx(0.01, abs=1e-15)

    def test_probabilities_sum_to_one(self):
        for preset in ("S", "T0", "ud", "mixed"):
            rho = density_from_preset(SYS, preset)
            jp = jump_probabilities(SYS, rho, 2.0, 0.005)
            assert jp.p0 + jp.ps + jp.pt == pytest.approx(1.0, abs=1e-15)
            assert jp.ps + jp.pt == pytest.approx(0.01, abs=1e-15)

    def test_step_size_guard(self):
        with pytest.raises(StepSizeError):
            jump_probabilities(SYS, UD, 1.0, 0.02)

    def test_trace_guard(self):
        with pytest.raises(ContractError):
            jump_probabilities(SYS, 0.9 * UD, 1.0, 0.01)


class TestStepOnce:
    def test_projection_branch_lands_on_t0(self):
        spec = make_spec()
        m = MoleculeState.unrecombined(UD)
        out = step_once(m, spec, 0.01, draw=0.007)
        assert not out.recombined
        assert np.abs(out.state - T0).max() < 1e-14

    def test_recombination_branch_timestamps_step_end(self):
        spec = make_spec()
        m = MoleculeState.unrecombined(UD)
        out = step_once(m, spec, 0.01, draw=0.002, t_now=0.30)
        assert out.recombined
        assert out.recombined_at == pytest.approx(0.31, abs=1e-15)
        assert out.state is None

    def test_survive_branch_keeps_state_bitwise(self):
        spec = make_spec()
        m = MoleculeState.unrecombined(UD)
        out = step_once(m, spec, 0.01, draw=0.99)
        assert np.array_equal(out.state, UD)

    def test_threshold_draws_fall_in_later_branch(self):
        # draw == ps goes to projection, draw == ps + pt survives
        spec = make_spec()
        m = MoleculeState.unrecombined(UD)
        projected = step_once(m, spec, 0.01, draw=0.005)
        assert not projected.recombined
        assert np.abs(projected.state - T0).max() < 1e-14
        survived = step_once(m, spec, 0.01, draw=0.01)
        assert np.array_equal(survived.state, UD)

    def test_tombstone_passes_through(self):
        spec = make_spec()
        m = MoleculeState.make_recombined(0.5)
        assert step_once(m, spec, 0.01, draw=0.0) is m

    def test_triplet_molecule_never_changes(self):
        spec = make_spec()
        m = MoleculeState.unrecombined(T0)
        for draw in (0.0005, 0.0099):  # projection branch re-lands on T0
            out = step_once(m, spec, 0.01, draw=draw)
            assert not out.recombined
            assert np.abs(out.state - T0).max() < 1e-15
        for draw in (0.5, 0.999):  # survive branch is a no-op without a field
            out = step_once(m, spec, 0.01, draw=draw)
            assert not out.recombined
            assert np.array_equal(out.state, T0)

    def test_drift_applies_only_in_survive_branch(self):
        h = zeeman_hamiltonian(SYS, 0.8, -0.4)
        spec = make_spec(hamiltonian=h)
        dt = 0.01
        # zeeman is diagonal, so the exact propagator is a phase ramp
        u = np.diag(np.exp(-1j * np.diag(h) * dt))
        m = MoleculeState.unrecombined(T0)
        survived = step_once(m, spec, dt, draw=0.99)
        assert np.abs(survived.state - u @ T0 @ u.conj().T).max() < 1e-14
        # the projection branch uses the undrifted state
        projected = step_once(m, spec, dt, draw=0.005)
        assert np.abs(projected.state - T0).max() < 1e-15


class TestEnsemble:
    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrajectoryConfig(n_traj=0, dt=1e-3, t_max=1.0, seed=1)
        with pytest.raises(ConfigError):
            TrajectoryConfig(n_traj=10, dt=-1e-3, t_max=1.0, seed=1)
        with pytest.raises(ConfigError):
            TrajectoryConfig(n_traj=10, dt=2.0, t_max=1.0, seed=1)
        with pytest.raises(ConfigError):
            TrajectoryConfig(n_traj=10, dt=1e-3, t_max=1.0, seed=-1)
        with pytest.raises(ConfigError):
            TrajectoryConfig(n_traj=10, dt=1e-3, t_max=1.0, seed=1, record_stride=0)

    def test_step_size_guard(self):
        cfg = TrajectoryConfig(n_traj=10, dt=0.02, t_max=1.0, seed=1)
        with pytest.raises(StepSizeError):
            run_ensemble(UD, make_spec(), cfg)

    def test_initial_record_is_exact(self):
        cfg = TrajectoryConfig(n_traj=50, dt=0.01, t_max=0.1, seed=3, record_stride=5)
        est = run_ensemble(UD, make_spec(), cfg)
        assert est.times[0] == 0.0
        assert est.survival_frac[0] == 1.0
        assert est.w0_frac[0] == 1.0
        assert est.survival_se[0] == 0.0
        assert np.array_equal(est.rho_nr_est[0], UD)
        assert np.array_equal(unnormalized_mean(est, 0), UD)
        assert np.abs(unnormalized_se(est, 0)).max() == 0.0

    def test_survivors_hold_unit_trace_and_counts_decrease(self):
        cfg = TrajectoryConfig(n_traj=400, dt=0.005, t_max=1.0, seed=7, record_stride=40)
        est = run_ensemble(UD, make_spec(), cfg)
        assert np.all(np.diff(est.n_unrec) <= 0)
        for r in range(len(est.times)):
            assert abs(np.trace(est.rho_nr_est[r]).real - 1.0) < 1e-9
            # unnormalized mean carries the survival fraction as its trace
            tr = np.trace(unnormalized_mean(est, r)).real
            assert abs(tr - est.survival_frac[r]) < 1e-12

    def test_deterministic_rerun(self):
        cfg = TrajectoryConfig(n_traj=600, dt=0.01, t_max=0.5, seed=11, record_stride=10)
        a = run_ensemble(UD, make_spec(), cfg)
        b = run_ensemble(UD, make_spec(), cfg)
        assert np.array_equal(a.n_unrec, b.n_unrec)
        assert np.array_equal(a.p_singlet_nr, b.p_singlet_nr, equal_nan=True)
        for r in range(len(a.times)):
            assert np.array_equal(a.rho_all_mean[r], b.rho_all_mean[r])

    def test_parallel_matches_serial_bitwise(self):
        # 2500 molecules span three blocks of the fixed decomposition
        cfg = TrajectoryConfig(n_traj=2500, dt=0.01, t_max=0.3, seed=5, record_stride=10)
        serial = run_ensemble(UD, make_spec(), cfg, workers=1)
        parallel = run_ensemble(UD, make_spec(), cfg, workers=2)
        assert np.array_equal(serial.n_unrec, parallel.n_unrec)
        assert np.array_equal(serial.survival_frac, parallel.survival_frac)
        assert np.array_equal(serial.p_singlet_nr, parallel.p_singlet_nr, equal_nan=True)
        for r in range(len(serial.times)):
            assert np.array_equal(serial.rho_all_mean[r], parallel.rho_all_mean[r])
            assert np.array_equal(serial.rho_all_sq_mean[r], parallel.rho_all_sq_mean[r])

    def test_seed_actually_matters(self):
        spec = make_spec()
        cfg = lambda s: TrajectoryConfig(n_traj=2000, dt=0.01, t_max=0.5, seed=s, record_stride=50)
        a = run_ensemble(UD, spec, cfg(1))
        b = run_ensemble(UD, spec, cfg(2))
        assert not np.array_equal(a.n_unrec, b.n_unrec)

    @pytest.mark.parametrize("hamiltonian", [None, "zeeman"])
    def test_engine_agrees_with_step_once(self, hamiltonian):
        h = zeeman_hamiltonian(SYS, 0.6, -1.1) if hamiltonian else None
        spec = make_spec(hamiltonian=h)
        n_traj, dt, n_steps, stride, seed = 6, 0.01, 50, 10, 20240101
        cfg = TrajectoryConfig(
            n_traj=n_traj, dt=dt, t_max=n_steps * dt, seed=seed, record_stride=stride
        )
        est = run_ensemble(UD, spec, cfg)

        # reference: drive each molecule through step_once on the same stream
        molecules = [MoleculeState.unrecombined(UD.copy()) for _ in range(n_traj)]
        draws = [molecule_stream(seed, i).random(n_steps) for i in range(n_traj)]
        rec = cfg.record_steps()

        def snapshot(r):
            alive = [m for m in molecules if not m.recombined]
            assert len(alive) == est.n_unrec[r]
            total = sum(m.state for m in alive) if alive else np.zeros_like(UD)
            assert np.abs(total / n_traj - unnormalized_mean(est, r)).max() < 1e-12
            if alive:
                mean = total / len(alive)
                assert np.abs(mean - est.rho_nr_est[r]).max() < 1e-12

        r = 0
        if rec[r] == 0:
            snapshot(r)
            r += 1
        for step in range(1, n_steps + 1):
            for i in range(n_traj):
                molecules[i] = step_once(
                    molecules[i], spec, dt, draws[i][step - 1], t_now=(step - 1) * dt
                )
            if r < len(rec) and step == rec[r]:
                snapshot(r)
                r += 1

    def test_survival_tracks_exponential(self):
        # 1 - pS - pT = 1 - k dt exactly for unit-trace states, so the
        # never-jumped fraction follows (1 - k dt)^n for every preset
        cfg = TrajectoryConfig(n_traj=20000, dt=1e-3, t_max=0.5, seed=42, record_stride=500)
        est = run_ensemble(UD, make_spec(), cfg)
        p = 0.5 * (1 + np.exp(-0.5))
        sigma = np.sqrt(p * (1 - p) / cfg.n_traj)
        assert abs(est.survival_frac[-1] - p) < 4 * sigma + 1e-4

    def test_singlet_fraction_follows_normalized_flow(self):
        cfg = TrajectoryConfig(n_traj=20000, dt=1e-3, t_max=0.5, seed=42, record_stride=500)
        est = run_ensemble(UD, make_spec(), cfg)
        e = np.exp(-0.5)
        assert abs(est.p_singlet_nr[-1] - e / (1 + e)) < 4 * est.p_singlet_nr_se[-1] + 1e-4

    def test_never_projected_fraction_is_exponential(self):
        cfg = TrajectoryConfig(n_traj=20000, dt=1e-3, t_max=1.0, seed=42, record_stride=1000)
        est = run_ensemble(UD, make_spec(), cfg)
        w0_abs = est.w0_frac[-1] * est.survival_frac[-1]
        p = np.exp(-1.0)
        sigma = np.sqrt(p * (1 - p) / cfg.n_traj)
        assert abs(w0_abs - p) < 4 * sigma + 2e-4

    def test_halving_dt_stays_within_one_standard_error(self):
        spec = make_spec()
        coarse = run_ensemble(
            UD, spec, TrajectoryConfig(n_traj=20000, dt=1e-3, t_max=1.0, seed=42, record_stride=1000)
        )
        fine = run_ensemble(
            UD, spec, TrajectoryConfig(n_traj=20000, dt=5e-4, t_max=1.0, seed=42, record_stride=2000)
        )
        diff = abs(coarse.survival_frac[-1] - fine.survival_frac[-1])
        se = np.hypot(coarse.survival_se[-1], fine.survival_se[-1])
        assert diff < se

    def test_all_recombined_tail(self):
        # a pure singlet ensemble dies out almost surely by k t = 20
        cfg = TrajectoryConfig(n_traj=64, dt=0.01, t_max=20.0, seed=9, record_stride=2000)
        est = run_ensemble(SINGLET, make_spec(), cfg)
        assert est.n_unrec[-1] == 0
        assert est.survival_frac[-1] == 0.0
        assert np.isnan(est.w0_frac[-1])
        assert np.isnan(est.p_singlet_nr[-1])
        assert est.rho_nr_est[-1] is None
        assert np.abs(unnormalized_mean(est, len(est.times) - 1)).max() == 0.0

    def test_zeeman_ensemble_survival_unchanged(self):
        # the drift commutes with nothing in the state, but probabilities
        # come from the undrifted state, so survival statistics match the
        # field-free run exactly for this diagonal-preserving case
        h = zeeman_hamiltonian(SYS, 0.5, 0.5)
        cfg = TrajectoryConfig(n_traj=500, dt=0.01, t_max=0.3, seed=13, record_stride=30)
        with_field = run_ensemble(UD, make_spec(hamiltonian=h), cfg)
        without = run_ensemble(UD, make_spec(), cfg)
        assert np.array_equal(with_field.n_unrec, without.n_unrec)


class TestMoleculeStream:
    def test_streams_are_reproducible_and_distinct(self):
        a = molecule_stream(42, 0).random(5)
        b = molecule_stream(42, 0).random(5)
        c = molecule_stream(42, 1).random(5)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
