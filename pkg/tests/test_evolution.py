import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qvts import evolution as ev
from qvts import phon
from qvts.features import FeatureTrack
from qvts.phon import BlochVector, DensityMatrix, PhonError

from conftest import densities, hermitians, phon_states


def constant_track(n=40, sal=1.0, noise=0.0, onset=0.0, hop=1024, sr=44100):
    t = (np.arange(n) * hop + 1024) / sr
    ones = np.ones(n)
    return FeatureTrack(t, 440 * ones, sal * ones, 220 * ones, 0.5 * sal * ones,
                        noise * ones, noise * ones, onset * ones, hop=hop, sample_rate=sr)


class TestPotential:
    def test_salience_maps_to_z(self):
        assert ev.build_potential(1, 0, 0).as_array() == pytest.approx([0, 0, 1])

    def test_noisiness_maps_to_x(self):
        assert ev.build_potential(0, 1, 0).as_array() == pytest.approx([1, 0, 0])

    def test_onset_maps_to_y(self):
        assert ev.build_potential(0, 0, 2).as_array() == pytest.approx([0, 1, 0])

    def test_normalized_mix(self):
        n = ev.build_potential(0.6, 0.8, 0)
        assert n.as_array() == pytest.approx([0.8, 0, 0.6])
        assert n.norm == pytest.approx(1.0)

    def test_zero_frame_fallbacks(self):
        assert ev.build_potential(0, 0, 0).as_array() == pytest.approx([0, 0, 1])
        prev = BlochVector(1, 0, 0)
        assert ev.build_potential(0, 0, 0, previous=prev) is prev

    def test_negative_feature_rejected(self):
        with pytest.raises(PhonError):
            ev.build_potential(-0.1, 0, 0)


class TestHamiltonian:
    def test_single_frame_sigma_z(self):
        (h,) = ev.segment_hamiltonian([BlochVector(0, 0, 1)], omega=2, k=0)
        assert np.allclose(h, phon.SIGMA_Z)

    def test_damping_prefactor(self):
        hs = ev.segment_hamiltonian([BlochVector(0, 0, 1)] * 11, omega=1, k=0.1)
        assert np.max(np.abs(hs[10])) / np.max(np.abs(hs[0])) == pytest.approx(0.36787944117144233, abs=1e-12)

    def test_norm_decays_monotonically(self):
        hs = ev.segment_hamiltonian([BlochVector(0.3, 0.4, 0.866)] * 10, k=0.2)
        norms = [np.linalg.norm(h) for h in hs]
        assert all(a > b for a, b in zip(norms, norms[1:]))

    def test_undamped_constant(self):
        hs = ev.segment_hamiltonian([BlochVector(1, 0, 0)] * 5, k=0)
        assert all(np.allclose(h, hs[0]) for h in hs)

    def test_empty_rejected(self):
        with pytest.raises(PhonError):
            ev.segment_hamiltonian([])

    def test_segment_type(self):
        seg = ev.HamiltonianSegment(0.5 * phon.SIGMA_Z, k=0.0, frames=4, dt=0.25)
        assert np.allclose(seg.propagator(), np.diag([np.exp(-0.5j), np.exp(0.5j)]))
        with pytest.raises(PhonError):
            ev.HamiltonianSegment(np.array([[0, 1], [0, 0]]))


class TestPropagator:
    def test_sigma_z_phases(self):
        # omega = 1, t = 2: diag(e^{-i}, e^{+i})
        u = ev.propagator([0.5 * phon.SIGMA_Z], 2.0)
        assert np.allclose(u, [[0.5403023058681398 - 0.8414709848078965j, 0],
                               [0, 0.5403023058681398 + 0.8414709848078965j]], atol=1e-12)

    def test_tilted_field_against_matrix_exponential(self):
        # oracle from scipy.linalg.expm for n = (1, 2, 2)/3, omega = 1.5, t = 0.7
        n = np.array([1, 2, 2]) / 3
        h = 0.75 * (n[0] * phon.SIGMA_X + n[1] * phon.SIGMA_Y + n[2] * phon.SIGMA_Z)
        expected = [[0.865323941622941 - 0.334142003115865j, -0.334142003115865 - 0.167071001557933j],
                    [0.334142003115865 - 0.167071001557933j, 0.865323941622941 + 0.334142003115865j]]
        assert np.allclose(ev.propagator([h], 0.7), expected, atol=1e-12)

    def test_identity_part_is_global_phase(self):
        u = ev.propagator([0.3 * phon.I2 + 0.2 * phon.SIGMA_X], 1.0)
        v = ev.propagator([0.2 * phon.SIGMA_X], 1.0)
        assert np.allclose(u, np.exp(-0.3j) * v)

    def test_empty_is_identity(self):
        assert np.allclose(ev.propagator([], 1.0), phon.I2)

    def test_non_hermitian_rejected(self):
        with pytest.raises(PhonError):
            ev.propagator([np.array([[0, 1], [0, 0]])], 1.0)

    @settings(max_examples=200, deadline=None)
    @given(hermitians(), st.lists(st.floats(0.0, 2.0), min_size=1, max_size=12), st.floats(0.01, 3.0))
    def test_commuting_family_unitary_and_exact(self, h, gains, dt):
        hs = [g * h for g in gains]
        u = ev.propagator(hs, dt)
        assert phon.is_unitary(u)
        v = ev.propagator([sum(gains) * h], dt)
        assert np.allclose(u, v, atol=1e-9)


class TestEvolve:
    def test_identity(self):
        assert ev.evolve_pure(phon.basis("u"), phon.I2).same_ray(phon.basis("u"))

    def test_z_quarter_turn_maps_r_to_f(self):
        u = ev.expm_hermitian(np.pi / 4 * phon.SIGMA_Z)
        out = ev.evolve_pure(phon.basis("r"), u)
        assert abs(phon.basis("f").overlap(out)) == pytest.approx(1.0, abs=1e-12)

    def test_x_half_turn_flips_density(self):
        rho = DensityMatrix.from_state(phon.basis("u"))
        out = ev.evolve_density(rho, ev.expm_hermitian(np.pi / 2 * phon.SIGMA_X))
        assert np.allclose(out.m, np.diag([0, 1]), atol=1e-12)

    def test_chaotic_state_invariant(self):
        rho = DensityMatrix(0.5 * phon.I2)
        u = ev.expm_hermitian(0.3 * phon.SIGMA_X + 0.9 * phon.SIGMA_Y)
        assert np.allclose(ev.evolve_density(rho, u).m, 0.5 * phon.I2)

    def test_density_matches_ket_evolution(self):
        psi = phon.PhonState.from_amplitudes(0.3, 0.7 + 0.2j)
        u = ev.expm_hermitian(0.4 * phon.SIGMA_X - 0.8 * phon.SIGMA_Z)
        via_ket = DensityMatrix.from_state(ev.evolve_pure(psi, u)).m
        via_rho = ev.evolve_density(DensityMatrix.from_state(psi), u).m
        assert np.allclose(via_ket, via_rho)

    def test_non_unitary_rejected(self):
        with pytest.raises(PhonError):
            ev.evolve_pure(phon.basis("u"), 2 * phon.I2)
        with pytest.raises(PhonError):
            ev.evolve_density(DensityMatrix(0.5 * phon.I2), 2 * phon.I2)

    @settings(max_examples=100, deadline=None)
    @given(densities(), hermitians())
    def test_purity_and_spectrum_preserved(self, rho, h):
        out = ev.evolve_density(rho, ev.expm_hermitian(h))
        assert phon.purity(out) == pytest.approx(phon.purity(rho), abs=1e-9)
        assert np.allclose(np.linalg.eigvalsh(out.m), np.linalg.eigvalsh(rho.m), atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(phon_states(), hermitians())
    def test_norm_preserved(self, psi, h):
        out = ev.evolve_pure(psi, ev.expm_hermitian(h))
        assert np.linalg.norm(out.vec) == pytest.approx(1.0, abs=1e-12)


class TestDensityMeasurement:
    def test_probabilities(self):
        mu, md = phon.axis_projectors("z")
        assert ev.measure_density(DensityMatrix(0.5 * phon.I2), mu) == pytest.approx(0.5)
        assert ev.measure_density(DensityMatrix(np.diag([1 / 3, 2 / 3])), mu) == pytest.approx(1 / 3)
        f = DensityMatrix.from_state(phon.basis("f"))
        assert ev.measure_density(f, phon.axis_projectors("y")[0]) == pytest.approx(1.0)

    def test_non_projector_rejected(self):
        with pytest.raises(PhonError):
            ev.measure_density(DensityMatrix(0.5 * phon.I2), phon.SIGMA_Z)

    def test_collapse_outcome_u(self):
        rho = DensityMatrix(np.diag([1 / 3, 2 / 3]))
        rng = np.random.default_rng(0)
        for _ in range(50):
            out, post = ev.collapse_density(rho, phon.axis_projectors("z"), rng)
            expected = np.diag([1, 0]) if out == 1 else np.diag([0, 1])
            assert np.allclose(post.m, expected)

    def test_born_frequency_mixture(self):
        rho = DensityMatrix(np.diag([1 / 3, 2 / 3]))
        rng = np.random.default_rng(11)
        pair = phon.axis_projectors("z")
        downs = sum(ev.collapse_density(rho, pair, rng)[0] == -1 for _ in range(10_000))
        assert downs / 10_000 == pytest.approx(2 / 3, abs=0.015)

    def test_pure_collapse_deterministic(self):
        rho = DensityMatrix.from_state(phon.basis("u"))
        out, post = ev.collapse_density(rho, phon.axis_projectors("z"), np.random.default_rng(0))
        assert out == 1 and np.allclose(post.m, rho.m)

    def test_collapse_on_mixed_gives_pure(self):
        rho = DensityMatrix(0.5 * phon.I2)
        _, post = ev.collapse_density(rho, phon.axis_projectors("x"), np.random.default_rng(3))
        assert phon.purity(post) == pytest.approx(1.0)


class TestMixtureAmplitudes:
    def test_chaotic(self):
        a = ev.mixture_amplitudes(DensityMatrix(0.5 * phon.I2))
        assert (a["amp_noise"], a["amp_up"], a["amp_down"]) == pytest.approx((0.5, 0, 0))

    def test_pure_up(self):
        a = ev.mixture_amplitudes(DensityMatrix.from_state(phon.basis("u")))
        assert (a["amp_up"], a["amp_down"], a["amp_noise"]) == pytest.approx((1, 0, 0))

    def test_one_third_mixture(self):
        a = ev.mixture_amplitudes(ev.mixed_initial(1 / 3))
        assert (a["amp_noise"], a["amp_up"], a["amp_down"]) == pytest.approx((1 / 3, 0, 1 / 3))

    def test_pulse_from_y_axis(self):
        assert ev.mixture_amplitudes(DensityMatrix.from_state(phon.basis("s")))["amp_pulse"] == pytest.approx(1.0)

    @settings(max_examples=300, deadline=None)
    @given(densities())
    def test_conservation(self, rho):
        a = ev.mixture_amplitudes(rho)
        assert a["amp_up"] + a["amp_down"] + 2 * a["amp_noise"] == pytest.approx(1.0, abs=1e-9)
        assert a["amp_up"] * a["amp_down"] == pytest.approx(0.0, abs=1e-12)
        assert all(0.0 <= v <= 1.0 for v in a.values())

    def test_mixed_initial_range(self):
        with pytest.raises(PhonError):
            ev.mixed_initial(1.5)


class TestOrientation:
    def test_pitchiness_values(self):
        assert ev.pitchiness(phon.basis("u")) == pytest.approx(1.0)
        assert ev.pitchiness(phon.basis("r")) == pytest.approx(0.0)
        th = 0.9
        psi = phon.PhonState(np.array([np.cos(th / 2), np.sin(th / 2)], dtype=complex))
        assert ev.pitchiness(psi) == pytest.approx(abs(np.cos(th)))

    def test_noisiness_and_transientness(self):
        assert ev.noisiness(phon.basis("l")) == pytest.approx(1.0)
        assert ev.transientness(phon.basis("f")) == pytest.approx(1.0)
        assert ev.transientness(phon.basis("u")) == pytest.approx(0.0)

    def test_density_pitchiness_is_direction_share(self):
        assert ev.pitchiness(ev.mixed_initial(1 / 3)) == pytest.approx(1.0)
        assert ev.pitchiness(DensityMatrix(0.5 * phon.I2)) == 0.0


class TestFollower:
    def test_pure_phonation_fixed_point(self):
        trace = ev.run_follower(constant_track(), ev.EvolutionConfig())
        assert all(s.axis_measured == "z" and s.outcome == 1 for s in trace)
        assert all(s.pitch_hz == pytest.approx(440.0) for s in trace)

    def test_step_layout(self):
        track = constant_track(n=35)
        trace = ev.run_follower(track, ev.EvolutionConfig(frame_decimation=10, collapse_decimation=2))
        assert len(trace) == 4
        assert np.all(np.diff(trace.times) > 0)
        assert [s.collapsed for s in trace] == [False, True, False, True]
        assert trace.times[-1] == pytest.approx(track.frame_times[-1])

    def test_noise_drives_turbulence_measurements(self):
        track = constant_track(sal=0.05, noise=1.0)
        trace = ev.run_follower(track, ev.EvolutionConfig(omega=200.0))
        assert any(s.axis_measured == "x" for s in trace)

    def test_onset_dominance_selects_y(self):
        track = constant_track(sal=0.05, noise=0.0, onset=1.0)
        trace = ev.run_follower(track, ev.EvolutionConfig(omega=200.0))
        assert any(s.axis_measured == "y" for s in trace)
        assert not any(s.axis_measured == "x" for s in trace)

    def test_threshold_one_on_noise(self):
        track = constant_track(sal=0.0, noise=1.0)
        trace = ev.run_follower(track, ev.EvolutionConfig(pitchiness_threshold=1.0))
        assert all(s.axis_measured == "x" for s in trace)

    def test_phonation_policy_always_z(self):
        track = constant_track(sal=0.1, noise=1.0)
        trace = ev.run_follower(track, ev.EvolutionConfig(axis_policy="phonation", omega=50.0))
        assert all(s.axis_measured == "z" for s in trace)

    def test_seeds_change_outcomes(self):
        track = constant_track(n=200, sal=1.0, noise=0.8)
        a = ev.run_follower(track, ev.EvolutionConfig(seed=0, omega=30.0))
        b = ev.run_follower(track, ev.EvolutionConfig(seed=1, omega=30.0))
        assert [s.outcome for s in a] != [s.outcome for s in b]

    def test_same_seed_reproducible(self):
        track = constant_track(n=100, sal=1.0, noise=0.8)
        a = ev.run_follower(track, ev.EvolutionConfig(seed=5, omega=30.0))
        b = ev.run_follower(track, ev.EvolutionConfig(seed=5, omega=30.0))
        assert [s.outcome for s in a] == [s.outcome for s in b]

    def test_pure_density_matches_ket_run(self):
        track = constant_track(n=120, sal=1.0, noise=0.6)
        cfg = dict(seed=2, omega=25.0)
        kets = ev.run_follower(track, ev.EvolutionConfig(**cfg))
        rhos = ev.run_follower(track, ev.EvolutionConfig(initial=ev.mixed_initial(1.0), **cfg))
        assert [s.axis_measured for s in kets] == [s.axis_measured for s in rhos]
        assert [s.outcome for s in kets] == [s.outcome for s in rhos]
        for a, b in zip(kets, rhos):
            assert np.allclose(DensityMatrix.from_state(a.state).m, b.state.m, atol=1e-9)

    def test_mixed_run_stays_valid(self):
        track = constant_track(n=120, sal=0.5, noise=0.5)
        trace = ev.run_follower(track, ev.EvolutionConfig(initial=ev.mixed_initial(1 / 3), omega=10.0))
        assert trace.is_mixed
        for s in trace:
            p = s.probabilities
            assert p[0] + p[1] == pytest.approx(1.0)
            assert all(0.0 <= v <= 1.0 for v in p)

    def test_invalid_config(self):
        track = constant_track()
        for bad in (dict(frame_decimation=0), dict(collapse_decimation=0), dict(pitchiness_threshold=1.5),
                    dict(damping=-1), dict(omega=0), dict(dt=0.0), dict(axis_policy="nope")):
            with pytest.raises(PhonError):
                ev.run_follower(track, ev.EvolutionConfig(**bad))

    def test_default_dt_is_frame_period(self):
        cfg = ev.EvolutionConfig()
        assert cfg.frame_dt(1024 / 44100) == pytest.approx(1024 / 44100)
        assert ev.EvolutionConfig(dt=0.5).frame_dt(1024 / 44100) == 0.5


class TestTraceIO:
    def test_csv_columns(self, tmp_path):
        trace = ev.run_follower(constant_track(), ev.EvolutionConfig())
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        header = path.read_text().splitlines()[0].split(",")
        assert header == list(ev.EvolutionTrace.CSV_COLUMNS)
        assert len(path.read_text().splitlines()) == len(trace) + 1

    def test_json_roundtrip(self):
        trace = ev.run_follower(constant_track(), ev.EvolutionConfig(initial=ev.mixed_initial(0.5)))
        doc = json.loads(trace.to_json())
        assert len(doc["steps"]) == len(trace)
        rho = np.array(doc["steps"][0]["density"])
        assert rho.shape == (2, 2, 2)
