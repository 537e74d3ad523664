import math

import numpy as np
import pytest
from scipy.special import jv

from bfctomo import (
    FrequencyGrid,
    MeasurementMatrix,
    MeasurementSetting,
    SettingPlan,
    make_density,
    maximally_entangled,
    measurement_matrix,
    outcome_probabilities,
    random_settings,
    singular_spectrum,
    transfer_matrices,
)
from bfctomo.measurement import apply_measurement_matrix
from bfctomo.errors import DimensionMismatchError, InvalidArgumentsError

from oracles import (
    bessel_series,
    bures_states_for_tests,
    extended_grid_total,
    mub_measurement_entries,
    probability_bruteforce,
)


def setting(d, delta, seed=None):
    if seed is None:
        return MeasurementSetting(theta=np.zeros(d), phi=np.zeros(d), delta=delta)
    rng = np.random.default_rng(seed)
    return MeasurementSetting(
        theta=rng.uniform(0, 2 * np.pi, d), phi=rng.uniform(0, 2 * np.pi, d), delta=delta
    )


def rho_ent(d):
    amp = maximally_entangled(FrequencyGrid(d=d)).amplitudes
    return make_density(np.outer(amp, amp.conj()))


def rho_sep(d):
    amp = maximally_entangled(FrequencyGrid(d=d)).amplitudes
    return make_density(np.diag(np.abs(amp) ** 2))


class TestTransferMatrices:
    def test_identity_at_zero_modulation(self):
        v, w = transfer_matrices(setting(4, 0.0), 4)
        np.testing.assert_allclose(v, np.eye(4), atol=1e-15)
        np.testing.assert_allclose(w, np.eye(4), atol=1e-15)

    def test_pure_phase_at_zero_modulation(self):
        s = setting(3, 0.0, seed=1)
        v, w = transfer_matrices(s, 3)
        np.testing.assert_allclose(v, np.diag(np.exp(1j * s.theta)), atol=1e-15)
        np.testing.assert_allclose(w, np.diag(np.exp(1j * s.phi)), atol=1e-15)

    def test_entries_match_series_oracle(self):
        # scipy's Bessel values against the defining power series
        for delta in (0.3, 1.43, 2.5, 8.0):
            s = setting(5, delta, seed=2)
            v, w = transfer_matrices(s, 5)
            for m in range(5):
                for k in range(5):
                    assert v[m, k] == pytest.approx(
                        bessel_series(m - k, delta) * np.exp(1j * s.theta[k]), abs=1e-12
                    )
                    assert w[m, k] == pytest.approx(
                        bessel_series(k - m, delta) * np.exp(1j * s.phi[k]), abs=1e-12
                    )

    def test_equal_mixing_point(self):
        # at delta = 1.43 the carrier and first sideband have near-equal weight
        v, _ = transfer_matrices(setting(4, 1.43), 4)
        assert abs(v[1, 1]) == pytest.approx(0.5505175775431503, abs=1e-12)
        assert abs(v[1, 0]) == pytest.approx(0.5471624916858372, abs=1e-12)
        assert abs(abs(v[1, 1]) - abs(v[1, 0])) < 0.01

    def test_sub_unitary_singular_values(self):
        for seed, delta in ((1, 0.5), (2, 2.5), (3, 7.0)):
            v, w = transfer_matrices(setting(6, delta, seed=seed), 6)
            assert np.linalg.svd(v, compute_uv=False).max() <= 1 + 1e-10
            assert np.linalg.svd(w, compute_uv=False).max() <= 1 + 1e-10

    def test_conjugate_convention_flips_order(self):
        s = setting(4, 1.2)
        v, _ = transfer_matrices(s, 4)
        v_flip, _ = transfer_matrices(s, 4, conjugate_modulation=True)
        np.testing.assert_allclose(v_flip, v.T, atol=1e-14)


class TestOutcomeProbabilities:
    grid4 = FrequencyGrid(d=4)

    def test_jsi_identical_for_ent_and_sep(self):
        s = setting(4, 0.0, seed=5)
        p_ent = outcome_probabilities(rho_ent(4), s, self.grid4)
        p_sep = outcome_probabilities(rho_sep(4), s, self.grid4)
        assert np.abs(p_ent - p_sep).max() < 1e-12
        np.testing.assert_allclose(p_ent, np.eye(4) / 4, atol=1e-12)

    def test_uniform_for_maximally_mixed(self):
        rho = make_density(np.eye(16) / 16)
        p = outcome_probabilities(rho, setting(4, 0.0, seed=6), self.grid4)
        np.testing.assert_allclose(p, np.full((4, 4), 1 / 16), atol=1e-12)

    def test_ent_vs_sep_distinguishable_when_modulated(self):
        for delta in (1.5, 2.0):
            s = setting(4, delta, seed=406)
            p_ent = outcome_probabilities(rho_ent(4), s, self.grid4)
            p_sep = outcome_probabilities(rho_sep(4), s, self.grid4)
            assert np.abs(p_ent - p_sep).max() > 0.01

    def test_matches_bruteforce_sum(self):
        rho = make_density(np.asarray(bures_states_for_tests(2, 1, seed=8)[0]))
        s = setting(2, 1.1, seed=9)
        p = outcome_probabilities(rho, s, FrequencyGrid(d=2))
        expected = probability_bruteforce(rho.elements, s.theta, s.phi, 1.1, 2)
        np.testing.assert_allclose(p, expected, atol=1e-12)

    def test_linearity(self):
        s = setting(2, 1.7, seed=10)
        grid = FrequencyGrid(d=2)
        r1, r2 = (make_density(np.asarray(r)) for r in bures_states_for_tests(2, 2, seed=11))
        for alpha in (0.0, 0.3, 1.0):
            mix = make_density(alpha * r1.elements + (1 - alpha) * r2.elements)
            blend = alpha * outcome_probabilities(r1, s, grid) + (1 - alpha) * outcome_probabilities(r2, s, grid)
            np.testing.assert_allclose(outcome_probabilities(mix, s, grid), blend, atol=1e-12)

    def test_total_probability_unmodulated(self):
        p = outcome_probabilities(rho_ent(3), setting(3, 0.0, seed=12), FrequencyGrid(d=3))
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_modulated_deficit_equals_out_of_grid_flux(self):
        grid = FrequencyGrid(d=3)
        rho = rho_ent(3)
        for delta in (1.0, 2.5):
            s = setting(3, delta, seed=13)
            p = outcome_probabilities(rho, s, grid)
            assert p.sum() < 1.0
            total_ext = extended_grid_total(s.theta, s.phi, delta, rho.elements, 3)
            # extended-grid recapture is limited by the Bessel tails
            assert total_ext == pytest.approx(1.0, abs=1e-6)
            assert (1.0 - p.sum()) == pytest.approx(total_ext - p.sum(), abs=1e-6)

    def test_global_signal_phase_invariance(self):
        grid = FrequencyGrid(d=3)
        rho = make_density(np.asarray(bures_states_for_tests(3, 1, seed=14)[0]))
        s = setting(3, 1.8, seed=15)
        shifted = MeasurementSetting(theta=s.theta + 0.83, phi=s.phi, delta=s.delta)
        np.testing.assert_allclose(
            outcome_probabilities(rho, s, grid),
            outcome_probabilities(rho, shifted, grid),
            atol=1e-12,
        )

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            outcome_probabilities(rho_ent(3), setting(4, 0.0), FrequencyGrid(d=4))


class TestRandomSettings:
    def test_deterministic(self):
        a = random_settings(3, 7, 2.0, seed=42)
        b = random_settings(3, 7, 2.0, seed=42)
        for sa, sb in zip(a.settings, b.settings):
            np.testing.assert_array_equal(sa.theta, sb.theta)
            np.testing.assert_array_equal(sa.phi, sb.phi)
            assert sa.delta == sb.delta

    def test_first_setting_unmodulated(self):
        plan = random_settings(4, 21, 2.5, seed=0)
        assert plan.settings[0].delta == 0.0

    def test_equispaced_multiset_with_endpoints(self):
        plan = random_settings(4, 21, 2.5, seed=3)
        rest = np.sort(plan.deltas[1:])
        np.testing.assert_allclose(rest, np.linspace(0.0, 2.5, 20), atol=1e-12)

    def test_phase_range(self):
        plan = random_settings(5, 30, 3.4, seed=4)
        for s in plan.settings:
            assert s.theta.min() >= 0 and s.theta.max() < 2 * np.pi
            assert s.phi.min() >= 0 and s.phi.max() < 2 * np.pi

    def test_single_setting_plan(self):
        plan = random_settings(2, 1, 2.0, seed=5)
        assert len(plan) == 1
        assert plan.settings[0].delta == 0.0

    def test_invalid_arguments(self):
        with pytest.raises(InvalidArgumentsError):
            random_settings(2, 0, 1.0, seed=0)
        with pytest.raises(InvalidArgumentsError):
            random_settings(2, 3, -1.0, seed=0)

    def test_plan_requires_zero_first_delta(self):
        s = setting(2, 1.0)
        with pytest.raises(InvalidArgumentsError):
            SettingPlan(d=2, settings=(s,), delta_max=1.0, seed=0)


class TestMeasurementMatrix:
    def test_columns_are_hermitian_psd_operators(self):
        plan = random_settings(2, 3, 1.5, seed=20)
        o = measurement_matrix(plan, 2)
        for col in range(o.entries.shape[1]):
            op = o.entries[:, col].reshape(4, 4)
            np.testing.assert_allclose(op, op.conj().T, atol=1e-14)
            assert np.linalg.eigvalsh(op).min() > -1e-12
            assert op.trace().real <= 4 + 1e-10

    def test_consistent_with_outcome_probabilities(self):
        plan = random_settings(2, 4, 2.0, seed=21)
        o = measurement_matrix(plan, 2)
        grid = FrequencyGrid(d=2)
        for raw in bures_states_for_tests(2, 100, seed=22):
            rho = make_density(np.asarray(raw))
            stacked = np.concatenate(
                [outcome_probabilities(rho, s, grid).reshape(-1) for s in plan.settings]
            )
            np.testing.assert_allclose(
                apply_measurement_matrix(o, rho.elements), stacked, atol=1e-12
            )

    def test_unmodulated_plan_rank(self):
        plan = random_settings(3, 4, 0.0, seed=23)
        sv_single = singular_spectrum(measurement_matrix(plan, 3, single_qudit=True))
        assert np.sum(sv_single > 1e-10) == 3  # only bin populations are probed
        assert sv_single[3] < 1e-10
        sv_two = singular_spectrum(measurement_matrix(plan, 3))
        assert np.sum(sv_two > 1e-10) == 9

    def test_single_setting_projector_columns(self):
        plan = random_settings(2, 1, 0.0, seed=24)
        o = measurement_matrix(plan, 2)
        expected = np.column_stack(
            [np.outer(e, e).reshape(-1) for e in np.eye(4)]
        ).astype(complex)
        # delta = 0 leaves pure phases that cancel in the projectors
        np.testing.assert_allclose(o.entries, expected, atol=1e-12)


class TestSingularSpectrum:
    def test_descending_order(self):
        plan = random_settings(3, 6, 2.0, seed=30)
        sv = singular_spectrum(measurement_matrix(plan, 3))
        assert np.all(np.diff(sv) <= 1e-12)

    def test_mub_spectrum(self):
        # a complete set of mutually unbiased bases senses every traceless
        # direction with unit weight; the remaining direction (the trace,
        # probed by every projector) carries sqrt(d + 1)
        for d in (2, 3, 5):
            entries = mub_measurement_entries(d)
            o = MeasurementMatrix(
                entries=entries, setting_index=np.zeros(entries.shape[1], int),
                d=d, single_qudit=True,
            )
            sv = singular_spectrum(o)
            assert sv[0] == pytest.approx(math.sqrt(d + 1), abs=1e-10)
            np.testing.assert_allclose(sv[1:], np.ones(d * d - 1), atol=1e-10)

    def test_duplicated_columns_scale_by_sqrt2(self):
        plan = random_settings(2, 3, 1.0, seed=31)
        o = measurement_matrix(plan, 2)
        doubled = MeasurementMatrix(
            entries=np.hstack([o.entries, o.entries]),
            setting_index=np.concatenate([o.setting_index, o.setting_index]),
            d=2,
        )
        np.testing.assert_allclose(
            singular_spectrum(doubled), math.sqrt(2) * singular_spectrum(o), atol=1e-10
        )
