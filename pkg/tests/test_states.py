import math

import numpy as np
import pytest

from bfctomo import (
    DensityMatrix,
    DispersionConfig,
    FrequencyGrid,
    PureState,
    car_for_lambda,
    dispersion_phases,
    fidelity_pure,
    lambda_for_car,
    log_negativity,
    make_density,
    maximally_entangled,
    partial_transpose,
    uhlmann_fidelity,
    white_noise_fidelity,
    white_noise_log_negativity,
    white_noise_state,
)
from bfctomo.errors import (
    DimensionMismatchError,
    LambdaOutOfRangeError,
    NotHermitianError,
    NotPSDError,
    NotUnitTraceError,
)

from oracles import bures_states_for_tests


def bell_state(d, alphas=None):
    return maximally_entangled(FrequencyGrid(d=d), alphas)


def rho_ent(d):
    """(1/d) sum_{m,n} |m,m><n,n| as a raw matrix."""
    amp = bell_state(d).amplitudes
    return np.outer(amp, amp.conj())


def rho_sep(d):
    """(1/d) sum_m |m,m><m,m| as a raw matrix."""
    return np.diag(np.abs(bell_state(d).amplitudes) ** 2)


class TestMakeDensity:
    def test_maximally_mixed(self):
        rho = make_density(np.eye(4) / 4)
        assert rho.dim == 4
        assert rho.elements[0, 0] == 0.25

    def test_bell_projector_rank_one(self):
        rho = make_density(rho_ent(2))
        evals = np.linalg.eigvalsh(rho.elements)
        assert np.sum(evals > 1e-10) == 1

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(NotPSDError, match="-1"):
            make_density(np.diag([0.6, 0.6, -0.1, -0.1]))

    def test_non_hermitian_rejected(self):
        mat = np.eye(4) / 4
        mat[0, 1] = 0.1
        with pytest.raises(NotHermitianError):
            make_density(mat)

    def test_trace_violation_rejected(self):
        with pytest.raises(NotUnitTraceError, match="trace"):
            make_density(np.eye(4) / 3)

    def test_rectangular_rejected(self):
        with pytest.raises(DimensionMismatchError):
            make_density(np.ones((2, 3)))

    def test_fuzz_valid_states_accepted(self):
        for rho in bures_states_for_tests(2, 50, seed=101):
            make_density(rho)

    def test_fuzz_hermitian_perturbations_rejected(self):
        rng = np.random.default_rng(77)
        base = np.asarray(bures_states_for_tests(2, 1, seed=5)[0])
        for _ in range(25):
            bad = base.copy()
            i, j = rng.integers(0, 4, size=2)
            bad[i, j] += 1e-6  # breaks hermiticity (off-diag) or trace (diag)
            with pytest.raises((NotHermitianError, NotUnitTraceError, NotPSDError)):
                make_density(bad)

    def test_elements_are_read_only(self):
        rho = make_density(np.eye(4) / 4)
        with pytest.raises(ValueError):
            rho.elements[0, 0] = 1.0


class TestIdealStates:
    def test_uniform_bell_d2(self):
        psi = bell_state(2, np.zeros(2))
        np.testing.assert_allclose(
            psi.amplitudes, np.array([1, 0, 0, 1]) / math.sqrt(2), atol=1e-15
        )

    def test_sign_flip_d3(self):
        psi = bell_state(3, np.array([0.0, math.pi, 0.0]))
        expected = np.zeros(9, dtype=complex)
        expected[[0, 4, 8]] = np.array([1, -1, 1]) / math.sqrt(3)
        np.testing.assert_allclose(psi.amplitudes, expected, atol=1e-12)

    def test_dispersion_phases_used_as_amplitudes(self):
        grid = FrequencyGrid(d=5, B=3, delta_omega=2 * math.pi * 40e9)
        alphas = dispersion_phases(grid, DispersionConfig(beta2=2.06e-2, length=20.0))
        psi = maximally_entangled(grid, alphas)
        idx = np.arange(5) * 5 + np.arange(5)
        np.testing.assert_allclose(
            psi.amplitudes[idx], np.exp(1j * alphas) / math.sqrt(5), atol=1e-12
        )
        assert abs(np.linalg.norm(psi.amplitudes) - 1) < 1e-12

    def test_wrong_phase_length(self):
        with pytest.raises(DimensionMismatchError):
            bell_state(3, np.zeros(4))


class TestDispersionPhases:
    grid = FrequencyGrid(d=5, B=3, delta_omega=2 * math.pi * 40e9)

    def test_zero_length_fiber(self):
        alphas = dispersion_phases(self.grid, DispersionConfig(length=0.0))
        np.testing.assert_array_equal(alphas, np.zeros(5))

    def test_first_bin_with_offset(self):
        # 2.06e-2 ps^2/m * 20 m * (2 pi 0.04 rad/ps)^2 * (1+3)^2, plain arithmetic
        alphas = dispersion_phases(self.grid, DispersionConfig(2.06e-2, 20.0))
        assert alphas[0] == pytest.approx(0.4163867661566788, rel=1e-12)

    def test_first_bin_without_offset(self):
        cfg = DispersionConfig(2.06e-2, 20.0, include_offset=False)
        alphas = dispersion_phases(self.grid, cfg)
        assert alphas[0] == pytest.approx(0.026024172884792425, rel=1e-12)


class TestWhiteNoise:
    def test_pure_limit(self):
        psi = bell_state(2)
        rho = white_noise_state(psi, 1.0)
        np.testing.assert_allclose(rho.elements, psi.projector(), atol=1e-14)

    def test_mixed_limit(self):
        rho = white_noise_state(bell_state(2), 0.0)
        np.testing.assert_allclose(rho.elements, np.eye(4) / 4, atol=1e-15)

    def test_car90_fidelity_d3(self):
        lam = lambda_for_car(90.0, 3)
        assert lam == pytest.approx(89.0 / 92.0, rel=1e-14)
        psi = bell_state(3)
        f = fidelity_pure(white_noise_state(psi, lam), psi)
        assert round(f, 3) == 0.971

    def test_car_lambda_roundtrip(self):
        for d in (2, 5, 8):
            for car in (1.0, 17.0, 30.0, 90.0):
                assert car_for_lambda(lambda_for_car(car, d), d) == pytest.approx(car)

    def test_lambda_range(self):
        with pytest.raises(LambdaOutOfRangeError):
            white_noise_state(bell_state(2), 1.2)


class TestFidelityPure:
    def test_projector_overlap_is_one(self):
        psi = bell_state(3)
        assert fidelity_pure(make_density(psi.projector()), psi) == pytest.approx(1.0)

    def test_maximally_mixed(self):
        psi = bell_state(3)
        rho = make_density(np.eye(9) / 9)
        assert fidelity_pure(rho, psi) == pytest.approx(1 / 9, abs=1e-14)

    def test_car90_d4(self):
        psi = bell_state(4)
        rho = white_noise_state(psi, lambda_for_car(90.0, 4))
        assert round(fidelity_pure(rho, psi), 3) == 0.960

    def test_closed_form_over_grid(self):
        for d in range(2, 9):
            psi = bell_state(d)
            for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
                f = fidelity_pure(white_noise_state(psi, lam), psi)
                assert abs(f - white_noise_fidelity(lam, d)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            fidelity_pure(make_density(np.eye(4) / 4), bell_state(3))


class TestUhlmannFidelity:
    def test_self_fidelity(self):
        rho = make_density(np.asarray(bures_states_for_tests(2, 1, seed=9)[0]))
        assert uhlmann_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-10)

    def test_pure_state_reduction(self):
        psi1 = bell_state(2, np.zeros(2))
        psi2 = bell_state(2, np.array([0.0, math.pi / 3]))
        f = uhlmann_fidelity(make_density(psi1.projector()), make_density(psi2.projector()))
        overlap = abs(psi1.amplitudes.conj() @ psi2.amplitudes) ** 2
        assert f == pytest.approx(overlap, abs=1e-10)

    def test_mixed_vs_bell_closed_form(self):
        # sqrt(I/4) = I/2, so F = (tr sqrt(P/4))^2 = 1/4 for a rank-1 projector
        f = uhlmann_fidelity(make_density(np.eye(4) / 4), make_density(rho_ent(2)))
        assert f == pytest.approx(0.25, abs=1e-10)

    def test_symmetry_and_range(self):
        states = [make_density(np.asarray(r)) for r in bures_states_for_tests(2, 8, seed=3)]
        for i in range(0, 8, 2):
            a, b = states[i], states[i + 1]
            fab, fba = uhlmann_fidelity(a, b), uhlmann_fidelity(b, a)
            assert abs(fab - fba) < 1e-8
            assert 0.0 <= fab <= 1.0
            assert fab < 1.0 - 1e-6  # distinct random states

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            uhlmann_fidelity(make_density(np.eye(4) / 4), make_density(np.eye(9) / 9))


class TestPartialTranspose:
    def test_separable_diagonal_unchanged(self):
        rho = make_density(rho_sep(3))
        np.testing.assert_allclose(partial_transpose(rho, 3), rho.elements, atol=1e-15)

    def test_bell_eigenvalues_d2(self):
        pt = partial_transpose(make_density(rho_ent(2)), 2)
        np.testing.assert_allclose(
            np.sort(np.linalg.eigvalsh(pt)), [-0.5, 0.5, 0.5, 0.5], atol=1e-12
        )

    def test_involution_trace_hermiticity(self):
        for raw in bures_states_for_tests(2, 10, seed=44):
            rho = make_density(np.asarray(raw))
            pt = partial_transpose(rho, 2)
            np.testing.assert_allclose(pt, pt.conj().T, atol=1e-12)
            assert pt.trace() == pytest.approx(1.0, abs=1e-12)
            back = partial_transpose(make_density_loose(pt), 2)
            np.testing.assert_allclose(back, rho.elements, atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            partial_transpose(make_density(np.eye(4) / 4), 3)


def make_density_loose(mat):
    """Wrap a Hermitian unit-trace matrix without the PSD check (partial
    transposes of entangled states are legitimately non-PSD)."""
    return DensityMatrix(dim=mat.shape[0], elements=mat)


class TestLogNegativity:
    def test_bell_values(self):
        for d, expected in ((3, 1.58), (4, 2.00), (5, 2.32)):
            e = log_negativity(make_density(rho_ent(d)), d)
            assert abs(e - expected) <= 0.005
            assert e == pytest.approx(math.log2(d), abs=1e-10)

    def test_separable_state_zero(self):
        assert abs(log_negativity(make_density(rho_sep(3)), 3)) < 1e-10

    def test_white_noise_matches_closed_form(self):
        for d in range(2, 9):
            psi = bell_state(d)
            for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
                rho = white_noise_state(psi, lam)
                direct = log_negativity(rho, d)
                assert abs(max(direct, 0.0) - white_noise_log_negativity(lam, d)) < 1e-10

    def test_zero_branch(self):
        # lam small enough that F < 1/d: partial transpose stays positive
        d = 3
        lam = 0.05
        assert white_noise_fidelity(lam, d) < 1 / d
        rho = white_noise_state(bell_state(d), lam)
        assert abs(log_negativity(rho, d)) < 1e-10


class TestFrequencyGrid:
    def test_bin_frequencies(self):
        grid = FrequencyGrid(d=3, B=2, delta_omega=1e9, omega0=5e9)
        assert grid.signal_frequency(1) == pytest.approx(5e9 + 3e9)
        assert grid.idler_frequency(3) == pytest.approx(5e9 - 5e9)

    def test_invalid_dimension(self):
        with pytest.raises(DimensionMismatchError):
            FrequencyGrid(d=1)

    def test_pure_state_norm_enforced(self):
        with pytest.raises(ValueError):
            PureState(dim=2, amplitudes=np.array([1.0, 1.0]))
