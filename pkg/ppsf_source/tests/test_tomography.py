"""Test two-qubit polarization tomography."""

import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from ..tomography import (
    MINIMAL_SETTING_IDS,
    PSI_MINUS,
    PSI_PLUS,
    DensityMatrix,
    MleOptions,
    analyzer_angles,
    bell_state,
    best_maximally_entangled_fidelity,
    born_probability,
    concurrence,
    design_matrix,
    fidelity_fixed_psi_plus,
    fidelity_to_pure,
    linear_inversion,
    make_setting,
    minimal_settings,
    mle_reconstruct,
    mub_settings,
    projector,
    purity,
    reconstruct_with_uncertainty,
    setting_operator,
    settings_digest,
    simulate_counts,
    uncertainty_mc,
    werner_state,
)
from ..utils.errors import IllPosedError, InputError, InvalidStateError, NonConvergenceError, ReliabilityError
from ..utils.models import ArmSetting, PolarizationAxis
from .conftest import random_density

SQRT_HALF = 1.0 / math.sqrt(2.0)
ANALYZED_STATES = {
    "H": np.array([1.0, 0.0]),
    "V": np.array([0.0, 1.0]),
    "D": np.array([SQRT_HALF, SQRT_HALF]),
    "A": np.array([SQRT_HALF, -SQRT_HALF]),
    "R": np.array([SQRT_HALF, -1j * SQRT_HALF]),
    "L": np.array([SQRT_HALF, 1j * SQRT_HALF]),
}


def jones_retarder(theta: float, gamma: float) -> np.ndarray:
    """Retarder built element by element."""
    c, s = math.cos(theta), math.sin(theta)
    phase = np.exp(1j * gamma)
    return np.array([
        [c * c + phase * s * s, c * s * (1.0 - phase)],
        [c * s * (1.0 - phase), s * s + phase * c * c],
    ])


def wootters_concurrence(rho: np.ndarray) -> float:
    """Concurrence from the non-Hermitian product rho (sy sy) rho* (sy sy)."""
    sy = np.array([[0, -1j], [1j, 0]])
    flip = np.kron(sy, sy)
    eigenvalues = np.linalg.eigvals(rho @ flip @ rho.conj() @ flip)
    lam = np.sort(np.sqrt(np.clip(eigenvalues.real, 0.0, None)))[::-1]
    return max(0.0, lam[0] - lam[1] - lam[2] - lam[3])


class TestStates:
    """Test density matrices and reference states."""

    def test_bell_states(self):
        """Test that the Bell vectors are normalized and orthogonal."""
        assert np.linalg.norm(PSI_PLUS) == pytest.approx(1.0)
        assert abs(np.vdot(PSI_PLUS, PSI_MINUS)) < 1e-15

    def test_validation(self):
        """Test InvalidStateError for malformed matrices."""
        with pytest.raises(InvalidStateError):
            DensityMatrix(np.eye(3) / 3.0)
        with pytest.raises(InvalidStateError):
            DensityMatrix(np.eye(4))
        with pytest.raises(InvalidStateError):
            DensityMatrix(np.diag([1.0, 0.0, 0.0, 0.0]) + 0.1j * np.eye(4, k=1))

    def test_clipped(self):
        """Test that clipping removes negative eigenvalues and keeps unit trace."""
        rho = DensityMatrix(np.diag([0.6, 0.5, 0.0, -0.1]).astype(complex))
        assert not rho.is_physical()
        clipped = rho.clipped()
        assert clipped.is_physical()
        assert np.trace(clipped.matrix).real == pytest.approx(1.0)

    def test_werner_spectrum(self, werner_095):
        """Test the Werner eigenvalues."""
        expected = sorted([(1.0 - 0.95) / 4.0] * 3 + [0.95 + (1.0 - 0.95) / 4.0])
        np.testing.assert_allclose(werner_095.eigenvalues, expected, atol=1e-12)

    def test_serialization(self, psi_plus):
        """Test the real/imaginary dictionary form."""
        payload = psi_plus.to_dict()
        assert np.allclose(np.array(payload["real"]) + 1j * np.array(payload["imag"]), psi_plus.matrix)


class TestProjectors:
    """Test analyzer projectors against direct Jones products."""

    @pytest.mark.parametrize("state", list(ANALYZED_STATES))
    def test_design_wavelength(self, state):
        """Test each analyzer setting projects onto its nominal state."""
        arm = make_setting(state + "H", 1550.0, 1550.0).signal
        psi = ANALYZED_STATES[state]
        np.testing.assert_allclose(projector(arm), np.outer(psi, psi.conj()), atol=1e-12)

    @pytest.mark.parametrize("state", list(ANALYZED_STATES))
    def test_off_design_wavelength(self, state):
        """Test projectors at 1306.6 nm against element-wise Jones matrices."""
        hwp, qwp = analyzer_angles(state)
        arm = make_setting(state + "H", 1306.6, 1306.6, 1550.0).signal
        analyzer = (jones_retarder(qwp, 0.5 * math.pi * 1550.0 / 1306.6)
                    @ jones_retarder(hwp, math.pi * 1550.0 / 1306.6))
        expected = analyzer.conj().T @ np.diag([1.0, 0.0]) @ analyzer
        np.testing.assert_allclose(projector(arm), expected, atol=1e-12)

    def test_projector_algebra(self):
        """Test hermiticity, idempotence and completeness."""
        arm = ArmSetting(hwp_angle_rad=0.3, qwp_angle_rad=1.1, wavelength_nm=1290.0)
        p = projector(arm)
        np.testing.assert_allclose(p, p.conj().T, atol=1e-12)
        np.testing.assert_allclose(p @ p, p, atol=1e-12)
        orthogonal = projector(arm.model_copy(update={"polarizer": PolarizationAxis.V}))
        np.testing.assert_allclose(p + orthogonal, np.eye(2), atol=1e-12)

    def test_unknown_state(self):
        """Test InputError for unknown analyzer labels."""
        with pytest.raises(InputError):
            analyzer_angles("X")
        with pytest.raises(InputError):
            make_setting("HVD", 1550.0, 1550.0)

    def test_settings_sets(self):
        """Test the sizes and ids of the standard setting sets."""
        settings = mub_settings(1330.0, 1290.0)
        assert len(settings) == 36
        assert len({s.setting_id for s in settings}) == 36
        assert [s.setting_id for s in minimal_settings(1330.0, 1290.0)] == list(MINIMAL_SETTING_IDS)

    def test_settings_digest(self):
        """Test that the digest identifies the settings list."""
        first = settings_digest(mub_settings(1330.0, 1290.0))
        assert first == settings_digest(mub_settings(1330.0, 1290.0))
        assert first != settings_digest(mub_settings(1350.0, 1270.0))


class TestBornProbabilities:
    """Test outcome probabilities of reference states."""

    @pytest.mark.parametrize("setting_id, expected", [
        ("HV", 0.5), ("VH", 0.5), ("HH", 0.0), ("VV", 0.0),
        ("DD", 0.5), ("DA", 0.0), ("RR", 0.5), ("RL", 0.0),
    ])
    def test_psi_plus(self, psi_plus, setting_id, expected):
        """Test Psi+ correlations in three bases."""
        setting = make_setting(setting_id, 1550.0, 1550.0)
        assert born_probability(psi_plus, setting) == pytest.approx(expected, abs=1e-12)

    def test_complete_bases_sum(self, werner_095, design_settings):
        """Test that the four outcomes of one basis pair sum to one."""
        by_id = {s.setting_id: s for s in design_settings}
        total = sum(born_probability(werner_095, by_id[a + b]) for a in "DA" for b in "RL")
        assert total == pytest.approx(1.0, abs=1e-12)


class TestSimulateCounts:
    """Test the Poisson forward model."""

    def test_zero_probability(self, psi_plus):
        """Test that a null setting never clicks without accidentals."""
        setting = [make_setting("HH", 1550.0, 1550.0)]
        for seed in range(5):
            assert simulate_counts(psi_plus, setting, 1.0e4, seed=seed)[0].coincidences == 0

    def test_poisson_mean(self, psi_plus):
        """Test the sample mean of 100 seeded draws."""
        setting = [make_setting("HV", 1550.0, 1550.0)]
        draws = [simulate_counts(psi_plus, setting, 2.0e4, seed=seed)[0].coincidences for seed in range(100)]
        assert abs(np.mean(draws) - 1.0e4) <= 3.0 * math.sqrt(1.0e4 / 100)

    def test_efficiency_and_accidentals(self, psi_plus):
        """Test eta^2 scaling and additive accidentals."""
        setting = [make_setting("HV", 1550.0, 1550.0)]
        record = simulate_counts(psi_plus, setting, 1.0e4, accidental_rate=2.5, efficiency=0.5,
                                 integration_s=2.0, noise=False)[0]
        assert record.coincidences == round(1.0e4 * 0.25 * 0.5 + 5.0)
        assert record.accidentals == pytest.approx(5.0)
        assert record.integration_s == 2.0

    def test_deterministic(self, werner_095, design_settings):
        """Test that a seed fixes every count."""
        first = simulate_counts(werner_095, design_settings, 1.0e4, seed=11)
        second = simulate_counts(werner_095, design_settings, 1.0e4, seed=11)
        assert [r.coincidences for r in first] == [r.coincidences for r in second]

    @pytest.mark.parametrize("kwargs", [
        {"pairs_per_setting": 0.0},
        {"pairs_per_setting": 1.0e4, "efficiency": 0.0},
        {"pairs_per_setting": 1.0e4, "accidental_rate": -1.0},
    ])
    def test_invalid_parameters(self, psi_plus, design_settings, kwargs):
        """Test InputError for non-physical parameters."""
        with pytest.raises(InputError):
            simulate_counts(psi_plus, design_settings, **kwargs)


class TestLinearInversion:
    """Test least-squares state inversion."""

    def test_exact_on_noiseless_data(self, werner_095, design_settings):
        """Test exact recovery from complete noiseless data."""
        records = simulate_counts(werner_095, design_settings, 1.0e10, noise=False)
        estimate = linear_inversion(records, design_settings)
        np.testing.assert_allclose(estimate.matrix, werner_095.matrix, atol=1e-8)

    def test_off_design_waveplates(self, oband_settings):
        """Test recovery with miscalibrated retardances that are modeled."""
        rho = werner_state(0.8, 0.4)
        records = simulate_counts(rho, oband_settings, 1.0e10, noise=False)
        np.testing.assert_allclose(linear_inversion(records, oband_settings).matrix, rho.matrix, atol=1e-8)

    def test_minimal_set_is_complete(self, werner_095):
        """Test that the 16-setting set spans the operator space."""
        settings = minimal_settings(1550.0, 1550.0)
        operators = np.array([setting_operator(s) for s in settings])
        assert np.linalg.matrix_rank(design_matrix(operators)) == 16

    def test_incomplete_settings(self, werner_095):
        """Test IllPosedError for 15 settings."""
        settings = minimal_settings(1550.0, 1550.0)[:15]
        records = simulate_counts(werner_095, settings, 1.0e4)
        with pytest.raises(IllPosedError) as exc_info:
            linear_inversion(records, settings)
        assert exc_info.value.null_dimension >= 1

    def test_missing_record(self, werner_095, design_settings):
        """Test InputError when a setting has no record."""
        records = simulate_counts(werner_095, design_settings, 1.0e4)[1:]
        with pytest.raises(InputError):
            linear_inversion(records, design_settings)


class TestMleReconstruction:
    """Test maximum-likelihood reconstruction."""

    def test_pure_state(self, psi_plus, design_settings):
        """Test reconstruction of Psi+ from noiseless counts."""
        records = simulate_counts(psi_plus, design_settings, 1.0e6, noise=False)
        result = mle_reconstruct(records, design_settings)
        assert result.fidelity_psi_plus > 0.9999
        assert result.fidelity == pytest.approx(result.fidelity_psi_plus, abs=1e-3)
        assert result.concurrence > 0.98
        assert result.rho.is_physical()

    @pytest.mark.slow
    def test_fidelity_improves_with_counts(self, psi_plus, design_settings):
        """Test that the median fidelity to Psi+ rises over 1e3, 1e4 and 1e5 pairs per setting."""
        medians = []
        for pairs in (1.0e3, 1.0e4, 1.0e5):
            fidelities = [
                mle_reconstruct(simulate_counts(psi_plus, design_settings, pairs, seed=seed),
                                design_settings).fidelity_psi_plus
                for seed in range(7)
            ]
            medians.append(float(np.median(fidelities)))
        assert medians[0] < medians[1] < medians[2] <= 1.0 + 1e-12
        assert medians[2] > 0.999

    def test_werner_round_trip(self, werner_095, design_settings):
        """Test the Werner concurrence from noisy counts."""
        records = simulate_counts(werner_095, design_settings, 1.0e4, seed=0)
        result = mle_reconstruct(records, design_settings)
        assert result.concurrence == pytest.approx(0.925, abs=0.02)
        assert result.rho.min_eigenvalue > -1e-12
        assert result.purity <= 1.0 + 1e-12
        assert np.isfinite(result.log_likelihood)

    def test_zero_count_settings(self, psi_plus, design_settings):
        """Test that zero-count settings do not break the likelihood."""
        records = simulate_counts(psi_plus, design_settings, 1.0e3, seed=5)
        assert any(r.coincidences == 0 for r in records)
        result = mle_reconstruct(records, design_settings)
        assert np.isfinite(result.concurrence)
        assert result.rho.is_physical()

    def test_numeric_gradient_agrees(self, werner_095, design_settings):
        """Test that finite-difference gradients reach the same state."""
        records = simulate_counts(werner_095, design_settings, 1.0e4, seed=2)
        analytic = mle_reconstruct(records, design_settings)
        numeric = mle_reconstruct(records, design_settings, MleOptions(analytic_gradient=False))
        assert numeric.concurrence == pytest.approx(analytic.concurrence, abs=0.01)

    def test_evaluation_cap(self, werner_095, design_settings):
        """Test NonConvergenceError carries the best state."""
        records = simulate_counts(werner_095, design_settings, 1.0e4, seed=1)
        with pytest.raises(NonConvergenceError) as exc_info:
            mle_reconstruct(records, design_settings, MleOptions(max_evaluations=2))
        assert isinstance(exc_info.value.best, DensityMatrix)

    def test_all_zero_counts(self, design_settings):
        """Test InputError when no coincidences were recorded."""
        records = simulate_counts(werner_state(0.9), design_settings, 1.0e4, noise=False)
        empty = [r.model_copy(update={"coincidences": 0}) for r in records]
        with pytest.raises(InputError):
            mle_reconstruct(empty, design_settings)

    def test_accidental_subtraction(self, werner_095, design_settings):
        """Test that modeling accidentals raises the estimated concurrence."""
        records = simulate_counts(werner_095, design_settings, 1.0e4, accidental_rate=300.0, seed=4)
        raw = mle_reconstruct(records, design_settings)
        corrected = mle_reconstruct(records, design_settings, MleOptions(subtract_accidentals=True))
        assert corrected.concurrence > raw.concurrence
        assert corrected.concurrence == pytest.approx(0.925, abs=0.04)

    def test_result_serialization(self, werner_095, design_settings):
        """Test the exported result fields."""
        records = simulate_counts(werner_095, design_settings, 1.0e4, seed=0)
        payload = mle_reconstruct(records, design_settings).to_dict()
        assert {"rho", "concurrence", "fidelity", "fidelity_psi_plus", "optimizer"} <= set(payload)
        assert payload["concurrence_std"] is None


class TestConcurrence:
    """Test the concurrence figure of merit."""

    @pytest.mark.parametrize("p, expected", [(1.0, 1.0), (0.95, 0.925), (0.5, 0.25), (0.3, 0.0)])
    def test_werner(self, p, expected):
        """Test C = max(0, (3p - 1)/2)."""
        assert concurrence(werner_state(p)) == pytest.approx(expected, abs=1e-7)

    def test_product_state(self):
        """Test that a product state is unentangled."""
        psi = np.kron([1.0, 0.0], [SQRT_HALF, SQRT_HALF])
        assert concurrence(DensityMatrix.from_pure(psi)) == pytest.approx(0.0, abs=1e-7)

    def test_random_states(self):
        """Test agreement with the non-Hermitian eigenvalue form on random states."""
        rng = np.random.default_rng(1234)
        for weight in np.linspace(0.5, 0.95, 100):
            rho = random_density(rng, weight)
            assert concurrence(rho) == pytest.approx(wootters_concurrence(rho.matrix), abs=1e-8)

    def test_local_unitary_invariance(self, werner_095):
        """Test invariance under local unitaries."""
        u = np.kron(unitary_group.rvs(2, random_state=3), unitary_group.rvs(2, random_state=4))
        rotated = DensityMatrix.from_unnormalized(u @ werner_095.matrix @ u.conj().T)
        assert concurrence(rotated) == pytest.approx(concurrence(werner_095), abs=1e-9)

    def test_unphysical_rejected(self):
        """Test InvalidStateError below the eigenvalue floor."""
        with pytest.raises(InvalidStateError):
            concurrence(DensityMatrix(np.diag([0.6, 0.5, 0.0, -0.1]).astype(complex)))


class TestFidelity:
    """Test fidelities to maximally entangled targets."""

    def test_werner_psi_plus(self, werner_095):
        """Test F = (3p + 1)/4 against Psi+."""
        assert fidelity_fixed_psi_plus(werner_095) == pytest.approx(0.9625, abs=1e-12)

    def test_orthogonal_target(self, psi_plus):
        """Test zero overlap with Psi-."""
        assert fidelity_to_pure(psi_plus, PSI_MINUS) == pytest.approx(0.0, abs=1e-12)

    def test_unnormalized_target(self, psi_plus):
        """Test InputError for unnormalized targets."""
        with pytest.raises(InputError):
            fidelity_to_pure(psi_plus, 2.0 * PSI_PLUS)

    def test_optimal_phase(self):
        """Test recovery of the relative phase."""
        rho = DensityMatrix.from_pure(bell_state(0.3))
        fidelity, phase = best_maximally_entangled_fidelity(rho)
        assert fidelity == pytest.approx(1.0, abs=1e-10)
        assert phase == pytest.approx(0.3, abs=1e-4)

    def test_phase_free(self):
        """Test phase 0 when the state has no HV/VH coherence."""
        rho = DensityMatrix(np.diag([0.0, 0.5, 0.5, 0.0]).astype(complex))
        fidelity, phase = best_maximally_entangled_fidelity(rho)
        assert fidelity == pytest.approx(0.5)
        assert phase == 0.0

    def test_purity(self, werner_095, psi_plus):
        """Test purity bounds."""
        assert purity(psi_plus) == pytest.approx(1.0)
        assert 0.25 < purity(werner_095) < 1.0


class TestMonteCarloUncertainty:
    """Test Poisson-resampled uncertainties."""

    @pytest.fixture(scope="class")
    def werner_records(self, werner_095, design_settings):
        return simulate_counts(werner_095, design_settings, 1.0e4, seed=0)

    def test_minimum_resamples(self, werner_records, design_settings):
        """Test InputError below 100 resamples."""
        with pytest.raises(InputError):
            uncertainty_mc(werner_records, design_settings, n_resamples=99)

    def test_unreliable(self, werner_records, design_settings):
        """Test ReliabilityError when resamples fail to converge."""
        with pytest.raises(ReliabilityError) as exc_info:
            uncertainty_mc(werner_records, design_settings, n_resamples=100, options=MleOptions(max_evaluations=2))
        assert exc_info.value.total == 100

    @pytest.mark.slow
    def test_thread_independent(self, werner_records, design_settings):
        """Test that results do not depend on the worker count."""
        serial = uncertainty_mc(werner_records, design_settings, n_resamples=100, seed=9, threads=1)
        parallel = uncertainty_mc(werner_records, design_settings, n_resamples=100, seed=9, threads=4)
        assert serial == parallel

    @pytest.mark.slow
    def test_werner_round_trip(self, werner_records, design_settings):
        """Test concurrence, PSD output and sigma of order 0.01."""
        result = reconstruct_with_uncertainty(werner_records, design_settings, n_resamples=200, seed=0)
        assert result.concurrence == pytest.approx(0.925, abs=0.02)
        assert result.rho.min_eigenvalue > -1e-12
        assert 0.001 < result.concurrence_std < 0.05
        assert result.diagnostics["mc_resamples"] == 200

    @pytest.mark.slow
    def test_inverse_sqrt_scaling(self, werner_095, design_settings):
        """Test sigma_F proportional to 1/sqrt(N) across N = 1e3 and 1e5."""
        spreads = []
        for pairs in (1.0e3, 1.0e5):
            records = simulate_counts(werner_095, design_settings, pairs, seed=0)
            spreads.append(uncertainty_mc(records, design_settings, n_resamples=200, seed=1).fidelity_std)
        assert spreads[0] / spreads[1] == pytest.approx(10.0, rel=0.3)

    @pytest.mark.slow
    def test_high_count_precision(self, werner_095, design_settings):
        """Test sigma below 0.005 at 10^6 counts per setting."""
        records = simulate_counts(werner_095, design_settings, 1.0e6, noise=False)
        spread = uncertainty_mc(records, design_settings, n_resamples=100, seed=0)
        assert spread.concurrence_std < 0.005
        assert spread.fidelity_std < 0.005
