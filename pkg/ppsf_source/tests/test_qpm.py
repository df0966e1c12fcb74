"""Test quasi-phase-matched SHG and SPDC spectra."""

import math

import numpy as np
import pytest

from ..qpm import (
    HALF_MAX_SINC2,
    SpdcConfig,
    calibrate_birefringence,
    central_lobe,
    degenerate_mismatch,
    degenerate_qpm_pump_wavelength,
    detuning_grid,
    fwhm_bandwidth,
    lobe_deviation,
    phase_mismatch,
    poling_period_for_qpm,
    shg_spectrum,
    sinc2,
    spdc_spectral_density,
    taylor_coefficients,
    taylor_spectral_density,
    tuning_curve,
)
from ..utils.errors import CalibrationError, InputError, UnboundedBandwidthError
from ..utils.models import ProcessType
from .conftest import PUMP_NM


class TestSinc:
    """Test the sinc^2 helper."""

    def test_peak_and_zero(self):
        """Test unit peak and first zero at pi."""
        assert sinc2(0.0) == 1.0
        assert sinc2(math.pi) == pytest.approx(0.0, abs=1e-30)

    def test_half_maximum(self):
        """Test the tabulated half-maximum argument."""
        assert sinc2(HALF_MAX_SINC2) == pytest.approx(0.5, rel=1e-12)


class TestDetuningGrid:
    """Test the symmetric detuning grid."""

    def test_exact_symmetry(self):
        """Test that the grid is exactly antisymmetric with zero sampled."""
        grid = detuning_grid(101, 10.0)
        assert np.array_equal(grid, -grid[::-1])
        assert grid[50] == 0.0
        assert grid[-1] == pytest.approx(2.0 * math.pi * 10e12)

    @pytest.mark.parametrize("points", [2, 100])
    def test_invalid_points(self, points):
        """Test that even or tiny grids are rejected."""
        with pytest.raises(InputError):
            detuning_grid(points)

    def test_config_rejects_asymmetric_grid(self, calibrated_fiber):
        """Test SpdcConfig grid validation."""
        with pytest.raises(ValueError):
            SpdcConfig(fiber=calibrated_fiber, process=ProcessType.TYPE_II, pump_nm=PUMP_NM,
                       detuning=np.linspace(-1e13, 2e13, 11))

    def test_config_rejects_bad_pump(self, calibrated_fiber):
        """Test SpdcConfig pump validation."""
        with pytest.raises(ValueError):
            SpdcConfig(fiber=calibrated_fiber, process=ProcessType.TYPE_II, pump_nm=0.0)


class TestBirefringenceCalibration:
    """Test calibration of dn to the type-II SHG peak."""

    def test_calibrated_value(self, calibrated_dn, calibrated_fiber):
        """Test the calibrated dn is small, positive and stable."""
        assert calibrated_dn == pytest.approx(1.496088e-5, rel=1e-3)
        assert 0.0 < calibrated_dn < 1e-3
        assert calibrated_fiber.birefringence_dn == calibrated_dn

    def test_residual(self, calibrated_fiber):
        """Test that degenerate type-II emission is phase matched at the target."""
        residual = degenerate_mismatch(calibrated_fiber, ProcessType.TYPE_II, PUMP_NM)
        assert abs(residual) < 1e-3

    def test_idempotent(self, calibrated_fiber, calibrated_dn):
        """Test that recalibrating a calibrated fiber returns the same dn."""
        assert calibrate_birefringence(calibrated_fiber, PUMP_NM) == pytest.approx(calibrated_dn, rel=1e-9)

    def test_bracket_without_root(self, default_fiber):
        """Test CalibrationError when the bracket excludes the root."""
        with pytest.raises(CalibrationError) as exc_info:
            calibrate_birefringence(default_fiber, PUMP_NM, bracket=(0.0, 1e-9))
        assert exc_info.value.diagnostics["bracket"] == [0.0, 1e-9]


class TestPhaseMatching:
    """Test mismatch, QPM wavelengths and poling period."""

    def test_type_ii_pump(self, calibrated_fiber):
        """Test that the type-II QPM pump equals the calibration target."""
        pump = degenerate_qpm_pump_wavelength(calibrated_fiber, ProcessType.TYPE_II)
        assert pump == pytest.approx(PUMP_NM, abs=1e-6)

    def test_process_ordering(self, calibrated_fiber):
        """Test that type-0 lies blue and type-I red of type-II."""
        pumps = {p: degenerate_qpm_pump_wavelength(calibrated_fiber, p) for p in ProcessType}
        assert pumps[ProcessType.TYPE0] < pumps[ProcessType.TYPE_II] < pumps[ProcessType.TYPE_I]
        assert pumps[ProcessType.TYPE0] == pytest.approx(652.9, abs=0.1)
        assert pumps[ProcessType.TYPE_I] == pytest.approx(653.7, abs=0.1)

    def test_poling_period(self, calibrated_fiber):
        """Test that the grating period needed at the QPM pump is the fiber's own."""
        period = poling_period_for_qpm(calibrated_fiber, ProcessType.TYPE_II, PUMP_NM)
        assert period == pytest.approx(calibrated_fiber.poling_period_um, rel=1e-6)

    def test_type0_symmetric(self, calibrated_fiber):
        """Test that type-0 mismatch is symmetric under signal/idler exchange."""
        omega = 2.0 * math.pi * 299792458.0 / np.array([1280e-9, 1330e-9])
        forward = phase_mismatch(calibrated_fiber, ProcessType.TYPE0, omega[0], omega[1])
        backward = phase_mismatch(calibrated_fiber, ProcessType.TYPE0, omega[1], omega[0])
        assert forward == pytest.approx(backward, abs=1e-6)

    def test_birefringence_moves_cross_polarized_processes(self, calibrated_fiber):
        """Test that raising dn shifts the type-II and type-I pumps but leaves type-0 in place."""
        perturbed = calibrated_fiber.with_birefringence(1.2 * calibrated_fiber.birefringence_dn)
        shift = {
            p: degenerate_qpm_pump_wavelength(perturbed, p) - degenerate_qpm_pump_wavelength(calibrated_fiber, p)
            for p in ProcessType
        }
        assert abs(shift[ProcessType.TYPE_II]) > 0.01
        assert abs(shift[ProcessType.TYPE_I]) > 0.01
        assert abs(shift[ProcessType.TYPE0]) < 0.02 * abs(shift[ProcessType.TYPE_II])

    @pytest.mark.parametrize("process", list(ProcessType))
    def test_grating_free_limit(self, calibrated_fiber, process):
        """Test that an infinite poling period removes exactly the grating wavevector."""
        bare = calibrated_fiber.model_copy(update={"poling_period_um": math.inf})
        omega = 2.0 * math.pi * 299792458.0 / (np.linspace(1250e-9, 1370e-9, 9))
        grating = 2.0 * math.pi / (calibrated_fiber.poling_period_um * 1e-6)
        np.testing.assert_allclose(
            phase_mismatch(bare, process, omega, omega[::-1]),
            phase_mismatch(calibrated_fiber, process, omega, omega[::-1]) + grating,
            rtol=1e-12,
        )

    def test_pump_slope(self, calibrated_fiber):
        """Test the degenerate mismatch slope with pump wavelength."""
        slope = (degenerate_mismatch(calibrated_fiber, ProcessType.TYPE_II, PUMP_NM + 0.01)
                 - degenerate_mismatch(calibrated_fiber, ProcessType.TYPE_II, PUMP_NM - 0.01)) / 0.02
        assert slope == pytest.approx(-182.0, rel=0.05)


class TestSpectralDensity:
    """Test the exact type-II spectrum."""

    def test_normalized(self, type_ii_density):
        """Test unit peak, non-negativity and metadata."""
        assert np.max(type_ii_density.values) == pytest.approx(1.0, abs=1e-12)
        assert np.all(type_ii_density.values >= 0.0)
        assert type_ii_density.metadata["kind"] == "exact"
        assert type_ii_density.metadata["process"] == "typeII"

    def test_bandwidth(self, type_ii_density):
        """Test the broadband type-II FWHM in THz and nm."""
        width = fwhm_bandwidth(type_ii_density)
        assert 23.5 <= width.frequency_thz <= 32.0
        assert width.wavelength_nm >= 130.0
        assert width.lower_detuning < 0.0 < width.upper_detuning

    def test_mirror_symmetric(self, type_ii_density):
        """Test that the calibrated type-II density is even in detuning."""
        assert type_ii_density.asymmetry() < 1e-6
        np.testing.assert_allclose(type_ii_density.values, type_ii_density.values[::-1], rtol=0.0, atol=1e-6)

    def test_length_scaling(self, type_ii_config, type_ii_density):
        """Test that doubling L narrows the FWHM by 1/sqrt(2)."""
        fiber = type_ii_config.fiber
        doubled = fiber.model_copy(update={"length_m": 2.0 * fiber.length_m})
        longer = SpdcConfig(fiber=doubled, process=ProcessType.TYPE_II, pump_nm=PUMP_NM)
        short_width = fwhm_bandwidth(type_ii_density).frequency_thz
        long_width = fwhm_bandwidth(spdc_spectral_density(longer)).frequency_thz
        assert long_width / short_width == pytest.approx(1.0 / math.sqrt(2.0), rel=0.02)

    def test_wavelength_mapping(self, type_ii_density):
        """Test energy conservation of the signal and idler grids."""
        signal = type_ii_density.signal_wavelengths_nm()
        idler = type_ii_density.idler_wavelengths_nm()
        np.testing.assert_allclose(1.0 / signal + 1.0 / idler, 1.0 / PUMP_NM, rtol=1e-12)

    def test_peak_at_degeneracy(self, type_ii_density):
        """Test that phase-matched degeneracy carries the unit peak."""
        center = type_ii_density.detuning.size // 2
        assert type_ii_density.detuning[center] == 0.0
        assert type_ii_density.values[center] == pytest.approx(1.0, abs=1e-9)


class TestTaylorExpansion:
    """Test the expanded spectrum against the exact mismatch."""

    def test_fourth_order_matches(self, type_ii_config, type_ii_density, calibrated_fiber):
        """Test deviation below 1e-3 over the central lobe."""
        coefficients = taylor_coefficients(calibrated_fiber, PUMP_NM)
        fourth = taylor_spectral_density(type_ii_config, coefficients.m, coefficients.k2, coefficients.k4)
        assert lobe_deviation(type_ii_density, fourth) < 1e-3

    def test_second_order_is_coarser(self, type_ii_config, type_ii_density, calibrated_fiber):
        """Test that dropping k4 degrades the match to about 0.017 peak-normalized deviation."""
        coefficients = taylor_coefficients(calibrated_fiber, PUMP_NM)
        second = taylor_spectral_density(type_ii_config, coefficients.m, coefficients.k2)
        fourth = taylor_spectral_density(type_ii_config, coefficients.m, coefficients.k2, coefficients.k4)
        assert lobe_deviation(type_ii_density, second) > lobe_deviation(type_ii_density, fourth)
        assert 1e-3 < lobe_deviation(type_ii_density, second) < 0.05

    def test_mirror_symmetry_without_mismatch(self, type_ii_config, calibrated_fiber):
        """Test that M = 0 gives I(Delta) = I(-Delta) exactly."""
        coefficients = taylor_coefficients(calibrated_fiber, PUMP_NM)
        density = taylor_spectral_density(type_ii_config, 0.0, coefficients.k2, coefficients.k4)
        assert np.array_equal(density.values, density.values[::-1])

    def test_analytic_half_maximum(self, type_ii_config):
        """Test FWHM of sinc^2(k2 L Delta^2 / 2) against the closed form."""
        k2 = 2.0e-27
        length = type_ii_config.fiber.length_m
        density = taylor_spectral_density(type_ii_config, 0.0, k2)
        expected = 2.0 * math.sqrt(2.0 * HALF_MAX_SINC2 / (k2 * length)) / (2.0 * math.pi) / 1e12
        assert fwhm_bandwidth(density).frequency_thz == pytest.approx(expected, rel=1e-3)
        assert expected == pytest.approx(26.6, abs=0.1)

    def test_flat_spectrum(self, type_ii_config):
        """Test M = k2 = 0 gives a flat density without a finite FWHM."""
        density = taylor_spectral_density(type_ii_config, 0.0, 0.0)
        assert np.all(density.values == 1.0)
        with pytest.raises(UnboundedBandwidthError):
            fwhm_bandwidth(density)

    def test_central_lobe(self, type_ii_config):
        """Test the lobe mask stops at the first zeros."""
        density = taylor_spectral_density(type_ii_config, 0.0, 2.0e-27)
        mask = central_lobe(density)
        assert mask[density.detuning.size // 2]
        assert np.count_nonzero(np.diff(mask.astype(int))) == 2
        assert np.min(density.values[mask]) < 1e-3


class TestUnboundedBandwidth:
    """Test bandwidth extraction on a truncated grid."""

    def test_narrow_grid(self, calibrated_fiber):
        """Test UnboundedBandwidthError when the grid ends above half maximum."""
        config = SpdcConfig(fiber=calibrated_fiber, process=ProcessType.TYPE_II, pump_nm=PUMP_NM,
                            detuning=detuning_grid(101, 2.0))
        with pytest.raises(UnboundedBandwidthError):
            fwhm_bandwidth(spdc_spectral_density(config))


class TestShgSpectrum:
    """Test SHG curves of the three processes."""

    @pytest.fixture(scope="class")
    def spectrum(self, calibrated_fiber):
        return shg_spectrum(calibrated_fiber, np.linspace(1303.5, 1309.5, 2401))

    def test_weights(self, spectrum):
        """Test the 9:1:4 weights."""
        assert spectrum.weights == {ProcessType.TYPE0: 9.0, ProcessType.TYPE_I: 1.0, ProcessType.TYPE_II: 4.0}
        for process, curve in spectrum.curves.items():
            assert np.max(curve) == pytest.approx(process.shg_weight, rel=1e-3)

    def test_type_ii_peak(self, spectrum):
        """Test the calibrated type-II peak position."""
        assert spectrum.peak_second_harmonic_nm[ProcessType.TYPE_II] == pytest.approx(PUMP_NM, abs=0.05)

    def test_peak_order(self, spectrum):
        """Test the three peaks are separated and ordered."""
        peaks = spectrum.peak_second_harmonic_nm
        assert peaks[ProcessType.TYPE0] < peaks[ProcessType.TYPE_II] < peaks[ProcessType.TYPE_I]
        assert np.allclose(spectrum.second_harmonic_nm, 0.5 * spectrum.fundamental_nm)


class TestTuningCurve:
    """Test type-II tuning loci."""

    def test_degenerate_at_qpm(self, calibrated_fiber):
        """Test that the QPM pump produces a branch through degeneracy."""
        curve = tuning_curve(calibrated_fiber, [PUMP_NM])
        branches = curve.loci(0)
        assert len(branches) >= 1
        assert branches[0].includes_degeneracy

    def test_blue_pump_splits(self, calibrated_fiber):
        """Test a non-degenerate branch for a pump blue of the QPM wavelength."""
        curve = tuning_curve(calibrated_fiber, [652.8])
        branches = curve.loci(0)
        assert branches
        assert any(not b.includes_degeneracy and b.separation_thz > 0.0 for b in branches)
        for branch in branches:
            np.testing.assert_allclose(1.0 / branch.signal_nm + 1.0 / branch.idler_nm, 1.0 / 652.8, rtol=1e-12)
            assert np.all(branch.signal_nm >= branch.idler_nm)

    def test_separation_monotone(self, calibrated_fiber):
        """Test that the signal-idler separation grows strictly as the pump moves blue."""
        pumps = np.linspace(653.25, 652.8, 10)
        curve = tuning_curve(calibrated_fiber, pumps)
        separations = [curve.loci(i)[0].separation_thz for i in range(pumps.size)]
        assert np.all(np.diff(separations) > 0.0)
        assert separations[-1] > 1.5 * separations[0]

    def test_edge_bounds_branch(self, calibrated_fiber):
        """Test that the outer crossing lies just past the last sample above threshold."""
        branch = tuning_curve(calibrated_fiber, [652.8]).loci(0)[0]
        step = branch.abs_detuning[1] - branch.abs_detuning[0]
        assert branch.abs_detuning[-1] <= branch.edge_detuning <= branch.abs_detuning[-1] + step
        assert branch.abs_detuning[0] <= branch.peak_detuning <= branch.abs_detuning[-1]

    def test_red_pump_empty(self, calibrated_fiber):
        """Test that an empty locus is recorded rather than raised."""
        curve = tuning_curve(calibrated_fiber, [653.6])
        assert curve.loci(0) == []

    def test_threshold_validation(self, calibrated_fiber):
        """Test that thresholds outside (0, 1) are rejected."""
        with pytest.raises(InputError):
            tuning_curve(calibrated_fiber, [PUMP_NM], threshold=1.0)
