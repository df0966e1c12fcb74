"""Pytest fixtures for the PPSF source toolkit tests."""

import math

import numpy as np
import pytest

from ..qpm import SpdcConfig, SpectralDensity, calibrate_birefringence, detuning_grid, spdc_spectral_density
from ..tomography import PSI_PLUS, DensityMatrix, mub_settings, werner_state
from ..utils.models import ProcessType, SellmeierModel, StepIndexFiber

PUMP_NM = 653.3
DEGENERATE_NM = 1306.6


@pytest.fixture(scope="session")
def silica():
    """Packaged fused-silica Sellmeier model."""
    return SellmeierModel.fused_silica()


@pytest.fixture(scope="session")
def default_fiber():
    """Packaged uncalibrated fiber (dn = 0)."""
    return StepIndexFiber.default()


@pytest.fixture(scope="session")
def calibrated_dn(default_fiber):
    """Birefringence placing the type-II SHG peak at 653.3 nm."""
    return calibrate_birefringence(default_fiber, PUMP_NM)


@pytest.fixture(scope="session")
def calibrated_fiber(default_fiber, calibrated_dn):
    """Calibrated fiber, revalidated."""
    return StepIndexFiber.model_validate(default_fiber.with_birefringence(calibrated_dn).model_dump())


@pytest.fixture(scope="session")
def type_ii_config(calibrated_fiber):
    """Type-II spectrum inputs at the calibrated QPM pump."""
    return SpdcConfig(fiber=calibrated_fiber, process=ProcessType.TYPE_II, pump_nm=PUMP_NM)


@pytest.fixture(scope="session")
def type_ii_density(type_ii_config):
    """Exact calibrated type-II spectral density."""
    return spdc_spectral_density(type_ii_config)


def make_gaussian_density(sigma: float, points: int = 4097, span_thz: float = 60.0) -> SpectralDensity:
    """exp(-Delta^2 / (2 sigma^2)) on the standard grid; sigma in rad/s."""
    grid = detuning_grid(points, span_thz)
    center = 2.0 * math.pi * 299792458.0 / (DEGENERATE_NM * 1e-9)
    return SpectralDensity.from_unnormalized(grid, np.exp(-grid ** 2 / (2.0 * sigma ** 2)), center)


@pytest.fixture
def gaussian_density():
    """Gaussian spectrum with sigma = 2 pi x 8 THz."""
    return make_gaussian_density(2.0 * math.pi * 8e12)


@pytest.fixture(scope="session")
def psi_plus():
    """(|HV> + |VH>)/sqrt(2) as a density matrix."""
    return DensityMatrix.from_pure(PSI_PLUS)


@pytest.fixture(scope="session")
def werner_095():
    """Werner state with p = 0.95."""
    return werner_state(0.95)


@pytest.fixture(scope="session")
def design_settings():
    """36 analyzer settings operated at their design wavelength."""
    return mub_settings(1550.0, 1550.0, 1550.0)


@pytest.fixture(scope="session")
def oband_settings():
    """36 analyzer settings at the 1330/1290 nm band pair with 1550 nm waveplates."""
    return mub_settings(1330.0, 1290.0, 1550.0)


def random_density(rng: np.random.Generator, weight: float) -> DensityMatrix:
    """Random pure state mixed with a full-rank Wishart-like remainder."""
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    remainder = g @ g.conj().T
    mixed = weight * np.outer(psi, psi.conj()) + (1.0 - weight) * remainder / np.trace(remainder).real
    return DensityMatrix.from_unnormalized(mixed)
