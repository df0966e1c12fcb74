"""
Band-pair polarization states selected by CWDM filter pairs.

Within a band pair the signal is the longer-wavelength photon
(omega_p/2 - Delta, Delta > 0) and the idler its energy-conserving partner.
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from .dispersion import omega_from_wavelength, wavelength_from_omega
from .qpm import detuning_grid, phase_mismatch
from .tomography import DensityMatrix, mix_white_noise
from .utils.errors import InputError
from .utils.models import BandFilter, FilterKind, ProcessType, StepIndexFiber

logger = logging.getLogger(__name__)

# CWDM sets used for polarization tomography; the last idler is the reflection port of the 1370 nm channel
CWDM_BAND_PAIRS: Dict[str, Tuple[BandFilter, BandFilter]] = {
    "1330/1290": (BandFilter(center_nm=1330.0), BandFilter(center_nm=1290.0)),
    "1350/1270": (BandFilter(center_nm=1350.0), BandFilter(center_nm=1270.0)),
    "1370/reflection": (BandFilter(center_nm=1370.0), BandFilter(center_nm=1370.0, kind=FilterKind.REFLECTION)),
}


def conjugate_wavelength(pump_nm: float, wavelength_nm):
    """Energy-conserving partner wavelength 1 / (1/lambda_p - 1/lambda)."""
    lam = np.asarray(wavelength_nm, dtype=float)
    if pump_nm <= 0.0 or np.any(lam <= pump_nm):
        raise InputError("Wavelength must exceed the pump wavelength")
    partner = 1.0 / (1.0 / pump_nm - 1.0 / lam)
    return float(partner) if partner.ndim == 0 else partner


def _amplitude(x: np.ndarray) -> np.ndarray:
    return np.sinc(x / np.pi) * np.exp(1j * x)


def _orderings(fiber: StepIndexFiber, pump_nm: float, detuning: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Amplitudes of signal-H/idler-V and signal-V/idler-H emission, sinc(x) e^{ix}."""
    omega0 = 0.5 * float(omega_from_wavelength(pump_nm))
    omega_s = omega0 - detuning
    omega_i = omega0 + detuning
    half_length = 0.5 * fiber.length_m
    x_hv = half_length * phase_mismatch(fiber, ProcessType.TYPE_II, omega_i, omega_s)
    x_vh = half_length * phase_mismatch(fiber, ProcessType.TYPE_II, omega_s, omega_i)
    return _amplitude(x_hv), _amplitude(x_vh)


def _band_mask(pump_nm: float, detuning: np.ndarray, signal_filter: BandFilter,
               idler_filter: BandFilter) -> np.ndarray:
    omega0 = 0.5 * float(omega_from_wavelength(pump_nm))
    signal_nm = wavelength_from_omega(omega0 - detuning)
    idler_nm = wavelength_from_omega(omega0 + detuning)
    mask = (detuning > 0.0) & signal_filter.transmits(signal_nm) & idler_filter.transmits(idler_nm)
    if not np.any(mask):
        raise InputError(
            f"No conjugate pair passes the {signal_filter.center_nm} nm / {idler_filter.center_nm} nm filters",
        )
    return mask


def band_pair_state(fiber: StepIndexFiber, pump_nm: float, signal_filter: BandFilter, idler_filter: BandFilter,
                    detuning: Optional[np.ndarray] = None) -> DensityMatrix:
    """
    Polarization state of the pairs transmitted by a filter pair.

    Each transmitted detuning contributes the pure state a|HV> + b|VH>;
    contributions add incoherently.

    Args:
        fiber: Calibrated fiber
        pump_nm: Pump wavelength
        signal_filter: Filter on the longer-wavelength arm
        idler_filter: Filter on the shorter-wavelength arm
        detuning: Detuning grid (rad/s); defaults to the standard grid

    Returns:
        Normalized DensityMatrix in the {HH, HV, VH, VV} basis

    Raises:
        InputError: the filters transmit no conjugate pair
    """
    grid = detuning_grid() if detuning is None else np.asarray(detuning, dtype=float)
    mask = _band_mask(pump_nm, grid, signal_filter, idler_filter)
    a, b = _orderings(fiber, pump_nm, grid[mask])
    psi = np.zeros((a.size, 4), dtype=complex)
    psi[:, 1] = a
    psi[:, 2] = b
    rho = DensityMatrix.from_unnormalized(psi.T @ psi.conj())
    logger.debug(f"Band pair {signal_filter.center_nm}/{idler_filter.center_nm} nm: {a.size} detunings")
    return rho


def band_pair_rate(fiber: StepIndexFiber, pump_nm: float, signal_filter: BandFilter, idler_filter: BandFilter,
                   detuning: Optional[np.ndarray] = None) -> float:
    """Fraction of the emitted pairs transmitted by the filter pair."""
    grid = detuning_grid() if detuning is None else np.asarray(detuning, dtype=float)
    mask = _band_mask(pump_nm, grid, signal_filter, idler_filter)
    a, b = _orderings(fiber, pump_nm, grid)
    weight = np.abs(a) ** 2 + np.abs(b) ** 2
    return float(np.sum(weight[mask]) / np.sum(weight))


def noisy_band_pair_state(fiber: StepIndexFiber, pump_nm: float, signal_filter: BandFilter,
                          idler_filter: BandFilter, visibility: float,
                          detuning: Optional[np.ndarray] = None) -> DensityMatrix:
    """Band-pair state degraded by white noise of the given visibility."""
    return mix_white_noise(band_pair_state(fiber, pump_nm, signal_filter, idler_filter, detuning), visibility)


__all__ = [
    "CWDM_BAND_PAIRS",
    "conjugate_wavelength",
    "band_pair_state",
    "band_pair_rate",
    "noisy_band_pair_state",
]
