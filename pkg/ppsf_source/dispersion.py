"""
Material and modal dispersion of the weakly birefringent step-index PPSF.

Wavelengths are in nm for fiber-level functions and in um for Sellmeier
models; angular frequencies are in rad/s and wavenumbers in rad/m.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple, Union

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.optimize import bisect, brentq
from scipy.special import j0, j1, jn_zeros, k0e, k1e

from .utils.errors import CutoffError, NotFoundError, NumericalError
from .utils.models import BirefringenceModel, PolarizationAxis, SellmeierModel, StepIndexFiber

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# First zero of J0: LP11 cutoff, upper edge of single-mode operation.
SINGLE_MODE_CUTOFF = float(jn_zeros(0, 1)[0])

DEFAULT_FD_STEP = 2.0 * math.pi * 1.0e12
DEFAULT_HIGHER_ORDER_STEP = 2.0 * math.pi * 3.0e12
DEFAULT_BISECTION_TOL = 1e-15

_B_MARGIN = 1e-12
_MAX_BISECTIONS = 200


@dataclass
class ModalDispersion:
    """Sampled modal index and group/dispersion parameters of one axis."""
    axis: PolarizationAxis
    wavelengths_nm: np.ndarray
    n_eff: np.ndarray
    beta1: np.ndarray
    k2: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        """Validate grid and sample shapes."""
        lengths = {len(self.wavelengths_nm), len(self.n_eff), len(self.beta1), len(self.k2)}
        if len(lengths) != 1:
            raise ValueError("ModalDispersion arrays must share one length")
        if np.any(np.diff(self.wavelengths_nm) <= 0.0):
            raise ValueError("wavelength grid must be strictly increasing")


def omega_from_wavelength(wavelength_nm: ArrayLike) -> ArrayLike:
    """Angular frequency (rad/s) of a vacuum wavelength in nm."""
    return 2.0 * math.pi * SPEED_OF_LIGHT / (np.asarray(wavelength_nm, dtype=float) * 1e-9)


def wavelength_from_omega(omega: ArrayLike) -> ArrayLike:
    """Vacuum wavelength (nm) of an angular frequency in rad/s."""
    return 2.0 * math.pi * SPEED_OF_LIGHT / np.asarray(omega, dtype=float) * 1e9


def refractive_index(model: SellmeierModel, wavelength_um: ArrayLike) -> ArrayLike:
    """
    Material refractive index from a Sellmeier model.

    Args:
        model: Sellmeier coefficients and validity range
        wavelength_um: Vacuum wavelength(s) in um

    Returns:
        Refractive index

    Raises:
        DomainError: outside the valid range or at a resonance pole
    """
    return model.index(wavelength_um)


def birefringence_offset(fiber: StepIndexFiber, wavelength_nm: ArrayLike) -> ArrayLike:
    """
    Phase-index offset of the slow axis.

    The uniform model returns dn everywhere. The group-matched model returns
    dn (1 + (x - 1)^4) / x with x = lambda_ref / lambda: the offset wavenumber
    is dn omega_ref / c (1 + (omega/omega_ref - 1)^4), which equals dn at the
    reference and at half of it and has zero first to third frequency
    derivatives at the reference.

    Args:
        fiber: Fiber description
        wavelength_nm: Vacuum wavelength(s) in nm

    Returns:
        Offset, scalar or array matching the input
    """
    lam = np.asarray(wavelength_nm, dtype=float)
    if fiber.birefringence_model == BirefringenceModel.UNIFORM:
        return fiber.birefringence_dn
    x = fiber.birefringence_reference_nm / lam
    offset = fiber.birefringence_dn * (1.0 + (x - 1.0) ** 4) / x
    return float(offset) if offset.ndim == 0 else offset


def cladding_index(fiber: StepIndexFiber, wavelength_nm: ArrayLike,
                   axis: PolarizationAxis = PolarizationAxis.H) -> ArrayLike:
    """Cladding index seen by the given axis."""
    lam_um = np.asarray(wavelength_nm) / 1000.0
    return _axis_offset(fiber, axis, wavelength_nm) + fiber.cladding_material.index(lam_um)


def core_index(fiber: StepIndexFiber, wavelength_nm: ArrayLike,
               axis: PolarizationAxis = PolarizationAxis.H) -> ArrayLike:
    """Core index seen by the given axis."""
    lam_um = np.asarray(wavelength_nm) / 1000.0
    return _axis_offset(fiber, axis, wavelength_nm) + fiber.core_material.index(lam_um)


def v_number(fiber: StepIndexFiber, wavelength_nm: ArrayLike,
             axis: PolarizationAxis = PolarizationAxis.H) -> ArrayLike:
    """Normalized frequency V = (2 pi a / lambda) sqrt(n_core^2 - n_clad^2)."""
    n1 = core_index(fiber, wavelength_nm, axis)
    n2 = cladding_index(fiber, wavelength_nm, axis)
    return 2.0 * math.pi * fiber.core_radius_um / (np.asarray(wavelength_nm) / 1000.0) * np.sqrt(n1 ** 2 - n2 ** 2)


def _axis_offset(fiber: StepIndexFiber, axis: PolarizationAxis, wavelength_nm: ArrayLike) -> ArrayLike:
    return birefringence_offset(fiber, wavelength_nm) if axis == PolarizationAxis.V else 0.0


def _characteristic(b: np.ndarray, v: np.ndarray) -> np.ndarray:
    """LP01 eigenvalue equation u J1(u)/J0(u) - w K1(w)/K0(w)."""
    u = v * np.sqrt(1.0 - b)
    w = v * np.sqrt(b)
    # Scaled Bessel K: the exponential factors cancel in the ratio.
    return u * j1(u) / j0(u) - w * k1e(w) / k0e(w)


def _solve_normalized_index(v: np.ndarray, tol: float) -> np.ndarray:
    """Bisect the normalized propagation constant b in (0, 1) for every V."""
    lo = np.where(v > SINGLE_MODE_CUTOFF, 1.0 - (SINGLE_MODE_CUTOFF / v) ** 2, 0.0) + _B_MARGIN
    hi = np.full_like(v, 1.0 - _B_MARGIN)
    f_lo = _characteristic(lo, v)
    f_hi = _characteristic(hi, v)
    bad = ~((f_lo > 0.0) & (f_hi < 0.0))
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise NumericalError(
            "LP01 root is not bracketed",
            {"v_number": float(v[idx]), "b_bracket": [float(lo[idx]), float(hi[idx])],
             "f_bracket": [float(f_lo[idx]), float(f_hi[idx])]},
        )
    for iteration in range(_MAX_BISECTIONS):
        if np.max(hi - lo) <= tol:
            break
        mid = 0.5 * (lo + hi)
        above = _characteristic(mid, v) > 0.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    logger.debug(f"LP01 bisection finished after {iteration} iterations for {v.size} points")
    return 0.5 * (lo + hi)


def lp01_neff(fiber: StepIndexFiber, wavelength_nm: ArrayLike,
              axis: PolarizationAxis = PolarizationAxis.H,
              tol: float = DEFAULT_BISECTION_TOL) -> ArrayLike:
    """
    Effective index of the LP01 mode in the weakly guiding approximation.

    Under the uniform model the slow (V) axis sees both core and cladding
    raised by birefringence_dn before the eigenvalue equation is solved. Under
    the group-matched model the slow-axis index is the fast-axis index shifted
    rigidly by birefringence_offset.

    Args:
        fiber: Fiber description
        wavelength_nm: Vacuum wavelength(s) in nm
        axis: Polarization axis
        tol: Bisection tolerance on the normalized propagation constant b

    Returns:
        Effective index, scalar or array matching the input

    Raises:
        DomainError: wavelength outside the material models
        CutoffError: no guided solution (V <= 0)
        NumericalError: root not bracketed
    """
    if axis == PolarizationAxis.V and fiber.birefringence_model == BirefringenceModel.GROUP_MATCHED:
        return lp01_neff(fiber, wavelength_nm, PolarizationAxis.H, tol) + birefringence_offset(fiber, wavelength_nm)
    lam = np.atleast_1d(np.asarray(wavelength_nm, dtype=float))
    n1 = np.atleast_1d(core_index(fiber, lam, axis))
    n2 = np.atleast_1d(cladding_index(fiber, lam, axis))
    delta2 = n1 ** 2 - n2 ** 2
    if np.any(delta2 <= 0.0):
        raise CutoffError("Core index does not exceed cladding index; no guided LP01 mode",
                          {"wavelength_nm": lam[delta2 <= 0.0].tolist()})
    v = 2.0 * math.pi * fiber.core_radius_um / (lam / 1000.0) * np.sqrt(delta2)
    b = _solve_normalized_index(v, tol)
    n_eff = np.sqrt(n2 ** 2 + b * delta2)
    return float(n_eff[0]) if np.ndim(wavelength_nm) == 0 else n_eff


def wavenumber(fiber: StepIndexFiber, wavelength_nm: ArrayLike,
               axis: PolarizationAxis = PolarizationAxis.H) -> ArrayLike:
    """Propagation constant k = 2 pi n_eff / lambda in rad/m."""
    return 2.0 * math.pi * lp01_neff(fiber, wavelength_nm, axis) / (np.asarray(wavelength_nm, dtype=float) * 1e-9)


def wavenumber_at(fiber: StepIndexFiber, omega: ArrayLike,
                  axis: PolarizationAxis = PolarizationAxis.H) -> ArrayLike:
    """Propagation constant as a function of angular frequency."""
    return wavenumber(fiber, wavelength_from_omega(omega), axis)


def material_wavenumber(model: SellmeierModel, wavelength_nm: ArrayLike) -> ArrayLike:
    """Bulk plane-wave wavenumber 2 pi n / lambda in rad/m."""
    lam = np.asarray(wavelength_nm, dtype=float)
    return 2.0 * math.pi * model.index(lam / 1000.0) / (lam * 1e-9)


Medium = Union[StepIndexFiber, SellmeierModel]


def _k_of_omega(medium: Medium, axis: PolarizationAxis) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(medium, SellmeierModel):
        return lambda omega: np.atleast_1d(material_wavenumber(medium, wavelength_from_omega(omega)))
    return lambda omega: np.atleast_1d(wavenumber_at(medium, omega, axis))


def _stencil(medium: Medium, axis: PolarizationAxis, omega0: float, step: float, offsets) -> np.ndarray:
    if step <= 0.0:
        raise ValueError(f"Finite-difference step must be positive, got {step}")
    return _k_of_omega(medium, axis)(omega0 + step * np.asarray(offsets, dtype=float))


def dispersion_derivatives(medium: Medium, wavelength_nm: float,
                           axis: PolarizationAxis = PolarizationAxis.H,
                           step: float = DEFAULT_FD_STEP) -> Tuple[float, float]:
    """
    Group delay and chromatic dispersion by central differences in omega.

    Args:
        medium: Fiber (modal) or Sellmeier model (bulk)
        wavelength_nm: Expansion wavelength in nm
        axis: Polarization axis (ignored for bulk)
        step: Angular-frequency step in rad/s

    Returns:
        (beta1 in s/m, k2 in s^2/m)

    Raises:
        DomainError: a stencil point leaves the valid range
    """
    omega0 = float(omega_from_wavelength(wavelength_nm))
    k_minus, k_zero, k_plus = _stencil(medium, axis, omega0, step, (-1.0, 0.0, 1.0))
    beta1 = (k_plus - k_minus) / (2.0 * step)
    k2 = (k_plus - 2.0 * k_zero + k_minus) / step ** 2
    return float(beta1), float(k2)


def higher_order_dispersion(medium: Medium, wavelength_nm: float,
                            axis: PolarizationAxis = PolarizationAxis.H,
                            step: float = DEFAULT_HIGHER_ORDER_STEP) -> Tuple[float, float]:
    """Third- and fourth-order dispersion (s^3/m, s^4/m) from a five-point stencil."""
    omega0 = float(omega_from_wavelength(wavelength_nm))
    km2, km1, k0, kp1, kp2 = _stencil(medium, axis, omega0, step, (-2.0, -1.0, 0.0, 1.0, 2.0))
    k3 = (kp2 - 2.0 * kp1 + 2.0 * km1 - km2) / (2.0 * step ** 3)
    k4 = (kp2 - 4.0 * kp1 + 6.0 * k0 - 4.0 * km1 + km2) / step ** 4
    return float(k3), float(k4)


def group_velocity_mismatch(fiber: StepIndexFiber, wavelength_nm: float,
                            step: float = DEFAULT_FD_STEP) -> float:
    """M = beta1(H) - beta1(V) in s/m."""
    beta1_h, _ = dispersion_derivatives(fiber, wavelength_nm, PolarizationAxis.H, step)
    beta1_v, _ = dispersion_derivatives(fiber, wavelength_nm, PolarizationAxis.V, step)
    return beta1_h - beta1_v


def zero_dispersion_wavelength(medium: Medium,
                               axis: PolarizationAxis = PolarizationAxis.H,
                               bracket_nm: Tuple[float, float] = (1200.0, 1450.0),
                               tol_nm: float = 0.01,
                               step: float = DEFAULT_FD_STEP) -> float:
    """
    Wavelength (nm) where k2 changes sign, by bisection.

    Raises:
        NotFoundError: k2 has the same sign at both bracket ends
    """
    def k2_at(lam: float) -> float:
        return dispersion_derivatives(medium, lam, axis, step)[1]

    low, high = bracket_nm
    f_low, f_high = k2_at(low), k2_at(high)
    if f_low * f_high > 0.0:
        raise NotFoundError(
            f"k2 does not change sign in [{low}, {high}] nm",
            {"k2_low": f_low, "k2_high": f_high, "bracket_nm": [low, high]},
        )
    root = bisect(k2_at, low, high, xtol=tol_nm)
    logger.debug(f"Zero-dispersion wavelength {root:.3f} nm in [{low}, {high}] nm")
    return float(root)


def modal_dispersion(fiber: StepIndexFiber, axis: PolarizationAxis,
                     wavelengths_nm: np.ndarray, step: float = DEFAULT_FD_STEP) -> ModalDispersion:
    """Sample n_eff, beta1 and k2 of one axis on a wavelength grid."""
    lam = np.asarray(wavelengths_nm, dtype=float)
    n_eff = np.atleast_1d(lp01_neff(fiber, lam, axis))
    derivs = np.array([dispersion_derivatives(fiber, w, axis, step) for w in lam])
    n_clad = np.atleast_1d(cladding_index(fiber, lam, axis))
    n_core = np.atleast_1d(core_index(fiber, lam, axis))
    if np.any(n_eff <= n_clad) or np.any(n_eff >= n_core):
        raise NumericalError("n_eff left the (n_clad, n_core) interval", {"axis": axis.value})
    return ModalDispersion(
        axis=axis,
        wavelengths_nm=lam,
        n_eff=n_eff,
        beta1=derivs[:, 0],
        k2=derivs[:, 1],
        metadata={"fiber_id": fiber.fiber_id, "step_rad_per_s": step},
    )


def calibrate_core_radius(fiber: StepIndexFiber, mismatch: Callable[[StepIndexFiber], float],
                          bracket_um: Tuple[float, float] = (2.5, 4.0), xtol_um: float = 1e-9) -> float:
    """
    Core radius that zeroes a phase-mismatch functional.

    Args:
        fiber: Template fiber (radius replaced during the search)
        mismatch: Function of a fiber returning a mismatch in rad/m
        bracket_um: Search interval for the radius

    Returns:
        Core radius in um

    Raises:
        NumericalError: no sign change inside the bracket
    """
    def residual(radius: float) -> float:
        return mismatch(fiber.model_copy(update={"core_radius_um": radius}))

    low, high = bracket_um
    f_low, f_high = residual(low), residual(high)
    if f_low * f_high > 0.0:
        raise NumericalError("Core-radius calibration is not bracketed",
                             {"bracket_um": [low, high], "residuals": [f_low, f_high]})
    radius = brentq(residual, low, high, xtol=xtol_um)
    logger.info(f"Calibrated core radius: {radius:.6f} um")
    return float(radius)


__all__ = [
    "ModalDispersion",
    "SINGLE_MODE_CUTOFF",
    "DEFAULT_FD_STEP",
    "DEFAULT_HIGHER_ORDER_STEP",
    "omega_from_wavelength",
    "wavelength_from_omega",
    "refractive_index",
    "birefringence_offset",
    "cladding_index",
    "core_index",
    "v_number",
    "lp01_neff",
    "wavenumber",
    "wavenumber_at",
    "material_wavenumber",
    "dispersion_derivatives",
    "higher_order_dispersion",
    "group_velocity_mismatch",
    "zero_dispersion_wavelength",
    "modal_dispersion",
    "calibrate_core_radius",
]
