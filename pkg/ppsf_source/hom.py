"""
Hong-Ou-Mandel interference of the biphotons.

Delay convention: tau is the relative H/V delay in one interferometer arm and
the kernel is e^{-i 2 Delta tau}, so

    p(tau) = 1 - V Re[ int S(Delta) e^{-i 2 Delta tau} dDelta / int S(Delta) dDelta ].

Dip widths are the FWHM of 1 - p / plateau, in femtoseconds.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, NamedTuple, Optional

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, curve_fit

from .qpm import SpectralDensity, fwhm_bandwidth
from .utils.errors import DipFitError, InputError, NoDipError, NumericalError
from .utils.models import DipFit

logger = logging.getLogger(__name__)

FS = 1e-15
FIT_MODELS = ("fourier_of_density", "gaussian", "sinc2")
TRANSFORM_FAMILIES = ("gaussian", "top_hat", "sinc2", "density")
SYMMETRY_TOL = 1e-6
MIN_SCAN_POINTS = 10
_SPLINE_POINTS = 8001
_SPLINE_SPAN = 20.0  # dip FWHMs covered by the density-transform spline
_PROFILE_CHUNK = 512  # delays per cosine block
_GAUSSIAN_FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
_SINC2_HALF_WIDTH = 2.0 * 1.3915573782515103  # sinc^2(a Delta) FWHM is this / a


@dataclass
class DelayScan:
    """Plateau-normalized coincidence rate versus delay."""
    delays_fs: np.ndarray
    coincidence: np.ndarray
    counts: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    integration_s: Optional[float] = None
    density: Optional[SpectralDensity] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        """Validate shapes and sign."""
        self.delays_fs = np.asarray(self.delays_fs, dtype=float)
        self.coincidence = np.asarray(self.coincidence, dtype=float)
        if self.delays_fs.shape != self.coincidence.shape or self.delays_fs.ndim != 1:
            raise ValueError("delays and coincidence must be 1-D arrays of equal length")
        if np.any(self.coincidence < 0.0):
            raise ValueError("coincidence rates must be non-negative")


class TransformLimit(NamedTuple):
    """Spectral FWHM implied by a dip width."""
    bandwidth_nm: float
    bandwidth_thz: float


def dip_profile(density: SpectralDensity, delays_s: np.ndarray) -> np.ndarray:
    """Re[int S e^{-i 2 Delta tau}] / int S for delays in seconds."""
    delta = density.detuning
    weights = density.values
    norm = trapezoid(weights, delta)
    tau = np.atleast_1d(np.asarray(delays_s, dtype=float))
    profile = np.empty(tau.shape)
    for start in range(0, tau.size, _PROFILE_CHUNK):
        block = slice(start, start + _PROFILE_CHUNK)
        kernel = np.cos(2.0 * np.outer(tau[block], delta))
        profile[block] = trapezoid(kernel * weights, delta, axis=1) / norm
    return profile


def hom_scan(density: SpectralDensity, delays_fs: np.ndarray, visibility_cap: float = 1.0) -> DelayScan:
    """
    Noiseless coincidence scan of a biphoton spectrum.

    Args:
        density: Spectral density (ideally symmetric in Delta)
        delays_fs: Delay grid in femtoseconds
        visibility_cap: Interferometer visibility V in [0, 1]

    Returns:
        DelayScan with plateau 1; an asymmetric density is recorded in metadata
    """
    if not 0.0 <= visibility_cap <= 1.0:
        raise InputError(f"Visibility cap must lie in [0, 1], got {visibility_cap}")
    delays = np.asarray(delays_fs, dtype=float)
    metadata: Dict[str, Any] = {"visibility_cap": visibility_cap}
    asymmetry = density.asymmetry()
    if asymmetry > SYMMETRY_TOL:
        metadata["warning"] = f"density is not symmetric in detuning (max deviation {asymmetry:.3e})"
        logger.warning(f"HOM scan of an asymmetric density (max deviation {asymmetry:.3e}); dip may not reach V")
    coincidence = 1.0 - visibility_cap * dip_profile(density, delays * FS)
    return DelayScan(delays_fs=delays, coincidence=np.clip(coincidence, 0.0, None), density=density,
                     metadata=metadata)


def poisson_scan(scan: DelayScan, plateau_counts: float, seed: int = 0, integration_s: float = 1.0) -> DelayScan:
    """Independent Poisson counts per delay with plateau_counts expected on the plateau."""
    if plateau_counts <= 0.0:
        raise InputError(f"plateau_counts must be positive, got {plateau_counts}")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(plateau_counts * scan.coincidence)
    return DelayScan(
        delays_fs=scan.delays_fs,
        coincidence=counts / plateau_counts,
        counts=counts,
        sigma=np.sqrt(np.maximum(counts, 1)) / plateau_counts,
        integration_s=integration_s,
        density=scan.density,
        metadata=dict(scan.metadata, plateau_counts=plateau_counts, seed=seed),
    )


def _half_width(profile: Callable[[float], float], guess: float) -> float:
    """Smallest tau > 0 with profile(tau) = 1/2, searching outward from the guess."""
    low, high = 0.0, guess
    for _ in range(200):
        if profile(high) < 0.5:
            return brentq(lambda t: profile(t) - 0.5, low, high, xtol=1e-12 * high, rtol=1e-14)
        low, high = high, 2.0 * high
    raise NumericalError("Dip profile never falls to half its depth")


def hom_dip_fwhm(density: SpectralDensity) -> float:
    """FWHM (fs) of the noiseless dip of a density."""
    delta = density.detuning
    above = delta[density.values >= 0.5]
    spread = max(float(np.max(above) - np.min(above)), float(delta[1] - delta[0]))
    guess = 0.25 / spread
    half = _half_width(lambda t: float(dip_profile(density, t)[0]), guess)
    return 2.0 * half / FS


# Dip models; delays and widths in fs

def _gaussian_dip(tau, offset, visibility, center, width):
    return offset * (1.0 - visibility * np.exp(-4.0 * math.log(2.0) * (tau - center) ** 2 / width ** 2))


def _triangle_dip(tau, offset, visibility, center, width):
    return offset * (1.0 - visibility * np.maximum(0.0, 1.0 - np.abs(tau - center) / width))


class _DensityDip:
    """Dip of a density's own transform, stretched in time by a factor s."""

    def __init__(self, density: SpectralDensity):
        self.fwhm_fs = hom_dip_fwhm(density)
        self.span_fs = _SPLINE_SPAN * self.fwhm_fs
        t = np.linspace(0.0, self.span_fs, _SPLINE_POINTS)
        self.spline = CubicSpline(t, dip_profile(density, t * FS))

    def transform(self, t: np.ndarray) -> np.ndarray:
        t = np.abs(t)
        return np.where(t <= self.span_fs, self.spline(np.minimum(t, self.span_fs)), 0.0)

    def __call__(self, tau, offset, visibility, center, stretch):
        return offset * (1.0 - visibility * self.transform(stretch * (tau - center)))


def _noise_level(scan: DelayScan) -> float:
    if scan.sigma is not None:
        return float(np.median(scan.sigma))
    second = np.diff(scan.coincidence, 2)
    mad = np.median(np.abs(second - np.median(second)))
    return float(1.4826 * mad / math.sqrt(6.0))


def _plateau(scan: DelayScan) -> float:
    tau = scan.delays_fs
    outer = np.abs(tau - np.median(tau)) >= 0.4 * (np.max(tau) - np.min(tau))
    return float(np.median(scan.coincidence[outer])) if np.any(outer) else float(np.max(scan.coincidence))


def fit_dip(scan: DelayScan, model: str = "fourier_of_density",
            density: Optional[SpectralDensity] = None) -> DipFit:
    """
    Least-squares dip fit.

    Args:
        scan: Delay scan spanning plateau and dip (at least 10 points)
        model: fourier_of_density, gaussian or sinc2 (triangular dip)
        density: Spectrum for fourier_of_density; defaults to the scan's own

    Returns:
        DipFit with visibility, FWHM, center and 1-sigma errors

    Raises:
        InputError: too few points, unknown model or missing density
        NoDipError: depth not above 3x the noise level
        DipFitError: the fit did not converge
    """
    if model not in FIT_MODELS:
        raise InputError(f"Unknown dip model {model!r}; expected one of {', '.join(FIT_MODELS)}")
    tau, y = scan.delays_fs, scan.coincidence
    if tau.size < MIN_SCAN_POINTS:
        raise InputError(f"Dip fit needs at least {MIN_SCAN_POINTS} points, got {tau.size}")

    plateau = _plateau(scan)
    depth = plateau - float(np.min(y))
    noise = _noise_level(scan)
    if depth <= 3.0 * noise:
        raise NoDipError(f"Dip depth {depth:.3g} is within 3x the noise level {noise:.3g}",
                         {"depth": depth, "noise": noise})

    center = float(tau[np.argmin(y)])
    below = tau[y <= plateau - 0.5 * depth]
    width = max(float(np.max(below) - np.min(below)), float(np.min(np.diff(tau))))
    lower = [0.0, 0.0, float(np.min(tau)), 0.0]
    upper = [np.inf, 1.0, float(np.max(tau)), np.inf]

    if model == "fourier_of_density":
        source = density if density is not None else scan.density
        if source is None:
            raise InputError("fourier_of_density needs the spectral density of the scan")
        function = _DensityDip(source)
        p0 = [plateau, min(depth / plateau, 0.999), center, function.fwhm_fs / width]
        lower[3], upper[3] = 0.1, 10.0
        p0[3] = float(np.clip(p0[3], 0.11, 9.9))
    elif model == "gaussian":
        function = _gaussian_dip
        p0 = [plateau, min(depth / plateau, 0.999), center, width]
    else:
        function = _triangle_dip
        p0 = [plateau, min(depth / plateau, 0.999), center, width]

    try:
        params, covariance = curve_fit(
            function, tau, y, p0=p0, sigma=scan.sigma, absolute_sigma=scan.sigma is not None,
            bounds=(lower, upper), maxfev=20000,
        )
    except (RuntimeError, ValueError) as e:
        raise DipFitError(f"{model} dip fit did not converge: {e}", {"p0": p0}) from e

    residuals = y - function(tau, *params)
    if scan.sigma is not None:
        residuals = residuals / scan.sigma
    errors = np.sqrt(np.diag(covariance))
    if not np.all(np.isfinite(errors)):
        raise DipFitError(f"{model} dip fit has an undetermined covariance",
                          {"params": params.tolist(), "residual_norm": float(np.linalg.norm(residuals))})

    offset, visibility, center, shape = params
    if model == "fourier_of_density":
        width_fs = function.fwhm_fs / shape
        width_err = function.fwhm_fs * errors[3] / shape ** 2
    else:
        width_fs, width_err = shape, errors[3]
    fit = DipFit(
        model=model,
        visibility=float(np.clip(visibility, 0.0, 1.0)),
        width_fs=float(width_fs),
        center_fs=float(center),
        plateau=float(offset),
        visibility_err=float(errors[1]),
        width_err_fs=float(width_err),
        center_err_fs=float(errors[2]),
        residual_norm=float(np.linalg.norm(residuals)),
    )
    logger.info(f"{model} fit: V={fit.visibility:.4f}+-{fit.visibility_err:.1e}, "
                f"FWHM={fit.width_fs:.2f}+-{fit.width_err_fs:.2f} fs")
    return fit


# Transform limit

def _unit_profile(family: str, density: Optional[SpectralDensity]) -> Callable[[float], float]:
    """Dip profile D(tau) of a spectrum with unit FWHM (rad/s), tau in s."""
    if family == "gaussian":
        sigma = 1.0 / _GAUSSIAN_FWHM_TO_SIGMA
        return lambda t: math.exp(-2.0 * sigma ** 2 * t ** 2)
    if family == "top_hat":
        return lambda t: math.sin(t) / t if t != 0.0 else 1.0
    if family == "sinc2":
        return lambda t: max(0.0, 1.0 - abs(t) / _SINC2_HALF_WIDTH)
    if density is None:
        raise InputError("The density family needs a spectral density")
    width = fwhm_bandwidth(density)
    spectral_fwhm = width.upper_detuning - width.lower_detuning
    return lambda t: float(dip_profile(density, t / spectral_fwhm)[0])


def transform_limited_bandwidth(dip_width_fs: float, center_nm: float, family: str = "top_hat",
                                density: Optional[SpectralDensity] = None) -> TransformLimit:
    """
    Spectral FWHM whose dip FWHM equals the given width.

    The dip FWHM of a shape family scales as 1 / (spectral FWHM); the unit-width
    dip is solved numerically and inverted.

    Args:
        dip_width_fs: Dip FWHM in femtoseconds
        center_nm: Degenerate wavelength for the nm conversion
        family: gaussian, top_hat, sinc2 or density (the shape of the given density)
        density: Required by the density family

    Raises:
        InputError: non-positive width or unknown family
        NumericalError: half-depth bracket not found
    """
    if dip_width_fs <= 0.0:
        raise InputError(f"Dip width must be positive, got {dip_width_fs}")
    if family not in TRANSFORM_FAMILIES:
        raise InputError(f"Unknown family {family!r}; expected one of {', '.join(TRANSFORM_FAMILIES)}")
    unit_dip_fwhm = 2.0 * _half_width(_unit_profile(family, density), 0.5)
    spectral_fwhm = unit_dip_fwhm / (dip_width_fs * FS)
    omega0 = 2.0 * math.pi * SPEED_OF_LIGHT / (center_nm * 1e-9)
    edges_nm = 2.0 * math.pi * SPEED_OF_LIGHT / (omega0 + np.array([-0.5, 0.5]) * spectral_fwhm) * 1e9
    result = TransformLimit(
        bandwidth_nm=float(edges_nm[0] - edges_nm[1]),
        bandwidth_thz=spectral_fwhm / (2.0 * math.pi) / 1e12,
    )
    logger.debug(f"{family} transform limit of {dip_width_fs} fs: {result.bandwidth_nm:.2f} nm")
    return result


__all__ = [
    "FIT_MODELS",
    "TRANSFORM_FAMILIES",
    "DelayScan",
    "TransformLimit",
    "dip_profile",
    "hom_scan",
    "poisson_scan",
    "hom_dip_fwhm",
    "fit_dip",
    "transform_limited_bandwidth",
]
