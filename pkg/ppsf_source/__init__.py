"""PPSF source toolkit - simulations of a broadband polarization-entangled photon-pair source in poled silica fiber."""

from .settings import Settings, load_settings
from .dispersion import lp01_neff, dispersion_derivatives, zero_dispersion_wavelength
from .qpm import (
    SpdcConfig,
    SpectralDensity,
    calibrate_birefringence,
    spdc_spectral_density,
    taylor_spectral_density,
    shg_spectrum,
    tuning_curve,
    fwhm_bandwidth,
)
from .hom import hom_scan, fit_dip, transform_limited_bandwidth
from .tomography import (
    DensityMatrix,
    projector,
    born_probability,
    simulate_counts,
    linear_inversion,
    mle_reconstruct,
    concurrence,
    fidelity_to_pure,
    uncertainty_mc,
    best_maximally_entangled_fidelity,
)
from .utils.models import BirefringenceModel, ExperimentConfig, ProcessType, StepIndexFiber

__version__ = "1.0.0"
__description__ = "Dispersion, QPM, HOM and tomography simulations of a PPSF biphoton source"

__all__ = [
    "Settings",
    "load_settings",
    "lp01_neff",
    "dispersion_derivatives",
    "zero_dispersion_wavelength",
    "SpdcConfig",
    "SpectralDensity",
    "calibrate_birefringence",
    "spdc_spectral_density",
    "taylor_spectral_density",
    "shg_spectrum",
    "tuning_curve",
    "fwhm_bandwidth",
    "hom_scan",
    "fit_dip",
    "transform_limited_bandwidth",
    "DensityMatrix",
    "projector",
    "born_probability",
    "simulate_counts",
    "linear_inversion",
    "mle_reconstruct",
    "concurrence",
    "fidelity_to_pure",
    "uncertainty_mc",
    "best_maximally_entangled_fidelity",
    "BirefringenceModel",
    "ExperimentConfig",
    "ProcessType",
    "StepIndexFiber",
]
