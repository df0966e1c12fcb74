"""
Pydantic models for fiber descriptions, measurement settings and experiment configs.
"""

import json
import math
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import DomainError, InputError

SELLMEIER_DATA_FILE = "fused_silica_sellmeier.json"
DEFAULT_FIBER_FILE = "ppsf_fiber.json"


def _data_path(name: str) -> Path:
    """Locate a file shipped in the package data directory."""
    return Path(str(resources.files("ppsf_source") / "data" / name))


class PolarizationAxis(str, Enum):
    """Fiber polarization eigenaxes."""
    H = "H"  # fast
    V = "V"  # slow, carries +birefringence_dn


class BirefringenceModel(str, Enum):
    """Wavelength dependence of the slow-axis index offset."""
    UNIFORM = "uniform"  # constant dn on core and cladding, solved per axis
    GROUP_MATCHED = "group_matched"  # dn at the reference and its half, no group offset at the reference


class ProcessType(str, Enum):
    """Poled-fiber three-wave mixing configurations (pump always V)."""
    TYPE0 = "type0"
    TYPE_I = "typeI"
    TYPE_II = "typeII"

    @property
    def axes(self) -> Tuple[PolarizationAxis, PolarizationAxis, PolarizationAxis]:
        """(pump, signal, idler) polarization axes."""
        return _PROCESS_AXES[self]

    @property
    def shg_weight(self) -> float:
        """Relative SHG peak weight of the process."""
        return _SHG_WEIGHTS[self]


_PROCESS_AXES = {
    ProcessType.TYPE0: (PolarizationAxis.V, PolarizationAxis.V, PolarizationAxis.V),
    ProcessType.TYPE_I: (PolarizationAxis.V, PolarizationAxis.H, PolarizationAxis.H),
    ProcessType.TYPE_II: (PolarizationAxis.V, PolarizationAxis.V, PolarizationAxis.H),
}

_SHG_WEIGHTS = {
    ProcessType.TYPE0: 9.0,
    ProcessType.TYPE_I: 1.0,
    ProcessType.TYPE_II: 4.0,
}


class SellmeierTerm(BaseModel):
    """One oscillator of a Sellmeier sum."""
    strength: float = Field(..., ge=0.0, description="Dimensionless oscillator strength B_i")
    resonance_um: float = Field(..., gt=0.0, description="Resonance wavelength lambda_i in um")

    model_config = ConfigDict(frozen=True)


class SellmeierModel(BaseModel):
    """Material refractive index n(lambda)^2 = 1 + sum B_i l^2 / (l^2 - l_i^2), plus an optional offset."""
    name: str = "material"
    version: str = "0"
    reference: str = ""
    terms: List[SellmeierTerm] = Field(default_factory=list)
    valid_range_um: Tuple[float, float] = Field(..., description="Validity range (min, max) in um")
    index_offset: float = Field(default=0.0, description="Wavelength-independent index offset")

    model_config = ConfigDict(frozen=True)

    @field_validator("valid_range_um")
    @classmethod
    def validate_range(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        """Range must be positive and ordered."""
        low, high = v
        if not 0.0 < low < high:
            raise ValueError(f"valid_range_um must satisfy 0 < min < max, got {v}")
        return v

    @classmethod
    def fused_silica(cls) -> "SellmeierModel":
        """Load the versioned fused-silica coefficient file shipped with the package."""
        with open(_data_path(SELLMEIER_DATA_FILE), "r", encoding="utf-8") as f:
            return cls.model_validate(json.load(f))

    def with_offset(self, offset: float, name: Optional[str] = None) -> "SellmeierModel":
        """Copy of the model with a different index offset."""
        return self.model_copy(update={"index_offset": offset, "name": name or self.name})

    def index(self, wavelength_um: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """
        Evaluate the refractive index.

        Args:
            wavelength_um: Vacuum wavelength(s) in um

        Returns:
            Refractive index, scalar or array matching the input

        Raises:
            DomainError: wavelength outside valid_range_um, at a pole, or giving n^2 <= 1
        """
        lam = np.asarray(wavelength_um, dtype=float)
        low, high = self.valid_range_um
        if np.any(~np.isfinite(lam)) or np.any(lam < low) or np.any(lam > high):
            raise DomainError(
                f"Wavelength outside {self.name} valid range [{low}, {high}] um",
                {"wavelength_um": lam.tolist(), "valid_range_um": [low, high]},
            )
        lam2 = lam * lam
        total = np.ones_like(lam2)
        for term in self.terms:
            res2 = term.resonance_um ** 2
            denom = lam2 - res2
            if np.any(np.abs(denom) <= 1e-12 * res2):
                raise DomainError(
                    f"Wavelength at {self.name} resonance pole {term.resonance_um} um",
                    {"resonance_um": term.resonance_um},
                )
            total = total + term.strength * lam2 / denom
        if np.any(total <= 1.0):
            raise DomainError(f"{self.name}: n^2 <= 1 inside the valid range", {"wavelength_um": lam.tolist()})
        n = np.sqrt(total) + self.index_offset
        return float(n) if n.ndim == 0 else n


class StepIndexFiber(BaseModel):
    """Weakly birefringent step-index fiber with a QPM grating."""
    fiber_id: str = Field(default="ppsf-o-band", description="Identifier carried into exported metadata")
    core_radius_um: float = Field(..., gt=0.0, description="Core radius in um")
    numerical_aperture: float = Field(..., gt=0.0, lt=1.0, description="NA at na_reference_nm")
    na_reference_nm: float = Field(default=1550.0, gt=0.0, description="Wavelength at which NA is specified")
    cladding_material: SellmeierModel = Field(default_factory=SellmeierModel.fused_silica)
    core_material: SellmeierModel = Field(..., description="Cladding model raised by a constant offset")
    birefringence_dn: float = Field(default=0.0, ge=0.0, description="Index offset of the slow (V) axis")
    birefringence_model: BirefringenceModel = Field(default=BirefringenceModel.GROUP_MATCHED)
    birefringence_reference_nm: float = Field(
        default=1306.6, gt=0.0, description="Wavelength where a group-matched offset carries no group birefringence"
    )
    length_m: float = Field(default=0.2, gt=0.0, description="Poled length L in m")
    poling_period_um: float = Field(default=54.0, gt=0.0, description="QPM period in um")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="before")
    @classmethod
    def derive_core_material(cls, data: Any) -> Any:
        """Raise the cladding index by the constant offset that reproduces the NA when no core model is given."""
        if not isinstance(data, dict) or data.get("core_material") is not None:
            return data
        data = dict(data)
        cladding = data.get("cladding_material") or SellmeierModel.fused_silica()
        if not isinstance(cladding, SellmeierModel):
            cladding = SellmeierModel.model_validate(cladding)
        data["cladding_material"] = cladding
        na = data.get("numerical_aperture")
        ref_nm = data.get("na_reference_nm", 1550.0)
        if na is None:
            return data
        n_clad = cladding.index(float(ref_nm) / 1000.0)
        offset = math.sqrt(n_clad ** 2 + float(na) ** 2) - n_clad
        data["core_material"] = cladding.with_offset(cladding.index_offset + offset, name=f"{cladding.name}+core")
        return data

    @model_validator(mode="after")
    def check_guidance(self) -> "StepIndexFiber":
        """Core must exceed cladding everywhere; dn must stay small against the index step."""
        low = max(self.core_material.valid_range_um[0], self.cladding_material.valid_range_um[0])
        high = min(self.core_material.valid_range_um[1], self.cladding_material.valid_range_um[1])
        grid = np.linspace(low, high, 64)
        step = self.core_material.index(grid) - self.cladding_material.index(grid)
        if np.any(step <= 0.0):
            raise ValueError("core index must exceed cladding index across the valid range")
        if self.birefringence_dn >= 0.5 * float(np.min(step)):
            raise ValueError(
                f"birefringence_dn={self.birefringence_dn} is not small against the index step {np.min(step):.3e}"
            )
        return self

    @classmethod
    def default(cls) -> "StepIndexFiber":
        """The packaged, uncalibrated PPSF description."""
        return cls.from_file(_data_path(DEFAULT_FIBER_FILE))

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "StepIndexFiber":
        """Load a fiber description file (JSON)."""
        path = Path(path)
        if not path.is_file():
            raise InputError(f"Fiber file not found: {path}")
        try:
            return cls.model_validate_json(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise InputError(f"Invalid fiber file {path}: {e}") from e

    def to_file(self, path: Union[str, Path]) -> None:
        """Write the fiber description as JSON."""
        Path(path).write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")

    def with_birefringence(self, dn: float) -> "StepIndexFiber":
        """Copy with a new slow-axis offset (unvalidated, used inside root searches)."""
        return self.model_copy(update={"birefringence_dn": float(dn)})


class WaveplateKind(str, Enum):
    """Nominal waveplate orders."""
    QUARTER = "quarter"
    HALF = "half"


class WaveplateSpec(BaseModel):
    """Zero-order waveplate whose retardance scales as 1/lambda from its design wavelength."""
    kind: WaveplateKind
    design_wavelength_nm: float = Field(default=1550.0, gt=0.0)

    model_config = ConfigDict(frozen=True)

    def retardance(self, wavelength_nm: float) -> float:
        """Retardance in radians at the operating wavelength."""
        if wavelength_nm <= 0.0:
            raise InputError(f"Wavelength must be positive, got {wavelength_nm}")
        nominal = math.pi / 2.0 if self.kind == WaveplateKind.QUARTER else math.pi
        return nominal * self.design_wavelength_nm / wavelength_nm


class ArmSetting(BaseModel):
    """Polarization analyzer of one arm: HWP, then QWP, then polarizer."""
    hwp_angle_rad: float = Field(default=0.0, description="Half-waveplate fast-axis angle")
    qwp_angle_rad: float = Field(default=0.0, description="Quarter-waveplate fast-axis angle")
    polarizer: PolarizationAxis = PolarizationAxis.H
    wavelength_nm: float = Field(..., gt=0.0)
    half_waveplate: WaveplateSpec = Field(default_factory=lambda: WaveplateSpec(kind=WaveplateKind.HALF))
    quarter_waveplate: WaveplateSpec = Field(default_factory=lambda: WaveplateSpec(kind=WaveplateKind.QUARTER))

    model_config = ConfigDict(frozen=True)

    @field_validator("hwp_angle_rad", "qwp_angle_rad")
    @classmethod
    def validate_angle(cls, v: float) -> float:
        """Angles live in [0, pi)."""
        if not 0.0 <= v < math.pi:
            raise ValueError(f"Waveplate angle must lie in [0, pi), got {v}")
        return v


class MeasurementSetting(BaseModel):
    """Joint analyzer configuration for the signal and idler arms."""
    setting_id: str
    signal: ArmSetting
    idler: ArmSetting

    model_config = ConfigDict(frozen=True)


class CountRecord(BaseModel):
    """Coincidences recorded for one measurement setting."""
    setting_id: str
    coincidences: int = Field(..., ge=0)
    accidentals: float = Field(default=0.0, ge=0.0, description="Expected accidental coincidences")
    integration_s: float = Field(default=1.0, gt=0.0)

    @property
    def accidentals_dominate(self) -> bool:
        """Flag records whose accidental estimate exceeds the observed counts."""
        return self.accidentals > self.coincidences


class FilterKind(str, Enum):
    """Top-hat band filter port."""
    PASSBAND = "passband"
    REFLECTION = "reflection"


class BandFilter(BaseModel):
    """Top-hat wavelength filter (CWDM channel) with a 3 dB bandwidth."""
    center_nm: float = Field(..., gt=0.0)
    bandwidth_nm: float = Field(default=17.0, gt=0.0)
    kind: FilterKind = FilterKind.PASSBAND

    model_config = ConfigDict(frozen=True)

    def transmits(self, wavelength_nm: np.ndarray) -> np.ndarray:
        """Boolean transmission mask."""
        inside = np.abs(np.asarray(wavelength_nm, dtype=float) - self.center_nm) <= 0.5 * self.bandwidth_nm
        return inside if self.kind == FilterKind.PASSBAND else ~inside


class DipFit(BaseModel):
    """Fitted HOM dip."""
    model: str
    visibility: float = Field(..., ge=0.0, le=1.0)
    width_fs: float = Field(..., gt=0.0, description="Dip FWHM")
    center_fs: float
    plateau: float
    visibility_err: float = Field(default=0.0, ge=0.0)
    width_err_fs: float = Field(default=0.0, ge=0.0)
    center_err_fs: float = Field(default=0.0, ge=0.0)
    residual_norm: float = Field(default=0.0, ge=0.0)


# Experiment configuration

class GridSpec(BaseModel):
    """Symmetric detuning grid."""
    points: int = Field(default=4097, ge=3)
    span_thz: float = Field(default=60.0, gt=0.0, description="Half-span of Delta/2pi in THz")

    @field_validator("points")
    @classmethod
    def validate_points(cls, v: int) -> int:
        """An odd count keeps Delta = 0 on the grid."""
        if v % 2 == 0:
            raise ValueError("grid points must be odd so that zero detuning is sampled")
        return v


class ShgSpec(BaseModel):
    """Fundamental wavelength sweep for SHG spectra."""
    fundamental_min_nm: float = Field(default=1303.5, gt=0.0)
    fundamental_max_nm: float = Field(default=1309.5, gt=0.0)
    points: int = Field(default=2401, ge=10)


class TuningSpec(BaseModel):
    """Pump sweep for the type-II tuning curve."""
    pump_min_nm: float = Field(default=652.8, gt=0.0)
    pump_max_nm: float = Field(default=653.6, gt=0.0)
    points: int = Field(default=17, ge=2)
    threshold: float = Field(default=0.5, gt=0.0, lt=1.0)


class HomSpec(BaseModel):
    """Delay scan, noise and fit settings."""
    delay_min_fs: float = -150.0
    delay_max_fs: float = 150.0
    points: int = Field(default=301, ge=10)
    visibility: float = Field(default=0.832, ge=0.0, le=1.0)
    plateau_counts: Optional[float] = Field(default=1.0e4, gt=0.0, description="None for a noiseless scan")
    integration_s: float = Field(default=1.0, gt=0.0)
    fit_model: str = Field(default="fourier_of_density")
    transform_family: str = Field(default="top_hat")

    @field_validator("fit_model")
    @classmethod
    def validate_fit_model(cls, v: str) -> str:
        """Known dip models."""
        if v not in ("fourier_of_density", "gaussian", "sinc2"):
            raise ValueError(f"Unknown fit model: {v}")
        return v


class TomographySpec(BaseModel):
    """True state, analyzers and count statistics for a tomography run."""
    state: str = Field(default="werner", description="werner or band_pair")
    werner_p: float = Field(default=0.95, ge=0.0, le=1.0)
    phase: float = Field(default=0.0, description="HV/VH relative phase of the Werner component")
    visibility: float = Field(default=1.0, ge=0.0, le=1.0, description="White-noise visibility for band_pair")
    signal_filter: BandFilter = Field(default_factory=lambda: BandFilter(center_nm=1330.0))
    idler_filter: BandFilter = Field(default_factory=lambda: BandFilter(center_nm=1290.0))
    settings: str = Field(default="mub36", description="mub36 or minimal16")
    design_wavelength_nm: float = Field(default=1550.0, gt=0.0)
    pairs_per_setting: float = Field(default=1.0e4, gt=0.0)
    efficiency: float = Field(default=1.0, gt=0.0, le=1.0)
    accidental_rate_hz: float = Field(default=0.0, ge=0.0)
    integration_s: float = Field(default=1.0, gt=0.0)
    n_resamples: int = Field(default=200, ge=100)
    subtract_accidentals: bool = False

    @field_validator("state")
    @classmethod
    def validate_state(cls, v: str) -> str:
        """Known true-state sources."""
        if v not in ("werner", "band_pair"):
            raise ValueError(f"Unknown tomography state source: {v}")
        return v

    @field_validator("settings")
    @classmethod
    def validate_settings(cls, v: str) -> str:
        """Known analyzer sets."""
        if v not in ("mub36", "minimal16"):
            raise ValueError(f"Unknown settings set: {v}")
        return v


class ExperimentConfig(BaseModel):
    """One figure/table pipeline."""
    name: str = "default"
    fiber_path: Optional[str] = Field(default=None, description="Fiber file, relative to the config file")
    fiber: Optional[StepIndexFiber] = Field(default=None, description="Inline fiber description")
    process: ProcessType = ProcessType.TYPE_II
    pump_nm: float = Field(default=653.3, gt=0.0)
    target_type_ii_peak_nm: float = Field(default=653.3, gt=0.0)
    auto_calibrate: bool = True
    grid: GridSpec = Field(default_factory=GridSpec)
    shg: ShgSpec = Field(default_factory=ShgSpec)
    tuning: TuningSpec = Field(default_factory=TuningSpec)
    hom: HomSpec = Field(default_factory=HomSpec)
    tomography: TomographySpec = Field(default_factory=TomographySpec)
    output_dir: Optional[str] = None
    seed: int = Field(default=0, ge=0)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_fiber_source(self) -> "ExperimentConfig":
        """At most one fiber source."""
        if self.fiber is not None and self.fiber_path is not None:
            raise ValueError("give either fiber or fiber_path, not both")
        return self

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """Load and validate a config; relative fiber paths are resolved against the config directory."""
        path = Path(path)
        if not path.is_file():
            raise InputError(f"Config file not found: {path}")
        try:
            config = cls.model_validate_json(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise InputError(f"Invalid config {path}: {e}") from e
        if config.fiber_path is not None and not Path(config.fiber_path).is_absolute():
            config = config.model_copy(update={"fiber_path": str(path.parent / config.fiber_path)})
        return config

    def resolve_fiber(self) -> StepIndexFiber:
        """Inline fiber, fiber file, or the packaged default."""
        if self.fiber is not None:
            return self.fiber
        if self.fiber_path is not None:
            return StepIndexFiber.from_file(self.fiber_path)
        return StepIndexFiber.default()

    def summary(self) -> Dict[str, Any]:
        """Short description used in exported metadata."""
        return {"name": self.name, "process": self.process.value, "pump_nm": self.pump_nm, "seed": self.seed}
