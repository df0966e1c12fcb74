"""CSV and JSON artifacts for plotting tools."""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .dispersion import ModalDispersion
from .hom import DelayScan
from .qpm import ShgSpectrum, SpectralDensity, TuningCurve
from .utils.errors import InputError
from .utils.models import ArmSetting, CountRecord, MeasurementSetting, PolarizationAxis, WaveplateKind, WaveplateSpec

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
COUNT_COLUMNS = [
    "setting_id", "qwp_s_deg", "hwp_s_deg", "pol_s", "qwp_i_deg", "hwp_i_deg", "pol_i",
    "lambda_s_nm", "lambda_i_nm", "coincidences", "accidentals", "integration_s",
]

PathLike = Union[str, Path]


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def to_json(payload: Dict[str, Any]) -> str:
    """Deterministic JSON text."""
    return json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n"


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(payload), encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def dispersion_frame(curves: Sequence[ModalDispersion]) -> pd.DataFrame:
    """Long table of n_eff, beta1 and k2 per axis."""
    frames = [
        pd.DataFrame({
            "lambda_nm": curve.wavelengths_nm,
            "axis": curve.axis.value,
            "n_eff": curve.n_eff,
            "beta1_s_per_m": curve.beta1,
            "k2_s2_per_m": curve.k2,
        })
        for curve in curves
    ]
    return pd.concat(frames, ignore_index=True)


def spectrum_frame(density: SpectralDensity) -> pd.DataFrame:
    return pd.DataFrame({
        "delta_rad_per_s": density.detuning,
        "signal_nm": density.signal_wavelengths_nm(),
        "idler_nm": density.idler_wavelengths_nm(),
        "intensity": density.values,
    })


def shg_frame(spectrum: ShgSpectrum) -> pd.DataFrame:
    columns = {"fundamental_nm": spectrum.fundamental_nm, "second_harmonic_nm": spectrum.second_harmonic_nm}
    for process, curve in spectrum.curves.items():
        columns[process.value] = curve
    return pd.DataFrame(columns)


def tuning_frame(curve: TuningCurve) -> pd.DataFrame:
    """One row per (pump, branch, wavelength); both members of every pair are listed."""
    rows: List[Dict[str, Any]] = []
    for index, pump in enumerate(curve.pump_nm):
        for number, branch in enumerate(curve.loci(index)):
            for member, wavelengths in (("signal", branch.signal_nm), ("idler", branch.idler_nm)):
                rows.extend({"pump_nm": float(pump), "branch": number, "member": member, "wavelength_nm": float(w)}
                            for w in wavelengths)
    return pd.DataFrame(rows, columns=["pump_nm", "branch", "member", "wavelength_nm"])


def scan_frame(scan: DelayScan) -> pd.DataFrame:
    counts = scan.counts if scan.counts is not None else np.full(scan.delays_fs.shape, np.nan)
    integration = scan.integration_s if scan.integration_s is not None else np.nan
    return pd.DataFrame({
        "delay_fs": scan.delays_fs,
        "coincidence": scan.coincidence,
        "counts": counts,
        "integration_s": integration,
    })


def counts_frame(records: Sequence[CountRecord], settings: Sequence[MeasurementSetting]) -> pd.DataFrame:
    by_id = {s.setting_id: s for s in settings}
    rows = []
    for record in records:
        setting = by_id[record.setting_id]
        rows.append({
            "setting_id": record.setting_id,
            "qwp_s_deg": math.degrees(setting.signal.qwp_angle_rad),
            "hwp_s_deg": math.degrees(setting.signal.hwp_angle_rad),
            "pol_s": setting.signal.polarizer.value,
            "qwp_i_deg": math.degrees(setting.idler.qwp_angle_rad),
            "hwp_i_deg": math.degrees(setting.idler.hwp_angle_rad),
            "pol_i": setting.idler.polarizer.value,
            "lambda_s_nm": setting.signal.wavelength_nm,
            "lambda_i_nm": setting.idler.wavelength_nm,
            "coincidences": record.coincidences,
            "accidentals": record.accidentals,
            "integration_s": record.integration_s,
        })
    return pd.DataFrame(rows, columns=COUNT_COLUMNS)


def _arm_from_row(row: pd.Series, suffix: str, design_wavelength_nm: float) -> ArmSetting:
    return ArmSetting(
        hwp_angle_rad=math.radians(row[f"hwp_{suffix}_deg"]) % math.pi,
        qwp_angle_rad=math.radians(row[f"qwp_{suffix}_deg"]) % math.pi,
        polarizer=PolarizationAxis(row[f"pol_{suffix}"]),
        wavelength_nm=float(row[f"lambda_{suffix}_nm"]),
        half_waveplate=WaveplateSpec(kind=WaveplateKind.HALF, design_wavelength_nm=design_wavelength_nm),
        quarter_waveplate=WaveplateSpec(kind=WaveplateKind.QUARTER, design_wavelength_nm=design_wavelength_nm),
    )


def read_counts(path: PathLike,
                design_wavelength_nm: float = 1550.0) -> Tuple[List[CountRecord], List[MeasurementSetting]]:
    """
    Load a counts CSV back into records and settings.

    Raises:
        InputError: missing file or columns
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"Counts file not found: {path}")
    frame = pd.read_csv(path, dtype={"setting_id": str})
    missing = [c for c in COUNT_COLUMNS if c not in frame.columns]
    if missing:
        raise InputError(f"Counts file {path} lacks column(s): {', '.join(missing)}")
    records, settings = [], []
    for _, row in frame.iterrows():
        settings.append(MeasurementSetting(
            setting_id=row["setting_id"],
            signal=_arm_from_row(row, "s", design_wavelength_nm),
            idler=_arm_from_row(row, "i", design_wavelength_nm),
        ))
        records.append(CountRecord(
            setting_id=row["setting_id"],
            coincidences=int(row["coincidences"]),
            accidentals=float(row["accidentals"]),
            integration_s=float(row["integration_s"]),
        ))
    return records, settings


__all__ = [
    "COUNT_COLUMNS",
    "to_json",
    "write_json",
    "write_frame",
    "dispersion_frame",
    "spectrum_frame",
    "shg_frame",
    "tuning_frame",
    "scan_frame",
    "counts_frame",
    "read_counts",
]
