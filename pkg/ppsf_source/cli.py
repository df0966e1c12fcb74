"""
Command-line pipelines for the PPSF source toolkit.

Every subcommand validates its inputs, computes all artifacts in memory and
only then writes them, so a failing run leaves no partial output. Timestamps
go to run.log next to the artifacts, never into the data files.
"""

import argparse
import logging
import logging.handlers
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .bands import conjugate_wavelength, noisy_band_pair_state
from .dispersion import (
    SINGLE_MODE_CUTOFF,
    dispersion_derivatives,
    group_velocity_mismatch,
    modal_dispersion,
    v_number,
    zero_dispersion_wavelength,
)
from .exporters import (
    counts_frame,
    dispersion_frame,
    scan_frame,
    shg_frame,
    spectrum_frame,
    to_json,
    tuning_frame,
    write_frame,
    write_json,
)
from .hom import hom_dip_fwhm, fit_dip, hom_scan, poisson_scan, transform_limited_bandwidth
from .qpm import (
    SpdcConfig,
    calibrate_birefringence,
    degenerate_mismatch,
    detuning_grid,
    fwhm_bandwidth,
    lobe_deviation,
    shg_spectrum,
    spdc_spectral_density,
    taylor_coefficients,
    taylor_spectral_density,
    tuning_curve,
)
from .settings import Settings, load_settings
from .tomography import (
    DensityMatrix,
    MleOptions,
    best_maximally_entangled_fidelity,
    concurrence,
    minimal_settings,
    mub_settings,
    reconstruct_with_uncertainty,
    settings_digest,
    simulate_counts,
    werner_state,
)
from .utils.errors import InputError, PpsfError
from .utils.models import ExperimentConfig, FilterKind, PolarizationAxis, ProcessType, StepIndexFiber

logger = logging.getLogger(__name__)

console = Console(stderr=True)

COMMANDS = {
    "calibrate": "Calibrate birefringence to the type-II SHG peak",
    "spectrum": "Biphoton spectrum and bandwidth",
    "shg": "SHG spectra of the three processes",
    "tuning": "Type-II tuning curve",
    "hom": "Hong-Ou-Mandel scan and dip fit",
    "tomo": "Simulated polarization tomography",
}
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
RUN_LOG = "run.log"
REFERENCE_NM = 1306.6
PS2_PER_KM = 1e-27  # s^2/m

Artifact = Union[pd.DataFrame, Dict[str, Any], StepIndexFiber]


class ExperimentRunner:
    """Runs one subcommand of an experiment config and collects its artifacts."""

    def __init__(self, config: ExperimentConfig, fiber: StepIndexFiber, settings: Settings,
                 output_dir: Path, threads: int = 1):
        self.config = config
        self.fiber = fiber
        self.settings = settings
        self.output_dir = output_dir
        self.threads = threads
        self.summary: Dict[str, Any] = {}

    @classmethod
    def from_args(cls, args: argparse.Namespace, settings: Settings) -> "ExperimentRunner":
        """Validate the config, the fiber and the CLI overrides."""
        config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise InputError(f"--seed must be non-negative, got {args.seed}")
            config = config.model_copy(update={"seed": args.seed})
        threads = args.threads if args.threads is not None else settings.threads
        if threads < 1:
            raise InputError(f"--threads must be at least 1, got {threads}")
        fiber = config.resolve_fiber()
        output_dir = Path(args.out or config.output_dir or settings.output_dir)
        return cls(config, fiber, settings, output_dir, threads)

    # Shared steps

    def calibrated_fiber(self) -> StepIndexFiber:
        if not self.config.auto_calibrate:
            return self.fiber
        dn = calibrate_birefringence(self.fiber, self.config.target_type_ii_peak_nm)
        return StepIndexFiber.model_validate(self.fiber.with_birefringence(dn).model_dump())

    def detuning(self) -> np.ndarray:
        return detuning_grid(self.config.grid.points, self.config.grid.span_thz)

    def density(self, fiber: StepIndexFiber, process: Optional[ProcessType] = None):
        config = SpdcConfig(fiber=fiber, process=process or self.config.process, pump_nm=self.config.pump_nm,
                            detuning=self.detuning())
        return spdc_spectral_density(config)

    def envelope(self, **payload: Any) -> Dict[str, Any]:
        return {"config": self.config.summary(), "fiber_id": self.fiber.fiber_id, **payload}

    # Subcommands

    def calibrate(self) -> Dict[str, Artifact]:
        dn = calibrate_birefringence(self.fiber, self.config.target_type_ii_peak_nm)
        fiber = StepIndexFiber.model_validate(self.fiber.with_birefringence(dn).model_dump())
        step = self.settings.fd_step
        k2 = float(np.mean([dispersion_derivatives(fiber, REFERENCE_NM, axis, step)[1] for axis in PolarizationAxis]))
        m = group_velocity_mismatch(fiber, REFERENCE_NM, step)
        residual = degenerate_mismatch(fiber, ProcessType.TYPE_II, self.config.target_type_ii_peak_nm)
        zdw = zero_dispersion_wavelength(fiber, PolarizationAxis.H, step=step)
        v = float(v_number(fiber, 1310.0))
        wavelengths = np.linspace(1250.0, 1400.0, 31)
        curves = [modal_dispersion(fiber, axis, wavelengths, step) for axis in PolarizationAxis]
        self.summary = {
            "birefringence dn": f"{dn:.6e}",
            "residual mismatch": f"{residual:.3e} rad/m",
            "|k2| @ 1306.6 nm": f"{abs(k2) / PS2_PER_KM:.4f} ps^2/km",
            "M @ 1306.6 nm": f"{m:.4e} s/m",
            "zero-dispersion wavelength": f"{zdw:.2f} nm",
            "V @ 1310 nm": f"{v:.4f} (single mode below {SINGLE_MODE_CUTOFF:.4f})",
        }
        return {
            "fiber_calibrated.json": fiber,
            "dispersion.csv": dispersion_frame(curves),
            "calibration.json": self.envelope(
                birefringence_dn=dn,
                target_type_ii_peak_nm=self.config.target_type_ii_peak_nm,
                residual_mismatch_rad_per_m=residual,
                k2_s2_per_m=k2,
                group_velocity_mismatch_s_per_m=m,
                zero_dispersion_wavelength_nm=zdw,
                v_number_1310nm=v,
                reference_wavelength_nm=REFERENCE_NM,
            ),
        }

    def spectrum(self) -> Dict[str, Artifact]:
        fiber = self.calibrated_fiber()
        density = self.density(fiber)
        width = fwhm_bandwidth(density)
        payload: Dict[str, Any] = {
            "birefringence_dn": fiber.birefringence_dn,
            "birefringence_model": fiber.birefringence_model.value,
            "grid": density.metadata["grid"],
            "fwhm_thz": width.frequency_thz,
            "fwhm_nm": width.wavelength_nm,
            "edges_rad_per_s": [width.lower_detuning, width.upper_detuning],
        }
        if self.config.process == ProcessType.TYPE_II:
            coefficients = taylor_coefficients(fiber, self.config.pump_nm, self.settings.fd_step,
                                               self.settings.higher_order_step)
            config = SpdcConfig(fiber=fiber, process=self.config.process, pump_nm=self.config.pump_nm,
                                detuning=density.detuning)
            second = taylor_spectral_density(config, coefficients.m, coefficients.k2)
            fourth = taylor_spectral_density(config, coefficients.m, coefficients.k2, coefficients.k4)
            payload["taylor"] = {
                "M_s_per_m": coefficients.m,
                "k2_s2_per_m": coefficients.k2,
                "k4_s4_per_m": coefficients.k4,
                "max_deviation_second_order": lobe_deviation(density, second),
                "max_deviation_fourth_order": lobe_deviation(density, fourth),
            }
        self.summary = {
            "process": self.config.process.value,
            "FWHM": f"{width.frequency_thz:.2f} THz / {width.wavelength_nm:.1f} nm",
        }
        return {"spectrum.csv": spectrum_frame(density), "spectrum.json": self.envelope(**payload)}

    def shg(self) -> Dict[str, Artifact]:
        fiber = self.calibrated_fiber()
        section = self.config.shg
        if section.fundamental_max_nm <= section.fundamental_min_nm:
            raise InputError("shg.fundamental_max_nm must exceed shg.fundamental_min_nm")
        fundamental = np.linspace(section.fundamental_min_nm, section.fundamental_max_nm, section.points)
        spectrum = shg_spectrum(fiber, fundamental)
        peaks = {p.value: lam for p, lam in spectrum.peak_second_harmonic_nm.items()}
        self.summary = {f"{name} peak": f"{lam:.3f} nm" for name, lam in peaks.items()}
        return {
            "shg.csv": shg_frame(spectrum),
            "shg.json": self.envelope(
                peak_second_harmonic_nm=peaks,
                weights={p.value: w for p, w in spectrum.weights.items()},
                birefringence_dn=fiber.birefringence_dn,
            ),
        }

    def tuning(self) -> Dict[str, Artifact]:
        fiber = self.calibrated_fiber()
        section = self.config.tuning
        pumps = np.linspace(section.pump_min_nm, section.pump_max_nm, section.points)
        curve = tuning_curve(fiber, pumps, section.threshold, self.detuning())
        loci = [
            {
                "pump_nm": float(pump),
                "branches": len(curve.loci(i)),
                "separations_thz": [b.separation_thz for b in curve.loci(i)],
            }
            for i, pump in enumerate(pumps)
        ]
        empty = sum(1 for entry in loci if entry["branches"] == 0)
        self.summary = {"pump samples": str(len(pumps)), "empty loci": str(empty)}
        return {"tuning.csv": tuning_frame(curve), "tuning.json": self.envelope(threshold=section.threshold, loci=loci)}

    def hom(self) -> Dict[str, Artifact]:
        fiber = self.calibrated_fiber()
        section = self.config.hom
        density = self.density(fiber, ProcessType.TYPE_II)
        delays = np.linspace(section.delay_min_fs, section.delay_max_fs, section.points)
        scan = hom_scan(density, delays, section.visibility)
        if section.plateau_counts is not None:
            scan = poisson_scan(scan, section.plateau_counts, self.config.seed, section.integration_s)
        fit = fit_dip(scan, section.fit_model, density)
        limit = transform_limited_bandwidth(fit.width_fs, 2.0 * self.config.pump_nm, section.transform_family,
                                            density if section.transform_family == "density" else None)
        self.summary = {
            "visibility": f"{fit.visibility:.4f} +- {fit.visibility_err:.4f}",
            "dip FWHM": f"{fit.width_fs:.2f} +- {fit.width_err_fs:.2f} fs",
            "transform limit": f"{limit.bandwidth_nm:.1f} nm ({section.transform_family})",
        }
        return {
            "scan.csv": scan_frame(scan),
            "fit.json": self.envelope(
                fit=fit.model_dump(),
                noiseless_dip_fwhm_fs=hom_dip_fwhm(density),
                transform_limit={"family": section.transform_family, **limit._asdict()},
                scan=scan.metadata,
            ),
        }

    def _true_state(self) -> DensityMatrix:
        section = self.config.tomography
        if section.state == "werner":
            return werner_state(section.werner_p, section.phase)
        fiber = self.calibrated_fiber()
        return noisy_band_pair_state(fiber, self.config.pump_nm, section.signal_filter, section.idler_filter,
                                     section.visibility, self.detuning())

    def _arm_wavelengths(self) -> List[float]:
        section = self.config.tomography
        signal_nm = section.signal_filter.center_nm
        if section.idler_filter.kind == FilterKind.REFLECTION:
            return [signal_nm, conjugate_wavelength(self.config.pump_nm, signal_nm)]
        return [signal_nm, section.idler_filter.center_nm]

    def tomo(self) -> Dict[str, Artifact]:
        section = self.config.tomography
        rho = self._true_state()
        signal_nm, idler_nm = self._arm_wavelengths()
        builder = mub_settings if section.settings == "mub36" else minimal_settings
        settings = builder(signal_nm, idler_nm, section.design_wavelength_nm)
        records = simulate_counts(rho, settings, section.pairs_per_setting, section.accidental_rate_hz,
                                  section.efficiency, self.config.seed, section.integration_s)
        options = MleOptions(max_evaluations=self.settings.mle_max_evaluations,
                             subtract_accidentals=section.subtract_accidentals)
        result = reconstruct_with_uncertainty(records, settings, section.n_resamples, self.config.seed, options,
                                              self.threads, self.settings.mc_max_exclusion_fraction)
        true_fidelity, _ = best_maximally_entangled_fidelity(rho)
        self.summary = {
            "concurrence": f"{result.concurrence:.4f} +- {result.concurrence_std:.4f}",
            "fidelity": f"{result.fidelity:.4f} +- {result.fidelity_std:.4f}",
            "true concurrence": f"{concurrence(rho):.4f}",
        }
        return {
            "counts.csv": counts_frame(records, settings),
            "result.json": self.envelope(
                result=result.to_dict(),
                settings=section.settings,
                settings_digest=settings_digest(settings),
                true_state={"rho": rho.to_dict(), "concurrence": concurrence(rho), "fidelity": true_fidelity},
            ),
        }

    def run(self, command: str) -> Dict[str, Artifact]:
        if command not in COMMANDS:
            raise InputError(f"Unknown command {command!r}")
        handler: Callable[[], Dict[str, Artifact]] = getattr(self, command)
        logger.info(f"Running {command} for config {self.config.name!r} (seed {self.config.seed})")
        return handler()

    def write(self, artifacts: Dict[str, Artifact]) -> List[Path]:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, artifact in artifacts.items():
            path = self.output_dir / name
            if isinstance(artifact, pd.DataFrame):
                write_frame(path, artifact)
            elif isinstance(artifact, StepIndexFiber):
                artifact.to_file(path)
            else:
                write_json(path, artifact)
            written.append(path)
        return written


def build_parser() -> argparse.ArgumentParser:
    """Subcommand parser sharing --config, --out, --seed, --threads and --verbose."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="Experiment config (JSON); defaults to the built-in config")
    common.add_argument("--out", "-o", help="Output directory")
    common.add_argument("--seed", type=int, help="Random seed (overrides the config)")
    common.add_argument("--threads", type=int, help="Worker threads for Monte-Carlo resampling")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")

    parser = argparse.ArgumentParser(prog="ppsf", description="PPSF entangled photon-pair source simulations")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, description in COMMANDS.items():
        sub.add_parser(command, parents=[common], help=description)
    return parser


def _configure_logging(verbose: bool, settings: Settings) -> logging.handlers.MemoryHandler:
    level = logging.DEBUG if verbose else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)
    buffer = logging.handlers.MemoryHandler(capacity=1_000_000, flushLevel=logging.CRITICAL + 1)
    buffer.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger().addHandler(buffer)
    return buffer


def _flush_run_log(buffer: logging.handlers.MemoryHandler, output_dir: Path) -> None:
    file_handler = logging.FileHandler(output_dir / RUN_LOG, mode="w", encoding="utf-8")
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    buffer.setTarget(file_handler)
    buffer.flush()
    buffer.setTarget(None)
    file_handler.close()


def _print_summary(command: str, runner: ExperimentRunner, written: List[Path]) -> None:
    table = Table(show_header=False, box=None)
    for key, value in runner.summary.items():
        table.add_row(f"[bold]{key}[/bold]", value)
    for path in written:
        table.add_row("[dim]wrote[/dim]", str(path))
    console.print(Panel(table, title=f"ppsf {command}: {runner.config.name}", border_style="blue"))


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    settings = load_settings()
    buffer = _configure_logging(args.verbose, settings)
    try:
        runner = ExperimentRunner.from_args(args, settings)
        artifacts = runner.run(args.command)
        written = runner.write(artifacts)
        _flush_run_log(buffer, runner.output_dir)
        _print_summary(args.command, runner, written)
        return 0
    except (InputError, ValidationError, FileNotFoundError) as e:
        console.print(Panel(str(e), title="Input error", border_style="red"))
        return 2
    except PpsfError as e:
        console.print(Panel(f"{e}\n{to_json(e.diagnostics) if e.diagnostics else ''}",
                            title=f"{type(e).__name__}", border_style="red"))
        return 1
    except ValueError as e:
        console.print(Panel(str(e), title="Input error", border_style="red"))
        return 2
    finally:
        logging.getLogger().removeHandler(buffer)
        buffer.close()


if __name__ == "__main__":
    sys.exit(main())
