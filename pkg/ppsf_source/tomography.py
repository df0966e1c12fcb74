"""
Two-qubit polarization tomography.

Basis order is {HH, HV, VH, VV} with the signal photon first. Each analyzer
arm is light -> half-waveplate -> quarter-waveplate -> polarizer, so the
projector is W_H^dagger W_Q^dagger P_pol W_Q W_H.
"""

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import gammaln

from .utils.errors import (
    IllPosedError,
    InputError,
    InvalidStateError,
    NonConvergenceError,
    ReliabilityError,
)
from .utils.models import (
    ArmSetting,
    CountRecord,
    MeasurementSetting,
    PolarizationAxis,
    WaveplateKind,
    WaveplateSpec,
)

logger = logging.getLogger(__name__)

BASIS_LABELS = ("HH", "HV", "VH", "VV")
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
EIGEN_FLOOR = 1e-9

_SIGMA = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
PAULI_PRODUCTS = np.array([np.kron(a, b) for a in _SIGMA for b in _SIGMA])
_SPIN_FLIP = np.kron(_SIGMA[2], _SIGMA[2])

# (hwp, qwp) fast-axis angles with the polarizer on H
ANALYZER_ANGLES: Dict[str, Tuple[float, float]] = {
    "H": (0.0, 0.0),
    "V": (math.pi / 4, 0.0),
    "D": (math.pi / 8, 0.0),
    "A": (7 * math.pi / 8, 0.0),
    "R": (0.0, math.pi / 4),
    "L": (0.0, 3 * math.pi / 4),
}

MINIMAL_SETTING_IDS = (
    "HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
    "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL",
)


@dataclass
class DensityMatrix:
    """4x4 two-qubit density matrix; PSD is checked on demand, not enforced."""
    matrix: np.ndarray

    def __post_init__(self):
        """Validate shape, hermiticity and trace."""
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise InvalidStateError(f"Density matrix must be 4x4, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise InvalidStateError("Density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"Density matrix trace is {np.trace(m).real:.12f}, expected 1")
        self.matrix = m

    @classmethod
    def from_unnormalized(cls, matrix: np.ndarray) -> "DensityMatrix":
        """Hermitian part divided by its trace."""
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        trace = np.trace(m).real
        if trace <= 0.0:
            raise InvalidStateError(f"Cannot normalize a matrix with trace {trace}")
        return cls(m / trace)

    @classmethod
    def from_pure(cls, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls.from_unnormalized(np.outer(psi, psi.conj()))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    def is_physical(self) -> bool:
        """PSD up to the numerical floor."""
        return self.min_eigenvalue >= -EIGEN_FLOOR

    def clipped(self) -> "DensityMatrix":
        """Negative eigenvalues set to zero, then renormalized."""
        w, v = np.linalg.eigh(self.matrix)
        w = np.clip(w, 0.0, None)
        return DensityMatrix.from_unnormalized((v * w) @ v.conj().T)

    def to_dict(self) -> Dict[str, List[List[float]]]:
        return {"real": self.matrix.real.tolist(), "imag": self.matrix.imag.tolist()}


@dataclass
class MleOptions:
    """Maximum-likelihood reconstruction options."""
    max_evaluations: int = 100_000
    ftol: float = 1e-12
    gtol: float = 1e-8
    subtract_accidentals: bool = False
    analytic_gradient: bool = True

    def __post_init__(self):
        """Validate limits."""
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be positive")
        if self.ftol <= 0.0 or self.gtol <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass
class TomographyResult:
    """Reconstructed state with its figures of merit."""
    rho: DensityMatrix
    concurrence: float
    fidelity: float  # best over the |HV> + e^{i phi}|VH> family
    fidelity_psi_plus: float
    optimal_phase: float
    purity: float
    log_likelihood: float
    evaluations: int
    message: str = ""
    concurrence_std: Optional[float] = None
    fidelity_std: Optional[float] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rho": self.rho.to_dict(),
            "concurrence": self.concurrence,
            "concurrence_std": self.concurrence_std,
            "fidelity": self.fidelity,
            "fidelity_std": self.fidelity_std,
            "fidelity_psi_plus": self.fidelity_psi_plus,
            "optimal_phase_rad": self.optimal_phase,
            "purity": self.purity,
            "log_likelihood": self.log_likelihood,
            "optimizer": {"evaluations": self.evaluations, "message": self.message, **self.diagnostics},
        }


class Uncertainty(NamedTuple):
    """Monte-Carlo standard deviations."""
    concurrence_std: float
    fidelity_std: float
    excluded: int
    total: int


# States

def bell_state(phase: float = 0.0) -> np.ndarray:
    """(|HV> + e^{i phase}|VH>)/sqrt(2)."""
    psi = np.zeros(4, dtype=complex)
    psi[1] = 1.0
    psi[2] = np.exp(1j * phase)
    return psi / math.sqrt(2.0)


PSI_PLUS = bell_state(0.0)
PSI_MINUS = bell_state(math.pi)


def mix_white_noise(rho: DensityMatrix, visibility: float) -> DensityMatrix:
    """v rho + (1 - v) I/4."""
    if not 0.0 <= visibility <= 1.0:
        raise InputError(f"Visibility must lie in [0, 1], got {visibility}")
    return DensityMatrix.from_unnormalized(visibility * rho.matrix + (1.0 - visibility) * np.eye(4) / 4.0)


def werner_state(p: float, phase: float = 0.0) -> DensityMatrix:
    """p |Psi(phase)><Psi(phase)| + (1 - p) I/4."""
    return mix_white_noise(DensityMatrix.from_pure(bell_state(phase)), p)


# Analyzers

def retarder(angle_rad: float, retardance_rad: float) -> np.ndarray:
    """Jones matrix of a linear retarder with its fast axis at the given angle."""
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    rotation = np.array([[c, s], [-s, c]], dtype=complex)
    return rotation.T @ np.diag([1.0, np.exp(1j * retardance_rad)]) @ rotation


def _polarizer(axis: PolarizationAxis) -> np.ndarray:
    return np.diag([1.0, 0.0]).astype(complex) if axis == PolarizationAxis.H else np.diag([0.0, 1.0]).astype(complex)


def projector(arm: ArmSetting, wavelength_nm: Optional[float] = None) -> np.ndarray:
    """
    Rank-1 projector of one analyzer arm.

    Args:
        arm: Waveplate angles, polarizer and waveplate models
        wavelength_nm: Operating wavelength; defaults to the arm's own

    Returns:
        2x2 Hermitian idempotent matrix
    """
    lam = arm.wavelength_nm if wavelength_nm is None else wavelength_nm
    if lam <= 0.0:
        raise InputError(f"Wavelength must be positive, got {lam}")
    w_half = retarder(arm.hwp_angle_rad, arm.half_waveplate.retardance(lam))
    w_quarter = retarder(arm.qwp_angle_rad, arm.quarter_waveplate.retardance(lam))
    analyzer = w_quarter @ w_half
    return analyzer.conj().T @ _polarizer(arm.polarizer) @ analyzer


def setting_operator(setting: MeasurementSetting) -> np.ndarray:
    """P_signal (x) P_idler."""
    return np.kron(projector(setting.signal), projector(setting.idler))


def born_probability(rho: DensityMatrix, setting: MeasurementSetting) -> float:
    """Tr[rho (P_signal (x) P_idler)]."""
    return float(np.real(np.trace(rho.matrix @ setting_operator(setting))))


def analyzer_angles(state: str) -> Tuple[float, float]:
    """(hwp, qwp) angles projecting onto H, V, D, A, R or L."""
    try:
        return ANALYZER_ANGLES[state]
    except KeyError:
        raise InputError(f"Unknown analyzer state {state!r}; expected one of {''.join(ANALYZER_ANGLES)}")


def _arm(state: str, wavelength_nm: float, design_wavelength_nm: float) -> ArmSetting:
    hwp, qwp = analyzer_angles(state)
    return ArmSetting(
        hwp_angle_rad=hwp,
        qwp_angle_rad=qwp,
        polarizer=PolarizationAxis.H,
        wavelength_nm=wavelength_nm,
        half_waveplate=WaveplateSpec(kind=WaveplateKind.HALF, design_wavelength_nm=design_wavelength_nm),
        quarter_waveplate=WaveplateSpec(kind=WaveplateKind.QUARTER, design_wavelength_nm=design_wavelength_nm),
    )


def make_setting(setting_id: str, signal_nm: float, idler_nm: float,
                 design_wavelength_nm: float = 1550.0) -> MeasurementSetting:
    """Setting from a two-letter id such as "DR" (signal D, idler R)."""
    if len(setting_id) != 2:
        raise InputError(f"Setting id must have two letters, got {setting_id!r}")
    return MeasurementSetting(
        setting_id=setting_id,
        signal=_arm(setting_id[0], signal_nm, design_wavelength_nm),
        idler=_arm(setting_id[1], idler_nm, design_wavelength_nm),
    )


def mub_settings(signal_nm: float, idler_nm: float, design_wavelength_nm: float = 1550.0) -> List[MeasurementSetting]:
    """All 36 pairs of H/V/D/A/R/L."""
    return [make_setting(s + i, signal_nm, idler_nm, design_wavelength_nm) for s in "HVDARL" for i in "HVDARL"]


def minimal_settings(signal_nm: float, idler_nm: float,
                     design_wavelength_nm: float = 1550.0) -> List[MeasurementSetting]:
    """The standard 16-setting complete set."""
    return [make_setting(sid, signal_nm, idler_nm, design_wavelength_nm) for sid in MINIMAL_SETTING_IDS]


def settings_digest(settings: Sequence[MeasurementSetting]) -> str:
    """sha256 of the canonical JSON of a settings list."""
    payload = json.dumps([s.model_dump(mode="json") for s in settings], sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# Forward model

def simulate_counts(rho: DensityMatrix, settings: Sequence[MeasurementSetting], pairs_per_setting: float,
                    accidental_rate: float = 0.0, efficiency: float = 1.0, seed: int = 0,
                    integration_s: float = 1.0, noise: bool = True) -> List[CountRecord]:
    """
    Poisson coincidences with mean pairs * efficiency^2 * p + accidental_rate * integration.

    Args:
        rho: True state
        settings: Analyzer settings
        pairs_per_setting: Pairs reaching the analyzers per integration window
        accidental_rate: Accidental coincidence rate (Hz)
        efficiency: Single-arm detection efficiency in (0, 1]
        seed: Random seed
        integration_s: Integration window per setting
        noise: False returns rounded means (for exact-data tests)

    Returns:
        One CountRecord per setting, in input order
    """
    if pairs_per_setting <= 0.0:
        raise InputError(f"pairs_per_setting must be positive, got {pairs_per_setting}")
    if accidental_rate < 0.0:
        raise InputError(f"accidental_rate must be non-negative, got {accidental_rate}")
    if not 0.0 < efficiency <= 1.0:
        raise InputError(f"efficiency must lie in (0, 1], got {efficiency}")
    probabilities = np.clip([born_probability(rho, s) for s in settings], 0.0, 1.0)
    accidentals = accidental_rate * integration_s
    means = pairs_per_setting * efficiency ** 2 * probabilities + accidentals
    if noise:
        counts = np.random.default_rng(seed).poisson(means)
    else:
        counts = np.rint(means).astype(int)
    records = [
        CountRecord(setting_id=s.setting_id, coincidences=int(n), accidentals=accidentals, integration_s=integration_s)
        for s, n in zip(settings, counts)
    ]
    flagged = sum(r.accidentals_dominate for r in records)
    if flagged:
        logger.warning(f"{flagged} setting(s) have accidentals above the observed counts")
    return records


# Reconstruction

def _aligned(records: Sequence[CountRecord], settings: Sequence[MeasurementSetting],
             subtract_accidentals: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    by_id = {r.setting_id: r for r in records}
    missing = [s.setting_id for s in settings if s.setting_id not in by_id]
    if missing:
        raise InputError(f"No count record for setting(s): {', '.join(missing)}")
    operators = np.array([setting_operator(s) for s in settings])
    counts = np.array([by_id[s.setting_id].coincidences for s in settings], dtype=float)
    accidentals = np.array([by_id[s.setting_id].accidentals for s in settings], dtype=float)
    if not subtract_accidentals:
        accidentals = np.zeros_like(accidentals)
    return operators, counts, accidentals


def design_matrix(operators: np.ndarray) -> np.ndarray:
    """A[j, k] = Re Tr(Gamma_k O_j) over the 16 Pauli products."""
    return np.real(np.einsum("kab,jba->jk", PAULI_PRODUCTS, operators))


def _check_rank(design: np.ndarray) -> None:
    rank = int(np.linalg.matrix_rank(design))
    if rank < 16:
        raise IllPosedError(f"Settings span only {rank} of 16 operator dimensions", null_dimension=16 - rank)


def linear_inversion(records: Sequence[CountRecord], settings: Sequence[MeasurementSetting],
                     subtract_accidentals: bool = False) -> DensityMatrix:
    """
    Least-squares inversion of the count equations; the result may be unphysical.

    Raises:
        IllPosedError: settings do not span the operator space
    """
    operators, counts, accidentals = _aligned(records, settings, subtract_accidentals)
    design = design_matrix(operators)
    _check_rank(design)
    coefficients, *_ = np.linalg.lstsq(design, counts - accidentals, rcond=None)
    estimate = DensityMatrix.from_unnormalized(np.einsum("k,kab->ab", coefficients, PAULI_PRODUCTS))
    if not estimate.is_physical():
        logger.warning(f"Linear inversion is not PSD (min eigenvalue {estimate.min_eigenvalue:.3e})")
    return estimate


_TRIL = np.tril_indices(4, -1)


def _t_matrix(params: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = params[:4]
    t[_TRIL] = params[4:10] + 1j * params[10:16]
    return t


def _t_params(t: np.ndarray) -> np.ndarray:
    return np.concatenate([np.real(np.diag(t)), t[_TRIL].real, t[_TRIL].imag])


def _warm_start(rho: DensityMatrix) -> np.ndarray:
    """Lower-triangular T with T^dagger T = rho (rho full rank)."""
    reverse = np.eye(4)[::-1]
    lower = np.linalg.cholesky(reverse @ rho.matrix @ reverse)
    return reverse @ lower.conj().T @ reverse


class _PoissonDeviance:
    """Deviance per count of mu_j = N0 Tr(T^dagger T O_j) + a_j against n_j."""

    def __init__(self, operators: np.ndarray, counts: np.ndarray, accidentals: np.ndarray, scale: float):
        self.operators = operators
        self.counts = counts
        self.accidentals = accidentals
        self.scale = scale
        self.total = float(np.sum(counts))
        self.positive = counts > 0

    def means(self, params: np.ndarray) -> np.ndarray:
        t = _t_matrix(params)
        rho = t.conj().T @ t
        return self.scale * np.real(np.einsum("ab,jba->j", rho, self.operators)) + self.accidentals

    def __call__(self, params: np.ndarray) -> float:
        mu = np.maximum(self.means(params), 1e-300)
        n = self.counts
        terms = mu.copy()
        p = self.positive
        terms[p] = mu[p] - n[p] - n[p] * np.log(mu[p] / n[p])
        return float(np.sum(terms) / self.total)

    def gradient(self, params: np.ndarray) -> np.ndarray:
        mu = np.maximum(self.means(params), 1e-300)
        weights = (1.0 - self.counts / mu) / self.total
        g = self.scale * np.einsum("j,jab->ab", weights, self.operators)
        t = _t_matrix(params)
        m = (g @ t.conj().T).T  # m[a, b] = (G T^dagger)[b, a]
        return np.concatenate([
            2.0 * np.real(np.diag(m)),
            2.0 * np.real(m[_TRIL]),
            -2.0 * np.imag(m[_TRIL]),
        ])

    def log_likelihood(self, params: np.ndarray) -> float:
        mu = np.maximum(self.means(params), 1e-300)
        n = self.counts
        return float(np.sum(n * np.log(mu) - mu - gammaln(n + 1.0)))


def mle_reconstruct(records: Sequence[CountRecord], settings: Sequence[MeasurementSetting],
                    options: Optional[MleOptions] = None) -> TomographyResult:
    """
    Maximum-likelihood state with rho = T^dagger T / Tr, T lower-triangular.

    Args:
        records: Observed coincidences
        settings: Analyzer settings (matched to records by setting_id)
        options: Optimizer limits and the accidental-subtraction flag

    Returns:
        TomographyResult with concurrence, fidelities and purity

    Raises:
        IllPosedError: settings do not span the operator space
        NonConvergenceError: evaluation cap reached; carries the best state so far
    """
    options = options or MleOptions()
    operators, counts, accidentals = _aligned(records, settings, options.subtract_accidentals)
    design = design_matrix(operators)
    _check_rank(design)
    if np.sum(counts) <= 0.0:
        raise InputError("All coincidence counts are zero")

    linear = linear_inversion(records, settings, options.subtract_accidentals)
    seed_rho = DensityMatrix.from_unnormalized(0.99 * linear.clipped().matrix + 0.01 * np.eye(4) / 4.0)
    expected = np.real(np.einsum("ab,jba->j", seed_rho.matrix, operators))
    scale = max(float(np.sum(counts - accidentals)), 1.0) / float(np.sum(expected))
    objective = _PoissonDeviance(operators, counts, accidentals, scale)

    start = _t_params(_warm_start(seed_rho))
    outcome = minimize(
        objective,
        start,
        jac=objective.gradient if options.analytic_gradient else None,
        method="L-BFGS-B",
        options={"maxfun": options.max_evaluations, "maxiter": options.max_evaluations,
                 "ftol": options.ftol, "gtol": options.gtol},
    )
    t = _t_matrix(outcome.x)
    rho = DensityMatrix.from_unnormalized(t.conj().T @ t)
    logger.debug(f"MLE: status {outcome.status}, {outcome.nfev} evaluations, deviance {outcome.fun:.3e}")
    if outcome.status == 1:
        raise NonConvergenceError(
            f"MLE reached its evaluation cap ({options.max_evaluations})",
            best=rho,
            diagnostics={"evaluations": int(outcome.nfev), "deviance": float(outcome.fun)},
        )
    fidelity, phase = best_maximally_entangled_fidelity(rho)
    return TomographyResult(
        rho=rho,
        concurrence=concurrence(rho),
        fidelity=fidelity,
        fidelity_psi_plus=fidelity_fixed_psi_plus(rho),
        optimal_phase=phase,
        purity=purity(rho),
        log_likelihood=objective.log_likelihood(outcome.x),
        evaluations=int(outcome.nfev),
        message=str(outcome.message),
        diagnostics={
            "status": int(outcome.status),
            "deviance_per_count": float(outcome.fun),
            "linear_min_eigenvalue": linear.min_eigenvalue,
        },
    )


# Figures of merit

def _floored(rho: DensityMatrix) -> Tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(rho.matrix)
    if w[0] < -EIGEN_FLOOR:
        raise InvalidStateError(f"Density matrix has eigenvalue {w[0]:.3e} below -{EIGEN_FLOOR}")
    w = np.clip(w, 0.0, None)
    return w / np.sum(w), v


def concurrence(rho: DensityMatrix) -> float:
    """
    Wootters concurrence max(0, l1 - l2 - l3 - l4).

    The l_i are the square roots of the eigenvalues of rho (sy sy) rho* (sy sy),
    evaluated through the Hermitian form sqrt(rho) rho~ sqrt(rho).

    Raises:
        InvalidStateError: eigenvalue below -1e-9
    """
    w, v = _floored(rho)
    m = (v * w) @ v.conj().T
    root = (v * np.sqrt(w)) @ v.conj().T
    flipped = _SPIN_FLIP @ m.conj() @ _SPIN_FLIP
    product = root @ flipped @ root
    lam = np.sqrt(np.clip(np.linalg.eigvalsh(0.5 * (product + product.conj().T)), 0.0, None))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2)."""
    return float(np.real(np.trace(rho.matrix @ rho.matrix)))


def fidelity_to_pure(rho: DensityMatrix, target: np.ndarray) -> float:
    """
    <psi|rho|psi> for a normalized pure target.

    Raises:
        InputError: target not normalized
        InvalidStateError: overlap has an imaginary part above 1e-10
    """
    psi = np.asarray(target, dtype=complex).reshape(4)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise InputError(f"Target state is not normalized (norm {np.linalg.norm(psi):.12f})")
    overlap = np.vdot(psi, rho.matrix @ psi)
    if abs(overlap.imag) > 1e-10:
        raise InvalidStateError(f"Fidelity has imaginary part {overlap.imag:.3e}")
    return float(overlap.real)


def fidelity_fixed_psi_plus(rho: DensityMatrix) -> float:
    """Fidelity to (|HV> + |VH>)/sqrt(2)."""
    return fidelity_to_pure(rho, PSI_PLUS)


def best_maximally_entangled_fidelity(rho: DensityMatrix, samples: int = 720) -> Tuple[float, float]:
    """
    Maximum over phi of the fidelity to (|HV> + e^{i phi}|VH>)/sqrt(2).

    Returns:
        (fidelity, phi in [0, 2 pi)); phi = 0 when the fidelity does not depend on phi
    """
    m = rho.matrix
    population = 0.5 * float(np.real(m[1, 1] + m[2, 2]))
    coherence = m[1, 2]
    if abs(coherence) < 1e-12:
        return population, 0.0

    def fidelity(phi: float) -> float:
        return population + float(np.real(np.exp(1j * phi) * coherence))

    step = 2.0 * math.pi / samples
    phases = np.arange(samples) * step
    coarse = phases[int(np.argmax(population + np.real(np.exp(1j * phases) * coherence)))]
    refined = minimize_scalar(lambda phi: -fidelity(phi), bounds=(coarse - step, coarse + step),
                              method="bounded", options={"xatol": 1e-10})
    phi = float(np.mod(refined.x, 2.0 * math.pi))
    return fidelity(phi), phi


# Monte-Carlo uncertainties

def uncertainty_mc(records: Sequence[CountRecord], settings: Sequence[MeasurementSetting], n_resamples: int = 200,
                   seed: int = 0, options: Optional[MleOptions] = None, threads: int = 1,
                   max_exclusion_fraction: float = 0.05) -> Uncertainty:
    """
    Poisson-resampled standard deviations of concurrence and best fidelity.

    Each resample draws every count from a Poisson law with the observed count
    as mean and reruns mle_reconstruct. Resample seeds are spawned from the
    seed, so the result does not depend on the thread count.

    Raises:
        InputError: fewer than 100 resamples
        ReliabilityError: more than max_exclusion_fraction of the resamples did not converge
    """
    if n_resamples < 100:
        raise InputError(f"n_resamples must be at least 100, got {n_resamples}")
    children = np.random.SeedSequence(seed).spawn(n_resamples)

    def resample(child: np.random.SeedSequence) -> Optional[Tuple[float, float]]:
        rng = np.random.default_rng(child)
        drawn = [r.model_copy(update={"coincidences": int(rng.poisson(r.coincidences))}) for r in records]
        try:
            result = mle_reconstruct(drawn, settings, options)
        except NonConvergenceError as e:
            logger.warning(f"Resample excluded: {e}")
            return None
        return result.concurrence, result.fidelity

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outcomes = list(pool.map(resample, children))

    kept = np.array([o for o in outcomes if o is not None])
    excluded = n_resamples - len(kept)
    if excluded > max_exclusion_fraction * n_resamples:
        raise ReliabilityError(f"{excluded} of {n_resamples} resamples did not converge", excluded, n_resamples)
    stds = np.std(kept, axis=0, ddof=1)
    logger.info(f"MC uncertainty over {len(kept)} resamples: sigma_C={stds[0]:.4g}, sigma_F={stds[1]:.4g}")
    return Uncertainty(float(stds[0]), float(stds[1]), excluded, n_resamples)


def reconstruct_with_uncertainty(records: Sequence[CountRecord], settings: Sequence[MeasurementSetting],
                                 n_resamples: int = 200, seed: int = 0, options: Optional[MleOptions] = None,
                                 threads: int = 1, max_exclusion_fraction: float = 0.05) -> TomographyResult:
    """mle_reconstruct with Monte-Carlo standard deviations attached."""
    result = mle_reconstruct(records, settings, options)
    spread = uncertainty_mc(records, settings, n_resamples, seed, options, threads, max_exclusion_fraction)
    diagnostics = dict(result.diagnostics, mc_excluded=spread.excluded, mc_resamples=spread.total)
    return replace(result, concurrence_std=spread.concurrence_std, fidelity_std=spread.fidelity_std,
                   diagnostics=diagnostics)


__all__ = [
    "BASIS_LABELS",
    "ANALYZER_ANGLES",
    "MINIMAL_SETTING_IDS",
    "PSI_PLUS",
    "PSI_MINUS",
    "DensityMatrix",
    "MleOptions",
    "TomographyResult",
    "Uncertainty",
    "bell_state",
    "werner_state",
    "mix_white_noise",
    "retarder",
    "projector",
    "setting_operator",
    "born_probability",
    "analyzer_angles",
    "make_setting",
    "mub_settings",
    "minimal_settings",
    "settings_digest",
    "simulate_counts",
    "design_matrix",
    "linear_inversion",
    "mle_reconstruct",
    "concurrence",
    "purity",
    "fidelity_to_pure",
    "fidelity_fixed_psi_plus",
    "best_maximally_entangled_fidelity",
    "uncertainty_mc",
    "reconstruct_with_uncertainty",
]
