import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.channel import IfSampleTensor, segment_factors
from app.config import WaveformParams, validate
from app.cs import (
    Dictionary,
    EffectiveDictionary,
    SparseEstimate,
    build_ae_dictionary,
    build_dft_dictionary,
    fft_correlate,
    mmv_omp,
    omp,
    peak_bins,
    top_k_rows,
)
from app.errors import ConfigError, DelayExceedsGuard, LengthMismatch, MissingPairEstimate
from app.sampling import SamplingIndexSet, SelectionOperator
from app.waveform import Payload, TdmSchedule

logger = logging.getLogger(__name__)


@dataclass
class RangeResult:
    n_hat: List[int]
    tau_hat: np.ndarray
    x_hat: SparseEstimate


@dataclass(eq=False)
class PcMatrix:
    """Phase-compensation entries (n, p) for one target."""
    entries: np.ndarray


@dataclass
class VelocityResult:
    v_hat_per_pair: np.ndarray
    v_hat: float
    z_hat: List[List[SparseEstimate]]
    p_hat: np.ndarray


@dataclass
class AngleResult:
    a_hat: np.ndarray
    n_hat_ae: int
    theta_hat: float


def measurement_matrix(tensor: IfSampleTensor) -> np.ndarray:
    """Y_RE = [R_0, ..., R_{P-1}]: N rows, columns ordered symbol-major then Rx antenna."""
    p, n, lr = tensor.shape
    return tensor.samples.transpose(1, 0, 2).reshape(n, p * lr)


def range_dictionary(params: WaveformParams) -> Dictionary:
    derived = validate(params)
    return build_dft_dictionary(derived.nmax, params.rho_re, sign=-1, scale=params.fmax)


def range_estimate(tensor: IfSampleTensor, sampling_set: SamplingIndexSet,
                   params: WaveformParams, k: int) -> RangeResult:
    """
    Joint-sparse range estimation over all symbols and Rx antennas.

    Args:
        tensor: Compressed IF samples, P x N x Lr
        sampling_set: AIC indices the tensor was sampled on
        params: Waveform parameters
        k: Number of targets

    Returns:
        RangeResult with the K strongest grid rows and their delays
    """
    derived = validate(params)
    if tensor.shape != (params.p, len(sampling_set), params.lr):
        raise LengthMismatch(f"IF tensor shape {tensor.shape} does not match P x N x Lr")
    a = EffectiveDictionary(range_dictionary(params), SelectionOperator.from_index_set(sampling_set))
    x_hat = mmv_omp(measurement_matrix(tensor), a, k)
    n_hat = top_k_rows(x_hat, k)
    tau_hat = np.asarray(n_hat, dtype=float) * derived.tau_grid_step
    logger.debug(f"Range rows {n_hat}")
    return RangeResult(n_hat=n_hat, tau_hat=tau_hat, x_hat=x_hat)


def build_pc_matrix(tau_hat: float, payload: Payload, sampling_set: SamplingIndexSet,
                    params: WaveformParams) -> PcMatrix:
    """Conjugate segment phases from the delay estimate, 1 inside the blank window."""
    if tau_hat < 0:
        raise DelayExceedsGuard(f"Negative delay estimate {tau_hat:g} s")
    entries = segment_factors(tau_hat, payload, sampling_set, params, conjugate=True, blank_value=1.0)
    return PcMatrix(entries=entries.T)


def shift_bin(q: int, grid_size: int) -> int:
    """Signed Doppler bin: the upper half of the grid maps to negative values."""
    return q if q < grid_size / 2 else q - grid_size


def pc_weights(pc: PcMatrix, n_hat: int, sampling_set: SamplingIndexSet, re_dictionary: Dictionary) -> np.ndarray:
    """Per-symbol weight (R^PC)^T (b_k * a_k) / N, b_k the conjugate of the selected atom a_k."""
    atom = re_dictionary.atoms_at(sampling_set.indices, [n_hat])[:, 0]
    b = atom.conj()
    return pc.entries.T @ (b * atom) / len(atom)


def velocity_estimate(x_hat: SparseEstimate, n_hat: int, pc: PcMatrix, schedule: TdmSchedule,
                      sampling_set: SamplingIndexSet, re_dictionary: Dictionary,
                      params: WaveformParams) -> VelocityResult:
    """
    Phase-compensated Doppler estimation per antenna pair, averaged over all pairs.

    Args:
        x_hat: MMV estimate from range_estimate
        n_hat: Range row of the target
        pc: Phase-compensation matrix for the target
        schedule: TDM schedule of the frame
        sampling_set: AIC indices
        re_dictionary: Range dictionary used by range_estimate
        params: Waveform parameters

    Returns:
        VelocityResult with per-pair and averaged velocities
    """
    derived = validate(params)
    row = x_hat.coefficient(n_hat)
    weights = pc_weights(pc, n_hat, sampling_set, re_dictionary)
    grid_size = params.rho_ve * params.p
    ve_dictionary = build_dft_dictionary(params.p, params.rho_ve, sign=+1)
    to_velocity = derived.wavelength / (2 * grid_size * derived.t0)

    v_pairs = np.zeros((params.lt, params.lr))
    p_hat = np.zeros((params.lt, params.lr), dtype=np.int64)
    z_hat: List[List[SparseEstimate]] = []
    for l, pset in enumerate(schedule.psets):
        a_l = EffectiveDictionary(ve_dictionary, SelectionOperator(indices=pset, base=params.p))
        per_rx = []
        for r in range(params.lr):
            compensated = row[r::params.lr] * weights
            est = omp(compensated[pset], a_l, max_atoms=1, residual_tol=None)
            q = est.support[0] if est.support else 0
            p_hat[l, r] = q
            v_pairs[l, r] = shift_bin(q, grid_size) * to_velocity
            per_rx.append(est)
        z_hat.append(per_rx)
    return VelocityResult(v_hat_per_pair=v_pairs, v_hat=float(np.mean(v_pairs)), z_hat=z_hat, p_hat=p_hat)


def angle_estimate(z_hats: Sequence[Sequence[SparseEstimate]], p_hats: np.ndarray,
                   params: WaveformParams, dictionary: Optional[Dictionary] = None) -> AngleResult:
    """Virtual-array angle estimate: argmax over the steering grid."""
    lt, lr = params.lt, params.lr
    if len(z_hats) != lt or any(len(per_rx) != lr for per_rx in z_hats):
        raise MissingPairEstimate(f"Expected {lt} x {lr} pair estimates")
    a_hat = np.zeros(lt * lr, dtype=complex)
    for l in range(lt):
        for r in range(lr):
            est, q = z_hats[l][r], int(p_hats[l][r])
            if est is None or q not in est.support:
                raise MissingPairEstimate(f"No coefficient at bin {q} for Tx {l}, Rx {r}")
            a_hat[l * lr + r] = est.coefficient(q)
    if dictionary is None:
        dictionary = build_ae_dictionary(lt * lr, params.rho_ae)
    spectrum = np.abs(dictionary.atoms.T @ a_hat)
    n_hat_ae = int(np.argmax(spectrum))
    return AngleResult(a_hat=a_hat, n_hat_ae=n_hat_ae, theta_hat=float(dictionary.grid[n_hat_ae]))


def baseline_uniform_dft(
    tensor: IfSampleTensor,
    params: WaveformParams,
    k: int,
    payload: Payload,
    schedule: TdmSchedule,
    sampling_set: SamplingIndexSet,
    pc1: bool = True,
    pc2: bool = False,
) -> Tuple[RangeResult, List[VelocityResult], List[AngleResult]]:
    """
    Uniform-sampling and DFT baseline with a conventional per-antenna slow-time DFT.

    Args:
        tensor: IF samples on the uniform grid of `params` (see config.uniform_params)
        params: Parameters of the uniform ADC
        k: Number of targets
        payload: Shift indices (for phase compensation)
        schedule: TDM schedule, round robin for the conventional scheme
        sampling_set: Full index set of the uniform grid
        pc1: Apply segment-phase compensation
        pc2: Apply velocity-induced phase compensation before angle estimation

    Returns:
        Tuple of (range result, per-target velocity results, per-target angle results)
    """
    params = replace(params, rho_re=1)
    derived = validate(params)
    if len(sampling_set) != derived.nmax:
        raise ConfigError("The uniform baseline expects the full sample grid")

    re_dictionary = range_dictionary(params)
    a = EffectiveDictionary(re_dictionary, SelectionOperator.from_index_set(sampling_set))
    y = measurement_matrix(tensor)
    corr = a.correlate(y)
    power = np.sum(np.abs(corr) ** 2, axis=1)
    bins = peak_bins(power, k)
    coeffs = corr[bins] / a.rows
    residual = y - a.columns(bins) @ coeffs
    x_hat = SparseEstimate(support=list(bins), coeffs=coeffs, residual_norm=float(np.linalg.norm(residual)))
    range_result = RangeResult(n_hat=list(bins), tau_hat=np.asarray(bins, dtype=float) * derived.tau_grid_step,
                               x_hat=x_hat)

    ae_dictionary = build_ae_dictionary(params.lt * params.lr, params.rho_ae)
    velocities: List[VelocityResult] = []
    angles: List[AngleResult] = []
    for n_hat, tau_hat in zip(range_result.n_hat, range_result.tau_hat):
        if pc1:
            weights = pc_weights(build_pc_matrix(tau_hat, payload, sampling_set, params), n_hat,
                                 sampling_set, re_dictionary)
        else:
            weights = np.ones(params.p, dtype=complex)
        velocity = _slow_time_dft(x_hat.coefficient(n_hat), weights, schedule, params)
        if pc2:
            mu_hat = 2 * velocity.v_hat / derived.wavelength
            for l, per_rx in enumerate(velocity.z_hat):
                for est in per_rx:
                    est.coeffs = est.coeffs * np.exp(-2j * np.pi * mu_hat * l * derived.t0)
        velocities.append(velocity)
        angles.append(angle_estimate(velocity.z_hat, velocity.p_hat, params, ae_dictionary))
    return range_result, velocities, angles


def _slow_time_dft(row: np.ndarray, weights: np.ndarray, schedule: TdmSchedule,
                   params: WaveformParams) -> VelocityResult:
    derived = validate(params)
    per_antenna = params.p // params.lt
    grid_size = params.rho_ve * per_antenna
    to_velocity = derived.wavelength / (2 * grid_size * params.lt * derived.t0)

    v_pairs = np.zeros((params.lt, params.lr))
    p_hat = np.zeros((params.lt, params.lr), dtype=np.int64)
    z_hat: List[List[SparseEstimate]] = []
    for l, pset in enumerate(schedule.psets):
        per_rx = []
        for r in range(params.lr):
            sequence = (row[r::params.lr] * weights)[pset]
            spectrum = fft_correlate(sequence, grid_size, sign=+1)
            q = int(np.argmax(np.abs(spectrum)))
            p_hat[l, r] = q
            v_pairs[l, r] = shift_bin(q, grid_size) * to_velocity
            per_rx.append(SparseEstimate(support=[q], coeffs=np.array([spectrum[q] / per_antenna]),
                                         residual_norm=0.0))
        z_hat.append(per_rx)
    return VelocityResult(v_hat_per_pair=v_pairs, v_hat=float(np.mean(v_pairs)), z_hat=z_hat, p_hat=p_hat)
