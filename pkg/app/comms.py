import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.fft

from app.config import WaveformParams, ceil_index, params_hash, validate
from app.cs import Dictionary, EffectiveDictionary, SparseEstimate, build_dft_dictionary, omp
from app.errors import ConfigError, LengthMismatch
from app.sampling import SamplingIndexSet, SelectionOperator

logger = logging.getLogger(__name__)

IQ_MAGIC = b"LRIQ"


@dataclass(eq=False)
class DechirpSequence:
    values: np.ndarray
    index_set: SamplingIndexSet


@dataclass
class DemodResult:
    h_hat: int
    bin_energies: Tuple[float, float]
    x_bar_hat: SparseEstimate
    effective_bits: float


def build_downchirp(index_set: SamplingIndexSet, params: WaveformParams) -> np.ndarray:
    """Digital down-chirp exp{j*pi*[-(B/T)(m/fbar)^2 + B*m/fbar]} at the comm sample instants."""
    derived = validate(params)
    if index_set.base != derived.nbar_max:
        raise ConfigError(f"Comm index set base {index_set.base} does not match NbarMax={derived.nbar_max}")
    x = index_set.indices / params.fbar
    phase = 0.5 * (-(params.b / params.t) * x ** 2 + params.b * x)
    return np.exp(2j * np.pi * np.mod(phase, 1.0))


def dechirp(rx_samples: np.ndarray, downchirp: np.ndarray, index_set: SamplingIndexSet) -> DechirpSequence:
    rx_samples = np.asarray(rx_samples)
    if rx_samples.shape != downchirp.shape:
        raise LengthMismatch(f"Received {rx_samples.shape} samples against a {downchirp.shape} down-chirp")
    return DechirpSequence(values=rx_samples * downchirp, index_set=index_set)


def fold_index(h: int, params: WaveformParams) -> int:
    """First comm sample at or after the wrap instant T - h/B."""
    return ceil_index(params.fbar * (params.t - h / params.b))


def dechirp_model(h: int, index_set: SamplingIndexSet, params: WaveformParams) -> np.ndarray:
    """
    Noiseless two-branch tone model of a de-chirped symbol.

    Tone h/T before the fold index, tone h/T - B after it with an extra phase 2*pi*(B*T - h).
    """
    m = index_set.indices.astype(float)
    x = m / params.fbar
    first = np.exp(2j * np.pi * np.mod(h / params.t * x, 1.0))
    second_cycles = (h / params.t - params.b) * x + (params.b * params.t - h)
    second = np.exp(2j * np.pi * np.mod(second_cycles, 1.0))
    return np.where(m < fold_index(h, params), first, second)


def comm_dictionary(params: WaveformParams) -> Dictionary:
    return build_dft_dictionary(validate(params).nbar_max, 1, sign=+1)


def demodulate(dechirped: DechirpSequence, params: WaveformParams, max_atoms: int = 2,
               residual_tol: Optional[float] = 1e-6, dictionary: Optional[Dictionary] = None) -> DemodResult:
    """
    Sparse spectral recovery of a de-chirped symbol and the two-bin decision.

    Args:
        dechirped: De-chirped compressed samples
        params: Waveform parameters
        max_atoms: OMP atom budget
        residual_tol: OMP residual stop, None to disable
        dictionary: Comm dictionary, rebuilt when omitted

    Returns:
        DemodResult with the lowest h maximizing |x[h]| + |x[h + (fbar-B)H/B]|
    """
    derived = validate(params)
    dictionary = dictionary or comm_dictionary(params)
    a = EffectiveDictionary(dictionary, SelectionOperator.from_index_set(dechirped.index_set))
    estimate = omp(dechirped.values, a, max_atoms=max_atoms, residual_tol=residual_tol)

    magnitudes = np.zeros(derived.nbar_max + derived.h)
    magnitudes[estimate.support] = np.abs(estimate.coeffs)
    metric = magnitudes[:derived.h] + magnitudes[derived.bin_offset:derived.bin_offset + derived.h]
    h_hat = int(np.argmax(metric))
    energies = (float(magnitudes[h_hat]), float(magnitudes[h_hat + derived.bin_offset]))
    return DemodResult(h_hat=h_hat, bin_energies=energies, x_bar_hat=estimate, effective_bits=float(params.nsf))


def lora_alphabet(count: int, params: WaveformParams) -> Tuple[int, float]:
    """Reduced alphabet size H*eta and effective bits NSF + log2(eta) for `count` uniform samples."""
    derived = validate(params)
    if count < 1 or derived.nbar_max % count or count & (count - 1):
        raise ConfigError(
            f"Uniform LoRa sampling needs a power-of-two count dividing NbarMax={derived.nbar_max}, got {count}"
        )
    eta = count / derived.nbar_max
    size = int(round(derived.h * eta))
    if size < 1:
        raise ConfigError(f"Sampling ratio {eta:g} leaves no usable symbols")
    return min(size, derived.h), params.nsf + math.log2(eta)


def lora_baseline_demod(samples: np.ndarray, index_set: SamplingIndexSet, params: WaveformParams,
                        full_alphabet: bool = False) -> DemodResult:
    """
    Classical de-chirp and DFT argmax on uniformly sampled symbols.

    Args:
        samples: Received samples on the uniform index set
        index_set: Uniform comm index set
        params: Waveform parameters
        full_alphabet: Decide over all H symbols instead of the reduced alphabet

    Returns:
        DemodResult; effective_bits is NSF + log2(eta)
    """
    derived = validate(params)
    count = len(index_set)
    size, bits = lora_alphabet(count, params)
    values = dechirp(samples, build_downchirp(index_set, params), index_set).values
    magnitudes = np.abs(scipy.fft.fft(values))

    hypotheses = np.arange(derived.h if full_alphabet else size)
    first = hypotheses % count
    second = (hypotheses - derived.h) % count
    folded = magnitudes[second] * (second != first)
    h_hat = int(np.argmax(magnitudes[first] + folded))
    support = [int(first[h_hat])] + ([int(second[h_hat])] if second[h_hat] != first[h_hat] else [])
    estimate = SparseEstimate(support=support, coeffs=magnitudes[support].astype(complex), residual_norm=0.0)
    return DemodResult(h_hat=h_hat, bin_energies=(float(magnitudes[first[h_hat]]), float(folded[h_hat])),
                       x_bar_hat=estimate, effective_bits=params.nsf if full_alphabet else bits)


def dump_iq(path: str, sequences: Sequence[np.ndarray], params: WaveformParams) -> Path:
    """
    Write de-chirped sequences as little-endian interleaved float64 I/Q.

    Layout: b"LRIQ", uint32 LE header length, UTF-8 JSON header
    {"params_hash", "count", "length"}, then count*length complex samples.
    """
    data = np.asarray(sequences, dtype=np.complex128)
    if data.ndim != 2:
        raise LengthMismatch("I/Q dump expects equal-length sequences")
    header = json.dumps({"params_hash": params_hash(params), "count": int(data.shape[0]),
                         "length": int(data.shape[1])}, sort_keys=True).encode("utf-8")
    out = Path(path)
    try:
        with open(out, "wb") as f:
            f.write(IQ_MAGIC)
            f.write(struct.pack("<I", len(header)))
            f.write(header)
            f.write(data.view(np.float64).astype("<f8").tobytes())
    except OSError as e:
        logger.error(f"Failed to write I/Q dump {out}: {e}")
        raise
    logger.info(f"Wrote {data.shape[0]} de-chirped sequences to {out}")
    return out


def load_iq(path: str) -> Tuple[Dict, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != IQ_MAGIC:
        raise ConfigError(f"{path} is not an I/Q dump")
    (size,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + size].decode("utf-8"))
    flat = np.frombuffer(raw[8 + size:], dtype="<f8")
    data = flat.view(np.complex128).reshape(header["count"], header["length"])
    return header, data
