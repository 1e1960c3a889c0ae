import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import SPEED_OF_LIGHT, WaveformParams, validate
from app.errors import ConfigError, DelayExceedsGuard
from app.sampling import SamplingIndexSet
from app.waveform import Payload, TdmSchedule, tx_baseband_sample

logger = logging.getLogger(__name__)

GainLaw = Callable[[np.random.Generator, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Target:
    """Point target: complex gain, range (m), radial velocity (m/s), angle (rad)."""
    alpha: complex
    r: float
    v: float
    theta: float

    @property
    def tau(self) -> float:
        return 2 * self.r / SPEED_OF_LIGHT

    def mu(self, params: WaveformParams) -> float:
        return 2 * self.v / validate(params).wavelength

    def f_if(self, params: WaveformParams) -> float:
        return params.b * self.tau / params.t

    def alpha_prime(self, params: WaveformParams) -> complex:
        return self.alpha * np.exp(-2j * np.pi * params.fc * self.tau)

    def alpha_double_prime(self, params: WaveformParams) -> complex:
        shift = (self.mu(params) - self.f_if(params)) * params.tmix
        return self.alpha_prime(params) * np.exp(2j * np.pi * shift)

    def to_dict(self) -> Dict[str, float]:
        return {
            "r": float(self.r),
            "v": float(self.v),
            "theta": float(self.theta),
            "gain_phase": float(np.angle(self.alpha)),
            "gain_abs": float(abs(self.alpha)),
        }


@dataclass(frozen=True)
class SensingScene:
    targets: Tuple[Target, ...]

    def __post_init__(self):
        if len(self.targets) < 1:
            raise ConfigError("A sensing scene needs at least one target")

    def __len__(self) -> int:
        return len(self.targets)

    def to_dict(self) -> Dict[str, List[Dict[str, float]]]:
        return {"targets": [t.to_dict() for t in self.targets]}


@dataclass(frozen=True)
class CommLink:
    """LOS communication link under ideal synchronization."""
    alpha_bar: complex = 1.0 + 0.0j
    tau_bar: float = 0.0
    v_bar: float = 0.0
    tau_syn: float = field(default=0.0)

    def __post_init__(self):
        if self.tau_syn != 0.0:
            raise ConfigError("Only ideal synchronization (tau_syn = 0) is modeled")


@dataclass(frozen=True, eq=False)
class IfSampleTensor:
    """Compressed IF observations indexed (symbol p, AIC sample n, Rx antenna r)."""
    samples: np.ndarray

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.samples.shape


class BlankWindow(NamedTuple):
    tbws: np.ndarray
    tbwe: np.ndarray
    nbws: np.ndarray
    nbwe: np.ndarray


def check_target(target: Target, params: WaveformParams) -> None:
    if not 0 <= target.tau < params.tmix:
        raise DelayExceedsGuard(
            f"Target at {target.r:g} m has delay {target.tau:g} s, guard Tmix is {params.tmix:g} s"
        )
    if target.f_if(params) > params.fmax:
        raise ConfigError(f"Target at {target.r:g} m has IF above fmax={params.fmax:g} Hz")


def generate_scene(
    k: int,
    range_interval: Tuple[float, float],
    vel_interval: Tuple[float, float],
    angle_interval: Tuple[float, float],
    rng: np.random.Generator,
    params: WaveformParams,
    gain_law: Optional[GainLaw] = None,
) -> SensingScene:
    """
    Draw K targets with i.i.d. uniform range, velocity and angle.

    Args:
        k: Number of targets
        range_interval: (low, high) range in m
        vel_interval: (low, high) velocity in m/s
        angle_interval: (low, high) angle in rad
        rng: Seeded generator
        params: Waveform parameters (guard and IF limits)
        gain_law: Optional map (rng, ranges) -> complex gains; unit-modulus random phase by default

    Returns:
        SensingScene with K targets
    """
    if k < 1:
        raise ConfigError(f"K must be at least 1, got {k}")
    r_lo, r_hi = range_interval
    if r_lo < 0 or r_hi < r_lo:
        raise ConfigError(f"Invalid range interval {range_interval}")
    if r_hi >= SPEED_OF_LIGHT * params.tmix / 2:
        raise DelayExceedsGuard(
            f"Maximum range {r_hi:g} m reaches the guard limit {SPEED_OF_LIGHT * params.tmix / 2:g} m"
        )

    ranges = rng.uniform(r_lo, r_hi, size=k)
    velocities = rng.uniform(*vel_interval, size=k)
    angles = rng.uniform(*angle_interval, size=k)
    if gain_law is None:
        gains = np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=k))
    else:
        gains = np.asarray(gain_law(rng, ranges), dtype=complex)

    targets = tuple(
        Target(alpha=complex(a), r=float(r), v=float(v), theta=float(th))
        for a, r, v, th in zip(gains, ranges, velocities, angles)
    )
    for target in targets:
        check_target(target, params)
    return SensingScene(targets=targets)


def blank_window(tau: float, hp, params: WaveformParams) -> BlankWindow:
    """Blank-window start/end times and sample indices for delay tau and shift(s) hp."""
    hp = np.asarray(hp, dtype=float)
    wrap = params.t - hp / params.b
    tbws = np.where(tau > wrap, params.tmix, wrap)
    tbwe = np.minimum(params.t, np.maximum(tau + wrap, params.tmix))
    nbws = np.floor(params.fmax * (tbws - params.tmix) + 1e-9).astype(np.int64)
    nbwe = np.floor(params.fmax * (tbwe - params.tmix) + 1e-9).astype(np.int64)
    return BlankWindow(tbws=tbws, tbwe=tbwe, nbws=nbws, nbwe=nbwe)


def segment_phase(tau: float, hp, params: WaveformParams) -> np.ndarray:
    """First-segment IF phase; the third segment adds segment_jump(tau)."""
    hp = np.asarray(hp, dtype=float)
    f_if = params.b * tau / params.t
    return np.pi * (f_if + params.b - 2 * hp / params.t) * tau


def segment_jump(tau: float, params: WaveformParams) -> float:
    return 2 * np.pi * params.b * tau


def segment_factors(tau: float, payload: Payload, sampling_set: SamplingIndexSet,
                    params: WaveformParams, conjugate: bool = False, blank_value: complex = 0.0) -> np.ndarray:
    """
    Per-(p, n) segment multipliers of the IF model.

    Args:
        tau: Delay used for windows and phases
        payload: Shift indices per symbol
        sampling_set: AIC indices
        params: Waveform parameters
        conjugate: Return the conjugate phases (phase compensation)
        blank_value: Value placed inside the blank window

    Returns:
        P x N complex matrix
    """
    window = blank_window(tau, payload.h, params)
    phi = segment_phase(tau, payload.h, params)
    sign = -1.0 if conjugate else 1.0
    m = sampling_set.indices[None, :]
    first = m < window.nbws[:, None]
    third = m >= window.nbwe[:, None]
    seg1 = np.exp(1j * sign * phi)[:, None]
    seg3 = np.exp(1j * sign * (phi + segment_jump(tau, params)))[:, None]
    return np.where(first, seg1, np.where(third, seg3, blank_value))


def _add_noise(clean: np.ndarray, snr_db: Optional[float], rng: Optional[np.random.Generator],
               scale: float = 1.0) -> np.ndarray:
    if snr_db is None:
        return clean
    if rng is None:
        raise ConfigError("A random generator is required when snr_db is given")
    power = float(np.mean(np.abs(clean) ** 2))
    variance = scale * power / 10 ** (snr_db / 10)
    noise = rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
    return clean + np.sqrt(variance / 2) * noise


def synthesize_if(
    scene: SensingScene,
    schedule: TdmSchedule,
    payload: Payload,
    sampling_set: SamplingIndexSet,
    params: WaveformParams,
    snr_db: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> IfSampleTensor:
    """
    Closed-form compressed IF samples for every symbol, AIC sample and Rx antenna.

    Args:
        scene: Targets
        schedule: TDM antenna schedule
        payload: Shift indices
        sampling_set: AIC indices against Nmax
        params: Waveform parameters
        snr_db: Per-sample SNR; noiseless when None
        rng: Generator for the noise

    Returns:
        IfSampleTensor of shape P x N x Lr
    """
    derived = validate(params)
    if sampling_set.base != derived.nmax:
        raise ConfigError(f"Sampling set base {sampling_set.base} does not match Nmax={derived.nmax}")
    if len(payload) != params.p or len(schedule.l) != params.p:
        raise ConfigError("Payload and schedule must both have P entries")

    m = sampling_set.indices.astype(float)
    p_idx = np.arange(params.p)
    rx = np.arange(params.lr)
    clean = np.zeros((params.p, len(m), params.lr), dtype=complex)

    for target in scene.targets:
        tau = target.tau
        sin_theta = np.sin(target.theta)
        tone = np.exp(-2j * np.pi * (target.f_if(params) / params.fmax) * m)
        segments = segment_factors(tau, payload, sampling_set, params)
        slow = (np.exp(1j * np.pi * schedule.l * params.lr * sin_theta)
                * np.exp(2j * np.pi * p_idx * target.mu(params) * derived.t0))
        steer = np.exp(1j * np.pi * rx * sin_theta)
        per_symbol = target.alpha_double_prime(params) * slow[:, None] * segments * tone[None, :]
        clean += per_symbol[:, :, None] * steer[None, None, :]

    return IfSampleTensor(samples=_add_noise(clean, snr_db, rng))


def comm_rx_samples(
    payload: Payload,
    sampling_set: Union[SamplingIndexSet, Sequence[SamplingIndexSet]],
    params: WaveformParams,
    snr_db: Optional[float],
    rng: Optional[np.random.Generator],
    link: CommLink = CommLink(),
    noise_reference: str = "sample",
) -> np.ndarray:
    """
    Compressed baseband samples of each received symbol.

    Args:
        payload: Shift indices
        sampling_set: One comm index set, or one per symbol
        params: Waveform parameters
        snr_db: SNR in dB; noiseless when None
        rng: Generator for the noise
        link: LOS link
        noise_reference: "sample" (per-sample SNR) or "signal" (SNR over the chirp bandwidth B)

    Returns:
        Complex array, one row per symbol
    """
    if noise_reference not in ("sample", "signal"):
        raise ConfigError(f"Unknown noise reference '{noise_reference}'")
    sets = [sampling_set] * len(payload) if isinstance(sampling_set, SamplingIndexSet) else list(sampling_set)
    if len(sets) != len(payload):
        raise ConfigError("Need one comm index set per symbol")

    times = np.stack([s.indices / params.fbar for s in sets])
    clean = link.alpha_bar * tx_baseband_sample(times, payload.h[:, None], params)
    scale = params.fbar / params.b if noise_reference == "signal" else 1.0
    return _add_noise(clean, snr_db, rng, scale=scale)
