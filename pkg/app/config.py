import json
import math
import numbers
import hashlib
import logging
from dataclasses import dataclass, asdict, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Tuple, Any

from app.errors import (
    ConfigError,
    BandwidthMismatch,
    ScheduleIndivisible,
    SamplingOverrun,
    BinOffsetNonInteger,
    UnknownConfigKey,
)

logger = logging.getLogger(__name__)

# Simulation value of the speed of light (m/s)
SPEED_OF_LIGHT = 3e8

BANDWIDTH_TOLERANCE = 1e-3
_INDEX_EPS = 1e-9


def floor_index(x: float) -> int:
    """floor() for sample counts that are integers up to rounding noise."""
    return int(math.floor(x + _INDEX_EPS))


def ceil_index(x: float) -> int:
    return int(math.ceil(x - _INDEX_EPS))


@dataclass(frozen=True)
class WaveformParams:
    """User-settable waveform parameters, all in SI base units."""
    fc: float
    b: float
    nsf: int
    t: float
    tgi: float
    tmix: float
    p: int
    lt: int
    lr: int
    fmax: float
    fbar: float
    n: int
    nbar: int
    rho_re: int = 1
    rho_ve: int = 1
    rho_ae: int = 15
    seed: int = 0
    nmax_override: Optional[int] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WaveformParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise UnknownConfigKey(f"Unknown waveform keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Incomplete waveform section: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class DerivedParams:
    h: int
    t0: float
    wavelength: float
    d: float
    nmax: int
    nbar_max: int
    bin_offset: int
    tau_grid_step: float
    range_grid_step: float
    vel_grid_step: float
    v_max_unamb: float
    r_max: float
    hit_threshold: float


_INTEGER_FIELDS = ("nsf", "p", "lt", "lr", "n", "nbar", "rho_re", "rho_ve", "rho_ae")
_POSITIVE_FIELDS = ("fc", "b", "t", "tgi", "tmix", "fmax", "fbar")


def _is_integer(value: Any) -> bool:
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


@lru_cache(maxsize=128)
def validate(params: WaveformParams) -> DerivedParams:
    """
    Check every waveform constraint and evaluate the derived constants.

    Args:
        params: Waveform parameters

    Returns:
        DerivedParams for the given parameters
    """
    for name in _POSITIVE_FIELDS:
        value = getattr(params, name)
        try:
            positive = value > 0
        except TypeError:
            positive = False
        if not positive:
            raise ConfigError(f"{name} must be positive, got {value!r}")
    for name in _INTEGER_FIELDS:
        value = getattr(params, name)
        if not _is_integer(value) or value < 1:
            raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    if not _is_integer(params.seed) or params.seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {params.seed!r}")
    if params.nmax_override is not None and (not _is_integer(params.nmax_override) or params.nmax_override < 1):
        raise ConfigError(f"nmax_override must be a positive integer, got {params.nmax_override!r}")

    h = 2 ** int(params.nsf)
    if abs(params.b - h / params.t) / params.b > BANDWIDTH_TOLERANCE:
        raise BandwidthMismatch(
            f"B={params.b:g} Hz does not match 2^NSF/T={h / params.t:g} Hz"
        )
    if params.tgi < params.tmix:
        raise ConfigError(f"TGI={params.tgi:g} s must not be shorter than Tmix={params.tmix:g} s")
    if params.t <= params.tmix:
        raise ConfigError(f"T={params.t:g} s must exceed Tmix={params.tmix:g} s")
    if params.p % params.lt != 0:
        raise ScheduleIndivisible(f"P={params.p} is not a multiple of Lt={params.lt}")
    if params.fbar < params.b:
        raise ConfigError(f"fbar={params.fbar:g} Hz must be at least B={params.b:g} Hz")

    offset = (params.fbar - params.b) * h / params.b
    if abs(offset - round(offset)) > 1e-6 * max(1.0, abs(offset)):
        raise BinOffsetNonInteger(f"(fbar-B)H/B = {offset:g} is not an integer")

    if params.nmax_override is not None:
        nmax = int(params.nmax_override)
    else:
        nmax = floor_index(params.fmax * (params.t - params.tmix))
    nbar_max = floor_index(params.fbar * params.t)
    if nmax < 1:
        raise ConfigError(f"fmax*(T-Tmix) yields no samples (Nmax={nmax})")
    if params.n > nmax:
        raise SamplingOverrun(f"N={params.n} exceeds Nmax={nmax}")
    if params.nbar > nbar_max:
        raise SamplingOverrun(f"Nbar={params.nbar} exceeds NbarMax={nbar_max}")

    c = SPEED_OF_LIGHT
    wavelength = c / params.fc
    t0 = params.t + params.tgi
    tau_step = params.fmax * params.t / (params.b * params.rho_re * nmax)
    derived = DerivedParams(
        h=h,
        t0=t0,
        wavelength=wavelength,
        d=wavelength / 2,
        nmax=nmax,
        nbar_max=nbar_max,
        bin_offset=int(round(offset)),
        tau_grid_step=tau_step,
        range_grid_step=tau_step * c / 2,
        vel_grid_step=wavelength / (2 * params.rho_ve * params.p * t0),
        v_max_unamb=wavelength / (4 * t0),
        r_max=c * params.fmax * (params.t - params.tmix) / (2 * params.b),
        hit_threshold=c * (params.t - params.tmix) / (2 * params.b * params.t),
    )
    if not derived.hit_threshold < derived.r_max:
        raise ConfigError(
            f"Hit threshold {derived.hit_threshold:g} m is not below Rmax {derived.r_max:g} m"
        )
    logger.debug(f"Validated waveform: H={h}, Nmax={nmax}, NbarMax={nbar_max}")
    return derived


def uniform_params(params: WaveformParams, rate: float) -> WaveformParams:
    """Parameters of a uniform ADC running at `rate` on the full sensing window."""
    count = floor_index(rate * (params.t - params.tmix))
    return replace(params, fmax=rate, n=count, nmax_override=None)


def params_hash(params: WaveformParams) -> str:
    canonical = json.dumps(params.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


_BASE_1GHZ = dict(
    fc=77e9, b=1e9, nsf=14, t=16.384e-6, tgi=0.5e-6, tmix=0.5e-6,
    p=120, lt=2, lr=6, fmax=31.25e6, fbar=2e9, n=448, nbar=512,
    rho_re=1, rho_ve=1, rho_ae=15, seed=0,
)

PRESETS: Dict[str, Dict[str, Any]] = {
    "paper-1ghz": _BASE_1GHZ,
    "paper-500mhz": {**_BASE_1GHZ, "b": 500e6, "nsf": 13},
    "paper-literal": {**_BASE_1GHZ, "t": 16.4e-6, "nmax_override": 512},
}


def preset(name: str, **overrides: Any) -> WaveformParams:
    """Build WaveformParams from a named preset with optional field overrides."""
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}'. Available: {', '.join(PRESETS)}")
    return WaveformParams.from_dict({**PRESETS[name], **overrides})


CONFIG_SECTIONS = ("waveform", "scene", "experiment")


def load_config(path: str, base: Optional[WaveformParams] = None) -> Tuple[WaveformParams, Dict, Dict]:
    """
    Read a JSON configuration file.

    Args:
        path: Path to the configuration file
        base: Parameters the waveform section is applied on top of

    Returns:
        Tuple of (waveform params, scene section, experiment section)
    """
    config_path = Path(path)
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Failed to read config {config_path}: {e}")
        raise ConfigError(f"Cannot read config {config_path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"Config {config_path} must hold a JSON object")
    unknown = sorted(set(data) - set(CONFIG_SECTIONS))
    if unknown:
        raise UnknownConfigKey(f"Unknown config sections: {', '.join(unknown)}")

    waveform = data.get("waveform", {})
    if base is not None:
        known = {f.name for f in fields(WaveformParams)}
        bad = sorted(set(waveform) - known)
        if bad:
            raise UnknownConfigKey(f"Unknown waveform keys: {', '.join(bad)}")
        params = replace(base, **waveform)
    else:
        params = WaveformParams.from_dict(waveform)
    validate(params)
    logger.info(f"Loaded config from {config_path}")
    return params, dict(data.get("scene", {})), dict(data.get("experiment", {}))
