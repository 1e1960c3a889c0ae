import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

import numpy as np

from app.config import WaveformParams
from app.errors import ConfigError, OutOfSymbol, ScheduleIndivisible

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Payload:
    """Frequency-shift index h_p carried by each symbol of a frame."""
    h: np.ndarray

    def __len__(self) -> int:
        return len(self.h)

    def to_list(self) -> List[int]:
        return [int(v) for v in self.h]


@dataclass(frozen=True, eq=False)
class TdmSchedule:
    """Transmit antenna l_p per symbol and the per-antenna symbol sets."""
    l: np.ndarray
    psets: Tuple[np.ndarray, ...]

    @property
    def lt(self) -> int:
        return len(self.psets)

    def to_dict(self) -> Dict[str, List[int]]:
        return {"l": [int(v) for v in self.l]}


def generate_payload(p: int, h_size: int, rng: np.random.Generator) -> Payload:
    """
    Draw P i.i.d. uniform shift indices.

    Args:
        p: Number of symbols
        h_size: Alphabet size H
        rng: Seeded generator

    Returns:
        Payload of length P
    """
    if h_size < 2:
        raise ConfigError(f"Alphabet size must be at least 2, got {h_size}")
    return Payload(h=_frozen(rng.integers(0, h_size, size=p)))


def _schedule_from_assignment(assignment: np.ndarray, lt: int) -> TdmSchedule:
    psets = tuple(_frozen(np.flatnonzero(assignment == l)) for l in range(lt))
    return TdmSchedule(l=_frozen(assignment), psets=psets)


def generate_schedule(p: int, lt: int, rng: np.random.Generator) -> TdmSchedule:
    """Balanced pseudo-random antenna schedule: a shuffle of P/Lt copies of each antenna."""
    if lt < 1 or p % lt != 0:
        raise ScheduleIndivisible(f"P={p} is not a multiple of Lt={lt}")
    assignment = rng.permutation(np.repeat(np.arange(lt), p // lt))
    return _schedule_from_assignment(assignment, lt)


def round_robin_schedule(p: int, lt: int) -> TdmSchedule:
    """Conventional TDM schedule l_p = p mod Lt."""
    if lt < 1 or p % lt != 0:
        raise ScheduleIndivisible(f"P={p} is not a multiple of Lt={lt}")
    return _schedule_from_assignment(np.arange(p) % lt, lt)


def _check_in_symbol(x: np.ndarray, params: WaveformParams, closed: bool = False) -> None:
    upper_ok = x <= params.t if closed else x < params.t
    if not np.all((x >= 0) & upper_ok):
        raise OutOfSymbol(f"Time outside the symbol [0, {params.t:g}) s")


def inst_frequency(x: ArrayLike, hp: ArrayLike, params: WaveformParams) -> np.ndarray:
    """Wrapped instantaneous frequency of the shifted up-chirp, in [-B/2, B/2)."""
    x = np.asarray(x, dtype=float)
    _check_in_symbol(x, params)
    b, t = params.b, params.t
    return np.mod((b * x + np.asarray(hp, dtype=float)) / t, b) - b / 2


def chirp_phase(x: ArrayLike, hp: ArrayLike, params: WaveformParams) -> np.ndarray:
    """Integral of inst_frequency from 0 to x, in cycles."""
    x = np.asarray(x, dtype=float)
    hp = np.asarray(hp, dtype=float)
    b, t = params.b, params.t
    wrap = t - hp / b
    theta = (b / (2 * t)) * x ** 2 + (hp / t - b / 2) * x
    return theta - b * np.maximum(x - wrap, 0.0)


def tx_baseband_sample(x: ArrayLike, hp: ArrayLike, params: WaveformParams) -> np.ndarray:
    """
    Closed-form baseband transmit sample exp(j2*pi*Theta(x)).

    Args:
        x: Time within the symbol, 0 <= x <= T (the end point is admitted for phase checks)
        hp: Shift index, broadcastable against x
        params: Waveform parameters

    Returns:
        Unit-modulus complex samples
    """
    x = np.asarray(x, dtype=float)
    _check_in_symbol(x, params, closed=True)
    theta = np.mod(chirp_phase(x, hp, params), 1.0)
    return np.exp(2j * np.pi * theta)
