import logging
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from app.errors import ConfigError, LengthMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SamplingIndexSet:
    """Sorted sample positions m_0 < m_1 < ... on a grid of `base` Nyquist samples."""
    indices: np.ndarray
    base: int
    kind: str

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 1 or len(idx) == 0:
            raise ConfigError("Index set must be a non-empty 1-D sequence")
        if idx[0] < 0 or idx[-1] > self.base - 1 or np.any(np.diff(idx) <= 0):
            raise ConfigError(f"Index set must be strictly increasing within [0, {self.base - 1}]")
        idx = idx.astype(np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def to_dict(self) -> Dict[str, Any]:
        return {"indices": [int(v) for v in self.indices], "base": int(self.base), "kind": self.kind}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SamplingIndexSet":
        return cls(indices=np.asarray(data["indices"], dtype=np.int64), base=int(data["base"]), kind=data["kind"])


@dataclass(frozen=True, eq=False)
class SelectionOperator:
    """Row selection [I_base]_{indices,:}, kept as indices."""
    indices: np.ndarray
    base: int

    @classmethod
    def from_index_set(cls, index_set: SamplingIndexSet) -> "SelectionOperator":
        return cls(indices=index_set.indices, base=index_set.base)

    @property
    def rows(self) -> int:
        return len(self.indices)

    def dense(self) -> np.ndarray:
        """Materialized selection matrix (test oracles only)."""
        return np.eye(self.base)[self.indices]


def draw_random_set(count: int, base: int, rng: np.random.Generator) -> SamplingIndexSet:
    """
    Uniformly random `count`-subset of {0, ..., base-1}, sorted.

    Args:
        count: Number of samples kept
        base: Size of the Nyquist grid
        rng: Seeded generator

    Returns:
        SamplingIndexSet of kind "random"
    """
    if count > base or count < 1:
        raise ConfigError(f"Cannot draw {count} samples from a grid of {base}")
    indices = np.sort(rng.choice(base, size=count, replace=False))
    return SamplingIndexSet(indices=indices, base=base, kind="random")


def uniform_set(count: int, base: int) -> SamplingIndexSet:
    """Indices {0, s, 2s, ...} with stride s = floor(base/count)."""
    if count > base or count < 1:
        raise ConfigError(f"Cannot take {count} uniform samples from a grid of {base}")
    stride = base // count
    if base % count:
        logger.debug(f"uniform_set: {count} does not divide {base}, stride {stride} truncates")
    return SamplingIndexSet(indices=np.arange(count) * stride, base=base, kind="uniform")


def full_set(base: int) -> SamplingIndexSet:
    return uniform_set(base, base)


def apply_selection(op: SelectionOperator, x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Entries of x at the operator's indices along `axis`."""
    x = np.asarray(x)
    if x.shape[axis] != op.base:
        raise LengthMismatch(f"Expected length {op.base} along axis {axis}, got {x.shape[axis]}")
    return np.take(x, op.indices, axis=axis)
