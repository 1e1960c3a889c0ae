import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft

from app.errors import ConfigError, InsufficientSupport, LengthMismatch, RankDeficient
from app.sampling import SelectionOperator

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """
    Redundant dictionary with one atom per grid column.

    DFT dictionaries are kept implicit (entry (n, q) = exp(sign*j2*pi*n*q/size)) so that
    grids of tens of thousands of columns never get materialized; steering dictionaries
    hold their dense atom matrix.
    """
    rows: int
    size: int
    grid: np.ndarray
    kind: str
    sign: int = -1
    dense_atoms: Optional[np.ndarray] = None

    def atoms_at(self, row_indices: Optional[np.ndarray] = None,
                 columns: Optional[Sequence[int]] = None) -> np.ndarray:
        rows = np.arange(self.rows) if row_indices is None else np.asarray(row_indices)
        cols = np.arange(self.size) if columns is None else np.asarray(columns, dtype=np.int64)
        if self.kind == "dft":
            phase = np.mod(np.outer(rows, cols), self.size) / self.size
            return np.exp(self.sign * 2j * np.pi * phase)
        return self.dense_atoms[np.ix_(rows, cols)]

    @property
    def atoms(self) -> np.ndarray:
        return self.atoms_at()


def build_dft_dictionary(rows: int, oversample: int, sign: int = -1, scale: float = 1.0) -> Dictionary:
    """
    First `rows` rows of the (oversample*rows)-order DFT matrix.

    Args:
        rows: Ambient dimension
        oversample: Grid redundancy factor
        sign: Exponent sign of the atoms
        scale: Grid values are scale*q/(oversample*rows)

    Returns:
        Dictionary of kind "dft"
    """
    if rows < 1 or oversample < 1 or int(oversample) != oversample:
        raise ConfigError(f"Invalid DFT dictionary rows={rows}, oversample={oversample}")
    size = int(rows * oversample)
    grid = scale * np.arange(size) / size
    return Dictionary(rows=rows, size=size, grid=grid, kind="dft", sign=sign)


def build_ae_dictionary(lt_lr: int, rho_ae: int) -> Dictionary:
    """Angle steering dictionary on the grid theta_n = (n - G/2)*pi/G, G = rho*LtLr."""
    if lt_lr < 2:
        raise ConfigError(f"Virtual array needs at least 2 elements, got {lt_lr}")
    size = int(rho_ae * lt_lr)
    grid = (np.arange(size) - size / 2) * np.pi / size
    atoms = np.exp(-1j * np.pi * np.outer(np.arange(lt_lr), np.sin(grid)))
    return Dictionary(rows=lt_lr, size=size, grid=grid, kind="steering", dense_atoms=atoms)


class EffectiveDictionary:
    """Selection operator composed with a dictionary: the atoms seen by compressed samples."""

    def __init__(self, dictionary: Dictionary, selection: Optional[SelectionOperator] = None):
        if selection is not None and selection.base != dictionary.rows:
            raise LengthMismatch(
                f"Selection base {selection.base} does not match dictionary rows {dictionary.rows}"
            )
        self.dictionary = dictionary
        self.row_indices = np.arange(dictionary.rows) if selection is None else selection.indices
        self._norms: Optional[np.ndarray] = None

    @property
    def rows(self) -> int:
        return len(self.row_indices)

    @property
    def size(self) -> int:
        return self.dictionary.size

    def columns(self, support: Sequence[int]) -> np.ndarray:
        return self.dictionary.atoms_at(self.row_indices, support)

    def dense(self) -> np.ndarray:
        return self.dictionary.atoms_at(self.row_indices)

    def column_norms(self) -> np.ndarray:
        if self._norms is None:
            if self.dictionary.kind == "dft":
                self._norms = np.full(self.size, np.sqrt(self.rows))
            else:
                self._norms = np.linalg.norm(self.dense(), axis=0)
        return self._norms

    def correlate(self, residual: np.ndarray) -> np.ndarray:
        """A^H r for a vector or a matrix of measurement columns."""
        residual = np.asarray(residual)
        if residual.shape[0] != self.rows:
            raise LengthMismatch(f"Expected {self.rows} measurements, got {residual.shape[0]}")
        if self.dictionary.kind != "dft":
            return self.dense().conj().T @ residual
        length = self.dictionary.size
        padded = np.zeros((length,) + residual.shape[1:], dtype=complex)
        padded[self.row_indices] = residual
        # conj(atom) = exp(-sign*j2*pi*n*q/L)
        if self.dictionary.sign < 0:
            return length * scipy.fft.ifft(padded, axis=0)
        return scipy.fft.fft(padded, axis=0)


@dataclass
class SparseEstimate:
    support: List[int]
    coeffs: np.ndarray
    residual_norm: float
    residual_history: List[float] = field(default_factory=list)
    rank_deficient: bool = False

    def row_norms(self) -> np.ndarray:
        if self.coeffs.ndim == 1:
            return np.abs(self.coeffs)
        return np.linalg.norm(self.coeffs, axis=1)

    def coefficient(self, column: int) -> np.ndarray:
        return self.coeffs[self.support.index(column)]


def _greedy_pursuit(y: np.ndarray, a: EffectiveDictionary, max_atoms: int,
                    residual_tol: Optional[float]) -> SparseEstimate:
    y_norm = float(np.linalg.norm(y))
    empty = np.zeros((0,) + y.shape[1:], dtype=complex)
    if y_norm == 0.0:
        return SparseEstimate(support=[], coeffs=empty, residual_norm=0.0, residual_history=[0.0])

    norms = a.column_norms()
    support: List[int] = []
    coeffs = empty
    residual = y.copy()
    history = [y_norm]
    rank_deficient = False

    for _ in range(max_atoms):
        if residual_tol is not None and history[-1] <= residual_tol * y_norm:
            break
        corr = np.abs(a.correlate(residual))
        if corr.ndim > 1:
            corr = np.linalg.norm(corr, axis=1)
        score = corr / norms
        score[support] = -1.0
        q = int(np.argmax(score))

        candidate = support + [q]
        sub = a.columns(candidate)
        fit, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(candidate):
            warnings.warn(f"Atom {q} is linearly dependent on the current support", RankDeficient)
            logger.warning(f"Rank deficiency at atom {q}; keeping {len(support)} atoms")
            rank_deficient = True
            break
        support, coeffs = candidate, fit
        residual = y - sub @ coeffs
        history.append(float(np.linalg.norm(residual)))

    return SparseEstimate(support=support, coeffs=coeffs, residual_norm=history[-1],
                          residual_history=history, rank_deficient=rank_deficient)


def omp(y: np.ndarray, a: EffectiveDictionary, max_atoms: Optional[int] = None,
        residual_tol: Optional[float] = 1e-6) -> SparseEstimate:
    """
    Orthogonal matching pursuit for one measurement vector.

    Args:
        y: Measurements, length = rows of the effective dictionary
        a: Effective dictionary
        max_atoms: Atom budget; defaults to min(rows, columns)
        residual_tol: Stop once ||r|| <= residual_tol*||y||; None disables the test

    Returns:
        SparseEstimate with coeffs of shape (support,)
    """
    y = np.asarray(y, dtype=complex)
    if y.ndim != 1:
        raise LengthMismatch("omp expects a single measurement vector")
    budget = min(a.rows, a.size) if max_atoms is None else max_atoms
    return _greedy_pursuit(y, a, budget, residual_tol)


def mmv_omp(y: np.ndarray, a: EffectiveDictionary, k: int) -> SparseEstimate:
    """Row-sparse recovery of Y = A X selecting exactly K rows by the l2 norm of correlations."""
    if k < 1:
        raise ConfigError(f"Row sparsity must be at least 1, got {k}")
    y = np.asarray(y, dtype=complex)
    if y.ndim == 1:
        y = y[:, None]
    return _greedy_pursuit(y, a, k, None)


def top_k_rows(estimate: SparseEstimate, k: int) -> List[int]:
    """The K support columns with the largest coefficient-row norms, descending, ties to the lower index."""
    if len(estimate.support) < k:
        raise InsufficientSupport(f"Requested {k} rows but only {len(estimate.support)} are supported")
    norms = estimate.row_norms()
    order = sorted(range(len(estimate.support)), key=lambda i: (-norms[i], estimate.support[i]))
    return [estimate.support[i] for i in order[:k]]


def fft_correlate(values: np.ndarray, length: int, sign: int = -1) -> np.ndarray:
    """Correlation of uniformly sampled columns with every atom of a full DFT dictionary."""
    dictionary = Dictionary(rows=values.shape[0], size=length, grid=np.arange(length) / length,
                            kind="dft", sign=sign)
    return EffectiveDictionary(dictionary).correlate(values)


def peak_bins(power: np.ndarray, k: int) -> List[int]:
    """K strongest circular local maxima of a spectrum, topped up with the strongest other bins."""
    left = np.roll(power, 1)
    right = np.roll(power, -1)
    peaks = np.flatnonzero((power >= left) & (power > right))
    ranked = sorted(peaks.tolist(), key=lambda q: (-power[q], q))[:k]
    if len(ranked) < k:
        rest = [q for q in sorted(range(len(power)), key=lambda q: (-power[q], q)) if q not in ranked]
        ranked += rest[:k - len(ranked)]
    return ranked
