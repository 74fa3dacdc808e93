"""SPAD: reject "no change in correlation" when some ``w(i, j)`` exceeds ``tau1``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import as_observations, compute_w, pair_index, standardize, vech_index
from .signflip import SignflipConfig, ThresholdReport, compute_thresholds


def _index(p: int, include_diagonal: bool):
    return vech_index(p) if include_diagonal else pair_index(p)


@dataclass(frozen=True, eq=False)
class SupportIndexSet:
    """Pairs selected by a threshold, held as canonical offsets (strictly increasing)."""

    offsets: np.ndarray
    p: int
    # True for vech-indexed sets (pairs with i == j allowed)
    include_diagonal: bool = False

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=np.int64)
        if off.ndim != 1 or (off.size > 1 and np.any(np.diff(off) <= 0)):
            raise ValueError("support offsets must be strictly increasing")
        object.__setattr__(self, "offsets", off)

    @classmethod
    def exceeding(cls, values: np.ndarray, threshold: float, p: int,
                  include_diagonal: bool = False) -> "SupportIndexSet":
        return cls(np.flatnonzero(np.asarray(values) > threshold), p, include_diagonal)

    @classmethod
    def from_pairs(cls, pairs, p: int, include_diagonal: bool = False) -> "SupportIndexSet":
        """Build from 1-based ``(i, j)`` pairs."""
        i, j = _index(p, include_diagonal)
        lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(i, j))}
        try:
            off = sorted(lookup[(int(a) - 1, int(b) - 1)] for a, b in pairs)
        except KeyError as exc:
            raise ValueError(f"pair {exc.args[0]} is not valid for p={p}") from None
        return cls(np.array(off, dtype=np.int64), p, include_diagonal)

    def __len__(self) -> int:
        return int(self.offsets.size)

    def __bool__(self) -> bool:
        return self.offsets.size > 0

    def __eq__(self, other):
        if not isinstance(other, SupportIndexSet):
            return NotImplemented
        return (self.p == other.p and self.include_diagonal == other.include_diagonal
                and np.array_equal(self.offsets, other.offsets))

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """0-based ``(i, j)`` arrays of the selected pairs."""
        i, j = _index(self.p, self.include_diagonal)
        return i[self.offsets], j[self.offsets]

    def pairs(self) -> list[tuple[int, int]]:
        """1-based ``(i, j)`` pairs, ``i < j``, in canonical order."""
        i, j = self.index_arrays()
        return [(int(a) + 1, int(b) + 1) for a, b in zip(i, j)]


@dataclass(eq=False)
class DetectionReport:
    rejected: bool
    support: SupportIndexSet
    w: np.ndarray
    thresholds: ThresholdReport

    def __eq__(self, other):
        if not isinstance(other, DetectionReport):
            return NotImplemented
        return (self.rejected == other.rejected and self.support == other.support
                and np.array_equal(self.w, other.w) and self.thresholds == other.thresholds)


def spad_detect(data, cfg: Optional[SignflipConfig] = None) -> DetectionReport:
    """Signflip parallel-analysis test for a change in the correlation matrix.

    Parameters
    ----------
    data : array_like, shape (p, T)
        Raw observations, one row per variable.
    cfg : SignflipConfig, optional
        Defaults to 30 trials with seed 0.

    Returns
    -------
    DetectionReport
        ``rejected`` is True exactly when at least one ``w(i, j) > tau1``
        (ties do not reject). The full ``w`` vector is kept for reuse.
    """
    cfg = cfg or SignflipConfig.for_detection()
    y = as_observations(data)
    w = compute_w(standardize(y))
    thresholds = compute_thresholds(y, cfg)
    support = SupportIndexSet.exceeding(w, thresholds.tau1, y.shape[0])
    return DetectionReport(bool(support), support, w, thresholds)
