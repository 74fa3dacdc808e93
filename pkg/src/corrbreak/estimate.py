"""SPACE: threshold-based dimension reduction followed by a CUSUM argmax."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import StandardizedSeries, as_observations, compute_w, standardize
from .detect import SupportIndexSet
from .errors import EmptySupport, SeriesTooShort
from .signflip import SignflipConfig, ThresholdReport, compute_thresholds


@dataclass(frozen=True, eq=False)
class ReducedSeries:
    """``z``: ``d x T`` products ``x[a] * x[b]`` for the pairs in ``support``."""

    z: np.ndarray
    support: SupportIndexSet

    @property
    def d(self) -> int:
        return self.z.shape[0]


@dataclass(eq=False)
class EstimationReport:
    beta_hat: float
    t_hat: int
    cusum: np.ndarray
    support: SupportIndexSet
    thresholds: Optional[ThresholdReport]
    smote_iterations: int = 0
    T: int = 0
    boundary: bool = False
    converged: bool = True
    method: str = "space"
    # first index of ``cusum`` corresponds to this split
    scan_start: int = 2
    notes: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, EstimationReport):
            return NotImplemented
        return (self.beta_hat == other.beta_hat and self.t_hat == other.t_hat
                and np.array_equal(self.cusum, other.cusum)
                and self.support == other.support and self.thresholds == other.thresholds
                and self.smote_iterations == other.smote_iterations
                and self.T == other.T and self.boundary == other.boundary
                and self.converged == other.converged and self.method == other.method
                and self.scan_start == other.scan_start and self.notes == other.notes)


def reduce_dimension(w: np.ndarray, tau2: float, x: StandardizedSeries) -> ReducedSeries:
    """Keep the pairs with ``w(i, j) > tau2`` and assemble their product series."""
    if tau2 < 0:
        raise ValueError("tau2 must be nonnegative")
    support = SupportIndexSet.exceeding(w, tau2, x.p)
    if not support:
        raise EmptySupport(tau2)
    i, j = support.index_arrays()
    return ReducedSeries(x.values[i] * x.values[j], support)


def cusum_curve(z) -> np.ndarray:
    """``U_T(t) = || (T-t) t (mean_left - mean_right) ||^2 / T^4`` for ``t = 2..T-2``.

    Accepts a :class:`ReducedSeries` or a ``d x T`` array.
    """
    zv = z.z if isinstance(z, ReducedSeries) else np.atleast_2d(np.asarray(z, dtype=np.float64))
    T = zv.shape[1]
    if T < 4:
        raise SeriesTooShort(f"CUSUM needs T >= 4, got T={T}")
    prefix = np.cumsum(zv, axis=1)
    total = prefix[:, -1:]
    t = np.arange(2, T - 1)
    left = prefix[:, t - 1]
    # (T - t) * left_sum - t * right_sum == t (T - t) (left_mean - right_mean)
    contrast = (T - t) * left - t * (total - left)
    return np.einsum("ij,ij->j", contrast, contrast) / float(T) ** 4


def argmax_split(curve: np.ndarray, scan_start: int = 2) -> int:
    """Split index maximizing ``curve``; the smallest index wins ties."""
    return int(np.argmax(curve)) + scan_start


def space_estimate(data, cfg: Optional[SignflipConfig] = None) -> EstimationReport:
    """Estimate the change-point fraction ``beta`` and the changed pairs.

    The pipeline is standardize, ``w``, ``tau2`` from signflip trials, keep
    pairs above ``tau2``, CUSUM over ``t = 2..T-2``, and ``beta_hat = t_hat / T``.
    Raises :class:`EmptySupport` when no pair clears ``tau2``.
    """
    cfg = cfg or SignflipConfig.for_estimation()
    y = as_observations(data)
    x = standardize(y)
    w = compute_w(x)
    thresholds = compute_thresholds(y, cfg)
    reduced = reduce_dimension(w, thresholds.tau2, x)
    curve = cusum_curve(reduced)
    T = x.T
    t_hat = argmax_split(curve)
    return EstimationReport(
        beta_hat=t_hat / T,
        t_hat=t_hat,
        cusum=curve,
        support=reduced.support,
        thresholds=thresholds,
        T=T,
        boundary=t_hat in (2, T - 2),
    )
