"""Signflip parallel analysis: thresholds from Rademacher-flipped replicas.

Each trial multiplies the raw data entrywise by an i.i.d. +/-1 matrix, re-runs
the statistic on the flipped copy, and the pooled trial entries give

* ``tau1`` -- their maximum (detection), and
* ``tau2`` -- their lower empirical ``alpha``-quantile (estimation).

The sign of entry ``(i, t)`` in trial ``m`` is bit ``i*T + t`` of a Philox
stream keyed by ``(seed, m)``. Trials therefore do not depend on each other or
on execution order, and any worker count gives bit-identical results.
"""

from __future__ import annotations

import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import as_observations, ceil_index, compute_w, n_pairs, standardize
from .errors import ConfigError, DimensionTooSmall, TrialCountZero

log = logging.getLogger(__name__)

_U64 = (1 << 64) - 1
# Above this many pooled entries the trial matrix is not kept in the report.
MAX_STORED_ENTRIES = 10_000_000

DETECTION_TRIALS = 30
ESTIMATION_TRIALS = 20


@dataclass(frozen=True)
class SignflipConfig:
    q: int = DETECTION_TRIALS
    alpha: float = 0.95
    seed: int = 0
    workers: int = 1
    max_stored_entries: int = MAX_STORED_ENTRIES
    spill_dir: Optional[str] = None

    def __post_init__(self):
        if int(self.q) < 1:
            raise TrialCountZero()
        if not 0.0 < float(self.alpha) <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 <= int(self.seed) <= _U64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def for_detection(cls, seed: int = 0, **kw) -> "SignflipConfig":
        return cls(q=kw.pop("q", DETECTION_TRIALS), seed=seed, **kw)

    @classmethod
    def for_estimation(cls, seed: int = 0, **kw) -> "SignflipConfig":
        return cls(q=kw.pop("q", ESTIMATION_TRIALS), seed=seed, **kw)


@dataclass(eq=False)
class ThresholdReport:
    tau1: float
    tau2: float
    q: int
    alpha: float
    seed: int
    trial_matrix: Optional[np.ndarray] = field(default=None, repr=False)
    label: str = "signflip"

    def __eq__(self, other):
        if not isinstance(other, ThresholdReport):
            return NotImplemented
        return (self.tau1, self.tau2, self.q, self.alpha, self.seed, self.label) == (
            other.tau1, other.tau2, other.q, other.alpha, other.seed, other.label)


def rademacher(shape: tuple[int, int], seed: int, trial_index: int) -> np.ndarray:
    """Deterministic +/-1 matrix (int8) for one trial."""
    p, T = shape
    n = p * T
    key = (int(seed) & _U64) | ((int(trial_index) & _U64) << 64)
    bitgen = np.random.Philox(key=key)
    words = bitgen.random_raw((n + 63) // 64).astype("<u8", copy=False)
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")[:n]
    signs = bits.astype(np.int8) * 2 - 1
    return signs.reshape(p, T)


def _w_of_raw(y: np.ndarray) -> np.ndarray:
    return compute_w(standardize(y))


def signflip_trial(data, trial_index: int, seed: int,
                   statistic: Callable[[np.ndarray], np.ndarray] = _w_of_raw) -> np.ndarray:
    """Statistic of the flipped raw matrix ``R_m o Y`` (``w`` by default)."""
    y = as_observations(data)
    flipped = rademacher(y.shape, seed, trial_index) * y
    return statistic(flipped)


def lower_quantile(values: np.ndarray, alpha: float) -> float:
    """Order statistic number ``ceil(alpha * n)`` (1-based) of ``values``."""
    flat = np.ravel(values)
    n = flat.size
    if n == 0:
        raise ValueError("quantile of an empty pool")
    k = min(max(ceil_index(alpha * n), 1), n)
    return float(np.partition(flat, k - 1)[k - 1])


def run_trials(data, cfg: SignflipConfig,
               statistic: Callable[[np.ndarray], np.ndarray] = _w_of_raw,
               length: Optional[int] = None, label: str = "signflip") -> ThresholdReport:
    """Run ``cfg.q`` trials of ``statistic`` and reduce them to thresholds."""
    y = as_observations(data)
    m = n_pairs(y.shape[0]) if length is None else length
    if m == 0:
        raise DimensionTooSmall("thresholds need at least one pair of variables")
    q = int(cfg.q)
    keep = q * m <= cfg.max_stored_entries
    if keep:
        pool = np.empty((q, m))
        spill = None
    else:
        spill = tempfile.TemporaryDirectory(dir=cfg.spill_dir)
        pool = np.memmap(os.path.join(spill.name, "trials.f64"), dtype=np.float64,
                         mode="w+", shape=(q, m))
        log.info("pooling %d trial entries on disk", q * m)

    def one(k: int) -> None:
        pool[k] = signflip_trial(y, k, cfg.seed, statistic)

    try:
        if cfg.workers > 1 and q > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
                list(ex.map(one, range(q)))
        else:
            for k in range(q):
                one(k)
        tau1 = float(np.max(pool))
        tau2 = lower_quantile(pool, cfg.alpha)
    finally:
        if spill is not None:
            del pool
            spill.cleanup()
            pool = None
    return ThresholdReport(tau1, tau2, q, float(cfg.alpha), int(cfg.seed),
                           pool if keep else None, label)


def compute_thresholds(data, cfg: Optional[SignflipConfig] = None) -> ThresholdReport:
    """``tau1`` (max rule) and ``tau2`` (``alpha``-quantile rule) for the ``w`` statistic."""
    return run_trials(data, cfg or SignflipConfig())
