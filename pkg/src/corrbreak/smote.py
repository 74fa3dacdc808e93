"""SMOTE augmentation of the right tail and the iterative SMOTE + SPACE estimator.

When the change sits close to the end of the series, the post-change segment
is a "minority class" of a few columns. Synthetic columns interpolated between
a minority column and one of its nearest minority neighbours are appended
after the last column, so original time indices keep their meaning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import as_observations, ceil_index, floor_index
from .errors import ConfigError, MinorityWindowTooSmall
from .estimate import EstimationReport, space_estimate
from .signflip import SignflipConfig

log = logging.getLogger(__name__)

NEIGHBORS = 5


@dataclass(frozen=True)
class SmoteConfig:
    gamma: float = 0.9
    epsilon: float = 1e-3
    max_iterations: int = 25
    k: int = NEIGHBORS
    seed: int = 0
    # re-augment the already inflated matrix on later rounds
    reinflate: bool = True
    # "current": the minority window and synthetic count follow the working
    # length on every round; "original": they stay tied to the input length,
    # so the window is always the last real columns
    window_frame: str = "current"

    def __post_init__(self):
        if not 0.9 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0.9, 1), got {self.gamma}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.k != NEIGHBORS:
            raise ConfigError("SMOTE uses exactly five nearest neighbours")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.window_frame not in ("current", "original"):
            raise ConfigError("window_frame must be 'current' or 'original'")


@dataclass(frozen=True, eq=False)
class AugmentedSeries:
    values: np.ndarray
    original_T: int
    synthetic_count: int
    # (base column, neighbour column) for each synthetic column, 0-based
    parents: np.ndarray


def minority_window(T: int, gamma: float) -> tuple[int, int]:
    """0-based half-open column range of the minority class ``floor(gamma*T)+1 .. T``."""
    return floor_index(gamma * T), T


def _neighbours(window: np.ndarray, k: int) -> np.ndarray:
    """Indices (into ``window`` columns) of the ``k`` nearest other columns, rows per base."""
    m = window.shape[1]
    sq = np.einsum("ij,ij->j", window, window)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (window.T @ window)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, np.inf)
    # stable sort: equal distances resolve by column index
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :min(k, m - 1)]


def smote_generate(data, cfg: Optional[SmoteConfig] = None, round_index: int = 0,
                   u_override: Optional[float] = None,
                   reference_T: Optional[int] = None) -> AugmentedSeries:
    """Append ``ceil((1-gamma) T)`` synthetic columns built from the minority window.

    ``T`` is the number of columns of ``data`` unless ``reference_T`` is
    given, in which case the window is columns ``floor(gamma*reference_T)+1
    .. reference_T`` and ``ceil((1-gamma) reference_T)`` columns are added.
    Synthetic sample ``s`` uses its own random stream keyed by
    ``(seed, round_index, s)``. ``u_override`` pins the interpolation weight
    (test hook).
    """
    cfg = cfg or SmoteConfig()
    y = as_observations(data)
    p, T = y.shape
    T_ref = T if reference_T is None else int(reference_T)
    if not 1 <= T_ref <= T:
        raise ValueError(f"reference_T must lie in 1..{T}")
    lo, hi = minority_window(T_ref, cfg.gamma)
    m = hi - lo
    if m < 2:
        raise MinorityWindowTooSmall(f"minority window has {m} column(s); need at least 2")
    n_syn = ceil_index((1.0 - cfg.gamma) * T_ref)
    window = y[:, lo:hi]
    nbrs = _neighbours(window, cfg.k)

    synthetic = np.empty((p, n_syn))
    parents = np.empty((n_syn, 2), dtype=np.int64)
    for s in range(n_syn):
        rng = np.random.default_rng([int(cfg.seed), int(round_index), s])
        base = int(rng.integers(m))
        other = int(nbrs[base, rng.integers(nbrs.shape[1])])
        u = rng.random() if u_override is None else float(u_override)
        yt, ystar = window[:, base], window[:, other]
        # u = 1 only arises through the override; return y_t* itself so it is exact
        synthetic[:, s] = ystar if u == 1.0 else yt + u * (ystar - yt)
        parents[s] = (lo + base, lo + other)
    values = np.concatenate([y, synthetic], axis=1)
    return AugmentedSeries(values, T, n_syn, parents)


def _original_frame(report: EstimationReport, T_original: int) -> tuple[float, bool]:
    if report.t_hat <= T_original:
        return report.t_hat / T_original, report.boundary
    return 1.0 - 1.0 / T_original, True


def smote_space(data, sf_cfg: Optional[SignflipConfig] = None,
                sm_cfg: Optional[SmoteConfig] = None) -> EstimationReport:
    """Iterate SMOTE augmentation and SPACE until successive estimates agree.

    ``beta_hat`` is reported relative to the original length: an argmax at
    ``t_hat <= T`` on the inflated series maps to ``t_hat / T``; a split
    inside the synthetic block is clamped to ``1 - 1/T`` and flagged.
    ``smote_iterations`` counts augmentation rounds; ``converged`` is False
    when ``max_iterations`` was reached first.
    """
    sf_cfg = sf_cfg or SignflipConfig.for_estimation()
    sm_cfg = sm_cfg or SmoteConfig()
    y = as_observations(data)
    T0 = y.shape[1]
    first = space_estimate(y, sf_cfg)
    beta0, _ = _original_frame(first, T0)

    working = y
    converged = False
    n = 0
    report = first
    beta1 = beta0
    boundary = first.boundary
    while n < sm_cfg.max_iterations:
        n += 1
        source = working if sm_cfg.reinflate else y
        ref = T0 if sm_cfg.window_frame == "original" else None
        working = smote_generate(source, sm_cfg, round_index=n - 1, reference_T=ref).values
        report = space_estimate(working, sf_cfg)
        beta1, boundary = _original_frame(report, T0)
        if abs(beta0 - beta1) <= sm_cfg.epsilon:
            converged = True
            break
        beta0 = beta1
    if not converged:
        log.warning("SMOTE+SPACE stopped at the iteration cap (%d)", sm_cfg.max_iterations)
    return EstimationReport(
        beta_hat=beta1,
        t_hat=report.t_hat,
        cusum=report.cusum,
        support=report.support,
        thresholds=report.thresholds,
        smote_iterations=n,
        T=T0,
        boundary=boundary,
        converged=converged,
        method="smote_space",
        notes={"inflated_T": int(working.shape[1])},
    )
