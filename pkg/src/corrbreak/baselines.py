"""Comparison methods.

* Dette-type covariance statistic ``D`` (vech, diagonal included) and its
  quadruple-sum argmax estimator.
* KCP-raw: Gaussian-kernel within-phase scatter, bandwidth from the median
  heuristic, single split.

The published Dette procedure calibrates its thresholds with a bootstrap that
is not reproduced here. :func:`dette_thresholds` is a stand-in built on the
signflip machinery; its reports carry the label ``"dette-surrogate"``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy.spatial.distance import pdist, squareform

from .core import as_observations, split_weights, vech_index
from .detect import DetectionReport, SupportIndexSet
from .errors import EmptySupport, SeriesTooShort, ZeroBandwidth
from .estimate import EstimationReport, argmax_split
from .signflip import SignflipConfig, ThresholdReport, run_trials

SURROGATE_LABEL = "dette-surrogate"


def _demeaned(data) -> np.ndarray:
    y = as_observations(data)
    return y - y.mean(axis=1, keepdims=True)


@njit(cache=True, nogil=True)
def _dette_kernel(y, ii, jj, wt):
    p, T = y.shape
    m = ii.size
    out = np.empty(m)
    a = np.empty(T)
    for k in range(m):
        yi = y[ii[k]]
        yj = y[jj[k]]
        s_tot = 0.0
        q_tot = 0.0
        for s in range(T):
            v = yi[s] * yj[s]
            a[s] = v
            s_tot += v
            q_tot += v * v
        s_run = a[0]
        q_run = a[0] * a[0]
        acc = 0.0
        for t in range(2, T - 1):
            v = a[t - 1]
            s_run += v
            q_run += v * v
            r = s_tot - s_run
            qr = q_tot - q_run
            left = (s_run * s_run - q_run) / (t * (t - 1.0))
            right = (r * r - qr) / ((T - t) * (T - t - 1.0))
            cross = 2.0 * s_run * r / (t * (T - t))
            acc += wt[t] * (left + right - cross)
        out[k] = acc
    return out


def dette_d(data) -> np.ndarray:
    """Detection vector ``D`` of length ``p(p+1)/2``.

    The within-segment sums over ``i != j`` use
    ``sum_{i != j} a_i a_j = (sum a_i)^2 - sum a_i^2`` on running prefix sums,
    and the cross sum is ``S_t (S_T - S_t)``, so the cost is ``O(T p^2)``.
    """
    yd = _demeaned(data)
    T = yd.shape[1]
    if T < 5:
        raise SeriesTooShort(f"D needs T >= 5, got T={T}")
    i, j = vech_index(yd.shape[0])
    return _dette_kernel(np.ascontiguousarray(yd), i, j, split_weights(T))


def dette_thresholds(data, cfg: Optional[SignflipConfig] = None) -> ThresholdReport:
    """Surrogate thresholds for ``D``: signflip trials of the vech pipeline."""
    y = as_observations(data)
    p = y.shape[0]
    return run_trials(y, cfg or SignflipConfig.for_estimation(), statistic=dette_d,
                      length=p * (p + 1) // 2, label=SURROGATE_LABEL)


def dette_detect(data, cfg: Optional[SignflipConfig] = None,
                 threshold: Optional[float] = None) -> DetectionReport:
    """Reject when some ``D`` entry exceeds ``threshold`` (surrogate ``tau1`` by default)."""
    y = as_observations(data)
    d = dette_d(y)
    thresholds = dette_thresholds(y, cfg or SignflipConfig.for_detection())
    tau = thresholds.tau1 if threshold is None else float(threshold)
    support = SupportIndexSet.exceeding(d, tau, y.shape[0], include_diagonal=True)
    return DetectionReport(bool(support), support, d, thresholds)


def dette_curve(ytilde: np.ndarray) -> np.ndarray:
    """Quadruple sum with ``i != s`` and ``j != l`` for ``t = 2..T-2``, over ``T^4``.

    With ``A``/``B`` the left/right column sums and ``a``/``b`` the left/right
    sums of squared norms, the sum equals
    ``n2(n2-1)(|A|^2 - a) - 2(n1-1)(n2-1) A'B + n1(n1-1)(|B|^2 - b)``.
    """
    z = np.atleast_2d(np.asarray(ytilde, dtype=np.float64))
    T = z.shape[1]
    if T < 4:
        raise SeriesTooShort(f"need T >= 4, got T={T}")
    prefix = np.cumsum(z, axis=1)
    sq = np.cumsum(np.einsum("ij,ij->j", z, z))
    t = np.arange(2, T - 1)
    A = prefix[:, t - 1]
    B = prefix[:, -1:] - A
    a = sq[t - 1]
    b = sq[-1] - a
    n1 = t.astype(np.float64)
    n2 = T - n1
    AA = np.einsum("ij,ij->j", A, A)
    BB = np.einsum("ij,ij->j", B, B)
    AB = np.einsum("ij,ij->j", A, B)
    total = n2 * (n2 - 1) * (AA - a) - 2 * (n1 - 1) * (n2 - 1) * AB + n1 * (n1 - 1) * (BB - b)
    return total / float(T) ** 4


def dette_estimate(data, threshold: Optional[float] = None,
                   cfg: Optional[SignflipConfig] = None) -> EstimationReport:
    """Dette-type change fraction estimate.

    ``threshold`` is the critical value for ``D``; when omitted the surrogate
    ``alpha``-quantile from :func:`dette_thresholds` is used.
    """
    y = as_observations(data)
    p, T = y.shape
    d = dette_d(y)
    thresholds = None
    if threshold is None:
        thresholds = dette_thresholds(y, cfg)
        threshold = thresholds.tau2
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    support = SupportIndexSet.exceeding(d, threshold, p, include_diagonal=True)
    if not support:
        raise EmptySupport(threshold)
    yd = _demeaned(y)
    i, j = support.index_arrays()
    curve = dette_curve(yd[i] * yd[j])
    t_hat = argmax_split(curve)
    return EstimationReport(t_hat / T, t_hat, curve, support, thresholds, T=T,
                            boundary=t_hat in (2, T - 2), method="dette",
                            notes={"threshold": float(threshold)})


# --------------------------------------------------------------------------
# KCP-raw

@dataclass(frozen=True, eq=False)
class KcpState:
    kernel_matrix: np.ndarray
    bandwidth: float


def kcp_state(data) -> KcpState:
    """Gaussian Gram matrix of the columns with the median-distance bandwidth."""
    y = as_observations(data)
    dist = pdist(y.T)
    h = float(np.median(dist)) if dist.size else 0.0
    if not h > 0:
        raise ZeroBandwidth("median pairwise distance is zero")
    gram = squareform(np.exp(-dist * dist / (2.0 * h * h)))
    np.fill_diagonal(gram, 1.0)
    return KcpState(gram, h)


def kcp_curve(state: KcpState) -> np.ndarray:
    """``(v_{1,t} + v_{2,t}) / T`` for ``t = 2..T-2``."""
    K = state.kernel_matrix
    T = K.shape[0]
    C = np.zeros((T + 1, T + 1))
    C[1:, 1:] = K.cumsum(axis=0).cumsum(axis=1)

    def block(lo, hi):
        # sum of K[lo:hi, lo:hi]
        return C[hi, hi] - C[lo, hi] - C[hi, lo] + C[lo, lo]

    t = np.arange(2, T - 1)
    # left sum runs over 1-based i, j = 2..t
    v1 = (t - 1) - block(1, t) / (t - 1)
    v2 = (T - t) - block(t, T) / (T - t)
    return (v1 + v2) / T


def kcp_estimate(data) -> EstimationReport:
    y = as_observations(data)
    p, T = y.shape
    if T < 4:
        raise SeriesTooShort(f"KCP needs T >= 4, got T={T}")
    state = kcp_state(y)
    curve = kcp_curve(state)
    t_hat = int(np.argmin(curve)) + 2
    return EstimationReport(t_hat / T, t_hat, curve, SupportIndexSet(np.empty(0, np.int64), p),
                            None, T=T, boundary=t_hat in (2, T - 2), method="kcp",
                            notes={"bandwidth": state.bandwidth})
