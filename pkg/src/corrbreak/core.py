"""Data model, global standardization, half-vectorization and the pairwise
statistics ``v_t`` and ``w``.

Conventions
-----------
Observations are held as a ``p x T`` float64 array: one row per variable, one
column per time point. Pairs ``(i, j)`` with ``i < j`` are 0-based internally
and enumerated as ``(0, 1), (0, 2), ..., (0, p-1), (1, 2), ...``; that is the
strictly lower triangle read column by column. Every module shares this order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .errors import (
    DimensionTooSmall,
    InvalidObservations,
    SeriesTooShort,
    SplitOutOfRange,
    ZeroVarianceRow,
)

# Compensated summation kicks in above this series length.
KAHAN_MIN_T = 10_000
_TINY_VARIANCE = 1e-300


def as_observations(values) -> np.ndarray:
    """Validate and return ``values`` as a C-contiguous float64 ``p x T`` array."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidObservations(f"expected a non-empty p x T matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise InvalidObservations(f"non-finite entry at variable {bad[0]}, time {bad[1]}")
    return arr


def floor_index(x: float) -> int:
    """``floor`` that forgives binary round-off such as ``0.7 * 100 = 70.00000000000001``."""
    return int(math.floor(x + 1e-9))


def ceil_index(x: float) -> int:
    return int(math.ceil(x - 1e-9))


@dataclass(frozen=True, eq=False)
class StandardizedSeries:
    """``x_t = D^{-1/2} (y_t - ybar)`` with full-sample mean and variance.

    ``scale`` holds the per-variable standard deviations (divisor ``T - 1``).
    """

    values: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @classmethod
    def assume_standardized(cls, values) -> "StandardizedSeries":
        """Wrap data whose mean and variance are known to be 0 and 1.

        Used to reproduce the idealized moment calculations, where no
        estimation of ``ybar`` or ``D`` takes place.
        """
        arr = as_observations(values)
        return cls(arr, np.zeros(arr.shape[0]), np.ones(arr.shape[0]))


def standardize(data) -> StandardizedSeries:
    y = as_observations(data)
    T = y.shape[1]
    if T < 2:
        raise SeriesTooShort("standardization needs at least two time points")
    mean = y.mean(axis=1)
    centred = y - mean[:, np.newaxis]
    var = np.einsum("ij,ij->i", centred, centred) / (T - 1)
    bad = np.flatnonzero(~(var > _TINY_VARIANCE))
    if bad.size:
        raise ZeroVarianceRow(int(bad[0]))
    scale = np.sqrt(var)
    x = centred / scale[:, np.newaxis]
    return StandardizedSeries(np.ascontiguousarray(x), mean, scale)


# --------------------------------------------------------------------------
# Half-vectorization

def n_pairs(p: int) -> int:
    return p * (p - 1) // 2


@lru_cache(maxsize=32)
def _pair_index(p: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(p, 1)
    i.setflags(write=False)
    j.setflags(write=False)
    return i, j


def pair_index(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``(i, j)`` (0-based, ``i < j``) listing every pair in canonical order."""
    return _pair_index(int(p))


@lru_cache(maxsize=32)
def _vech_index(p: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(p, 0)
    i.setflags(write=False)
    j.setflags(write=False)
    return i, j


def vech_index(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`pair_index` but including the diagonal (length ``p(p+1)/2``)."""
    return _vech_index(int(p))


def vech(symmetric) -> np.ndarray:
    """Lower triangle including the diagonal, read column by column."""
    m = np.asarray(symmetric, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    i, j = vech_index(m.shape[0])
    return m[j, i]


def pair_to_offset(i: int, j: int, p: int) -> int:
    """Canonical offset of the 0-based pair ``{i, j}``."""
    if i == j or not (0 <= i < p and 0 <= j < p):
        raise ValueError(f"invalid pair ({i}, {j}) for p={p}")
    if i > j:
        i, j = j, i
    return i * p - i * (i + 1) // 2 + (j - i - 1)


def offset_to_pair(k: int, p: int) -> tuple[int, int]:
    if not 0 <= k < n_pairs(p):
        raise ValueError(f"offset {k} out of range for p={p}")
    i, j = pair_index(p)
    return int(i[k]), int(j[k])


def vecho(symmetric) -> np.ndarray:
    """Strictly lower-triangular entries of a symmetric matrix, canonical order."""
    m = np.asarray(symmetric, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    p = m.shape[0]
    if p < 2:
        raise DimensionTooSmall("vecho needs p >= 2")
    i, j = pair_index(p)
    return m[j, i]


def pair_products(x: np.ndarray, i=None, j=None) -> np.ndarray:
    """Rows ``x[i] * x[j]``: column ``k`` is the (sub)vector vecho(x_k x_k')."""
    if i is None:
        i, j = pair_index(x.shape[0])
    return x[i] * x[j]


# --------------------------------------------------------------------------
# Segment correlations and v_t

def _values(x) -> np.ndarray:
    return x.values if isinstance(x, StandardizedSeries) else as_observations(x)


def segment_correlations(x, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Off-diagonals of ``R_1^t = (1/t) sum_{k<=t} x_k x_k'`` and its right-hand twin."""
    xv = _values(x)
    T = xv.shape[1]
    if not 1 <= t <= T - 1:
        raise SplitOutOfRange(f"split {t} outside 1..{T - 1}")
    left = xv[:, :t] @ xv[:, :t].T / t
    right = xv[:, t:] @ xv[:, t:].T / (T - t)
    return vecho(left), vecho(right)


def compute_vt(x, t: int) -> np.ndarray:
    """Squared differences of left/right segment correlations at split ``t``."""
    xv = _values(x)
    T = xv.shape[1]
    if not 2 <= t <= T - 2:
        raise SplitOutOfRange(f"split {t} outside 2..{T - 2}")
    prods = pair_products(xv)
    diff = prods[:, :t].sum(axis=1) / t - prods[:, t:].sum(axis=1) / (T - t)
    return diff * diff


def split_weights(T: int) -> np.ndarray:
    """Length-``T`` array with ``t (T - t) / (T (T - 3))`` at ``t = 2..T-2`` and 0 elsewhere."""
    w = np.zeros(T)
    t = np.arange(2, T - 1, dtype=np.float64)
    w[2:T - 1] = t * (T - t) / T / (T - 3)
    return w


@njit(cache=True, nogil=True)
def _weighted_sq_diff(x, wt, compensated):
    p, T = x.shape
    out = np.empty(p * (p - 1) // 2)
    prods = np.empty(T)
    inv_left = np.empty(T)
    inv_right = np.empty(T)
    for t in range(1, T):
        inv_left[t] = 1.0 / t
        inv_right[t] = 1.0 / (T - t)
    k = 0
    for i in range(p - 1):
        xi = x[i]
        for j in range(i + 1, p):
            xj = x[j]
            total = 0.0
            c_tot = 0.0
            for s in range(T):
                v = xi[s] * xj[s]
                prods[s] = v
                if compensated:
                    yv = v - c_tot
                    tt = total + yv
                    c_tot = (tt - total) - yv
                    total = tt
                else:
                    total += v
            run = prods[0]
            c_run = 0.0
            acc = 0.0
            c_acc = 0.0
            for t in range(2, T - 1):
                v = prods[t - 1]
                if compensated:
                    yv = v - c_run
                    tt = run + yv
                    c_run = (tt - run) - yv
                    run = tt
                else:
                    run += v
                d = run * inv_left[t] - (total - run) * inv_right[t]
                term = wt[t] * d * d
                if compensated:
                    yv = term - c_acc
                    tt = acc + yv
                    c_acc = (tt - acc) - yv
                    acc = tt
                else:
                    acc += term
            out[k] = acc
            k += 1
    return out


def compute_w(x) -> np.ndarray:
    """Weighted aggregate ``w = 1/(T-3) sum_{t=2}^{T-2} t(T-t)/T * v_t``.

    One pass per pair with a running prefix sum, so the cost is ``O(T p^2)``
    and memory stays at ``O(T + p^2)``.
    """
    xv = _values(x)
    T = xv.shape[1]
    if T < 5:
        raise SeriesTooShort(f"w needs T >= 5, got T={T}")
    return _weighted_sq_diff(xv, split_weights(T), T > KAHAN_MIN_T)
