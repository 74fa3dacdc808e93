"""Simulation laboratory: scenario generators, moment oracles for ``v_t``,
Monte Carlo experiment runners and metric aggregation.

Scenario catalogue (``R1``/``R2``/``R3`` are the segment correlation matrices)

====  =========================================================  ==============
case  correlation change                                          default beta
====  =========================================================  ==============
0     none, ``R = I``                                             --
1     ``I`` -> equicorrelation 0.5                                0.5
2     ``I`` -> 0.5 on the first ``floor(p/2)`` variables          0.5
3     as case 1                                                   0.75
4     ``I`` -> 0.5 -> ``I``                                       1/3, 2/3
5     ``I`` -> 0.5 -> 0.9                                         1/3, 2/3
6     as case 1                                                   0.5
7     as case 2                                                   0.5
8     ``I`` -> blocks 0.5 / 0.2 / 0.8 on thirds                   0.5
9     equicorrelation 0.5 -> tridiagonal -0.5                     0.5
====  =========================================================  ==============
"""

from __future__ import annotations

import logging
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .core import floor_index
from .errors import (
    ChangePointError,
    InvalidScenario,
    UnsupportedDistribution,
)

log = logging.getLogger(__name__)

CASE_BETAS = {0: (0.5,), 1: (0.5,), 2: (0.5,), 3: (0.75,), 4: (1 / 3, 2 / 3),
              5: (1 / 3, 2 / 3), 6: (0.5,), 7: (0.5,), 8: (0.5,), 9: (0.5,)}
VARIANCE_MODELS = ("unit", "hetero", "var1", "var1_hetero", "garch", "ushift")
DISTRIBUTIONS = ("gaussian", "student_t")
METHODS = ("spad", "space", "smote_space", "dette", "kcp")


@dataclass(frozen=True)
class SimScenario:
    case: int = 6
    p: int = 100
    T: int = 100
    beta: Optional[float] = None
    beta2: Optional[float] = None
    dist: str = "gaussian"
    df: float = 5.0
    variance: str = "unit"
    psi: float = 0.8
    garch_alpha1: float = 0.1
    garch_alpha2: float = 0.89
    sigma0: float = 1.0
    delta: float = 1.0
    sigma_low: float = 1.0
    sigma_high: float = 21.0
    burn_in: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.case not in CASE_BETAS:
            raise InvalidScenario(f"unknown case {self.case!r}")
        if self.p < 1 or self.T < 2:
            raise InvalidScenario("p must be >= 1 and T >= 2")
        if self.dist not in DISTRIBUTIONS:
            raise InvalidScenario(f"unknown distribution {self.dist!r}")
        if self.dist == "student_t" and self.df <= 2:
            raise InvalidScenario("Student-t needs df > 2 for a finite covariance")
        if self.variance not in VARIANCE_MODELS:
            raise InvalidScenario(f"unknown variance model {self.variance!r}")
        for b in self.breaks_fraction():
            if not 0 < b < 1:
                raise InvalidScenario(f"change fraction {b} outside (0, 1)")

    def breaks_fraction(self) -> tuple[float, ...]:
        default = CASE_BETAS[self.case]
        if self.case == 0:
            return ()
        if len(default) == 2:
            return (self.beta if self.beta is not None else default[0],
                    self.beta2 if self.beta2 is not None else default[1])
        return (self.beta if self.beta is not None else default[0],)

    def change_points(self) -> tuple[int, ...]:
        """Segment ends ``t0 = floor(beta * T)`` (1-based last index of each segment)."""
        return tuple(floor_index(b * self.T) for b in self.breaks_fraction())

    @property
    def true_beta(self) -> Optional[float]:
        br = self.breaks_fraction()
        return br[0] if br else None

    @property
    def is_null(self) -> bool:
        return self.case == 0

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SimScenario":
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidScenario(f"expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise InvalidScenario(f"unknown scenario key {key!r}")
            kw[key] = _parse_field(types[key], value)
        return cls(**kw)


def _parse_field(annotation: str, value: str):
    if "int" in annotation and "Optional" not in annotation:
        return int(value)
    if "float" in annotation:
        return None if value.lower() == "none" else float(value)
    return value


# --------------------------------------------------------------------------
# Correlation targets

def _equicorrelation(p: int, rho: float, lo: int = 0, hi: Optional[int] = None) -> np.ndarray:
    r = np.eye(p)
    hi = p if hi is None else hi
    block = r[lo:hi, lo:hi]
    block[:] = rho
    np.fill_diagonal(block, 1.0)
    return r


def correlation_matrices(case: int, p: int) -> list[np.ndarray]:
    """Segment correlation matrices for ``case`` (one per segment)."""
    eye = np.eye(p)
    if case == 0:
        return [eye]
    if case in (1, 3, 6):
        return [eye, _equicorrelation(p, 0.5)]
    if case in (2, 7):
        return [eye, _equicorrelation(p, 0.5, 0, p // 2)]
    if case == 4:
        return [eye, _equicorrelation(p, 0.5), eye]
    if case == 5:
        return [eye, _equicorrelation(p, 0.5), _equicorrelation(p, 0.9)]
    if case == 8:
        r2 = np.eye(p)
        a, b = p // 3, (2 * p) // 3
        for lo, hi, rho in ((0, a, 0.5), (a, b, 0.2), (b, p, 0.8)):
            blk = r2[lo:hi, lo:hi]
            blk[:] = rho
            np.fill_diagonal(blk, 1.0)
        return [eye, r2]
    if case == 9:
        r2 = np.eye(p)
        idx = np.arange(p - 1)
        r2[idx, idx + 1] = -0.5
        r2[idx + 1, idx] = -0.5
        return [_equicorrelation(p, 0.5), r2]
    raise InvalidScenario(f"unknown case {case!r}")


@lru_cache(maxsize=64)
def _correlation_roots(case: int, p: int) -> tuple[np.ndarray, ...]:
    roots = []
    for r in correlation_matrices(case, p):
        vals, vecs = np.linalg.eigh(r)
        if vals[0] < -1e-10:
            raise InvalidScenario(
                f"case {case} correlation target is not positive semidefinite at p={p}")
        vals = np.clip(vals, 0.0, None)
        root = (vecs * np.sqrt(vals)) @ vecs.T
        root.setflags(write=False)
        roots.append(root)
    return tuple(roots)


def scenario_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def generate(scenario: SimScenario, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Draw one ``p x T`` data matrix for ``scenario``."""
    s = scenario
    rng = rng if rng is not None else scenario_rng(s.seed)
    p, T = s.p, s.T
    roots = _correlation_roots(s.case, p)
    ends = list(s.change_points()) + [T]
    burn = s.burn_in if s.variance in ("var1", "var1_hetero") else 0

    sigma = np.ones(p)
    if s.variance in ("hetero", "var1_hetero"):
        sigma = rng.uniform(s.sigma_low, s.sigma_high, size=p)

    eta = rng.standard_normal((p, burn + T))
    if s.dist == "student_t":
        # multivariate t with unit covariance: Gaussian over sqrt(chi2/df), then
        # shrink by sqrt((df-2)/df) so the covariance is the target matrix
        chi = rng.chisquare(s.df, size=burn + T)
        eta = eta / np.sqrt(chi / s.df) * math.sqrt((s.df - 2.0) / s.df)

    u = np.empty_like(eta)
    if burn:
        u[:, :burn] = roots[0] @ eta[:, :burn]
    start = 0
    for root, end in zip(roots, ends):
        u[:, burn + start:burn + end] = root @ eta[:, burn + start:burn + end]
        start = end

    if s.variance == "garch":
        a1, a2 = s.garch_alpha1, s.garch_alpha2
        e = np.empty_like(u)
        var = np.ones(p)
        prev = np.zeros(p)
        for i in range(T):
            var = (1.0 - a1 - a2) + a1 * prev * prev + a2 * var
            prev = np.sqrt(var) * u[:, i]
            e[:, i] = prev
        return e
    if s.variance == "ushift":
        i = np.arange(1, T + 1)
        scale = s.sigma0 * (1.0 + s.delta * (i > T / 2))
        return u * scale[np.newaxis, :]

    e = u * sigma[:, np.newaxis]
    if s.variance in ("var1", "var1_hetero"):
        y = np.empty_like(e)
        prev = np.zeros(p)
        for i in range(burn + T):
            prev = s.psi * prev + e[:, i]
            y[:, i] = prev
        return np.ascontiguousarray(y[:, burn:])
    return np.ascontiguousarray(e)


# --------------------------------------------------------------------------
# Moment oracles for v_t (data with known zero mean and unit variance)

def gaussian_fourth_moment(rho: float) -> float:
    """``E (x_i x_j)^2 = 1 + 2 rho^2`` for a standard bivariate normal pair."""
    return 1.0 + 2.0 * rho * rho


def expected_v(t: int, t0: int, T: int, rho1: float, rho2: float,
               beta1: Optional[float] = None, beta2: Optional[float] = None) -> float:
    """Expectation of ``v_t(i, j)`` with a single change after column ``t0``.

    ``beta1``/``beta2`` are the second moments of the pair product before and
    after the change (Gaussian values by default).
    """
    b1 = gaussian_fourth_moment(rho1) if beta1 is None else beta1
    b2 = gaussian_fourth_moment(rho2) if beta2 is None else beta2
    gap = (rho1 - rho2) ** 2
    var1, var2 = b1 - rho1 * rho1, b2 - rho2 * rho2
    if t == t0:
        return gap + var1 / t0 + var2 / (T - t0)
    if t < t0:
        r = T - t
        return (T - t0) ** 2 / r ** 2 * gap + (1.0 / t + (t0 - t) / r ** 2) * var1 + (T - t0) / r ** 2 * var2
    return t0 ** 2 / t ** 2 * gap + t0 / t ** 2 * var1 + ((t - t0) / t ** 2 + 1.0 / (T - t)) * var2


def expected_v_flipped(t: int, t0: int, T: int, rho1: float, rho2: float,
                       beta1: Optional[float] = None, beta2: Optional[float] = None) -> float:
    """Expectation of ``v_t(i, j)`` after Rademacher flipping of every entry."""
    b1 = gaussian_fourth_moment(rho1) if beta1 is None else beta1
    b2 = gaussian_fourth_moment(rho2) if beta2 is None else beta2
    if t == t0:
        return b1 / t0 + b2 / (T - t0)
    if t < t0:
        r = T - t
        return (1.0 / t + (t0 - t) / r ** 2) * b1 + (T - t0) / r ** 2 * b2
    return t0 / t ** 2 * b1 + ((t - t0) / t ** 2 + 1.0 / (T - t)) * b2


def _pair_rhos(scenario: SimScenario, pair: tuple[int, int]) -> tuple[float, float, int]:
    if scenario.dist != "gaussian":
        raise UnsupportedDistribution("closed-form moments are available for Gaussian data only")
    mats = correlation_matrices(scenario.case, scenario.p)
    if len(mats) == 1:
        mats = mats * 2
    if len(mats) != 2:
        raise InvalidScenario("moment oracle needs a single change point")
    i, j = pair
    t0 = scenario.change_points()[0] if scenario.change_points() else scenario.T // 2
    return float(mats[0][i, j]), float(mats[1][i, j]), t0


def expected_v_oracle(scenario: SimScenario, t: int, pair: tuple[int, int]) -> float:
    """``E v_t(i, j)`` for a Gaussian scenario (0-based pair)."""
    rho1, rho2, t0 = _pair_rhos(scenario, pair)
    return expected_v(t, t0, scenario.T, rho1, rho2)


def expected_v_flipped_oracle(scenario: SimScenario, t: int, pair: tuple[int, int]) -> float:
    rho1, rho2, t0 = _pair_rhos(scenario, pair)
    return expected_v_flipped(t, t0, scenario.T, rho1, rho2)


# --------------------------------------------------------------------------
# Experiments

@dataclass
class MetricsSummary:
    method: str
    replications: int
    failures: int = 0
    true_beta: Optional[float] = None
    mean: Optional[float] = None
    sd: Optional[float] = None
    mse: Optional[float] = None
    rejection_rate: Optional[float] = None
    success_rate: Optional[float] = None
    mean_iterations: Optional[float] = None
    degenerate: bool = False
    records: Optional[list] = None
    failure_kinds: dict = field(default_factory=dict)


def summarize_estimates(values: Sequence[float], true_beta: float) -> tuple[float, float, float]:
    """Mean, sample SD (divisor n-1; 0 for a single value) and MSE about ``true_beta``."""
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    mse = float(np.mean((v - true_beta) ** 2))
    return mean, sd, mse


def derived_seed(seed: int, *stream: int) -> int:
    """A 64-bit seed for an independent substream ``stream`` of ``seed``."""
    ss = np.random.SeedSequence([int(seed), *map(int, stream)])
    return int(ss.generate_state(1, np.uint64)[0])


def _one_replication(args) -> dict:
    scenario, method, rep, seed, q, alpha, gamma, epsilon, window_frame = args
    from .baselines import dette_estimate, kcp_estimate
    from .detect import spad_detect
    from .estimate import space_estimate
    from .signflip import SignflipConfig
    from .smote import SmoteConfig, smote_space

    y = generate(scenario, scenario_rng(seed, rep, 0))
    mseed = derived_seed(seed, rep, 1)
    record = {"replication": rep}
    try:
        if method == "spad":
            cfg = SignflipConfig(q=q or 30, alpha=alpha, seed=mseed)
            record["rejected"] = spad_detect(y, cfg).rejected
            return record
        if method == "space":
            rep_ = space_estimate(y, SignflipConfig(q=q or 20, alpha=alpha, seed=mseed))
        elif method == "smote_space":
            rep_ = smote_space(y, SignflipConfig(q=q or 20, alpha=alpha, seed=mseed),
                               SmoteConfig(gamma=gamma, epsilon=epsilon,
                                           seed=derived_seed(seed, rep, 2),
                                           window_frame=window_frame))
        elif method == "dette":
            rep_ = dette_estimate(y, cfg=SignflipConfig(q=q or 20, alpha=alpha, seed=mseed))
        elif method == "kcp":
            rep_ = kcp_estimate(y)
        else:
            raise ValueError(f"unknown method {method!r}")
    except ChangePointError as exc:
        record["error"] = type(exc).__name__
        return record
    record["beta_hat"] = rep_.beta_hat
    record["t_hat"] = rep_.t_hat
    record["iterations"] = rep_.smote_iterations
    return record


def _parallel_map(fn, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def run_experiment(scenario: SimScenario, method: str, replications: int, seed: int = 0,
                   workers: int = 1, q: Optional[int] = None, alpha: float = 0.95,
                   gamma: float = 0.9, epsilon: float = 1e-3,
                   keep_records: bool = False, window_frame: str = "current") -> MetricsSummary:
    """Monte Carlo summary of ``method`` over ``replications`` draws of ``scenario``.

    Replication ``r`` draws its data from stream ``(seed, r, 0)`` and its
    method randomness from ``(seed, r, 1)``/``(seed, r, 2)``, so every
    replication is reproducible on its own and worker count does not matter.
    Replications whose method raises a package error are counted in
    ``failures`` and left out of the statistics.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    jobs = [(scenario, method, r, seed, q, alpha, gamma, epsilon, window_frame)
            for r in range(replications)]
    records = _parallel_map(_one_replication, jobs, workers)

    ok = [r for r in records if "error" not in r]
    kinds: dict = {}
    for r in records:
        if "error" in r:
            kinds[r["error"]] = kinds.get(r["error"], 0) + 1
    out = MetricsSummary(method=method, replications=replications,
                         failures=replications - len(ok), true_beta=scenario.true_beta,
                         degenerate=len(ok) <= 1, failure_kinds=kinds,
                         records=records if keep_records else None)
    if not ok:
        return out
    if method == "spad":
        rate = float(np.mean([r["rejected"] for r in ok]))
        out.rejection_rate = rate
        out.success_rate = 1.0 - rate if scenario.is_null else rate
        return out
    tb = scenario.true_beta if scenario.true_beta is not None else float("nan")
    out.mean, out.sd, out.mse = summarize_estimates([r["beta_hat"] for r in ok], tb)
    if method == "smote_space":
        out.mean_iterations = float(np.mean([r["iterations"] for r in ok]))
    return out


@dataclass
class SpadSmoteResult:
    rate: float
    raw_rate: float
    rates: list
    iterations: int
    converged: bool
    datasets: int


def _detect_job(args) -> bool:
    y, q, alpha, seed = args
    from .detect import spad_detect
    from .signflip import SignflipConfig
    try:
        return spad_detect(y, SignflipConfig(q=q, alpha=alpha, seed=seed)).rejected
    except ChangePointError:
        return False


def spad_smote_experiment(scenario: SimScenario, m: int = 200, epsilon: float = 0.05,
                          q: int = 30, alpha: float = 0.95, gamma: float = 0.9,
                          seed: int = 0, max_rounds: int = 25, workers: int = 1,
                          window_frame: str = "original") -> SpadSmoteResult:
    """Detection rate over ``m`` datasets, re-augmenting all of them while it improves.

    Round 0 tests the raw datasets. Each later round appends SMOTE columns to
    every dataset's current matrix and re-tests; rounds continue while the rate
    grows by at least ``epsilon``. If every raw dataset is already detected,
    no augmentation is attempted.

    With ``window_frame="original"`` (the default) every round draws its
    synthetic columns from the last ``T - floor(gamma T)`` real columns and adds
    ``ceil((1 - gamma) T)`` of them, ``T`` being the scenario length.
    ``"current"`` ties both to the working length instead.
    """
    from .smote import SmoteConfig, smote_generate

    datasets = [generate(scenario, scenario_rng(seed, i, 0)) for i in range(m)]
    det_seeds = [derived_seed(seed, i, 1) for i in range(m)]

    def rate_of(mats) -> float:
        hits = _parallel_map(_detect_job, [(y, q, alpha, s) for y, s in zip(mats, det_seeds)], workers)
        return float(np.mean(hits))

    alpha0 = rate_of(datasets)
    rates = [alpha0]
    if alpha0 >= 1.0:
        return SpadSmoteResult(1.0, alpha0, rates, 0, True, m)
    rounds = 0
    alpha1 = alpha0
    converged = False
    while rounds < max_rounds:
        rounds += 1
        datasets = [smote_generate(y, SmoteConfig(gamma=gamma, seed=derived_seed(seed, i, 2),
                                                  window_frame=window_frame),
                                   round_index=rounds - 1,
                                   reference_T=scenario.T if window_frame == "original" else None).values
                    for i, y in enumerate(datasets)]
        alpha1 = rate_of(datasets)
        rates.append(alpha1)
        if alpha1 - alpha0 < epsilon:
            converged = True
            break
        alpha0 = alpha1
    return SpadSmoteResult(alpha1, rates[0], rates, rounds, converged, m)
