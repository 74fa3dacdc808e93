"""Change-point detection and estimation for high-dimensional correlation matrices."""

from .baselines import dette_curve, dette_d, dette_detect, dette_estimate, dette_thresholds, kcp_curve, kcp_estimate, kcp_state
from .core import (
    StandardizedSeries,
    compute_vt,
    compute_w,
    offset_to_pair,
    pair_index,
    pair_to_offset,
    segment_correlations,
    standardize,
    vech,
    vecho,
)
from .detect import DetectionReport, SupportIndexSet, spad_detect
from .errors import *  # noqa: F401,F403
from .estimate import EstimationReport, ReducedSeries, argmax_split, cusum_curve, reduce_dimension, space_estimate
from .signflip import SignflipConfig, ThresholdReport, compute_thresholds, rademacher, signflip_trial
from .simlab import MetricsSummary, SimScenario, generate, run_experiment, spad_smote_experiment
from .smote import AugmentedSeries, SmoteConfig, smote_generate, smote_space

__version__ = "0.1.0"
