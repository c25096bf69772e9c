"""Statistical auditing of demographic differentials in biometric recognition."""

__version__ = "0.1.0"

from .core import (COMPOSITES, DEFAULT_PAIRS, MARGINALS, ComparisonRecord, DemographicGroup,
                   MarginalGroup, ScoreSet, SubjectRecord, calibrate_threshold_fmr, parse_group,
                   parse_pairs, partition_by_group, roc_curve, verification_rates)
from .errors import (ConfigError, DataError, DegenerateStatisticError, DemodiffError, NumericError,
                     UndefinedMetricError)
from .resample import BootstrapConfig, BootstrapEstimate, Metric, bootstrap_estimate, bootstrap_groups
from .stats import (GroupSummary, ProportionSummary, TestResult, anova_f, anova_f_from_summaries,
                    t_decision, two_prop_z, welch_t)

__all__ = [
    "COMPOSITES", "DEFAULT_PAIRS", "MARGINALS", "BootstrapConfig", "BootstrapEstimate",
    "ComparisonRecord", "ConfigError", "DataError", "DegenerateStatisticError", "DemodiffError",
    "DemographicGroup", "GroupSummary", "MarginalGroup", "Metric", "NumericError",
    "ProportionSummary", "ScoreSet", "SubjectRecord", "TestResult", "UndefinedMetricError",
    "anova_f", "anova_f_from_summaries", "bootstrap_estimate", "bootstrap_groups",
    "calibrate_threshold_fmr", "parse_group", "parse_pairs", "partition_by_group", "roc_curve",
    "t_decision", "two_prop_z", "verification_rates", "welch_t",
]
