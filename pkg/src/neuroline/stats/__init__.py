"""Statistical primitives used by calibration."""
from neuroline.stats.families import PARAM_NAMES, Distribution, Family, Unsupported, fit_family
from neuroline.stats.kl import kl_divergence, kl_gaussian
from neuroline.stats.ks import KSResult, ks_statistic
from neuroline.stats.mannwhitney import mann_whitney_u, midranks
from neuroline.stats.results import EffectSize, Method, TestResult
from neuroline.stats.shape import STAT_NAMES, ShapeStats, shape_stats
from neuroline.stats.shapiro import shapiro_wilk

__all__ = [
    "Distribution", "EffectSize", "Family", "KSResult", "Method", "PARAM_NAMES", "STAT_NAMES",
    "ShapeStats", "TestResult", "Unsupported", "fit_family", "kl_divergence", "kl_gaussian",
    "ks_statistic", "mann_whitney_u", "midranks", "shape_stats", "shapiro_wilk",
]
