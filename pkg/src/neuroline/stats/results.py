from dataclasses import dataclass
from enum import Enum


class Method(str, Enum):
    EXACT_PERMUTATION = "exact_permutation"
    NORMAL_APPROX = "normal_approx"
    ASYMPTOTIC_KOLMOGOROV = "asymptotic_kolmogorov"
    ROYSTON_APPROX = "royston_approx"


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: Method
    n: int = 0
    approximate: bool = False

    __test__ = False  # keep pytest from collecting this

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


@dataclass(frozen=True)
class EffectSize:
    """Rank-biserial style effect size ``r = |z| / sqrt(n1 + n2)``."""

    r: float
    z: float
