"""Location, spread and shape summaries of a 1-D sample."""
from dataclasses import asdict, dataclass

import numpy as np

from neuroline.errors import DataError, SizeError

STAT_NAMES = ("median", "iqr", "mad", "skewness", "kurtosis_excess")


@dataclass(frozen=True)
class ShapeStats:
    median: float
    iqr: float
    mad: float
    skewness: float
    kurtosis_excess: float

    def as_array(self):
        return np.array([getattr(self, k) for k in STAT_NAMES])

    def to_dict(self):
        return asdict(self)


def shape_stats(x):
    """Median, IQR (linear-interpolation quartiles), mean absolute deviation,
    and population skewness / excess kurtosis.

    A constant sample reports zero skewness and kurtosis.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 4:
        raise SizeError(f"shape statistics need at least 4 values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError("sample must be finite")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    # np.mean of identical values can miss the value by an ulp; force exact zeros
    d = np.zeros_like(x) if x.min() == x.max() else x - np.mean(x)
    m2 = float(np.mean(d ** 2))
    if m2 > 0:
        skew = float(np.mean(d ** 3)) / m2 ** 1.5
        kurt = float(np.mean(d ** 4)) / m2 ** 2 - 3.0
    else:
        skew = kurt = 0.0
    return ShapeStats(float(med), float(q3 - q1), float(np.mean(np.abs(d))), skew, kurt)
