"""Mann-Whitney U with midrank ties, exact enumeration for small samples."""
import math

import numpy as np

from neuroline._backend import kernels
from neuroline.errors import DataError, DegenerateError, SizeError
from neuroline.stats.results import EffectSize, Method, TestResult


def midranks(values):
    """1-based ranks with ties assigned the mean of the ranks they span."""
    a = np.asarray(values, dtype=np.float64)
    _, inverse, counts = np.unique(a, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts).astype(np.float64)
    return (ends - (counts - 1) / 2.0)[inverse.ravel()]


def _tie_sum(values):
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


def mann_whitney_u(x, y, exact_max_n=12, continuity=False):
    """Two-sided Mann-Whitney U test of ``x`` against ``y``.

    ``U`` counts the pairs with ``x > y`` (ties count one half). When
    ``len(x) + len(y) <= exact_max_n`` the p-value comes from enumerating
    every assignment of the pooled midranks to the first sample; otherwise
    the tie-corrected normal approximation is used. The effect size always
    uses the normal-approximation z.

    Returns
    -------
    (TestResult, EffectSize)
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n1, n2 = x.shape[0], y.shape[0]
    if n1 < 3 or n2 < 3:
        raise SizeError(f"Mann-Whitney needs at least 3 values per sample, got {n1} and {n2}")
    pooled = np.concatenate([x, y])
    if not np.all(np.isfinite(pooled)):
        raise DataError("samples must be finite")
    if np.all(pooled == pooled[0]):
        raise DegenerateError("all values identical across both samples")

    n = n1 + n2
    ranks = midranks(pooled)
    r1 = float(np.sum(ranks[:n1]))
    u = r1 - n1 * (n1 + 1) / 2.0
    mu = n1 * n2 / 2.0
    var = n1 * n2 / 12.0 * ((n + 1) - _tie_sum(pooled) / (n * (n - 1)))
    sd = math.sqrt(var)
    dev = u - mu
    if continuity:
        dev = math.copysign(max(abs(dev) - 0.5, 0.0), dev)
    z = dev / sd

    if n <= exact_max_n:
        ranks2 = np.rint(2.0 * ranks).astype(np.int64)
        n_le, n_ge, total = kernels.mwu_tail_counts(ranks2, n1, int(round(2.0 * r1)))
        p = min(1.0, 2.0 * min(n_le, n_ge) / total)
        method = Method.EXACT_PERMUTATION
    else:
        p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
        method = Method.NORMAL_APPROX

    r = min(1.0, abs(z) / math.sqrt(n))
    return TestResult(u, p, method, n=n), EffectSize(r, z)
