"""One-sample Kolmogorov-Smirnov distance and asymptotic p-value."""
import math
from typing import NamedTuple

import numpy as np
from scipy.special import kolmogorov

from neuroline.errors import DataError, SizeError


class KSResult(NamedTuple):
    d: float
    p: float
    approximate: bool


def _evaluate_cdf(cdf, xs):
    func = cdf.cdf if hasattr(cdf, "cdf") else cdf
    try:
        out = np.asarray(func(xs), dtype=np.float64)
        if out.shape == xs.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(func(v)) for v in xs])


def ks_statistic(x, cdf, fitted=False):
    """Sup distance between the ECDF of ``x`` and ``cdf``.

    ``cdf`` is a callable or anything with a ``.cdf`` method. The p-value
    uses the asymptotic Kolmogorov distribution of ``sqrt(n) * D``; it is
    flagged approximate always for small ``n`` and whenever the parameters
    were ``fitted`` from the same data (the p-value is then conservative).
    """
    xs = np.sort(np.asarray(x, dtype=np.float64).ravel())
    n = xs.shape[0]
    if n < 1:
        raise SizeError("KS needs at least one value")
    if not np.all(np.isfinite(xs)):
        raise DataError("sample must be finite")
    f = np.clip(_evaluate_cdf(cdf, xs), 0.0, 1.0)
    i = np.arange(1, n + 1, dtype=np.float64)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1) / n)
    d = float(min(1.0, max(d_plus, d_minus, 0.0)))
    p = float(min(1.0, max(0.0, kolmogorov(math.sqrt(n) * d))))
    return KSResult(d, p, bool(fitted or n < 35))
