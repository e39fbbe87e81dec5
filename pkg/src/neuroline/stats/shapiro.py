"""Shapiro-Wilk W test with Royston's (1995, AS R94) coefficients and p-value."""
import math

import numpy as np
from scipy.special import ndtr, ndtri

from neuroline.errors import DataError, DegenerateError, SizeError
from neuroline.stats.results import Method, TestResult

_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)
_SMALL = 1e-19


def _poly(coefs, x):
    out = 0.0
    for c in reversed(coefs):
        out = out * x + c
    return out


def swilk_coefficients(n):
    """Antisymmetric coefficient vector ``a`` (length ``n``, unit norm)."""
    nn2 = n // 2
    half = np.empty(nn2)
    if n == 3:
        half[0] = math.sqrt(0.5)
    else:
        m = ndtri((np.arange(1, nn2 + 1) - 0.375) / (n + 0.25))
        summ2 = 2.0 * float(np.sum(m ** 2))
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = _poly(_C1, rsn) - m[0] / ssumm2
        if n > 5:
            i1 = 2
            a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1 ** 2 - 2.0 * a2 ** 2))
            half[1] = a2
        else:
            i1 = 1
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1 ** 2))
        half[0] = a1
        half[i1:] = -m[i1:] / fac
    a = np.zeros(n)
    a[:nn2] = -half
    a[n - nn2:] = half[::-1]
    return a


def _royston_p(w, n):
    if n == 3:
        return max(0.0, min(1.0, 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))))
    w1 = math.log(1.0 - w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_G, float(n))
        if w1 >= gamma:
            return _SMALL
        y = -math.log(gamma - w1)
        m = _poly(_C3, float(n))
        s = math.exp(_poly(_C4, float(n)))
    else:
        xx = math.log(n)
        y = w1
        m = _poly(_C5, xx)
        s = math.exp(_poly(_C6, xx))
    if y == -math.inf:
        return 1.0
    return float(ndtr(-(y - m) / s))


def shapiro_wilk(x):
    """W statistic (squared correlation of order statistics with ``a``) and p."""
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    n = x.shape[0]
    if not 3 <= n <= 5000:
        raise SizeError(f"Shapiro-Wilk supports 3 <= n <= 5000, got {n}")
    if not np.all(np.isfinite(x)):
        raise DataError("sample must be finite")
    if x[-1] - x[0] <= 0:
        raise DegenerateError("constant sample")
    a = swilk_coefficients(n)
    xc = x - np.mean(x)
    w = float(np.dot(a, xc)) ** 2 / (float(np.dot(a, a)) * float(np.dot(xc, xc)))
    w = min(w, 1.0)
    return TestResult(w, _royston_p(w, n), Method.ROYSTON_APPROX, n=n, approximate=True)
