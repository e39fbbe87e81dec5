"""The eleven candidate likelihood families and their fitting rules.

Densities and distribution functions are delegated to ``scipy.stats``; the
Gaussian, which the decoder evaluates on every window, has a closed-form
fast path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize, special, stats as sps

from neuroline.errors import ConfigError, DataError, DegenerateError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"
    LOGISTIC = "logistic"
    CAUCHY = "cauchy"
    GAMMA = "gamma"
    BETA = "beta"
    WEIBULL = "weibull"
    PARETO = "pareto"
    CHI_SQUARED = "chi_squared"
    STUDENT_T = "student_t"
    RAYLEIGH = "rayleigh"


PARAM_NAMES = {
    Family.GAUSSIAN: ("mu", "sd"),
    Family.EXPONENTIAL: ("rate",),
    Family.LOGISTIC: ("mu", "s"),
    Family.CAUCHY: ("x0", "gamma"),
    Family.GAMMA: ("shape", "scale"),
    Family.BETA: ("a", "b", "loc", "scale"),
    Family.WEIBULL: ("shape", "scale"),
    Family.PARETO: ("xm", "alpha"),
    Family.CHI_SQUARED: ("k",),
    Family.STUDENT_T: ("df", "loc", "scale"),
    Family.RAYLEIGH: ("sigma",),
}

# indices of parameters that must be strictly positive
_POSITIVE = {
    Family.GAUSSIAN: (1,),
    Family.EXPONENTIAL: (0,),
    Family.LOGISTIC: (1,),
    Family.CAUCHY: (1,),
    Family.GAMMA: (0, 1),
    Family.BETA: (0, 1, 3),
    Family.WEIBULL: (0, 1),
    Family.PARETO: (0, 1),
    Family.CHI_SQUARED: (0,),
    Family.STUDENT_T: (0, 2),
    Family.RAYLEIGH: (0,),
}


def _scipy_frozen(family, p):
    if family is Family.GAUSSIAN:
        return sps.norm(loc=p[0], scale=p[1])
    if family is Family.EXPONENTIAL:
        return sps.expon(scale=1.0 / p[0])
    if family is Family.LOGISTIC:
        return sps.logistic(loc=p[0], scale=p[1])
    if family is Family.CAUCHY:
        return sps.cauchy(loc=p[0], scale=p[1])
    if family is Family.GAMMA:
        return sps.gamma(p[0], scale=p[1])
    if family is Family.BETA:
        return sps.beta(p[0], p[1], loc=p[2], scale=p[3])
    if family is Family.WEIBULL:
        return sps.weibull_min(p[0], scale=p[1])
    if family is Family.PARETO:
        return sps.pareto(p[1], scale=p[0])
    if family is Family.CHI_SQUARED:
        return sps.chi2(p[0])
    if family is Family.STUDENT_T:
        return sps.t(p[0], loc=p[1], scale=p[2])
    if family is Family.RAYLEIGH:
        return sps.rayleigh(scale=p[0])
    raise ConfigError(f"unknown family {family!r}")


@dataclass(frozen=True)
class Distribution:
    """A parameterized member of one of the candidate families."""

    family: Family
    params: tuple
    _frozen: object = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        family = Family(self.family)
        params = tuple(float(v) for v in self.params)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", params)
        if len(params) != len(PARAM_NAMES[family]):
            raise ConfigError(f"{family.value} takes parameters {PARAM_NAMES[family]}, got {params}")
        if not all(math.isfinite(v) for v in params):
            raise ConfigError(f"{family.value} parameters must be finite, got {params}")
        for i in _POSITIVE[family]:
            if not params[i] > 0:
                raise ConfigError(f"{family.value} parameter {PARAM_NAMES[family][i]} must be > 0")

    @property
    def _scipy(self):
        # freezing a scipy distribution costs ~1 ms, so defer it to first use
        if self._frozen is None:
            object.__setattr__(self, "_frozen", _scipy_frozen(self.family, self.params))
        return self._frozen

    @classmethod
    def gaussian(cls, mu, sd):
        return cls(Family.GAUSSIAN, (mu, sd))

    @property
    def named_params(self):
        return dict(zip(PARAM_NAMES[self.family], self.params))

    def support(self):
        lo, hi = self._scipy.support()
        return float(lo), float(hi)

    def logpdf(self, x):
        if self.family is Family.GAUSSIAN and np.isscalar(x):
            mu, sd = self.params
            t = (x - mu) / sd
            return -0.5 * t * t - math.log(sd) - _LOG_SQRT_2PI
        out = self._scipy.logpdf(x)
        return float(out) if np.ndim(out) == 0 else out

    def pdf(self, x):
        out = self._scipy.pdf(x)
        return float(out) if np.ndim(out) == 0 else out

    def cdf(self, x):
        if self.family is Family.GAUSSIAN and np.isscalar(x):
            mu, sd = self.params
            return 0.5 * math.erfc(-(x - mu) / (sd * math.sqrt(2.0)))
        out = self._scipy.cdf(x)
        return float(out) if np.ndim(out) == 0 else out

    def ppf(self, q):
        if self.family is Family.GAUSSIAN and np.isscalar(q):
            mu, sd = self.params
            return mu + sd * float(special.ndtri(q))
        out = self._scipy.ppf(q)
        return float(out) if np.ndim(out) == 0 else out

    def mean(self):
        return float(self._scipy.mean())

    def std(self):
        return float(self._scipy.std())

    def sample(self, rng, size):
        return self._scipy.rvs(size=size, random_state=rng)

    def to_dict(self):
        return {"family": self.family.value, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(Family(d["family"]), tuple(d["params"]))


@dataclass(frozen=True)
class Unsupported:
    """Returned by :func:`fit_family` when the data fall outside the family's support."""

    family: Family
    reason: str

    def __bool__(self):
        return False


def _quartiles(x):
    q1, q2, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    return float(q1), float(q2), float(q3)


def _weibull_shape(x):
    # profile-likelihood equation for the shape; x scaled by max for overflow safety
    y = x / np.max(x)
    logy = np.log(y)
    mean_log = float(np.mean(logy))

    def score(k):
        yk = y ** k
        return float(np.sum(yk * logy) / np.sum(yk)) - 1.0 / k - mean_log

    lo, hi = 1e-3, 1.0
    while score(hi) < 0 and hi < 1e4:
        hi *= 2.0
    return optimize.brentq(score, lo, hi, xtol=1e-12, maxiter=500)


def _student_t_fit(x, loc):
    q1, _, q3 = _quartiles(x)
    scale0 = max((q3 - q1) / 1.349, float(np.std(x)) * 0.5, 1e-12)
    z = x - loc

    def nll(theta):
        df, scale = math.exp(theta[0]), math.exp(theta[1])
        return -float(np.sum(sps.t.logpdf(z, df, scale=scale)))

    res = optimize.minimize(nll, x0=[math.log(5.0), math.log(scale0)], method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
    df = min(math.exp(res.x[0]), 1e6)
    return df, math.exp(res.x[1])


def fit_family(x, family, ddof=1):
    """Fit ``family`` to sample ``x``.

    Moment matching is used where a closed form exists; Weibull and
    Student-t use numeric likelihood maximization and Cauchy uses the
    median and half the interquartile range. Beta is fitted on the data
    range padded by ``range / n`` at each end. ``ddof`` sets the Gaussian sd
    convention (1 = sample sd).

    Returns a :class:`Distribution`, or :class:`Unsupported` when some data
    point lies outside the family's support.
    """
    family = Family(family)
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise DegenerateError("need at least two values to fit a distribution")
    if not np.all(np.isfinite(x)):
        raise DataError("sample must be finite")
    var = float(np.var(x))
    if not var > 0:
        raise DegenerateError("zero-variance sample")
    mean = float(np.mean(x))
    xmin, xmax = float(np.min(x)), float(np.max(x))
    n = x.size

    if family is Family.GAUSSIAN:
        return Distribution(family, (mean, float(np.std(x, ddof=ddof))))
    if family is Family.LOGISTIC:
        return Distribution(family, (mean, math.sqrt(var) * math.sqrt(3.0) / math.pi))
    if family is Family.CAUCHY:
        q1, q2, q3 = _quartiles(x)
        if not q3 > q1:
            return Unsupported(family, "zero interquartile range")
        return Distribution(family, (q2, (q3 - q1) / 2.0))
    if family is Family.STUDENT_T:
        loc = float(np.median(x))
        df, scale = _student_t_fit(x, loc)
        return Distribution(family, (df, loc, scale))
    if family is Family.BETA:
        pad = (xmax - xmin) / n
        loc, scale = xmin - pad, (xmax - xmin) + 2.0 * pad
        u = (x - loc) / scale
        m, v = float(np.mean(u)), float(np.var(u))
        common = m * (1.0 - m) / v - 1.0
        if not common > 0:
            return Unsupported(family, "moments not attainable by a beta distribution")
        return Distribution(family, (m * common, (1.0 - m) * common, loc, scale))

    # remaining families live on the non-negative half-line
    if family in (Family.EXPONENTIAL, Family.CHI_SQUARED, Family.RAYLEIGH):
        if xmin < 0:
            return Unsupported(family, "negative values outside support [0, inf)")
        if family is Family.EXPONENTIAL:
            return Distribution(family, (1.0 / mean,))
        if family is Family.CHI_SQUARED:
            return Distribution(family, (mean,))
        return Distribution(family, (mean * math.sqrt(2.0 / math.pi),))
    if xmin <= 0:
        return Unsupported(family, "non-positive values outside support (0, inf)")
    if family is Family.GAMMA:
        return Distribution(family, (mean * mean / var, var / mean))
    if family is Family.WEIBULL:
        k = _weibull_shape(x)
        lam = float(np.mean(x ** k)) ** (1.0 / k)
        return Distribution(family, (k, lam))
    if family is Family.PARETO:
        alpha = mean / (mean - xmin)
        return Distribution(family, (xmin, alpha))
    raise ConfigError(f"unknown family {family!r}")
