"""Kullback-Leibler divergence between fitted likelihood families."""
import math

import numpy as np
from scipy import integrate

from neuroline.errors import ConfigError
from neuroline.stats.families import Family

CLOSED_FORM = "closed_form"
QUADRATURE = "quadrature"
AUTO = "auto"


def kl_gaussian(mu1, sd1, mu2, sd2):
    """KL(N(mu1, sd1²) || N(mu2, sd2²)) in nats."""
    return math.log(sd2 / sd1) + (sd1 ** 2 + (mu1 - mu2) ** 2) / (2.0 * sd2 ** 2) - 0.5


def _support_contained(p, q):
    lp, up = p.support()
    lq, uq = q.support()
    return lp >= lq and up <= uq


def _kl_quadrature(p, q):
    # integrate in probability space: KL = ∫_0^1 [log p - log q](F_p^{-1}(u)) du
    def integrand(u):
        x = p.ppf(u)
        lq = q.logpdf(x)
        if lq == -math.inf:
            raise _InfiniteKL
        return p.logpdf(x) - lq

    try:
        val, _ = integrate.quad(integrand, 0.0, 1.0, points=[0.5], limit=400, epsabs=1e-12, epsrel=1e-11)
    except _InfiniteKL:
        return math.inf
    return val


class _InfiniteKL(Exception):
    pass


def kl_divergence(p, q, mode=AUTO):
    """KL(p || q) in nats, clamped at 0.

    ``mode`` is ``"closed_form"`` (Gaussian pairs only), ``"quadrature"``, or
    ``"auto"`` (closed form when available). Returns ``math.inf`` when p has
    mass where q has none.
    """
    both_gaussian = p.family is Family.GAUSSIAN and q.family is Family.GAUSSIAN
    if mode == CLOSED_FORM and not both_gaussian:
        raise ConfigError("closed-form KL is only available for Gaussian pairs")
    if mode not in (AUTO, CLOSED_FORM, QUADRATURE):
        raise ConfigError(f"unknown KL mode {mode!r}")
    if not _support_contained(p, q):
        return math.inf
    if both_gaussian and mode != QUADRATURE:
        val = kl_gaussian(*p.params, *q.params)
    else:
        val = _kl_quadrature(p, q)
    if not np.isfinite(val):
        return math.inf
    return max(0.0, val)
