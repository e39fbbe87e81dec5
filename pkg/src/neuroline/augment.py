"""GAN augmentation of 1-D likelihood samples.

Generator 8 -> 16 -> 16 -> 1 and discriminator 1 -> 16 -> 16 -> 1 (logistic
output), leaky-ReLU hidden layers, trained by alternating Adam steps. The
generator loss is the non-saturating cross-entropy, optionally plus a
penalty matching five shape statistics of the generated batch to the real
sample:

    lambda * sum_k ((stat_k(fake) - stat_k(real)) / max(IQR_real, eps))²

Median and IQR gradients flow through the batch's sort permutation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.stats import binomtest

from neuroline._backend import kernels
from neuroline.errors import ConfigError, DataError, SizeError, TrainingAborted
from neuroline.stats import STAT_NAMES, ShapeStats, shape_stats

CROSS_ENTROPY = "cross_entropy"
STAT_MATCHED = "stat_matched"
LOSS_MODES = (CROSS_ENTROPY, STAT_MATCHED)
EPS = 1e-9
_P_MIN = np.finfo(np.float64).tiny
_P_MAX = np.nextafter(1.0, 0.0)


@dataclass
class MlpNet:
    """Dense net ``out_shift + out_scale * f((x - in_shift) / in_scale)``.

    ``weights[l]`` has shape ``(n_in, n_out)``. The final layer is linear;
    a discriminator applies the logistic function on top (see
    :meth:`probability`).
    """

    weights: list
    biases: list
    slope: float = 0.2
    in_shift: float = 0.0
    in_scale: float = 1.0
    out_shift: float = 0.0
    out_scale: float = 1.0
    theta: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        # one flat parameter vector [W0, W1, ..., b0, b1, ...]; weights/biases are views into it
        parts = [np.asarray(p, dtype=np.float64) for p in list(self.weights) + list(self.biases)]
        self.theta = np.concatenate([p.ravel() for p in parts]) if self.theta is None else self.theta
        views, offset = [], 0
        for p in parts:
            views.append(self.theta[offset:offset + p.size].reshape(p.shape))
            offset += p.size
        n = len(self.weights)
        self.weights, self.biases = views[:n], views[n:]

    @property
    def sizes(self):
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def params(self):
        return self.weights + self.biases

    def copy(self):
        return replace(self, weights=[w.copy() for w in self.weights],
                       biases=[b.copy() for b in self.biases], theta=None)

    @staticmethod
    def flatten(dWs, dbs):
        return np.concatenate([g.ravel() for g in list(dWs) + list(dbs)])

    def forward_cache(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        xin = np.ascontiguousarray((x - self.in_shift) / self.in_scale)
        acts, pres = kernels.mlp_forward(self.weights, self.biases, xin, self.slope)
        return acts, pres

    def __call__(self, x):
        acts, _ = self.forward_cache(x)
        return self.out_shift + self.out_scale * acts[-1][:, 0]

    def logit(self, x):
        acts, _ = self.forward_cache(x)
        return acts[-1][:, 0]

    def probability(self, x):
        # doubles round the logistic to exactly 0 or 1 beyond |logit| ~ 37; keep it open
        return np.clip(_sigmoid(self.logit(x)), _P_MIN, _P_MAX)

    def backward(self, acts, pres, d_out, need_dx=True):
        """Gradients given ``d_out`` = dLoss/d(final-layer output), shape (B,).

        Returns ``(dWs, dbs, dx)``; ``dx`` (w.r.t. the raw input) is None
        unless ``need_dx``.
        """
        dz = np.ascontiguousarray(np.asarray(d_out, dtype=np.float64).reshape(-1, 1))
        dWs, dbs, dx = kernels.mlp_backward(self.weights, acts, pres, dz, self.slope, need_dx)
        return list(dWs), list(dbs), None if dx is None else np.asarray(dx)[:, 0] / self.in_scale

    def to_dict(self):
        return {
            "sizes": list(self.sizes),
            "slope": self.slope,
            "in_shift": self.in_shift,
            "in_scale": self.in_scale,
            "out_shift": self.out_shift,
            "out_scale": self.out_scale,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([np.ascontiguousarray(w, dtype=np.float64) for w in d["weights"]],
                   [np.ascontiguousarray(b, dtype=np.float64) for b in d["biases"]],
                   float(d["slope"]), float(d["in_shift"]), float(d["in_scale"]),
                   float(d["out_shift"]), float(d["out_scale"]))


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def _softplus(t):
    return np.logaddexp(0.0, t)


def init_mlp(sizes, rng, zero_last=False, slope=0.2):
    """Glorot-uniform weights, zero biases; ``zero_last`` zeroes the output layer."""
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = math.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_in, n_out))
        if zero_last and i == len(sizes) - 2:
            w = np.zeros((n_in, n_out))
        weights.append(np.ascontiguousarray(w))
        biases.append(np.zeros(n_out))
    return MlpNet(weights, biases, slope)


def zero_mlp(sizes, slope=0.2):
    return MlpNet([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                  [np.zeros(b) for b in sizes[1:]], slope)


# ---------------------------------------------------------------------------
# statistic penalty

def stats_with_grad(y):
    """The five shape statistics of ``y`` and their Jacobian, shape (5, n)."""
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    order = np.argsort(y, kind="mergesort")
    ys = y[order]
    jac = np.zeros((5, n))

    def quantile(q, row, sign):
        pos = q * (n - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, n - 1)
        frac = pos - lo
        jac[row, order[lo]] += sign * (1.0 - frac)
        jac[row, order[hi]] += sign * frac
        return (1.0 - frac) * ys[lo] + frac * ys[hi]

    median = quantile(0.5, 0, 1.0)
    q3 = quantile(0.75, 1, 1.0)
    q1 = quantile(0.25, 1, -1.0)

    d = np.zeros_like(y) if ys[0] == ys[-1] else y - np.mean(y)
    sgn = np.sign(d)
    mad = float(np.mean(np.abs(d)))
    jac[2] = (sgn - np.mean(sgn)) / n

    m2 = float(np.mean(d ** 2))
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    dm2 = 2.0 * d / n
    dm3 = 3.0 * (d ** 2 - m2) / n
    dm4 = 4.0 * (d ** 3 - m3) / n
    if m2 > 0:
        skew = m3 / m2 ** 1.5
        kurt = m4 / m2 ** 2 - 3.0
        jac[3] = dm3 / m2 ** 1.5 - 1.5 * m3 / m2 ** 2.5 * dm2
        jac[4] = dm4 / m2 ** 2 - 2.0 * m4 / m2 ** 3 * dm2
    else:
        skew = kurt = 0.0
    return np.array([median, q3 - q1, mad, skew, kurt]), jac


def stat_penalty(y, real_stats, scale, lam):
    vals, jac = stats_with_grad(y)
    resid = (vals - real_stats) / scale
    loss = lam * float(np.sum(resid ** 2))
    grad = lam * 2.0 * (resid / scale) @ jac
    return loss, grad


# ---------------------------------------------------------------------------
# losses with analytic gradients

def discriminator_loss(disc, x_real, x_fake):
    """Binary cross-entropy of ``disc`` on a real and a fake batch.

    Returns ``(loss, dWs, dbs)``.
    """
    acts_r, pres_r = disc.forward_cache(x_real)
    acts_f, pres_f = disc.forward_cache(x_fake)
    lr = acts_r[-1][:, 0]
    lf = acts_f[-1][:, 0]
    loss = float(np.mean(_softplus(-lr)) + np.mean(_softplus(lf)))
    dWr, dbr, _ = disc.backward(acts_r, pres_r, -_sigmoid(-lr) / lr.shape[0], need_dx=False)
    dWf, dbf, _ = disc.backward(acts_f, pres_f, _sigmoid(lf) / lf.shape[0], need_dx=False)
    return loss, [a + b for a, b in zip(dWr, dWf)], [a + b for a, b in zip(dbr, dbf)]


def generator_loss(gen, disc, z, mode=CROSS_ENTROPY, real_stats=None, scale=1.0, lam=1.0):
    """Non-saturating generator loss (plus the statistic penalty in stat mode).

    Returns ``(loss, dWs, dbs, penalty)``.
    """
    g_acts, g_pres = gen.forward_cache(z)
    y = gen.out_shift + gen.out_scale * g_acts[-1][:, 0]
    d_acts, d_pres = disc.forward_cache(y)
    lf = d_acts[-1][:, 0]
    loss = float(np.mean(_softplus(-lf)))
    _, _, dy = disc.backward(d_acts, d_pres, -_sigmoid(-lf) / lf.shape[0])
    penalty = 0.0
    if mode == STAT_MATCHED:
        penalty, dpen = stat_penalty(y, real_stats, scale, lam)
        loss += penalty
        dy = dy + dpen
    elif mode != CROSS_ENTROPY:
        raise ConfigError(f"unknown loss mode {mode!r}")
    dWs, dbs, _ = gen.backward(g_acts, g_pres, dy * gen.out_scale, need_dx=False)
    return loss, dWs, dbs, penalty


# ---------------------------------------------------------------------------
# training

class Adam:
    """Adam over a flat parameter vector, updated in place."""

    def __init__(self, theta, lr=1e-3, beta1=0.5, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros_like(theta)
        self.v = np.zeros_like(theta)
        self.t = 0

    def step(self, theta, grad):
        self.t += 1
        kernels.adam_step(theta, grad, self.m, self.v, self.lr, self.beta1, self.beta2, self.eps, self.t)


@dataclass(frozen=True)
class GanConfig:
    epochs: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    loss_mode: str = CROSS_ENTROPY
    lambda_stat: float = 1.0
    latent_dim: int = 8
    hidden: int = 16
    n_eval: int = 1000

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.n_eval < 4:
            raise ConfigError("epochs >= 0, batch_size >= 1 and n_eval >= 4 required")
        if self.lambda_stat < 0 or not self.learning_rate > 0:
            raise ConfigError("lambda_stat >= 0 and learning_rate > 0 required")


@dataclass
class AugmentReport:
    loss_mode: str
    epochs: int
    seed: int
    real_stats: ShapeStats
    synth_stats: ShapeStats
    gaps: dict
    normalized_gaps: dict
    d_loss: list
    g_loss: list
    penalty: list = field(default_factory=list)

    @property
    def total_normalized_gap(self):
        return float(sum(self.normalized_gaps.values()))

    def to_dict(self):
        return {
            "synthetic": True,
            "loss_mode": self.loss_mode,
            "epochs": self.epochs,
            "seed": self.seed,
            "real_stats": self.real_stats.to_dict(),
            "synth_stats": self.synth_stats.to_dict(),
            "gaps": self.gaps,
            "normalized_gaps": self.normalized_gaps,
            "total_normalized_gap": self.total_normalized_gap,
            "d_loss": self.d_loss,
            "g_loss": self.g_loss,
            "penalty": self.penalty,
        }


class TrainedGan(NamedTuple):
    generator: MlpNet
    discriminator: MlpNet
    report: AugmentReport


def generate(gen, n, seed=0, latent_dim=None):
    """``n`` generator outputs from seeded standard-normal latents."""
    if n <= 0:
        raise SizeError(f"n must be positive, got {n}")
    latent_dim = latent_dim or gen.sizes[0]
    z = np.random.default_rng(seed).standard_normal((n, latent_dim))
    return gen(z)


def _report(cfg, gen, real_stats, scale, d_curve, g_curve, p_curve):
    synth = generate(gen, cfg.n_eval, seed=cfg.seed + 1_000_003)
    synth_stats = shape_stats(synth)
    gaps = {k: abs(getattr(synth_stats, k) - getattr(real_stats, k)) for k in STAT_NAMES}
    return AugmentReport(cfg.loss_mode, cfg.epochs, cfg.seed, real_stats, synth_stats, gaps,
                         {k: v / scale for k, v in gaps.items()}, d_curve, g_curve, p_curve)


def train_gan(real_values, config=GanConfig()):
    """Train a generator/discriminator pair on ``real_values``.

    One epoch is a shuffled pass over the real sample in minibatches; each
    minibatch does one discriminator step then one generator step. The
    generator's output layer starts at zero, so an untrained generator
    emits the real mean for every latent.

    Raises
    ------
    TrainingAborted
        A loss became non-finite; ``exc.checkpoint`` is the last good
        :class:`TrainedGan`.
    """
    cfg = config
    real = np.asarray(real_values, dtype=np.float64).ravel()
    if real.size < 16:
        raise SizeError(f"GAN training needs at least 16 real values, got {real.size}")
    if not np.all(np.isfinite(real)):
        raise DataError("real values must be finite")
    real_stats = shape_stats(real)
    stats_vec = real_stats.as_array()
    scale = max(real_stats.iqr, EPS)
    mu = float(np.mean(real))
    sd = float(np.std(real)) or 1.0

    rng = np.random.default_rng(cfg.seed)
    gen = init_mlp((cfg.latent_dim, cfg.hidden, cfg.hidden, 1), rng, zero_last=True)
    disc = init_mlp((1, cfg.hidden, cfg.hidden, 1), rng)
    gen.out_shift, gen.out_scale = mu, sd
    disc.in_shift, disc.in_scale = mu, sd
    opt_g = Adam(gen.theta, lr=cfg.learning_rate)
    opt_d = Adam(disc.theta, lr=cfg.learning_rate)

    n = real.size
    n_batches = math.ceil(n / cfg.batch_size)
    d_curve, g_curve, p_curve = [], [], []
    good = (gen.copy(), disc.copy())
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        d_sum = g_sum = p_sum = 0.0
        for b in range(n_batches):
            xr = real[perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            xf = gen(rng.standard_normal((xr.shape[0], cfg.latent_dim)))
            d_loss, dW, db = discriminator_loss(disc, xr, xf)
            opt_d.step(disc.theta, MlpNet.flatten(dW, db))
            z = rng.standard_normal((cfg.batch_size, cfg.latent_dim))
            g_loss, gW, gb, pen = generator_loss(gen, disc, z, cfg.loss_mode, stats_vec, scale, cfg.lambda_stat)
            opt_g.step(gen.theta, MlpNet.flatten(gW, gb))
            d_sum += d_loss
            g_sum += g_loss
            p_sum += pen
        if not (math.isfinite(d_sum) and math.isfinite(g_sum)) or not (
                np.all(np.isfinite(gen.theta)) and np.all(np.isfinite(disc.theta))):
            g_good, d_good = good
            partial = replace(cfg, epochs=epoch)
            checkpoint = TrainedGan(g_good, d_good,
                                    _report(partial, g_good, real_stats, scale, d_curve, g_curve, p_curve))
            raise TrainingAborted(f"non-finite loss at epoch {epoch}", checkpoint)
        d_curve.append(d_sum / n_batches)
        g_curve.append(g_sum / n_batches)
        p_curve.append(p_sum / n_batches)
        good = (gen.copy(), disc.copy())
    return TrainedGan(gen, disc, _report(cfg, gen, real_stats, scale, d_curve, g_curve, p_curve))


def compare_losses(real_values, config_base=GanConfig(), config_other=None):
    """Train both loss modes with the same seed and epochs.

    Returns ``(cross_entropy_result, stat_matched_result)``.
    """
    if config_other is not None and (config_other.epochs != config_base.epochs
                                     or config_other.seed != config_base.seed):
        raise ConfigError("loss comparison requires identical epochs and seed for both modes")
    ce = train_gan(real_values, replace(config_base, loss_mode=CROSS_ENTROPY))
    st = train_gan(real_values, replace(config_other or config_base, loss_mode=STAT_MATCHED))
    return ce, st


class SignTest(NamedTuple):
    wins: int
    n: int
    p_value: float
    pairs: list  # (seed, ce_total_gap, stat_total_gap)


def loss_sign_test(real_values, config_base, seeds):
    """One-sided sign test that stat matching closes the statistic gap at least as well."""
    pairs = []
    for seed in seeds:
        ce, st = compare_losses(real_values, replace(config_base, seed=int(seed)))
        pairs.append((int(seed), ce.report.total_normalized_gap, st.report.total_normalized_gap))
    wins = sum(1 for _, ce_gap, st_gap in pairs if st_gap <= ce_gap)
    p = binomtest(wins, len(pairs), 0.5, alternative="greater").pvalue
    return SignTest(wins, len(pairs), float(p), pairs)
