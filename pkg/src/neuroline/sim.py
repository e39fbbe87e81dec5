"""Closed-loop simulation: a synthetic user and 1-D wheelchair kinematics.

A :class:`SyntheticUser` emits power frames whose selected feature is drawn
from the likelihood of the currently scheduled intent (idle periods and all
other features come from the idle Gaussian). The decoder's velocity
increments drive a damped, speed-capped integrator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from neuroline._backend import kernels
from neuroline.calibration import STATES, Trial, TrialSet, UserProfile, screen_user
from neuroline.decoder import DecoderConfig, decode_stream
from neuroline.errors import ConfigError
from neuroline.intent import Intent
from neuroline.signal import FRAME_PERIOD_MS, N_FEATURES, FeatureKey, IdleBaseline, PowerFrame
from neuroline.stats import Distribution, Family

DEFAULT_FEATURE = FeatureKey.parse("FC6.Alpha")


@dataclass(frozen=True)
class SimConfig:
    v_max_mps: float = 4.17
    damping_gamma: float = 0.5
    dt_ms: int = FRAME_PERIOD_MS
    duration_ms: int = 60_000

    def __post_init__(self):
        if not (self.v_max_mps > 0 and self.damping_gamma > 0 and self.dt_ms > 0 and self.duration_ms > 0):
            raise ConfigError("v_max_mps, damping_gamma, dt_ms and duration_ms must be positive")
        if FRAME_PERIOD_MS % self.dt_ms:
            raise ConfigError(f"dt_ms must divide the {FRAME_PERIOD_MS} ms frame period, got {self.dt_ms}")
        if self.damping_gamma * self.dt_s > 1.0:
            raise ConfigError("damping_gamma * dt must not exceed 1")

    @property
    def dt_s(self):
        return self.dt_ms / 1000.0

    @property
    def factor(self):
        """Per-step velocity retention ``1 - gamma * dt``."""
        return 1.0 - self.damping_gamma * self.dt_s


@dataclass(frozen=True)
class WheelchairState:
    position_m: float = 0.0
    velocity_mps: float = 0.0
    t_ms: int = 0


def step(state, delta_v, cfg=SimConfig()):
    """Advance one ``dt``: damp, add the increment, clamp to ``[0, v_max]``, integrate."""
    v = cfg.factor * state.velocity_mps + float(delta_v)
    if v < 0.0:
        v = 0.0
    elif v > cfg.v_max_mps:
        v = cfg.v_max_mps
    return WheelchairState(state.position_m + v * cfg.dt_s, v, state.t_ms + cfg.dt_ms)


def rollout(delta_vs, cfg=SimConfig(), initial=WheelchairState()):
    """Apply one increment per step; returns ``(t_ms, position, velocity)`` arrays."""
    dv = np.ascontiguousarray(delta_vs, dtype=np.float64)
    v, x = kernels.damped_rollout(float(initial.velocity_mps), float(initial.position_m), dv,
                                  cfg.factor, float(cfg.v_max_mps), cfg.dt_s)
    t = initial.t_ms + cfg.dt_ms * np.arange(1, dv.size + 1, dtype=np.int64)
    return t, np.asarray(x), np.asarray(v)


@dataclass(frozen=True)
class SyntheticUser:
    """Generative model of a user: per-state likelihoods plus an intent schedule.

    ``intent_schedule`` is a sequence of ``(t_start_ms, state)``; each state
    holds until the next entry, and the time before the first entry is idle.
    """

    like_speedup: Distribution
    like_slowdown: Distribution
    idle_mean: float
    idle_sd: float
    intent_schedule: tuple = ((0, Intent.IDLE),)
    seed: int = 0
    feature: FeatureKey = DEFAULT_FEATURE

    def __post_init__(self):
        sched = tuple((int(t), Intent.parse(s)) for t, s in self.intent_schedule)
        object.__setattr__(self, "intent_schedule", sched)
        if not sched:
            raise ConfigError("intent schedule is empty")
        times = [t for t, _ in sched]
        if times[0] < 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("schedule times must be non-negative and strictly increasing")
        if not (math.isfinite(self.idle_mean) and self.idle_sd > 0):
            raise ConfigError("idle_mean must be finite and idle_sd > 0")
        for d in (self.like_speedup, self.like_slowdown):
            if not isinstance(d, Distribution):
                raise ConfigError("state likelihoods must be Distribution instances")

    def state_at(self, t_ms):
        state = Intent.IDLE
        for start, s in self.intent_schedule:
            if start > t_ms:
                break
            state = s
        return state

    def window_state(self, start_ms, end_ms):
        """Scheduled state over ``[start_ms, end_ms)``, or None if it changes inside."""
        if any(start_ms < t < end_ms for t, _ in self.intent_schedule):
            return None
        return self.state_at(start_ms)

    def distribution(self, state):
        state = Intent(state)
        if state is Intent.SPEED_UP:
            return self.like_speedup
        if state is Intent.SLOW_DOWN:
            return self.like_slowdown
        return Distribution.gaussian(self.idle_mean, self.idle_sd)


def _draw(rng, user, states):
    # idle background for all features, then the selected column from each state's law
    values = user.idle_mean + user.idle_sd * rng.standard_normal((len(states), N_FEATURES))
    states = np.asarray([s.value for s in states])
    col = user.feature.index
    for s in STATES:
        idx = np.flatnonzero(states == s.value)
        if idx.size:
            values[idx, col] = user.distribution(s).sample(rng, idx.size)
    np.maximum(values, 0.0, out=values)  # band power is non-negative
    return values


def _frames(timestamps, values):
    return [PowerFrame(int(t), row) for t, row in zip(timestamps, values)]


def emit_frames(user, duration_ms, frame_period_ms=FRAME_PERIOD_MS):
    """Frames on ``[0, duration_ms)`` at the frame rate, seeded by ``user.seed``."""
    if duration_ms < 0:
        raise ConfigError("duration_ms must be >= 0")
    ts = np.arange(0, int(duration_ms) // frame_period_ms, dtype=np.int64) * frame_period_ms
    rng = np.random.default_rng(user.seed)
    return _frames(ts, _draw(rng, user, [user.state_at(int(t)) for t in ts]))


def synthetic_trialset(user, n_per_label=10, trial_duration_ms=4000, relax_ms=10_000, rest_ms=2000,
                       frame_period_ms=FRAME_PERIOD_MS):
    """Calibration recording drawn from the same generative model.

    A relaxation block is followed by alternating speed-up/slow-down trials
    separated by rests. Uses a random stream independent of :func:`emit_frames`.
    """
    rng = np.random.default_rng([user.seed, 1])
    n_relax = relax_ms // frame_period_ms
    relax_ts = np.arange(n_relax, dtype=np.int64) * frame_period_ms
    relaxation = _frames(relax_ts, _draw(rng, user, [Intent.IDLE] * n_relax))
    n_trial = trial_duration_ms // frame_period_ms
    trials = []
    onset = relax_ms + rest_ms
    for i in range(2 * n_per_label):
        label = STATES[i % 2]
        ts = onset + np.arange(n_trial, dtype=np.int64) * frame_period_ms
        trials.append(Trial(label, int(onset), tuple(_frames(ts, _draw(rng, user, [label] * n_trial)))))
        onset += trial_duration_ms + rest_ms
    return TrialSet(tuple(trials), tuple(relaxation), trial_duration_ms)


def _window_law(dist, frames_per_window):
    if frames_per_window == 1:
        return dist
    if dist.family is Family.GAUSSIAN:
        mu, sd = dist.params
        return Distribution.gaussian(mu, sd / math.sqrt(frames_per_window))
    return None


def oracle_profile(user, window_ms=FRAME_PERIOD_MS, hop_ms=None, frame_period_ms=FRAME_PERIOD_MS):
    """Profile built from the user's true laws instead of calibration data.

    The likelihoods and idle baseline describe the window mean, which is
    available in closed form for one-frame windows or Gaussian states.
    """
    k = window_ms // frame_period_ms
    if k < 1 or window_ms % frame_period_ms:
        raise ConfigError("window_ms must be a positive multiple of the frame period")
    up, down = _window_law(user.like_speedup, k), _window_law(user.like_slowdown, k)
    if up is None or down is None:
        raise ConfigError("window-mean law is only known for one-frame windows or Gaussian states")
    idle = IdleBaseline(user.feature, float(user.idle_mean), user.idle_sd / math.sqrt(k), 8)
    return UserProfile(user.feature, 0, window_ms, up, down, idle, screen_user(up, down).kl_norm,
                       window_ms=window_ms, hop_ms=hop_ms or window_ms)


def bayes_optimal_accuracy(like_speedup, like_slowdown, p1=0.5):
    """Accuracy of the MAP rule when the laws are known exactly.

    Closed form ``Phi(|mu1 - mu2| / 2 sigma)`` for equal-variance Gaussians
    under a flat prior; otherwise ``integral of max(p1 f1, p2 f2)``.
    """
    p2 = 1.0 - p1
    if (p1 == 0.5 and like_speedup.family is Family.GAUSSIAN and like_slowdown.family is Family.GAUSSIAN
            and like_speedup.params[1] == like_slowdown.params[1]):
        (m1, s), (m2, _) = like_speedup.params, like_slowdown.params
        return float(ndtr(abs(m1 - m2) / (2.0 * s)))
    lo = min(like_speedup.ppf(1e-12), like_slowdown.ppf(1e-12))
    hi = max(like_speedup.ppf(1.0 - 1e-12), like_slowdown.ppf(1.0 - 1e-12))
    val, _ = integrate.quad(lambda x: max(p1 * like_speedup.pdf(x), p2 * like_slowdown.pdf(x)),
                            lo, hi, limit=500, points=[like_speedup.mean(), like_slowdown.mean()])
    return float(val)


class Trajectory(NamedTuple):
    t_ms: np.ndarray
    position_m: np.ndarray
    velocity_mps: np.ndarray


class ClosedLoopResult(NamedTuple):
    trajectory: Trajectory
    decisions: list
    metrics: dict


def decision_metrics(user, decisions):
    """Accuracy against the schedule over windows lying inside one active segment.

    An Idle decision on an active window counts as wrong.
    """
    n_active = correct = 0
    confidences = []
    for d in decisions:
        if d.state is not Intent.IDLE:
            confidences.append(d.confidence)
        truth = user.window_state(*d.window_ref)
        if truth is None or truth is Intent.IDLE:
            continue
        n_active += 1
        correct += d.state is truth
    n_idle = sum(1 for d in decisions if d.state is Intent.IDLE)
    return {
        "n_windows": len(decisions),
        "n_active_windows": n_active,
        "n_correct": correct,
        "accuracy": correct / n_active if n_active else None,
        "idle_decision_rate": n_idle / len(decisions) if decisions else None,
        "mean_confidence": float(np.mean(confidences)) if confidences else None,
    }


def run_closed_loop(user, profile, decoder_config=DecoderConfig(), sim_config=SimConfig(), v0=0.0):
    """Emit frames, decode them, and drive the wheelchair with the increments.

    Each decision's increment is applied at the step ending at the window's
    ``end_ms``.
    """
    frames = emit_frames(user, sim_config.duration_ms)
    decisions = decode_stream(frames, profile, decoder_config)
    n_steps = sim_config.duration_ms // sim_config.dt_ms
    dv = np.zeros(n_steps)
    for d in decisions:
        i = d.window_ref[1] // sim_config.dt_ms - 1
        if 0 <= i < n_steps:
            dv[i] += d.delta_v
    t, x, v = rollout(dv, sim_config, WheelchairState(0.0, float(v0), 0))
    metrics = decision_metrics(user, decisions)
    k = decoder_config.window_ms // FRAME_PERIOD_MS
    up, down = _window_law(user.like_speedup, k), _window_law(user.like_slowdown, k)
    optimum: Optional[float] = None
    if up is not None and down is not None:
        optimum = bayes_optimal_accuracy(up, down, decoder_config.prior.p1)
    metrics.update({
        "bayes_optimal_accuracy": optimum,
        "final_velocity_mps": float(v[-1]) if v.size else float(v0),
        "max_velocity_mps": float(v.max()) if v.size else float(v0),
        "mean_velocity_mps": float(v.mean()) if v.size else float(v0),
        "distance_m": float(x[-1]) if x.size else 0.0,
    })
    return ClosedLoopResult(Trajectory(t, x, v), decisions, metrics)
