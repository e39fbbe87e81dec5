"""Bayesian MAP observer over the two intent hypotheses.

For a measurement ``a`` (window-mean power of the profile's feature) the
decision variable is the log posterior odds

    d(a) = log p(a | speed-up) - log p(a | slow-down) + log p1 / (1 - p1)

Its sign is the MAP decision and its magnitude the confidence, which scales
the velocity increment. Each window is decoded on its own; no state is
carried between windows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from neuroline.errors import ConfigError, NeurolineError, UndecidableError
from neuroline.intent import Intent
from neuroline.signal import FRAME_PERIOD_MS, GateState, Window, WindowStream, idle_gate

D_CLAMP = 50.0


@dataclass(frozen=True)
class Prior:
    p1: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p1 < 1.0:
            raise ConfigError(f"prior p1 must lie in (0, 1), got {self.p1}")

    @property
    def p2(self):
        return 1.0 - self.p1

    @property
    def log_ratio(self):
        return math.log(self.p1) - math.log1p(-self.p1)


FLAT = Prior()


@dataclass(frozen=True)
class DecoderConfig:
    gain_k: float = 0.05
    delta_v_max: float = 0.2
    z_threshold: float = 2.0
    two_sided_gate: bool = True
    prior: Prior = FLAT
    skip_partial_windows: bool = True
    window_ms: int = 1000
    hop_ms: int = 500
    frame_period_ms: int = FRAME_PERIOD_MS

    def __post_init__(self):
        if not self.gain_k > 0:
            raise ConfigError("gain_k must be > 0")
        if not self.delta_v_max > 0:
            raise ConfigError("delta_v_max must be > 0")
        if self.z_threshold < 0:
            raise ConfigError("z_threshold must be >= 0")
        if self.hop_ms <= 0 or self.window_ms <= 0 or self.hop_ms > self.window_ms:
            raise ConfigError("need 0 < hop_ms <= window_ms")


@dataclass(frozen=True)
class Decision:
    state: Intent
    log_odds_d: Optional[float]
    confidence: float
    delta_v: float
    window_ref: tuple
    measurement: float
    z: float = 0.0
    reason: str = ""
    saturated: bool = False

    def to_dict(self):
        return {
            "start_ms": self.window_ref[0],
            "end_ms": self.window_ref[1],
            "state": self.state.value,
            "d": self.log_odds_d,
            "confidence": self.confidence,
            "delta_v": self.delta_v,
            "measurement": self.measurement,
            "z": self.z,
            "reason": self.reason,
            "saturated": self.saturated,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(Intent(d["state"]), d["d"], float(d["confidence"]), float(d["delta_v"]),
                   (int(d["start_ms"]), int(d["end_ms"])), float(d["measurement"]), float(d["z"]),
                   d.get("reason", ""), bool(d.get("saturated", False)))


def log_likelihood_ratio(a, profile):
    """``log p(a | speed-up) - log p(a | slow-down)``; may be infinite."""
    l1 = profile.like_speedup.logpdf(a)
    l2 = profile.like_slowdown.logpdf(a)
    if l1 == -math.inf and l2 == -math.inf:
        raise UndecidableError(f"measurement {a} lies outside both likelihood supports")
    return l1 - l2


def log_posterior_odds(a, profile, prior=FLAT):
    """Decision variable d(a), computed in log space."""
    return log_likelihood_ratio(a, profile) + prior.log_ratio


def posterior_odds(a, profile, prior=FLAT):
    """``p(speed-up | a) / p(slow-down | a)``, via ``exp(d)`` (never a raw pdf ratio)."""
    d = log_posterior_odds(a, profile, prior)
    if d > 709.0:
        return math.inf
    return math.exp(d)


def velocity_increment(d, config):
    """``sign(d) * min(gain * |d|, delta_v_max)``."""
    if d == 0:
        return 0.0
    return math.copysign(min(config.gain_k * abs(d), config.delta_v_max), d)


def _idle(window_ref, value, z, reason):
    return Decision(Intent.IDLE, None, 0.0, 0.0, window_ref, value, z, reason)


def decide(window, profile, config=DecoderConfig()):
    """Gate, then MAP-decode one window."""
    key = profile.selected
    value = window.value(key)
    ref = (window.start_ms, window.end_ms)
    gate = idle_gate(value, key, profile.idle, config.z_threshold, config.two_sided_gate)
    if gate.state is GateState.IDLE:
        return _idle(ref, value, gate.z, "gate")
    try:
        d = log_posterior_odds(value, profile, config.prior)
    except UndecidableError:
        return _idle(ref, value, gate.z, "undecidable")
    saturated = abs(d) > D_CLAMP
    if saturated:
        d = math.copysign(D_CLAMP, d)
    if d == 0:
        return _idle(ref, value, gate.z, "tie")
    state = Intent.SPEED_UP if d > 0 else Intent.SLOW_DOWN
    return Decision(state, d, abs(d), velocity_increment(d, config), ref, value, gate.z, "", saturated)


class StreamDecoder:
    """Window-by-window decoder over an incoming frame stream."""

    def __init__(self, profile, config=DecoderConfig()):
        self.profile = profile
        self.config = config
        self._windows = WindowStream(config.window_ms, config.hop_ms, config.frame_period_ms)
        self.errors = []

    def push(self, frame):
        return self._decide_all(self._windows.push(frame))

    def flush(self):
        return self._decide_all(self._windows.flush())

    def _decide_all(self, windows):
        out = []
        for w in windows:
            if w.partial and self.config.skip_partial_windows:
                continue
            try:
                out.append(decide(w, self.profile, self.config))
            except NeurolineError as exc:
                self.errors.append(((w.start_ms, w.end_ms), str(exc)))
        return out


def decode_stream(frames, profile, config=DecoderConfig()):
    """Slide windows over ``frames`` and decide each one, in order."""
    dec = StreamDecoder(profile, config)
    out = []
    for frame in frames:
        out.extend(dec.push(frame))
    out.extend(dec.flush())
    return out


def decode_windows(windows, profile, config=DecoderConfig()):
    return [decide(w, profile, config) for w in windows
            if not (w.partial and config.skip_partial_windows)]


def with_prior(config, p1):
    return replace(config, prior=Prior(p1))
