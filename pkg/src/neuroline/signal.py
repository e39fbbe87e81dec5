"""EEG band-power observations, windowing and idle/active gating.

A :class:`PowerFrame` is one 8 Hz snapshot of the 70 band-power features
(14 channels x 5 bands, channel-major). Windows average frames over
``[start, end)``; the idle gate z-scores a window against a relaxation
baseline.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from neuroline.errors import BaselineError, ConfigError, DataError, LengthError

CHANNELS = ("AF3", "F7", "F3", "FC5", "T7", "P7", "O1", "O2", "P8", "T8", "FC6", "F4", "F8", "AF4")
FRAME_PERIOD_MS = 125


class Band(Enum):
    THETA = ("theta", 4.0, 8.0)
    ALPHA = ("alpha", 8.0, 12.0)
    LOW_BETA = ("low_beta", 12.0, 16.0)
    HIGH_BETA = ("high_beta", 16.0, 25.0)
    GAMMA = ("gamma", 25.0, 45.0)

    @property
    def label(self):
        return self.value[0]

    @property
    def low(self):
        return self.value[1]

    @property
    def high(self):
        return self.value[2]

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower().replace(" ", "_").replace("-", "_")
        key = {"lowbeta": "low_beta", "highbeta": "high_beta", "betal": "low_beta", "betah": "high_beta"}.get(key, key)
        for band in cls:
            if band.label == key:
                return band
        raise ConfigError(f"unknown band {text!r}")


BANDS = tuple(Band)
N_FEATURES = len(CHANNELS) * len(BANDS)

_BAND_TITLES = {
    Band.THETA: "Theta",
    Band.ALPHA: "Alpha",
    Band.LOW_BETA: "BetaL",
    Band.HIGH_BETA: "BetaH",
    Band.GAMMA: "Gamma",
}


@dataclass(frozen=True)
class FeatureKey:
    """One of the 70 (channel, band) feature dimensions."""

    channel: str
    band: Band

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ConfigError(f"unknown channel {self.channel!r}")
        if not isinstance(self.band, Band):
            raise ConfigError(f"band must be a Band, got {self.band!r}")

    @property
    def index(self):
        return CHANNELS.index(self.channel) * len(BANDS) + BANDS.index(self.band)

    @classmethod
    def from_index(cls, index):
        if not 0 <= index < N_FEATURES:
            raise ConfigError(f"feature index {index} out of range")
        ch, b = divmod(int(index), len(BANDS))
        return cls(CHANNELS[ch], BANDS[b])

    @property
    def label(self):
        return f"{self.channel}.{_BAND_TITLES[self.band]}"

    @classmethod
    def parse(cls, text):
        """Parse ``"FC6.Alpha"`` (an optional ``POW.`` prefix is accepted)."""
        parts = str(text).split(".")
        if parts and parts[0].upper() == "POW":
            parts = parts[1:]
        if len(parts) != 2:
            raise ConfigError(f"feature key must look like 'FC6.Alpha', got {text!r}")
        channel, band = parts
        for b, title in _BAND_TITLES.items():
            if band.lower() == title.lower():
                return cls(channel.upper(), b)
        return cls(channel.upper(), Band.parse(band))

    def __str__(self):
        return self.label


ALL_FEATURES = tuple(FeatureKey.from_index(i) for i in range(N_FEATURES))


def _frozen_array(values, length=None, what="values"):
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1 or (length is not None and arr.shape[0] != length):
        raise DataError(f"{what} must be a flat sequence of {length} reals")
    arr.setflags(write=False)
    return arr


class PowerFrame:
    """Timestamped 70-dimensional band-power observation (immutable)."""

    __slots__ = ("timestamp_ms", "values")

    def __init__(self, timestamp_ms, values):
        if isinstance(timestamp_ms, bool) or int(timestamp_ms) != timestamp_ms:
            raise DataError(f"timestamp must be integer milliseconds, got {timestamp_ms!r}")
        arr = _frozen_array(values, N_FEATURES, "power values")
        if not np.all(np.isfinite(arr)):
            raise DataError("power values must be finite")
        if np.any(arr < 0):
            raise DataError("power values must be non-negative")
        object.__setattr__(self, "timestamp_ms", int(timestamp_ms))
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("PowerFrame is immutable")

    def value(self, key):
        return float(self.values[key.index])

    def __eq__(self, other):
        if not isinstance(other, PowerFrame):
            return NotImplemented
        return self.timestamp_ms == other.timestamp_ms and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.timestamp_ms, self.values.tobytes()))

    def __repr__(self):
        return f"PowerFrame(t={self.timestamp_ms}ms)"


@dataclass(frozen=True, eq=False)
class Window:
    """Average of the frames with timestamps in ``[start_ms, end_ms)``.

    ``partial`` marks a trailing window that runs past the end of the stream.
    """

    start_ms: int
    end_ms: int
    mean_power: np.ndarray
    n_frames: int
    partial: bool = False

    def value(self, key):
        return float(self.mean_power[key.index])

    def __eq__(self, other):
        if not isinstance(other, Window):
            return NotImplemented
        return (
            (self.start_ms, self.end_ms, self.n_frames, self.partial)
            == (other.start_ms, other.end_ms, other.n_frames, other.partial)
            and np.array_equal(self.mean_power, other.mean_power)
        )


# ---------------------------------------------------------------------------
# band power

def periodogram(raw, sample_rate_hz):
    """One-sided Hann-tapered power spectral density.

    Returns ``(freqs, psd)`` with ``psd`` in units of signal²/Hz.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("raw samples must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise DataError("raw samples must be finite")
    n = x.shape[0]
    taper = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    fx = np.fft.rfft(x * taper)
    psd = (fx.real ** 2 + fx.imag ** 2) / (sample_rate_hz * np.sum(taper ** 2))
    if n % 2 == 0:
        psd[1:-1] *= 2.0
    else:
        psd[1:] *= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate_hz)
    return freqs, psd


def band_mask(freqs, band):
    return (freqs >= band.low) & (freqs < band.high)


def _check_band_input(raw, sample_rate_hz):
    if sample_rate_hz < 2 * BANDS[-1].high:
        raise ConfigError(f"sample rate {sample_rate_hz} Hz is below 2 x {BANDS[-1].high} Hz")
    n = len(raw)
    min_len = 2.0 * sample_rate_hz / BANDS[0].low
    if n < min_len:
        raise LengthError(f"need at least {math.ceil(min_len)} samples at {sample_rate_hz} Hz, got {n}")


def band_power(raw_samples, sample_rate_hz, band):
    """Mean periodogram power over the bins with ``low <= f < high``."""
    _check_band_input(raw_samples, sample_rate_hz)
    freqs, psd = periodogram(raw_samples, sample_rate_hz)
    return float(np.mean(psd[band_mask(freqs, band)]))


def band_powers(raw_samples, sample_rate_hz):
    """All five band powers of one channel, keyed by :class:`Band`."""
    _check_band_input(raw_samples, sample_rate_hz)
    freqs, psd = periodogram(raw_samples, sample_rate_hz)
    return {band: float(np.mean(psd[band_mask(freqs, band)])) for band in BANDS}


def frame_from_raw(timestamp_ms, raw, sample_rate_hz):
    """Build a PowerFrame from a ``(14, n_samples)`` raw EEG block."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] != len(CHANNELS):
        raise DataError(f"raw block must have shape (14, n), got {raw.shape}")
    values = []
    for row in raw:
        powers = band_powers(row, sample_rate_hz)
        values.extend(powers[b] for b in BANDS)
    return PowerFrame(timestamp_ms, values)


# ---------------------------------------------------------------------------
# windowing

class WindowStream:
    """Incremental sliding-window averager with bounded memory.

    Frames are pushed in timestamp order; a window is emitted as soon as a
    frame at or past its end arrives. :meth:`flush` emits the trailing
    windows, flagging those that run past the end of the stream.
    """

    def __init__(self, window_ms=1000, hop_ms=500, frame_period_ms=FRAME_PERIOD_MS,
                 start_ms=None, end_ms=None):
        if hop_ms <= 0 or window_ms <= 0:
            raise ConfigError("window_ms and hop_ms must be positive")
        if hop_ms > window_ms:
            raise ConfigError("hop_ms must not exceed window_ms")
        self.window_ms = int(window_ms)
        self.hop_ms = int(hop_ms)
        self.frame_period_ms = int(frame_period_ms)
        self.end_ms = end_ms
        self._next_start = start_ms
        self._buffer = deque()
        self._last_ts = None

    def push(self, frame):
        ts = frame.timestamp_ms
        if self._last_ts is not None and ts <= self._last_ts:
            raise DataError(f"timestamps must be strictly increasing ({ts} after {self._last_ts})")
        self._last_ts = ts
        if self._next_start is None:
            self._next_start = ts
        if ts < self._next_start:
            return []
        if self.end_ms is not None and ts >= self.end_ms:
            return []
        out = []
        while ts >= self._next_start + self.window_ms:
            win = self._emit(self._next_start, partial=False)
            if win is not None:
                out.append(win)
            self._advance()
        self._buffer.append(frame)
        return out

    def flush(self):
        out = []
        if self._last_ts is None or self._next_start is None:
            return out
        stream_end = self.end_ms if self.end_ms is not None else self._last_ts + self.frame_period_ms
        while self._buffer:
            start = self._next_start
            win = self._emit(start, partial=start + self.window_ms > stream_end)
            if win is not None:
                out.append(win)
            self._advance()
        return out

    def _emit(self, start, partial):
        end = start + self.window_ms
        members = [f.values for f in self._buffer if start <= f.timestamp_ms < end]
        if not members:
            return None
        mean = np.mean(np.stack(members), axis=0)
        mean.setflags(write=False)
        return Window(start, end, mean, len(members), partial)

    def _advance(self):
        self._next_start += self.hop_ms
        while self._buffer and self._buffer[0].timestamp_ms < self._next_start:
            self._buffer.popleft()


def slide_windows(frames: Sequence[PowerFrame], window_ms=1000, hop_ms=500,
                  frame_period_ms=FRAME_PERIOD_MS, start_ms=None, end_ms=None):
    """Average frames over sliding windows starting at the first timestamp.

    Windows with no frames are omitted; trailing windows extending past the
    stream end (last timestamp + one frame period, or ``end_ms``) are
    returned with ``partial=True``.
    """
    stream = WindowStream(window_ms, hop_ms, frame_period_ms, start_ms, end_ms)
    out = []
    for frame in frames:
        out.extend(stream.push(frame))
    out.extend(stream.flush())
    return out


# ---------------------------------------------------------------------------
# idle gate

@dataclass(frozen=True)
class IdleBaseline:
    """Relaxation-state statistics of one feature, over window means."""

    key: FeatureKey
    mean: float
    sd: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)):
            raise BaselineError("baseline mean and sd must be finite")
        if not self.sd > 0:
            raise BaselineError(f"baseline sd must be > 0, got {self.sd}")
        if self.n < 8:
            raise BaselineError(f"baseline needs at least 8 samples, got {self.n}")


def baseline_from_windows(windows: Iterable[Window], key: FeatureKey):
    """Idle baseline from full relaxation windows (sample sd)."""
    values = np.array([w.value(key) for w in windows if not w.partial])
    if values.size < 8:
        raise BaselineError(f"relaxation recording yields {values.size} full windows, need 8")
    sd = float(np.std(values, ddof=1))
    if not sd > 0:
        raise BaselineError("relaxation data has zero variance")
    return IdleBaseline(key, float(np.mean(values)), sd, int(values.size))


class GateState(str, Enum):
    ACTIVE = "active"
    IDLE = "idle"


class GateResult(NamedTuple):
    state: GateState
    z: float


def idle_gate(window, key, baseline, z_threshold=2.0, two_sided=True):
    """Z-score a window's feature value against the idle baseline.

    ``window`` may be a :class:`Window` or a bare measurement. Two-sided mode
    flags ``|z| > z_threshold``; one-sided mode flags ``z > z_threshold``.
    """
    if not baseline.sd > 0:
        raise BaselineError(f"baseline sd must be > 0, got {baseline.sd}")
    value = window.value(key) if isinstance(window, Window) else float(window)
    z = (value - baseline.mean) / baseline.sd
    active = abs(z) > z_threshold if two_sided else z > z_threshold
    return GateResult(GateState.ACTIVE if active else GateState.IDLE, z)
