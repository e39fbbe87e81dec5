"""Per-user calibration: from labeled trials to a :class:`UserProfile`.

Pipeline: segment each trial into onset-aligned windows, rank the
(feature, window) cells by Mann-Whitney effect size, pool the chosen
feature's window means over the analysis region, fit a likelihood per
state, screen the user by normalized symmetric KL, and take the idle
baseline from the relaxation recording.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from neuroline.errors import ConfigError, DataError, DegenerateError, NeurolineError, ScreeningError, SizeError
from neuroline.intent import Intent
from neuroline.signal import (
    FRAME_PERIOD_MS,
    N_FEATURES,
    FeatureKey,
    IdleBaseline,
    PowerFrame,
    baseline_from_windows,
    slide_windows,
)
from neuroline.stats import (
    Distribution,
    Family,
    TestResult,
    fit_family,
    kl_divergence,
    ks_statistic,
    mann_whitney_u,
    shapiro_wilk,
)

STATES = (Intent.SPEED_UP, Intent.SLOW_DOWN)


@dataclass(frozen=True)
class Trial:
    label: Intent
    onset_ms: int
    frames: tuple

    def __post_init__(self):
        object.__setattr__(self, "label", Intent(self.label))
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.label not in STATES:
            raise ConfigError(f"trial label must be speed_up or slow_down, got {self.label.value}")


@dataclass(frozen=True)
class TrialSet:
    trials: tuple
    relaxation: tuple
    trial_duration_ms: int = 4000

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))
        object.__setattr__(self, "relaxation", tuple(self.relaxation))

    def validate(self, min_per_label=5, min_relax_ms=8000, frame_period_ms=FRAME_PERIOD_MS):
        for state in STATES:
            count = sum(1 for t in self.trials if t.label is state)
            if count < min_per_label:
                raise SizeError(f"need at least {min_per_label} {state.value} trials, got {count}")
        if not self.relaxation:
            raise SizeError("relaxation recording is empty")
        span = self.relaxation[-1].timestamp_ms + frame_period_ms - self.relaxation[0].timestamp_ms
        if span < min_relax_ms:
            raise SizeError(f"relaxation recording spans {span} ms, need {min_relax_ms}")
        for i, t in enumerate(self.trials):
            if t.frames and not t.frames[0].timestamp_ms <= t.onset_ms <= t.frames[-1].timestamp_ms:
                raise DataError(f"trial {i}: onset {t.onset_ms} ms lies outside its recording")


@dataclass(frozen=True)
class CalibrationConfig:
    window_ms: int = 1000
    hop_ms: int = 500
    region_start_ms: int = 500
    alpha: float = 0.05
    exact_max_n: int = 12
    normality_alpha: float = 0.05
    kl_threshold: float = 0.2
    gaussian_ddof: int = 1
    min_per_label: int = 5
    frame_period_ms: int = FRAME_PERIOD_MS
    keep_samples: bool = True
    created_at: str = "1970-01-01T00:00:00Z"

    def hash(self):
        payload = asdict(self)
        payload.pop("created_at")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# segmentation

@dataclass(frozen=True)
class SegmentedTrial:
    """Onset-aligned windows of one trial; ``windows[i]`` starts at ``i * hop`` ms."""

    label: Intent
    onset_ms: int
    windows: dict  # window index -> mean power vector


class Segmentation(NamedTuple):
    trials: list
    warnings: list
    window_ms: int
    hop_ms: int
    trial_duration_ms: int


def segment_trials(trial_set, window_ms=1000, hop_ms=500, frame_period_ms=FRAME_PERIOD_MS):
    """Window every trial from its onset to ``onset + trial_duration_ms``.

    Only full windows are kept. A trial that yields no full window is
    skipped and noted in ``warnings``.
    """
    out, warnings = [], []
    duration = trial_set.trial_duration_ms
    for i, trial in enumerate(trial_set.trials):
        frames = [f for f in trial.frames if trial.onset_ms <= f.timestamp_ms < trial.onset_ms + duration]
        if not frames:
            warnings.append(f"trial {i} ({trial.label.value}): no frames after onset; skipped")
            continue
        end = min(trial.onset_ms + duration, frames[-1].timestamp_ms + frame_period_ms)
        windows = slide_windows(frames, window_ms, hop_ms, frame_period_ms, start_ms=trial.onset_ms, end_ms=end)
        full = {(w.start_ms - trial.onset_ms) // hop_ms: w.mean_power for w in windows if not w.partial}
        if not full:
            warnings.append(f"trial {i} ({trial.label.value}): shorter than one {window_ms} ms window; skipped")
            continue
        out.append(SegmentedTrial(trial.label, trial.onset_ms, full))
    return Segmentation(out, warnings, window_ms, hop_ms, duration)


def region_indices(seg, region_start_ms):
    """Window indices whose window lies inside ``[region_start_ms, trial_duration)``."""
    last = (seg.trial_duration_ms - seg.window_ms) // seg.hop_ms
    return [i for i in range(last + 1) if i * seg.hop_ms >= region_start_ms]


# ---------------------------------------------------------------------------
# feature selection

@dataclass(frozen=True)
class FeatureReport:
    key: FeatureKey
    window_index: int
    p_value: float
    effect_r: float
    u: float = float("nan")


@dataclass(frozen=True)
class FeatureSelection:
    report: tuple
    key: FeatureKey
    window_index: int
    region_start_ms: int
    region_end_ms: int
    n_tests: int


def _label_matrix(seg, label, index):
    rows = [t.windows[index] for t in seg.trials if t.label is label and index in t.windows]
    return np.array(rows) if rows else np.empty((0, N_FEATURES))


def select_feature(seg, region_start_ms=500, alpha=0.05, exact_max_n=12, min_per_label=5):
    """Rank (feature, window) cells by Mann-Whitney effect size.

    Cells with ``p < alpha`` enter the report, sorted by effect size
    (descending), then p-value, then channel-major feature order and window
    index. The top cell's feature is selected.

    Raises
    ------
    ScreeningError
        No cell reaches significance.
    """
    indices = region_indices(seg, region_start_ms)
    entries = []
    n_tests = 0
    for index in indices:
        up = _label_matrix(seg, Intent.SPEED_UP, index)
        down = _label_matrix(seg, Intent.SLOW_DOWN, index)
        if up.shape[0] < min_per_label or down.shape[0] < min_per_label:
            continue
        for f in range(N_FEATURES):
            n_tests += 1
            try:
                res, eff = mann_whitney_u(up[:, f], down[:, f], exact_max_n=exact_max_n)
            except DegenerateError:
                continue
            if res.p_value < alpha:
                entries.append(FeatureReport(FeatureKey.from_index(f), index, res.p_value, eff.r, res.statistic))
    if n_tests == 0:
        raise SizeError(f"no window in the analysis region has {min_per_label} windows per label")
    if not entries:
        raise ScreeningError(f"no feature reaches p < {alpha}; user not onboardable with current data")
    entries.sort(key=lambda e: (-e.effect_r, e.p_value, e.key.index, e.window_index))
    top = entries[0]
    return FeatureSelection(tuple(entries), top.key, top.window_index, int(region_start_ms),
                            int(seg.trial_duration_ms), n_tests)


def pooled_values(seg, key, region_start_ms):
    """Per-state window means of ``key`` pooled over region windows and trials."""
    indices = set(region_indices(seg, region_start_ms))
    out = {}
    for state in STATES:
        vals = [t.windows[i][key.index] for t in seg.trials if t.label is state
                for i in sorted(t.windows) if i in indices]
        out[state] = np.array(vals, dtype=np.float64)
    return out


# ---------------------------------------------------------------------------
# likelihood fitting and screening

class FamilyScore(NamedTuple):
    family: Family
    d: float
    p: float


@dataclass(frozen=True)
class StateFit:
    selected: Distribution
    normality: TestResult
    ranking: tuple  # FamilyScore, ascending KS distance
    unsupported: tuple = ()


def fit_state(values, normality_alpha=0.05, gaussian_ddof=1, min_n=8):
    values = np.asarray(values, dtype=np.float64)
    if values.size < min_n:
        raise SizeError(f"need at least {min_n} values per state, got {values.size}")
    if not np.var(values) > 0:
        raise DegenerateError("state values have zero variance")
    ranking, unsupported = [], []
    fits = {}
    for family in Family:
        fitted = fit_family(values, family, ddof=gaussian_ddof)
        if not fitted:
            unsupported.append(family)
            continue
        ks = ks_statistic(values, fitted, fitted=True)
        ranking.append(FamilyScore(family, ks.d, ks.p))
        fits[family] = fitted
    ranking.sort(key=lambda s: (s.d, list(Family).index(s.family)))
    normality = shapiro_wilk(values)
    if normality.p_value >= normality_alpha:
        selected = fits[Family.GAUSSIAN]
    else:
        selected = fits[ranking[0].family]
    return StateFit(selected, normality, tuple(ranking), tuple(unsupported))


def fit_likelihoods(values_speedup, values_slowdown, normality_alpha=0.05, gaussian_ddof=1):
    """Fit every family to each state, rank them by KS distance and pick one.

    A state whose Shapiro-Wilk test does not reject normality at
    ``normality_alpha`` gets its Gaussian fit; otherwise the KS-best family.
    """
    return (fit_state(values_speedup, normality_alpha, gaussian_ddof),
            fit_state(values_slowdown, normality_alpha, gaussian_ddof))


class ScreenResult(NamedTuple):
    kl_norm: float
    passed: bool
    kl_sym: float
    note: str = ""


_ONE_MINUS_EPS = math.nextafter(1.0, 0.0)


def screen_user(like_speedup, like_slowdown, threshold=0.2):
    """Normalized symmetric KL screening: ``1 - exp(-(KL(P||Q) + KL(Q||P)) / 2)``."""
    kl_sym = 0.5 * (kl_divergence(like_speedup, like_slowdown) + kl_divergence(like_slowdown, like_speedup))
    if math.isinf(kl_sym):
        return ScreenResult(_ONE_MINUS_EPS, True, kl_sym, "support mismatch: infinite divergence")
    kl_norm = min(-math.expm1(-kl_sym), _ONE_MINUS_EPS)
    return ScreenResult(kl_norm, kl_norm >= threshold, kl_sym, "")


# ---------------------------------------------------------------------------
# profile

@dataclass(frozen=True)
class UserProfile:
    selected: FeatureKey
    region_start_ms: int
    region_end_ms: int
    like_speedup: Distribution
    like_slowdown: Distribution
    idle: IdleBaseline
    kl_norm: float
    window_ms: int = 1000
    hop_ms: int = 500
    created_at: str = "1970-01-01T00:00:00Z"
    config_hash: str = ""
    samples: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        if not 0.0 <= self.kl_norm < 1.0:
            raise ConfigError(f"kl_norm must lie in [0, 1), got {self.kl_norm}")

    def likelihood(self, state):
        return self.like_speedup if Intent(state) is Intent.SPEED_UP else self.like_slowdown

    def to_dict(self):
        return {
            "selected": self.selected.label,
            "region_ms": [self.region_start_ms, self.region_end_ms],
            "like_speedup": self.like_speedup.to_dict(),
            "like_slowdown": self.like_slowdown.to_dict(),
            "idle": {"key": self.idle.key.label, "mean": self.idle.mean, "sd": self.idle.sd, "n": self.idle.n},
            "kl_norm": self.kl_norm,
            "window_ms": self.window_ms,
            "hop_ms": self.hop_ms,
            "created_at": self.created_at,
            "config_hash": self.config_hash,
            "samples": {k: list(v) for k, v in sorted(self.samples.items())},
        }

    @classmethod
    def from_dict(cls, d):
        idle = d["idle"]
        return cls(
            selected=FeatureKey.parse(d["selected"]),
            region_start_ms=int(d["region_ms"][0]),
            region_end_ms=int(d["region_ms"][1]),
            like_speedup=Distribution.from_dict(d["like_speedup"]),
            like_slowdown=Distribution.from_dict(d["like_slowdown"]),
            idle=IdleBaseline(FeatureKey.parse(idle["key"]), float(idle["mean"]), float(idle["sd"]), int(idle["n"])),
            kl_norm=float(d["kl_norm"]),
            window_ms=int(d["window_ms"]),
            hop_ms=int(d["hop_ms"]),
            created_at=str(d["created_at"]),
            config_hash=str(d["config_hash"]),
            samples={k: tuple(float(x) for x in v) for k, v in d.get("samples", {}).items()},
        )


@dataclass(frozen=True)
class CalibrationResult:
    profile: UserProfile
    selection: FeatureSelection
    fits: tuple  # (StateFit speed-up, StateFit slow-down)
    screen: ScreenResult
    warnings: tuple


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except NeurolineError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


def build_profile(trial_set: TrialSet, config: CalibrationConfig = CalibrationConfig()):
    """Run the whole calibration pipeline. Deterministic in its inputs.

    Errors raised by a stage carry the stage name in ``exc.stage``
    (``validate``, ``segment``, ``select``, ``fit``, ``screen``, ``baseline``).
    """
    c = config
    _stage("validate", trial_set.validate, c.min_per_label, frame_period_ms=c.frame_period_ms)
    seg = _stage("segment", segment_trials, trial_set, c.window_ms, c.hop_ms, c.frame_period_ms)
    sel = _stage("select", select_feature, seg, c.region_start_ms, c.alpha, c.exact_max_n, c.min_per_label)
    values = pooled_values(seg, sel.key, sel.region_start_ms)
    fits = _stage("fit", fit_likelihoods, values[Intent.SPEED_UP], values[Intent.SLOW_DOWN],
                  c.normality_alpha, c.gaussian_ddof)
    screen = _stage("screen", screen_user, fits[0].selected, fits[1].selected, c.kl_threshold)
    relax_windows = slide_windows(trial_set.relaxation, c.window_ms, c.hop_ms, c.frame_period_ms)
    idle = _stage("baseline", baseline_from_windows, relax_windows, sel.key)
    samples = {}
    if c.keep_samples:
        samples = {s.value: tuple(float(v) for v in values[s]) for s in STATES}
    profile = UserProfile(
        selected=sel.key,
        region_start_ms=sel.region_start_ms,
        region_end_ms=sel.region_end_ms,
        like_speedup=fits[0].selected,
        like_slowdown=fits[1].selected,
        idle=idle,
        kl_norm=screen.kl_norm,
        window_ms=c.window_ms,
        hop_ms=c.hop_ms,
        created_at=c.created_at,
        config_hash=c.hash(),
        samples=samples,
    )
    return CalibrationResult(profile, sel, fits, screen, tuple(seg.warnings))
