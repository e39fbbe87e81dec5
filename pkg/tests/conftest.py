import numpy as np
import pytest

from neuroline.calibration import STATES, Trial, TrialSet
from neuroline.signal import N_FEATURES, FeatureKey, PowerFrame

FC6_ALPHA = FeatureKey.parse("FC6.Alpha")


def planted_trialset(seed, key=FC6_ALPHA, laws=((12.0, 2.0), (8.0, 2.0)), n_per_label=20,
                     idle=(10.0, 1.0), relax_ms=10_000, duration_ms=4000):
    """Trials whose planted feature has window means distributed as ``laws``.

    The planted value is constant over each 500 ms half-window and drawn with
    sd * sqrt(2), so the mean of a 1000 ms window has the stated sd. Every
    other feature is i.i.d. idle noise.
    """
    rng = np.random.default_rng(seed)
    mu0, sd0 = idle

    def block(n_frames):
        return np.clip(mu0 + sd0 * rng.standard_normal((n_frames, N_FEATURES)), 0.0, None)

    relax = block(relax_ms // 125)
    relaxation = [PowerFrame(125 * i, v) for i, v in enumerate(relax)]
    trials = []
    onset = relax_ms + 1000
    for i in range(2 * n_per_label):
        label = STATES[i % 2]
        mu, sd = laws[i % 2]
        vals = block(duration_ms // 125)
        halves = mu + sd * np.sqrt(2.0) * rng.standard_normal(duration_ms // 500)
        vals[:, key.index] = np.clip(np.repeat(halves, 4), 0.0, None)
        frames = tuple(PowerFrame(onset + 125 * j, v) for j, v in enumerate(vals))
        trials.append(Trial(label, onset, frames))
        onset += duration_ms + 1000
    return TrialSet(tuple(trials), tuple(relaxation), duration_ms)


@pytest.fixture
def trialset():
    return planted_trialset(2024)


def gaussian_profile(mu1=12.0, mu2=8.0, sd1=2.0, sd2=None, key=FC6_ALPHA, idle=(10.0, 2.0, 8)):
    """A profile with Gaussian likelihoods and an idle baseline on ``key``."""
    from neuroline.calibration import UserProfile
    from neuroline.signal import IdleBaseline
    from neuroline.stats import Distribution

    sd2 = sd1 if sd2 is None else sd2
    return UserProfile(key, 500, 4000, Distribution.gaussian(mu1, sd1), Distribution.gaussian(mu2, sd2),
                       IdleBaseline(key, *idle), 0.5)


def window_at(value, key=FC6_ALPHA, start=0, end=1000, fill=10.0):
    from neuroline.signal import Window

    vals = np.full(N_FEATURES, fill)
    vals[key.index] = value
    return Window(start, end, vals, 8, False)


# acceptance reporting: one pass/fail line per criterion, repeated in the terminal summary
_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    def record(number, title, ok, detail, seconds=None):
        timing = "" if seconds is None else f" [{seconds:.2f} s]"
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}; {detail}{timing}"
        _ACCEPTANCE[(number, request.node.name)] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[key])
