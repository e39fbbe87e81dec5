import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neuroline.calibration import build_profile
from neuroline.decoder import DecoderConfig
from neuroline.errors import ConfigError
from neuroline.intent import Intent
from neuroline.signal import N_FEATURES
from neuroline.sim import (
    DEFAULT_FEATURE,
    SimConfig,
    SyntheticUser,
    WheelchairState,
    bayes_optimal_accuracy,
    decision_metrics,
    emit_frames,
    oracle_profile,
    rollout,
    run_closed_loop,
    step,
    synthetic_trialset,
)
from neuroline.stats import Distribution, Family

UP, DOWN = Distribution.gaussian(12, 2), Distribution.gaussian(8, 2)


def alternating(period_ms, duration_ms, first=Intent.SPEED_UP):
    other = Intent.SLOW_DOWN if first is Intent.SPEED_UP else Intent.SPEED_UP
    return tuple((t, first if (t // period_ms) % 2 == 0 else other) for t in range(0, duration_ms, period_ms))


def user(schedule=((0, Intent.IDLE),), seed=0, up=UP, down=DOWN):
    return SyntheticUser(up, down, 10.0, 1.0, schedule, seed)


# kinematics

def test_step_examples():
    cfg = SimConfig()
    assert step(WheelchairState(0, 1.0, 0), 0.0, cfg).velocity_mps == pytest.approx(0.9375)
    rest = step(WheelchairState(), 0.0, cfg)
    assert rest.velocity_mps == 0.0 and rest.position_m == 0.0 and rest.t_ms == 125
    top = step(WheelchairState(0, cfg.v_max_mps, 0), 0.2, cfg)
    assert top.velocity_mps <= cfg.v_max_mps


def test_step_integrates_position():
    s = step(WheelchairState(1.0, 2.0, 500), 0.1, SimConfig())
    assert s.velocity_mps == pytest.approx(0.9375 * 2.0 + 0.1)
    assert s.position_m == pytest.approx(1.0 + s.velocity_mps * 0.125)
    assert s.t_ms == 625


def test_negative_increment_clamps_at_rest():
    assert step(WheelchairState(0, 0.05, 0), -0.2).velocity_mps == 0.0


def test_zero_commands_decay_geometrically():
    cfg = SimConfig()
    _, _, v = rollout(np.zeros(200), cfg, WheelchairState(0, 3.0, 0))
    expected = 3.0
    for vi in v:
        expected *= cfg.factor
        assert vi == expected


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-0.2, 0.2), min_size=1, max_size=300), st.floats(0, 4.17))
def test_velocity_stays_in_bounds(dvs, v0):
    cfg = SimConfig()
    _, x, v = rollout(dvs, cfg, WheelchairState(0, v0, 0))
    assert np.all(v >= 0) and np.all(v <= cfg.v_max_mps)
    assert np.all(np.diff(np.concatenate([[0.0], x])) >= 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.3, 0.3), min_size=1, max_size=100), st.floats(0, 4.17))
def test_rollout_matches_step(dvs, v0):
    cfg = SimConfig()
    t, x, v = rollout(dvs, cfg, WheelchairState(0.5, v0, 250))
    s = WheelchairState(0.5, v0, 250)
    for i, dv in enumerate(dvs):
        s = step(s, dv, cfg)
        assert (t[i], x[i], v[i]) == (s.t_ms, s.position_m, s.velocity_mps)


def test_sim_config_validation():
    for kw in ({"v_max_mps": 0}, {"damping_gamma": -1}, {"dt_ms": 0}, {"dt_ms": 50}, {"damping_gamma": 9.0}):
        with pytest.raises(ConfigError):
            SimConfig(**kw)
    assert SimConfig(dt_ms=25).factor == pytest.approx(1 - 0.5 * 0.025)


# generative process

def test_one_second_gives_eight_frames():
    fr = emit_frames(user(), 1000)
    assert [f.timestamp_ms for f in fr] == list(range(0, 1000, 125))


def test_idle_frames_match_idle_law():
    fr = emit_frames(user(), 60_000)
    vals = np.array([f.values for f in fr])
    n = len(fr)
    assert vals.shape == (480, N_FEATURES)
    assert np.all(np.abs(vals.mean(axis=0) - 10.0) <= 4 * 1.0 / math.sqrt(n))


def test_active_column_follows_state_law():
    u = user(((0, Intent.SPEED_UP), (30_000, Intent.SLOW_DOWN)))
    vals = np.array([f.value(DEFAULT_FEATURE) for f in emit_frames(u, 60_000)])
    n = 240
    assert abs(vals[:n].mean() - 12) <= 4 * 2 / math.sqrt(n)
    assert abs(vals[n:].mean() - 8) <= 4 * 2 / math.sqrt(n)


def test_emission_is_seeded():
    a, b = emit_frames(user(seed=4), 5000), emit_frames(user(seed=4), 5000)
    assert a == b
    assert a != emit_frames(user(seed=5), 5000)


@pytest.mark.parametrize("schedule", [(), ((0, Intent.IDLE), (0, Intent.SPEED_UP)),
                                      ((500, Intent.IDLE), (100, Intent.SPEED_UP)), ((-5, Intent.IDLE),)])
def test_invalid_schedule(schedule):
    with pytest.raises(ConfigError):
        user(schedule)


def test_schedule_lookup():
    u = user(((1000, Intent.SPEED_UP), (3000, Intent.SLOW_DOWN)))
    assert u.state_at(0) is Intent.IDLE
    assert u.state_at(1000) is Intent.SPEED_UP and u.state_at(2999) is Intent.SPEED_UP
    assert u.window_state(2500, 3500) is None
    assert u.window_state(3000, 4000) is Intent.SLOW_DOWN


def test_synthetic_trialset_shape():
    ts = synthetic_trialset(user(seed=2), n_per_label=6)
    ts.validate()
    assert len(ts.trials) == 12 and [t.label for t in ts.trials[:2]] == [Intent.SPEED_UP, Intent.SLOW_DOWN]
    assert ts.trials[0].onset_ms == 12_000 and len(ts.trials[0].frames) == 32
    assert len(ts.relaxation) == 80


# closed loop

def test_bayes_optimal_accuracy():
    assert bayes_optimal_accuracy(UP, DOWN) == pytest.approx(0.5 * (1 + math.erf(1 / math.sqrt(2))), rel=1e-12)
    # the numeric route agrees with the closed form
    assert bayes_optimal_accuracy(UP, DOWN, p1=0.5 + 1e-15) == pytest.approx(0.841344746, rel=1e-6)
    wide = Distribution.gaussian(8, 2.0000001)
    assert bayes_optimal_accuracy(UP, wide) == pytest.approx(0.841344746, rel=1e-5)
    same = Distribution(Family.GAMMA, (5.0, 2.0))
    assert bayes_optimal_accuracy(same, same) == pytest.approx(0.5, rel=1e-6)


def test_closed_loop_accuracy_near_bayes_rate():
    u = user(alternating(5000, 120_000), seed=11)
    prof = oracle_profile(u)
    res = run_closed_loop(u, prof, DecoderConfig(z_threshold=0.0, window_ms=125, hop_ms=125),
                          SimConfig(duration_ms=120_000))
    m = res.metrics
    assert m["n_active_windows"] >= 500
    assert m["bayes_optimal_accuracy"] == pytest.approx(0.8413, abs=1e-4)
    assert abs(m["accuracy"] - m["bayes_optimal_accuracy"]) <= 0.05


def test_self_calibrated_closed_loop():
    u = user(alternating(5000, 60_000), seed=3)
    prof = build_profile(synthetic_trialset(u)).profile
    assert prof.selected == DEFAULT_FEATURE
    res = run_closed_loop(u, prof, DecoderConfig(), SimConfig(duration_ms=60_000))
    m = res.metrics
    assert m["bayes_optimal_accuracy"] == pytest.approx(0.5 * (1 + math.erf(math.sqrt(8) / math.sqrt(2))))
    assert abs(m["accuracy"] - m["bayes_optimal_accuracy"]) <= 0.05


def test_all_idle_velocity_decays_and_stays():
    u = user(seed=1)
    res = run_closed_loop(u, oracle_profile(u, 1000, 500), DecoderConfig(z_threshold=6.0),
                          SimConfig(duration_ms=60_000), v0=2.0)
    v = res.trajectory.velocity_mps
    assert np.all(np.diff(v) <= 0)
    below = np.flatnonzero(v < 1e-3)
    assert below.size and np.all(v[below[0]:] < 1e-3)


def test_sustained_speedup_reaches_cap():
    # states 6 sd apart; light damping so the increments can outrun it
    u = SyntheticUser(Distribution.gaussian(14, 1), Distribution.gaussian(8, 1), 10.0, 1.0,
                      ((0, Intent.SPEED_UP),), seed=5)
    cfg = SimConfig(damping_gamma=0.05, duration_ms=120_000)
    res = run_closed_loop(u, oracle_profile(u, 1000, 500), DecoderConfig(), cfg)
    v = res.trajectory.velocity_mps
    assert v.max() >= 0.9 * cfg.v_max_mps
    assert np.all(v <= cfg.v_max_mps)


def test_closed_loop_is_deterministic():
    u = user(alternating(4000, 30_000), seed=8)
    prof = oracle_profile(u, 1000, 500)
    a = run_closed_loop(u, prof, DecoderConfig(), SimConfig(duration_ms=30_000))
    b = run_closed_loop(u, prof, DecoderConfig(), SimConfig(duration_ms=30_000))
    for x, y in zip(a.trajectory, b.trajectory):
        assert x.tobytes() == y.tobytes()
    assert a.decisions == b.decisions and a.metrics == b.metrics


def test_metrics_count_idle_on_active_as_wrong():
    from neuroline.decoder import Decision
    u = user(((0, Intent.SPEED_UP), (2000, Intent.IDLE)))
    decs = [Decision(Intent.IDLE, None, 0.0, 0.0, (0, 1000), 10.0),
            Decision(Intent.SPEED_UP, 1.0, 1.0, 0.05, (500, 1500), 11.0),
            Decision(Intent.SPEED_UP, 1.0, 1.0, 0.05, (1500, 2500), 11.0),
            Decision(Intent.SLOW_DOWN, -1.0, 1.0, -0.05, (2000, 3000), 9.0)]
    m = decision_metrics(u, decs)
    assert (m["n_active_windows"], m["n_correct"], m["accuracy"]) == (2, 1, 0.5)
    assert m["idle_decision_rate"] == 0.25 and m["mean_confidence"] == 1.0


def test_oracle_profile_scales_window_law():
    prof = oracle_profile(user(), 1000, 500)
    assert prof.like_speedup.params == pytest.approx((12, 2 / math.sqrt(8)))
    assert prof.idle.sd == pytest.approx(1 / math.sqrt(8))
    skewed = user(up=Distribution(Family.GAMMA, (5.0, 2.0)))
    with pytest.raises(ConfigError):
        oracle_profile(skewed, 1000)
    assert oracle_profile(skewed).like_speedup.family is Family.GAMMA
