"""Acceptance suite: one test per criterion, each printing a pass/fail line."""
import math
import time

import mpmath
import numpy as np

from conftest import gaussian_profile, window_at
from test_augment import case, check_gradient, kink_signature
from test_stats import SW_GOLDENS, brute_force_mwu_p, sw_vector
from neuroline import io as nio
from neuroline.augment import CROSS_ENTROPY, STAT_MATCHED, GanConfig, MlpNet, discriminator_loss, \
    generator_loss, loss_sign_test, train_gan
from neuroline.calibration import (
    CalibrationConfig,
    UserProfile,
    build_profile,
    fit_likelihoods,
    segment_trials,
    select_feature,
)
from neuroline.cli import main
from neuroline.decoder import DecoderConfig, Prior, decide, log_likelihood_ratio, log_posterior_odds
from neuroline.intent import Intent
from neuroline.signal import N_FEATURES, FeatureKey, IdleBaseline, PowerFrame
from neuroline.sim import (
    SimConfig,
    SyntheticUser,
    WheelchairState,
    oracle_profile,
    rollout,
    run_closed_loop,
    synthetic_trialset,
)
from neuroline.stats import Distribution, Family, kl_divergence, mann_whitney_u, shapiro_wilk
from neuroline.stats.families import PARAM_NAMES

PHI_1 = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))


def test_criterion_1_bayes_observer(criterion):
    rng = np.random.default_rng(2024)
    n = 10_000
    mpmath.mp.dps = 50
    t0 = time.perf_counter()
    disagree, worst_d, worst_split = 0, 0.0, 0.0
    for _ in range(n):
        mu1, mu2 = rng.uniform(-10, 10, 2)
        sd1, sd2 = rng.uniform(0.5, 5, 2)
        p1 = float(rng.uniform(0.02, 0.98))
        lo, hi = min(mu1 - 3 * sd1, mu2 - 3 * sd2), max(mu1 + 3 * sd1, mu2 + 3 * sd2)
        a = float(rng.uniform(lo, hi))
        prof = gaussian_profile(mu1, mu2, sd1, sd2, idle=(-1e6, 1.0, 8))
        cfg = DecoderConfig(z_threshold=0.0, prior=Prior(p1))
        dec = decide(window_at(a), prof, cfg)
        d = log_posterior_odds(a, prof, cfg.prior)
        # oracle: posteriors compared directly at 50 digits
        am, m1, s1, m2, s2, pm = (mpmath.mpf(float(v)) for v in (a, mu1, sd1, mu2, sd2, p1))
        post1 = pm * mpmath.npdf(am, m1, s1)
        post2 = (1 - pm) * mpmath.npdf(am, m2, s2)
        want = Intent.SPEED_UP if post1 > post2 else Intent.SLOW_DOWN
        disagree += dec.state is not want
        ref = float(mpmath.log(post1 / post2))
        worst_d = max(worst_d, abs(d - ref) / max(1.0, abs(ref)))
        split = log_likelihood_ratio(a, prof) + (math.log(p1) - math.log1p(-p1))
        worst_split = max(worst_split, abs(d - split))
    elapsed = time.perf_counter() - t0
    ok = disagree == 0 and worst_d <= 1e-12 and worst_split <= 1e-12 and elapsed < 5.0
    criterion(1, "Bayes observer vs 50-digit oracle", ok,
              f"{n} cases, {disagree} disagreements, max d error {worst_d:.2e}, "
              f"max decomposition error {worst_split:.2e}", elapsed)
    assert ok


def test_criterion_2_closed_loop_bayes_rate(criterion):
    t0 = time.perf_counter()
    sched = tuple((t, Intent.SPEED_UP if (t // 5000) % 2 == 0 else Intent.SLOW_DOWN)
                  for t in range(0, 300_000, 5000))
    user = SyntheticUser(Distribution.gaussian(12, 2), Distribution.gaussian(8, 2), 10.0, 1.0, sched, seed=0)
    dec_cfg = DecoderConfig(z_threshold=0.0, window_ms=125, hop_ms=125)
    sim_cfg = SimConfig(duration_ms=300_000)
    # route 1: profile calibrated from the user's own synthetic trials
    cal = build_profile(synthetic_trialset(user), CalibrationConfig(window_ms=125, hop_ms=125))
    calibrated = run_closed_loop(user, cal.profile, dec_cfg, sim_cfg).metrics
    # route 2: profile holding the true laws
    oracle = run_closed_loop(user, oracle_profile(user), dec_cfg, sim_cfg).metrics
    elapsed = time.perf_counter() - t0
    n_active = calibrated["n_active_windows"]
    gaps = [abs(m["accuracy"] - PHI_1) for m in (calibrated, oracle)]
    ok = n_active >= 2000 and max(gaps) <= 0.03 and elapsed < 10.0
    criterion(2, "closed-loop accuracy vs Phi(1)", ok,
              f"{n_active} active windows, calibrated {calibrated['accuracy']:.4f}, "
              f"oracle {oracle['accuracy']:.4f}, target {PHI_1:.4f} +/- 0.03", elapsed)
    assert ok


def test_criterion_3_mann_whitney_exact(criterion):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(500):
        n = int(rng.integers(6, 11))
        n1 = int(rng.integers(3, n - 2))
        levels = int(rng.integers(2, 12))
        pooled = rng.integers(0, levels, n).astype(float)
        if np.all(pooled == pooled[0]):
            pooled[0] += 1
        x, y = pooled[:n1], pooled[n1:]
        res, _ = mann_whitney_u(x, y, exact_max_n=12)
        mismatches += res.p_value != brute_force_mwu_p(x, y)
    fixture, _ = mann_whitney_u([1, 2, 3], [4, 5, 6])
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and fixture.statistic == 0 and fixture.p_value == 0.1
    criterion(3, "exact Mann-Whitney vs permutation enumeration", ok,
              f"500 pairs, {mismatches} mismatches; fixture U={fixture.statistic:g}, p={fixture.p_value!r}",
              elapsed)
    assert ok


def test_criterion_4_kl_closed_form_vs_quadrature(criterion):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        p = Distribution.gaussian(rng.uniform(-5, 5), rng.uniform(0.3, 4))
        q = Distribution.gaussian(rng.uniform(-5, 5), rng.uniform(0.3, 4))
        closed = kl_divergence(p, q, mode="closed_form")
        quad = kl_divergence(p, q, mode="quadrature")
        worst = max(worst, abs(closed - quad))
    unit = kl_divergence(Distribution.gaussian(1, 1), Distribution.gaussian(0, 1))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and abs(unit - 0.5) <= 1e-9
    criterion(4, "KL closed form vs quadrature", ok,
              f"200 Gaussian pairs, max |diff| {worst:.2e}; KL(N(1,1)||N(0,1)) = {unit!r}", elapsed)
    assert ok


def test_criterion_5_shapiro_wilk_goldens(criterion):
    t0 = time.perf_counter()
    worst_w = worst_p = 0.0
    for name, w, p, _ in SW_GOLDENS:
        res = shapiro_wilk(sw_vector(name))
        worst_w = max(worst_w, abs(res.statistic - w))
        worst_p = max(worst_p, abs(res.p_value - p))
    sizes = sorted(len(sw_vector(name)) for name, *_ in SW_GOLDENS)
    rng = np.random.default_rng(0)
    up, down = fit_likelihoods(rng.normal(12, 2, 30), rng.normal(8, 2, 30))
    kept = all(f.normality.p_value > 0.05 and f.selected.family is Family.GAUSSIAN for f in (up, down))
    elapsed = time.perf_counter() - t0
    ok = worst_w <= 1e-4 and worst_p <= 1e-4 and sizes == [10, 20, 50, 200, 1000] and kept
    criterion(5, "Shapiro-Wilk goldens and Gaussian states kept", ok,
              f"n={sizes}, max |dW| {worst_w:.1e}, max |dp| {worst_p:.1e}; 30-point states "
              f"p={up.normality.p_value:.2f}/{down.normality.p_value:.2f}", elapsed)
    assert ok


def test_criterion_6_planted_feature(criterion):
    t0 = time.perf_counter()
    hits = 0
    for seed in range(100):
        key = FeatureKey.from_index(int(np.random.default_rng([seed, 6]).integers(N_FEATURES)))
        # frame-level Cohen's d = 0.5; 20 trials give 20 windows per label per cell
        user = SyntheticUser(Distribution.gaussian(10.25, 1), Distribution.gaussian(9.75, 1), 10.0, 1.0,
                             seed=seed, feature=key)
        sel = select_feature(segment_trials(synthetic_trialset(user, n_per_label=20)))
        hits += sel.key == key
    elapsed = time.perf_counter() - t0
    ok = hits >= 95 and elapsed < 30.0
    criterion(6, "planted feature recovery", ok, f"{hits}/100 seeded runs", elapsed)
    assert ok


def test_criterion_7_gan(criterion):
    t0 = time.perf_counter()
    # gradient check: 50 random nets per loss
    worst, skipped = 0.0, 0
    for mode in (CROSS_ENTROPY, STAT_MATCHED):
        for seed in range(50):
            _, gen, disc, z, real, stats, scale = case(seed, mode)

            def g_loss():
                loss, dW, db, _ = generator_loss(gen, disc, z, mode, stats, scale, 1.0)
                return loss, MlpNet.flatten(dW, db)

            err = check_gradient(gen, g_loss, lambda: kink_signature(gen, disc, z, mode))
            if err is None:
                skipped += 1
            else:
                worst = max(worst, err)
            if mode == CROSS_ENTROPY:
                fake = gen(z)

                def d_loss():
                    loss, dW, db = discriminator_loss(disc, real, fake)
                    return loss, MlpNet.flatten(dW, db)

                def d_sig():
                    pres = disc.forward_cache(real)[1][:-1] + disc.forward_cache(fake)[1][:-1]
                    return [tuple((p > 0).ravel()) for p in pres], min(float(np.min(np.abs(p))) for p in pres)

                err = check_gradient(disc, d_loss, d_sig)
                if err is None:
                    skipped += 1
                else:
                    worst = max(worst, err)
    grad_ok = worst <= 1e-4 and skipped <= 15
    t_grad = time.perf_counter() - t0

    real = np.random.default_rng(42).normal(10, 2, 500)
    stat = train_gan(real, GanConfig(epochs=2000, seed=0, loss_mode=STAT_MATCHED)).report
    conv_ok = max(stat.normalized_gaps.values()) <= 0.1 and len(stat.g_loss) == 2000
    t_conv = time.perf_counter() - t0 - t_grad

    sign = loss_sign_test(real, GanConfig(epochs=2000, n_eval=20_000), range(10))
    sign_ok = sign.p_value < 0.05
    elapsed = time.perf_counter() - t0
    ok = grad_ok and conv_ok and sign_ok and elapsed < 300.0
    gaps = ", ".join(f"{k} {v:.3f}" for k, v in stat.normalized_gaps.items())
    criterion(7, "GAN gradients, convergence and loss comparison", ok,
              f"gradient max rel err {worst:.1e} ({skipped} kink cases skipped, {t_grad:.1f} s); "
              f"stat-matched gaps {gaps} ({t_conv:.1f} s); sign test {sign.wins}/{sign.n} wins, "
              f"p={sign.p_value:.4f}", elapsed)
    assert ok


def test_criterion_8_simulator_safety(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    cfg = SimConfig()
    violations = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 200))
        dv = rng.uniform(-0.5, 0.5, n) * rng.choice([0.01, 0.4, 1.0, 10.0])
        _, _, v = rollout(dv, cfg, WheelchairState(0.0, float(rng.uniform(0, cfg.v_max_mps)), 0))
        violations += int(np.any(v < 0) or np.any(v > cfg.v_max_mps))
    _, _, v = rollout(np.zeros(400), cfg, WheelchairState(0.0, 3.0, 0))
    expected, geometric = 3.0, True
    for vi in v:
        expected *= cfg.factor
        geometric &= vi == expected

    def pipeline():
        sched = ((0, Intent.IDLE), (3000, Intent.SPEED_UP), (13_000, Intent.SLOW_DOWN), (23_000, Intent.IDLE))
        user = SyntheticUser(Distribution.gaussian(12, 2), Distribution.gaussian(8, 2), 10.0, 1.0, sched, seed=5)
        prof = build_profile(synthetic_trialset(user)).profile
        res = run_closed_loop(user, prof, DecoderConfig(), SimConfig(duration_ms=30_000))
        return nio.dumps_profile(prof).encode() + b"".join(a.tobytes() for a in res.trajectory) + \
            "".join(nio.encode_decision(d) for d in res.decisions).encode()

    same = pipeline() == pipeline()
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and geometric and same
    criterion(8, "simulator safety and reproducibility", ok,
              f"10000 sequences, {violations} bound violations; geometric decay exact: {geometric}; "
              f"pipeline bytes identical: {same}", elapsed)
    assert ok


def _random_distribution(rng):
    family = list(Family)[int(rng.integers(len(Family)))]
    params = list(np.exp(rng.uniform(-3, 3, len(PARAM_NAMES[family]))))
    if family in (Family.GAUSSIAN, Family.LOGISTIC, Family.CAUCHY):
        params[0] = rng.normal(0, 100)
    return Distribution(family, params)


def _random_profile(rng):
    key = FeatureKey.from_index(int(rng.integers(N_FEATURES)))
    samples = {s: tuple(float(v) for v in rng.normal(10, 3, int(rng.integers(0, 30))))
               for s in ("speed_up", "slow_down")}
    start = int(rng.integers(0, 3000))
    return UserProfile(key, start, start + int(rng.integers(1, 4000)), _random_distribution(rng),
                       _random_distribution(rng), IdleBaseline(key, float(rng.normal(10, 5)),
                                                               float(np.exp(rng.uniform(-5, 3))),
                                                               int(rng.integers(8, 1000))),
                       float(rng.uniform(0, 1)), created_at=f"run-{rng.integers(1 << 30)}",
                       config_hash=f"{int(rng.integers(1 << 62)):016x}", samples=samples)


def test_criterion_9_formats_and_exit_codes(criterion, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    frame_bad = 0
    for _ in range(1000):
        vals = rng.uniform(0, 1, N_FEATURES) * 10.0 ** rng.integers(-300, 300, N_FEATURES)
        frame = PowerFrame(int(rng.integers(-2**53, 2**53)), vals)
        back = nio.decode_frame(nio.encode_frame(frame))
        frame_bad += back != frame or back.values.tobytes() != frame.values.tobytes()
    prof_bad = 0
    for _ in range(100):
        prof = _random_profile(rng)
        back, _ = nio.loads_profile(nio.dumps_profile(prof))
        prof_bad += back != prof

    # exit codes: 0 success, 1 input error, 2 screening failure
    good = tmp_path / "good.json"
    nio.save_profile(good, gaussian_profile())
    weak = tmp_path / "weak.json"
    nio.save_profile(weak, gaussian_profile(0.0, 0.1, 1.0))
    frames = tmp_path / "frames.jsonl"
    with open(frames, "w") as fh:
        nio.write_frames(fh, [PowerFrame(125 * i, np.full(N_FEATURES, 10.0)) for i in range(8)])
    bad = tmp_path / "bad.jsonl"
    text = frames.read_text().splitlines()
    text[2] = "not json"
    bad.write_text("\n".join(text) + "\n")
    codes = {
        "screen pass": (main(["screen", str(good)]), 0),
        "screen fail": (main(["screen", str(weak)]), 2),
        "screen missing": (main(["screen", str(tmp_path / "missing.json")]), 1),
        "decode ok": (main(["decode", str(good), str(frames), "--twist", str(tmp_path / "t.jsonl")]), 0),
        "decode corrupt": (main(["decode", str(good), str(bad), "--twist", str(tmp_path / "t.jsonl")]), 1),
        "bad usage": (main(["screen"]), 1),
    }
    wrong = [k for k, (got, want) in codes.items() if got != want]
    elapsed = time.perf_counter() - t0
    ok = frame_bad == 0 and prof_bad == 0 and not wrong
    criterion(9, "format round-trips and exit codes", ok,
              f"1000 frames ({frame_bad} lossy), 100 profiles ({prof_bad} lossy), "
              f"{len(codes) - len(wrong)}/{len(codes)} exit codes as contracted", elapsed)
    assert ok
