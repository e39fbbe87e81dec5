"""``neuroline`` command-line interface.

Exit codes: 0 success, 1 input/format/system error, 2 screening failure.
Default option values may be set in a ``key=value`` file named by the
``NEUROLINE_CONFIG`` environment variable; command-line flags win.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from neuroline import __version__
from neuroline import io as nio
from neuroline.augment import CROSS_ENTROPY, STAT_MATCHED, GanConfig, generate, loss_sign_test, train_gan
from neuroline.calibration import CalibrationConfig, build_profile, screen_user
from neuroline.decoder import DecoderConfig, Prior, StreamDecoder
from neuroline.errors import NeurolineError, ScreeningError
from neuroline.intent import Intent
from neuroline.signal import FeatureKey
from neuroline.sim import SimConfig, SyntheticUser, run_closed_loop, synthetic_trialset
from neuroline.stats import Distribution

EXIT_OK, EXIT_ERROR, EXIT_SCREENING = 0, 1, 2
CONFIG_ENV = "NEUROLINE_CONFIG"
LOSS_FLAGS = {"ce": (CROSS_ENTROPY,), "stat": (STAT_MATCHED,), "both": (CROSS_ENTROPY, STAT_MATCHED)}

# option name -> (parser, built-in default)
_SETTINGS = {
    "window_ms": (int, 1000),
    "hop_ms": (int, 500),
    "z_threshold": (float, 2.0),
    "gain": (float, 0.05),
    "dv_max": (float, 0.2),
    "prior": (float, 0.5),
    "seed": (int, 0),
    "strict": (lambda s: str(s).strip().lower() in ("1", "true", "yes", "on"), True),
    "v_max": (float, 4.17),
    "damping": (float, 0.5),
    "kl_threshold": (float, 0.2),
    "alpha": (float, 0.05),
    "epochs": (int, 2000),
    "lambda_stat": (float, 1.0),
    "n_out": (int, 1000),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def load_config(path):
    """Parse a ``key=value`` file (``#`` comments, blank lines ignored)."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            key, sep, value = text.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in _SETTINGS:
                raise nio.FormatError(f"{path}: unknown or malformed setting {text!r}", lineno)
            try:
                out[key] = _SETTINGS[key][0](value.strip())
            except ValueError:
                raise nio.FormatError(f"{path}: bad value for {key}: {value.strip()!r}", lineno) from None
    return out


def _setting(args, config, name, fallback=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return _SETTINGS[name][1] if fallback is None else fallback


@contextlib.contextmanager
def _open_out(path):
    if path == "-":
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


@contextlib.contextmanager
def _open_in(path):
    if path == "-":
        yield sys.stdin
    else:
        with open(path, encoding="utf-8") as fh:
            yield fh


def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _provenance(args, command, seed=None):
    return {"tool": "neuroline", "tool_version": __version__, "command": command, "seed": seed}


def _decoder_config(args, config, profile):
    return DecoderConfig(
        gain_k=_setting(args, config, "gain"),
        delta_v_max=_setting(args, config, "dv_max"),
        z_threshold=_setting(args, config, "z_threshold"),
        two_sided_gate=not getattr(args, "one_sided", False),
        prior=Prior(_setting(args, config, "prior")),
        window_ms=_setting(args, config, "window_ms", profile.window_ms),
        hop_ms=_setting(args, config, "hop_ms", profile.hop_ms),
    )


def _screen_failed(kl_norm):
    print(f"screening failed, kl_norm={kl_norm:.2f}", file=sys.stderr)
    return EXIT_SCREENING


# ---------------------------------------------------------------------------
# commands

def cmd_calibrate(args, config):
    with _open_in(args.relax) as fh:
        relaxation = nio.read_frames(fh, strict=_setting(args, config, "strict"))
    with _open_in(args.trials) as fh:
        trials = nio.read_trials(fh, relaxation)
    cal = CalibrationConfig(
        window_ms=_setting(args, config, "window_ms"),
        hop_ms=_setting(args, config, "hop_ms"),
        alpha=_setting(args, config, "alpha"),
        kl_threshold=_setting(args, config, "kl_threshold"),
    )
    try:
        result = build_profile(trials, cal)
    except ScreeningError as exc:
        print(str(exc), file=sys.stderr)
        return _screen_failed(0.0)
    nio.save_profile(args.output, result.profile, _provenance(args, "calibrate"))
    if args.report:
        sel = result.selection
        _dump_json(args.report, {
            "selected": sel.key.label,
            "window_index": sel.window_index,
            "n_tests": sel.n_tests,
            "features": [{"feature": e.key.label, "window_index": e.window_index, "p_value": e.p_value,
                          "effect_r": e.effect_r, "u": e.u} for e in sel.report],
            "fits": {state.value: {
                "selected": fit.selected.to_dict(),
                "shapiro_wilk": {"w": fit.normality.statistic, "p": fit.normality.p_value},
                "ks_ranking": [{"family": s.family.value, "d": s.d, "p": s.p} for s in fit.ranking],
                "unsupported": [f.value for f in fit.unsupported],
            } for state, fit in zip((Intent.SPEED_UP, Intent.SLOW_DOWN), result.fits)},
            "kl_norm": result.screen.kl_norm,
            "warnings": list(result.warnings),
        })
    if not result.screen.passed:
        return _screen_failed(result.screen.kl_norm)
    print(f"selected {result.profile.selected.label}, kl_norm={result.screen.kl_norm:.4f}")
    return EXIT_OK


def cmd_screen(args, config):
    profile, _ = nio.load_profile(args.profile)
    res = screen_user(profile.like_speedup, profile.like_slowdown, _setting(args, config, "kl_threshold"))
    if not res.passed:
        return _screen_failed(res.kl_norm)
    print(f"screening passed, kl_norm={res.kl_norm:.2f}")
    return EXIT_OK


def cmd_decode(args, config):
    profile, _ = nio.load_profile(args.profile)
    dec_cfg = _decoder_config(args, config, profile)
    v_max = _setting(args, config, "v_max")
    decoder = StreamDecoder(profile, dec_cfg)
    reader = None
    with contextlib.ExitStack() as stack:
        src = stack.enter_context(_open_in(args.frames))
        twist = stack.enter_context(_open_out(args.twist))
        log = stack.enter_context(_open_out(args.decisions)) if args.decisions else None
        twist.write(nio.header_line(nio.TWIST, v_max=v_max) + "\n")
        if log is not None:
            log.write(nio.header_line(nio.DECISIONS) + "\n")
        v_cmd = 0.0

        def emit(decisions):
            nonlocal v_cmd
            for d in decisions:
                v_cmd = min(max(v_cmd + d.delta_v, 0.0), v_max)
                twist.write(nio.encode_twist(d.window_ref[1], v_cmd) + "\n")
                if log is not None:
                    log.write(nio.encode_decision(d) + "\n")

        reader = nio.FrameReader(src, strict=_setting(args, config, "strict"))
        for frame in reader:
            emit(decoder.push(frame))
        emit(decoder.flush())
    if reader.skipped:
        print(f"skipped {reader.skipped} malformed line(s)", file=sys.stderr)
    for ref, message in decoder.errors:
        print(f"window {ref[0]}-{ref[1]} ms: {message}", file=sys.stderr)
    return EXIT_OK


def _load_user(path, seed):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        user = SyntheticUser(
            like_speedup=Distribution.from_dict(doc["like_speedup"]),
            like_slowdown=Distribution.from_dict(doc["like_slowdown"]),
            idle_mean=float(doc["idle_mean"]),
            idle_sd=float(doc["idle_sd"]),
            intent_schedule=tuple((t, s) for t, s in doc["schedule"]),
            seed=int(seed if seed is not None else doc.get("seed", 0)),
            feature=FeatureKey.parse(doc.get("feature", "FC6.Alpha")),
        )
    except (KeyError, TypeError) as exc:
        raise nio.FormatError(f"{path}: malformed user file ({exc})") from None
    return user, doc


def cmd_simulate(args, config):
    user, doc = _load_user(args.user, args.seed if args.seed is not None else config.get("seed"))
    os.makedirs(args.out_dir, exist_ok=True)
    if args.profile:
        profile, _ = nio.load_profile(args.profile)
    else:
        trials = synthetic_trialset(user, n_per_label=int(doc.get("calibration_trials", 10)))
        cal = CalibrationConfig(window_ms=_setting(args, config, "window_ms"),
                                hop_ms=_setting(args, config, "hop_ms"),
                                kl_threshold=_setting(args, config, "kl_threshold"))
        try:
            result = build_profile(trials, cal)
        except ScreeningError as exc:
            print(str(exc), file=sys.stderr)
            return _screen_failed(0.0)
        profile = result.profile
        nio.save_profile(os.path.join(args.out_dir, "profile.json"), profile,
                         _provenance(args, "simulate", user.seed))
        if not result.screen.passed:
            return _screen_failed(result.screen.kl_norm)
    sim_cfg = SimConfig(v_max_mps=_setting(args, config, "v_max"),
                        damping_gamma=_setting(args, config, "damping"),
                        duration_ms=int(args.duration_ms or doc.get("duration_ms", 60_000)))
    res = run_closed_loop(user, profile, _decoder_config(args, config, profile), sim_cfg)
    with open(os.path.join(args.out_dir, "trajectory.jsonl"), "w", encoding="utf-8") as fh:
        nio.write_jsonl(fh, nio.TRAJECTORY, nio.trajectory_lines(res.trajectory))
    with open(os.path.join(args.out_dir, "decisions.jsonl"), "w", encoding="utf-8") as fh:
        nio.write_jsonl(fh, nio.DECISIONS, (nio.encode_decision(d) for d in res.decisions))
    with open(os.path.join(args.out_dir, "twist.jsonl"), "w", encoding="utf-8") as fh:
        nio.write_jsonl(fh, nio.TWIST, (nio.encode_twist(t, v) for t, v in
                                        zip(res.trajectory.t_ms, res.trajectory.velocity_mps)),
                        v_max=sim_cfg.v_max_mps)
    _dump_json(os.path.join(args.out_dir, "metrics.json"), {"seed": user.seed, **res.metrics})
    acc = res.metrics["accuracy"]
    print(f"accuracy={acc:.4f}" if acc is not None else "accuracy=n/a (no active windows)")
    return EXIT_OK


def _histogram(real, synthetic, bins=30):
    edges = np.histogram_bin_edges(np.concatenate([real, *synthetic.values()]), bins=bins)
    return {"edges": edges.tolist(), "real": np.histogram(real, edges)[0].tolist(),
            **{mode: np.histogram(v, edges)[0].tolist() for mode, v in synthetic.items()}}


def cmd_augment(args, config):
    profile, _ = nio.load_profile(args.profile)
    os.makedirs(args.out_dir, exist_ok=True)
    seed = _setting(args, config, "seed")
    base = GanConfig(epochs=_setting(args, config, "epochs"), seed=seed,
                     lambda_stat=_setting(args, config, "lambda_stat"))
    n_out = _setting(args, config, "n_out")
    states = [s for s in (Intent.SPEED_UP, Intent.SLOW_DOWN) if s.value in profile.samples]
    if not states:
        raise nio.FormatError(f"{args.profile}: profile carries no calibration samples to augment")
    modes = LOSS_FLAGS[args.loss]
    summary = {}
    for state in states:
        real = np.asarray(profile.samples[state.value], dtype=np.float64)
        synthetic = {}
        for mode in modes:
            trained = train_gan(real, replace(base, loss_mode=mode))
            tag = f"{state.value}_{mode}"
            values = generate(trained.generator, n_out, seed=seed)
            synthetic[mode] = values
            _dump_json(os.path.join(args.out_dir, f"report_{tag}.json"), trained.report.to_dict())
            _dump_json(os.path.join(args.out_dir, f"synthetic_{tag}.json"),
                       {"synthetic": True, "state": state.value, "loss_mode": mode, "seed": seed,
                        "values": values.tolist()})
            with open(os.path.join(args.out_dir, f"gan_{tag}.json"), "w", encoding="utf-8") as fh:
                fh.write(nio.dumps_gan(trained, _provenance(args, "augment", seed)))
            summary[tag] = trained.report.total_normalized_gap
        _dump_json(os.path.join(args.out_dir, f"histogram_{state.value}.json"), _histogram(real, synthetic))
        if args.sign_test_seeds and len(modes) == 2:
            st = loss_sign_test(real, base, range(seed, seed + args.sign_test_seeds))
            _dump_json(os.path.join(args.out_dir, f"sign_test_{state.value}.json"),
                       {"wins": st.wins, "n": st.n, "p_value": st.p_value,
                        "pairs": [{"seed": s, "cross_entropy": a, "stat_matched": b} for s, a, b in st.pairs]})
    for tag, gap in summary.items():
        print(f"{tag}: total normalized gap {gap:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_decoder_flags(p):
    p.add_argument("--window-ms", type=int, dest="window_ms")
    p.add_argument("--hop-ms", type=int, dest="hop_ms")
    p.add_argument("--z-threshold", type=float, dest="z_threshold")
    p.add_argument("--one-sided", action="store_true", help="gate on z > threshold only")
    p.add_argument("--gain", type=float, help="velocity gain per unit log-odds")
    p.add_argument("--dv-max", type=float, dest="dv_max", help="cap on one velocity increment (m/s)")
    p.add_argument("--prior", type=float, help="prior probability of speed-up")
    p.add_argument("--v-max", type=float, dest="v_max")


def _add_strictness(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--strict", dest="strict", action="store_true", default=None)
    g.add_argument("--lenient", dest="strict", action="store_false")


def build_parser():
    parser = _Parser(prog="neuroline", description="Bayesian intent decoding for BCI-driven mobility.")
    parser.add_argument("--version", action="version", version=f"neuroline {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="build a user profile from labeled trials")
    p.add_argument("trials", help="trials JSONL file")
    p.add_argument("relax", help="relaxation frames JSONL file")
    p.add_argument("-o", "--output", required=True, help="profile file to write")
    p.add_argument("--report", help="write the ranked feature report here")
    p.add_argument("--window-ms", type=int, dest="window_ms")
    p.add_argument("--hop-ms", type=int, dest="hop_ms")
    p.add_argument("--alpha", type=float)
    p.add_argument("--kl-threshold", type=float, dest="kl_threshold")
    _add_strictness(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("screen", help="check a profile against the onboarding threshold")
    p.add_argument("profile")
    p.add_argument("--kl-threshold", type=float, dest="kl_threshold")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("decode", help="decode a frame stream into velocity commands")
    p.add_argument("profile")
    p.add_argument("frames", nargs="?", default="-", help="frames JSONL file, or - for stdin")
    p.add_argument("--twist", default="-", help="velocity command output (default stdout)")
    p.add_argument("--decisions", help="decision log output")
    _add_decoder_flags(p)
    _add_strictness(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("simulate", help="run the closed loop against a synthetic user")
    p.add_argument("user", help="synthetic user description (JSON)")
    p.add_argument("out_dir")
    p.add_argument("--profile", help="use this profile instead of self-calibrating")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration-ms", type=int, dest="duration_ms")
    p.add_argument("--damping", type=float)
    p.add_argument("--kl-threshold", type=float, dest="kl_threshold")
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("augment", help="train GANs on a profile's calibration samples")
    p.add_argument("profile")
    p.add_argument("out_dir")
    p.add_argument("--loss", choices=sorted(LOSS_FLAGS), default="both")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda-stat", type=float, dest="lambda_stat")
    p.add_argument("--n-out", type=int, dest="n_out")
    p.add_argument("--sign-test-seeds", type=int, default=0, help="also run a paired sign test over N seeds")
    p.set_defaults(func=cmd_augment)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        path = os.environ.get(CONFIG_ENV)
        config = load_config(path) if path else {}
        return args.func(args, config)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except ScreeningError as exc:
        print(exc, file=sys.stderr)
        return _screen_failed(0.0)
    except (NeurolineError, OSError, json.JSONDecodeError) as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"error ({stage}): " if stage else "error: "
        print(prefix + str(exc), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
