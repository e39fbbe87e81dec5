"""File and wire formats.

Streams are JSON Lines whose first line is a header
``{"format": <name>, "version": <int>}``; profiles and GAN sidecars are
single JSON documents carrying the same two keys. Floats are written with
Python's shortest round-trip repr, so every format round-trips exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from neuroline.augment import AugmentReport, MlpNet
from neuroline.calibration import Trial, TrialSet, UserProfile
from neuroline.decoder import Decision
from neuroline.errors import FormatError, NeurolineError, VersionError
from neuroline.intent import Intent
from neuroline.signal import N_FEATURES, PowerFrame

FORMAT_VERSION = 1
FRAMES = "neuroline.frames"
TRIALS = "neuroline.trials"
TWIST = "neuroline.twist"
DECISIONS = "neuroline.decisions"
TRAJECTORY = "neuroline.trajectory"
PROFILE = "neuroline.profile"
GAN = "neuroline.gan"


def _dumps(obj):
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def header_line(fmt, **extra):
    return _dumps({"format": fmt, "version": FORMAT_VERSION, **extra})


def check_header(obj, fmt, line=None):
    """Validate a parsed header object; returns it."""
    if not isinstance(obj, dict) or "format" not in obj:
        raise FormatError(f"missing {fmt} header", line)
    if obj["format"] != fmt:
        raise FormatError(f"expected format {fmt!r}, found {obj['format']!r}", line)
    version = obj.get("version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{fmt} version {version!r} is not supported (this build reads version "
                           f"{FORMAT_VERSION}); re-export the file with a matching tool version", line)
    return obj


def _loads(text, line=None):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON ({exc.msg})", line) from None


# ---------------------------------------------------------------------------
# frame records

def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def frame_to_record(frame):
    return {"t": int(frame.timestamp_ms), "pow": [float(v) for v in frame.values]}


def frame_from_record(obj, line=None, strict=True):
    if not isinstance(obj, dict):
        raise FormatError("frame record must be a JSON object", line)
    missing = {"t", "pow"} - obj.keys()
    if missing:
        raise FormatError(f"frame record lacks {sorted(missing)}", line)
    extra = obj.keys() - {"t", "pow"}
    if strict and extra:
        raise FormatError(f"unknown keys {sorted(extra)}", line)
    t, pw = obj["t"], obj["pow"]
    if not _is_int(t):
        raise FormatError("'t' must be an integer millisecond timestamp", line)
    if not isinstance(pw, list) or len(pw) != N_FEATURES or not all(_is_real(v) for v in pw):
        raise FormatError(f"'pow' must be a list of {N_FEATURES} numbers", line)
    try:
        return PowerFrame(t, np.array(pw, dtype=np.float64))
    except NeurolineError as exc:
        raise FormatError(str(exc), line) from None


def encode_frame(frame):
    return _dumps(frame_to_record(frame))


def decode_frame(text, line=None, strict=True):
    return frame_from_record(_loads(text, line), line, strict)


@dataclass
class FrameReader:
    """Iterate frames from a JSONL stream, line at a time.

    Strict mode raises :class:`FormatError` (with the line number) on the
    first bad line and requires the header; lenient mode skips bad lines and
    counts them in ``skipped``. Blank lines are ignored.
    """

    stream: object
    strict: bool = True
    skipped: int = 0
    errors: list = field(default_factory=list)

    def __iter__(self):
        seen_header = False
        for lineno, raw in enumerate(self.stream, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                obj = _loads(text, lineno)
                if not seen_header:
                    seen_header = True
                    if isinstance(obj, dict) and "format" in obj:
                        check_header(obj, FRAMES, lineno)
                        continue
                    if self.strict:
                        raise FormatError(f"missing {FRAMES} header", lineno)
                yield frame_from_record(obj, lineno, self.strict)
            except VersionError:
                raise
            except FormatError as exc:
                if self.strict:
                    raise
                self.skipped += 1
                self.errors.append(str(exc))


def read_frames(stream, strict=True):
    return list(FrameReader(stream, strict))


def write_frames(stream, frames):
    stream.write(header_line(FRAMES) + "\n")
    for f in frames:
        stream.write(encode_frame(f) + "\n")


# ---------------------------------------------------------------------------
# calibration trials: one trial per line

def write_trials(stream, trial_set):
    stream.write(header_line(TRIALS, trial_duration_ms=trial_set.trial_duration_ms) + "\n")
    for t in trial_set.trials:
        stream.write(_dumps({"label": t.label.value, "onset": t.onset_ms,
                             "frames": [frame_to_record(f) for f in t.frames]}) + "\n")


def read_trials(stream, relaxation=()):
    """Parse a trials file into a :class:`TrialSet` (strict)."""
    head = None
    trials = []
    for lineno, raw in enumerate(stream, start=1):
        text = raw.strip()
        if not text:
            continue
        obj = _loads(text, lineno)
        if head is None:
            head = check_header(obj, TRIALS, lineno)
            continue
        if not isinstance(obj, dict) or set(obj) != {"label", "onset", "frames"}:
            raise FormatError("trial record needs exactly 'label', 'onset' and 'frames'", lineno)
        if not _is_int(obj["onset"]) or not isinstance(obj["frames"], list):
            raise FormatError("'onset' must be an integer and 'frames' a list", lineno)
        try:
            label = Intent.parse(obj["label"])
            trials.append(Trial(label, obj["onset"],
                                tuple(frame_from_record(f, lineno) for f in obj["frames"])))
        except FormatError:
            raise
        except NeurolineError as exc:
            raise FormatError(str(exc), lineno) from None
    if head is None:
        raise FormatError(f"missing {TRIALS} header", 1)
    duration = head.get("trial_duration_ms", 4000)
    if not _is_int(duration) or duration <= 0:
        raise FormatError("trial_duration_ms must be a positive integer", 1)
    return TrialSet(tuple(trials), tuple(relaxation), duration)


# ---------------------------------------------------------------------------
# velocity commands, decisions, trajectories

def twist_record(t_ms, linear_x):
    """Twist-shaped velocity command; only ``linear.x`` is ever non-zero."""
    return {"t": int(t_ms), "linear": {"x": float(linear_x), "y": 0.0, "z": 0.0},
            "angular": {"x": 0.0, "y": 0.0, "z": 0.0}}


def encode_twist(t_ms, linear_x):
    return _dumps(twist_record(t_ms, linear_x))


def decode_twist(text, line=None):
    obj = _loads(text, line)
    try:
        lin, ang = obj["linear"], obj["angular"]
        t, x = obj["t"], lin["x"]
        others = (lin["y"], lin["z"], ang["x"], ang["y"], ang["z"])
    except (KeyError, TypeError):
        raise FormatError("twist record needs t, linear{x,y,z} and angular{x,y,z}", line) from None
    if not _is_int(t) or not _is_real(x) or any(v != 0 for v in others):
        raise FormatError("twist record must carry an integer t and only a linear.x component", line)
    return int(t), float(x)


def encode_decision(decision):
    return _dumps(decision.to_dict())


def decode_decision(text, line=None):
    try:
        return Decision.from_dict(_loads(text, line))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"bad decision record ({exc})", line) from None


def write_jsonl(stream, fmt, lines, **header):
    stream.write(header_line(fmt, **header) + "\n")
    for text in lines:
        stream.write(text + "\n")


def read_jsonl(stream, fmt):
    """Return ``(header, records)`` for a headed JSONL stream."""
    head = None
    records = []
    for lineno, raw in enumerate(stream, start=1):
        text = raw.strip()
        if not text:
            continue
        obj = _loads(text, lineno)
        if head is None:
            head = check_header(obj, fmt, lineno)
        else:
            records.append(obj)
    if head is None:
        raise FormatError(f"missing {fmt} header", 1)
    return head, records


def trajectory_lines(trajectory):
    for t, x, v in zip(trajectory.t_ms, trajectory.position_m, trajectory.velocity_mps):
        yield _dumps({"t": int(t), "x": float(x), "v": float(v)})


# ---------------------------------------------------------------------------
# profile and GAN documents

def _document(fmt, body_key, body, provenance):
    return {"format": fmt, "version": FORMAT_VERSION, "provenance": dict(provenance or {}), body_key: body}


def dumps_profile(profile, provenance=None):
    if any(not math.isfinite(v) for v in (profile.kl_norm, profile.idle.mean, profile.idle.sd)):
        raise FormatError("profile contains non-finite values")
    return json.dumps(_document(PROFILE, "profile", profile.to_dict(), provenance),
                      indent=2, sort_keys=True, allow_nan=False) + "\n"


def loads_profile(text):
    """Parse a profile document; returns ``(profile, provenance)``."""
    doc = check_header(_loads(text), PROFILE)
    try:
        return UserProfile.from_dict(doc["profile"]), dict(doc.get("provenance", {}))
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"malformed profile ({type(exc).__name__}: {exc})") from None


def save_profile(path, profile, provenance=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_profile(profile, provenance))


def load_profile(path):
    with open(path, encoding="utf-8") as fh:
        return loads_profile(fh.read())


def dumps_gan(trained, provenance=None):
    body = {"generator": trained.generator.to_dict(), "discriminator": trained.discriminator.to_dict(),
            "report": trained.report.to_dict()}
    return json.dumps(_document(GAN, "gan", body, provenance), indent=2, sort_keys=True, allow_nan=False) + "\n"


def loads_gan(text):
    """Parse a GAN sidecar; returns ``(generator, discriminator, report_dict)``."""
    doc = check_header(_loads(text), GAN)
    try:
        body = doc["gan"]
        return MlpNet.from_dict(body["generator"]), MlpNet.from_dict(body["discriminator"]), body["report"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed GAN sidecar ({exc})") from None


def report_json(report: AugmentReport):
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
