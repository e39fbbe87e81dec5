"""Bayesian-observer intent decoding from EEG band power.

Submodules: :mod:`~neuroline.signal` (band power and windows),
:mod:`~neuroline.stats`, :mod:`~neuroline.calibration`,
:mod:`~neuroline.decoder`, :mod:`~neuroline.augment` (GAN),
:mod:`~neuroline.sim` and :mod:`~neuroline.cli`.
"""
__version__ = "0.1.0"

from neuroline._backend import BACKEND
from neuroline.calibration import CalibrationConfig, TrialSet, UserProfile, build_profile
from neuroline.decoder import Decision, DecoderConfig, decide, decode_stream
from neuroline.intent import Intent
from neuroline.signal import FeatureKey, PowerFrame, Window

__all__ = [
    "BACKEND", "CalibrationConfig", "Decision", "DecoderConfig", "FeatureKey", "Intent", "PowerFrame",
    "TrialSet", "UserProfile", "Window", "build_profile", "decide", "decode_stream", "__version__",
]
