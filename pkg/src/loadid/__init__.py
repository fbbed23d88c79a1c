"""Equivalent-circuit parameter identification of single-phase loads.

Parameters of series, parallel and hybrid R/L/C/G/Gamma models are solved
sample by sample from measured voltage and current and their FIR-filter
derivatives. A synthetic circuit oracle generates ground-truth records.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .conditioning import LowpassSpec, design_lowpass, filter_sweep, zero_phase_filter
from .errors import LoadIdError, StiffnessWarning
from .estimators import Topology, estimate, smooth_trace, summarize
from .fir_diff import build_stack, design_differentiator, differentiate
from .oracle import (
    CorruptionSpec,
    HarmonicExcitation,
    ParameterSchedule,
    corrupt,
    steady_state_frame,
    transient_frame,
)
from .pipeline import IdentifyResult, identify
from .signals import MeasurementFrame, Waveform, load_csv, save_csv

__all__ = [
    "CorruptionSpec",
    "HarmonicExcitation",
    "IdentifyResult",
    "LoadIdError",
    "LowpassSpec",
    "MeasurementFrame",
    "ParameterSchedule",
    "StiffnessWarning",
    "Topology",
    "Waveform",
    "build_stack",
    "corrupt",
    "design_differentiator",
    "design_lowpass",
    "differentiate",
    "estimate",
    "filter_sweep",
    "identify",
    "load_csv",
    "save_csv",
    "smooth_trace",
    "steady_state_frame",
    "summarize",
    "transient_frame",
    "zero_phase_filter",
]
