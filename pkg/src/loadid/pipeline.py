"""The identification pipeline: condition, differentiate, estimate, smooth, summarize."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .conditioning import LowpassFilter, LowpassSpec, condition_frame, design_lowpass
from .errors import NoValidSamples
from .estimators import (
    DEFAULT_EPSILON,
    DEFAULT_SMOOTH_WINDOW,
    ParameterStats,
    ParameterTrace,
    Topology,
    TraceSummary,
    estimate,
    smooth_trace,
    summarize,
)
from .fir_diff import DEFAULT_TAPS, DerivativeStack, build_stack
from .signals import MeasurementFrame, remove_dc

SINGULAR_FRACTION = 0.01


@dataclass
class IdentifyResult:
    topology: Topology
    conditioned: MeasurementFrame
    lowpass: LowpassFilter | None
    vstack: DerivativeStack
    istack: DerivativeStack
    raw: ParameterTrace
    smoothed: ParameterTrace
    summary: TraceSummary


def _empty_summary(topology: Topology, nominal) -> TraceSummary:
    nominal = nominal or {}
    stats = {
        n: ParameterStats(None, None, None, nominal.get(n), None) for n in topology.param_names
    }
    return TraceSummary(topology, stats, 0.0)


def identify(
    frame: MeasurementFrame,
    topology,
    lowpass: LowpassSpec | None = None,
    taps: int = DEFAULT_TAPS,
    smooth_window: int = DEFAULT_SMOOTH_WINDOW,
    epsilon: float = DEFAULT_EPSILON,
    nominal: dict[str, float] | None = None,
    strict: bool = True,
) -> IdentifyResult:
    """Identify ``topology`` parameters from a voltage/current record.

    Both channels get the same DC removal and the same zero-phase low-pass
    (skipped when ``lowpass`` is None). The usable sample range excludes the
    differentiator half-length and, when filtering, the filter's edge trim
    (see :attr:`LowpassFilter.edge_trim`) at each end.

    The summary's ``valid_fraction`` is that of the unsmoothed estimates;
    its statistics are taken over the smoothed trace. With ``strict=False``
    a trace without any valid sample yields empty statistics and a warning
    instead of :class:`NoValidSamples`.
    """
    topology = Topology.parse(topology)
    frame = frame.map(remove_dc)
    lp = design_lowpass(lowpass, frame.sample_rate_hz) if lowpass is not None else None
    conditioned = condition_frame(frame, lp)
    vstack, istack = build_stack(conditioned, topology.required_order, taps)
    if lp is not None:
        lo, hi = vstack.valid_range
        trim = lp.edge_trim
        rng = (max(lo, trim), min(hi, len(frame) - trim))
        if rng[0] >= rng[1]:
            raise NoValidSamples("record too short for the filter edge trim")
        vstack = dataclasses.replace(vstack, valid_range=rng)
        istack = dataclasses.replace(istack, valid_range=rng)
    raw = estimate(topology, vstack, istack, epsilon=epsilon)
    smoothed = smooth_trace(raw, smooth_window)
    warnings = []
    try:
        summary = summarize(smoothed, nominal)
    except NoValidSamples:
        if strict:
            raise
        summary = _empty_summary(topology, nominal)
        warnings.append("no valid samples after smoothing; statistics are empty")
    lo, hi = vstack.valid_range
    in_range = raw.valid[lo:hi]
    summary.valid_fraction = float(in_range.mean()) if in_range.size else 0.0
    if summary.valid_fraction < SINGULAR_FRACTION:
        warnings.insert(
            0,
            f"{topology.value}: the identification system is singular on "
            f"{100 * (1 - summary.valid_fraction):.1f}% of samples; this model needs "
            "non-sinusoidal excitation",
        )
    summary.warnings.extend(warnings)
    return IdentifyResult(topology, conditioned, lp, vstack, istack, raw, smoothed, summary)
