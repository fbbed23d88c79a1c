"""Low-pass conditioning and the filter-configuration sweep.

Filters are maximally flat (Butterworth) designs obtained from the analog
prototype by the bilinear transform with cutoff prewarping, stored as
second-order sections and applied forward and backward so that voltage and
current keep their exact relative timing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import signal

from .errors import InvalidCutoff, LoadIdError, SignalTooShort
from .signals import MeasurementFrame, Waveform

SUPPORTED_ORDERS = (2, 4, 6, 8, 10)
CUTOFF_RANGE_HZ = (100.0, 2000.0)
DEFAULT_SWEEP_ORDERS = SUPPORTED_ORDERS
DEFAULT_SWEEP_CUTOFFS_HZ = tuple(100.0 + 200.0 * k for k in range(10))
STD_WEIGHT = 0.1
SETTLE_TOL = 1e-6


@dataclass(frozen=True)
class LowpassSpec:
    order: int
    cutoff_hz: float
    family: str = "MaximallyFlat"

    def __post_init__(self):
        if self.family != "MaximallyFlat":
            raise InvalidCutoff(f"unsupported filter family {self.family!r}")
        if self.order not in SUPPORTED_ORDERS:
            raise InvalidCutoff(f"filter order must be one of {SUPPORTED_ORDERS}, got {self.order}")
        lo, hi = CUTOFF_RANGE_HZ
        if not lo <= self.cutoff_hz <= hi:
            raise InvalidCutoff(f"cutoff must lie in [{lo:g}, {hi:g}] Hz, got {self.cutoff_hz:g}")


@dataclass(frozen=True, eq=False)
class LowpassFilter:
    spec: LowpassSpec
    sample_rate_hz: float
    sos: np.ndarray

    def response(self, freqs_hz) -> np.ndarray:
        """Complex response of one (forward) pass at ``freqs_hz``."""
        freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
        _, h = signal.sosfreqz(self.sos, worN=freqs, fs=self.sample_rate_hz)
        return h

    def group_delay_samples(self) -> float:
        """Low-frequency group delay of a single forward pass, in samples.

        Forward-backward application cancels it; it is still the one-sided
        extent of the combined impulse response, i.e. how far a step
        smears in time.
        """
        w = np.array([1e-4 * math.pi])
        total = 0.0
        for sec in self.sos:
            _, gd = signal.group_delay((sec[:3], sec[3:]), w=w)
            total += float(gd[0])
        return total

    def settling_samples(self, tol: float = SETTLE_TOL) -> int:
        """Index past which the forward impulse response stays below ``tol * peak``."""
        n = 64
        while True:
            impulse = np.zeros(n)
            impulse[0] = 1.0
            h = np.abs(signal.sosfilt(self.sos, impulse))
            above = np.nonzero(h > tol * h.max())[0]
            last = int(above[-1]) + 1
            if last < n // 2 or n >= 1 << 20:
                return last
            n *= 2

    @property
    def edge_trim(self) -> int:
        """Samples dropped at each end after forward-backward filtering."""
        return max(3 * self.spec.order, self.settling_samples())


def design_lowpass(spec: LowpassSpec, sample_rate_hz: float) -> LowpassFilter:
    if not 0 < spec.cutoff_hz < sample_rate_hz / 2:
        raise InvalidCutoff(
            f"cutoff {spec.cutoff_hz:g} Hz must lie below Nyquist ({sample_rate_hz / 2:g} Hz)"
        )
    sos = signal.butter(spec.order, spec.cutoff_hz, btype="low", fs=sample_rate_hz, output="sos")
    return LowpassFilter(spec, float(sample_rate_hz), sos)


def zero_phase_filter(lp: LowpassFilter, w: Waveform) -> Waveform:
    """Forward-backward application; net response ``|H|**2`` with zero phase."""
    if not math.isclose(w.sample_rate_hz, lp.sample_rate_hz, rel_tol=1e-9):
        raise InvalidCutoff(
            f"filter designed for {lp.sample_rate_hz:g} Hz applied to {w.sample_rate_hz:g} Hz data"
        )
    pad = 3 * lp.spec.order
    if len(w) <= pad:
        raise SignalTooShort(f"zero-phase filtering needs more than {pad} samples, got {len(w)}")
    return w.with_samples(signal.sosfiltfilt(lp.sos, w.samples, padlen=pad))


def condition_frame(frame: MeasurementFrame, lp: LowpassFilter | None) -> MeasurementFrame:
    """Filter both channels with the same filter (no-op for ``None``)."""
    if lp is None:
        return frame
    return frame.map(lambda w: zero_phase_filter(lp, w))


@dataclass
class SweepEntry:
    spec: LowpassSpec
    summary: Any = None
    metric: float = math.inf
    error: dict | None = None
    trace: Any = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        out = {
            "family": self.spec.family,
            "order": self.spec.order,
            "cutoff_hz": self.spec.cutoff_hz,
            "status": "ok" if self.ok else "failed",
        }
        if self.ok:
            out["metric"] = self.metric
            out["summary"] = self.summary.to_dict()
        else:
            out["error"] = self.error
        return out


@dataclass
class SweepReport:
    entries: list[SweepEntry]
    chosen: int | None

    @property
    def chosen_entry(self) -> SweepEntry | None:
        return None if self.chosen is None else self.entries[self.chosen]

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "chosen": self.chosen,
        }


def selection_metric(summary, nominal: dict[str, float]) -> float:
    """Sum over parameters of ``|median - nominal| / |nominal| + 0.1 std / |nominal|``."""
    total = 0.0
    for name, nom in nominal.items():
        stats = summary.stats[name]
        scale = abs(nom) if nom != 0 else 1.0
        total += abs(stats.median - nom) / scale + STD_WEIGHT * stats.std / scale
    return total


def sweep_grid(
    orders: Iterable[int] = DEFAULT_SWEEP_ORDERS,
    cutoffs_hz: Iterable[float] = DEFAULT_SWEEP_CUTOFFS_HZ,
) -> list[LowpassSpec]:
    return [LowpassSpec(o, float(c)) for o in orders for c in cutoffs_hz]


def filter_sweep(
    frame: MeasurementFrame,
    topology,
    nominal: dict[str, float],
    grid: Sequence[LowpassSpec] | None = None,
    **pipeline_options,
) -> SweepReport:
    """Run the whole identification pipeline once per grid configuration.

    A configuration that raises is recorded as failed; the sweep goes on.
    The chosen entry minimises :func:`selection_metric`, ties going to the
    lower order and then the lower cutoff.
    """
    from .pipeline import identify

    grid = sweep_grid() if grid is None else list(grid)
    entries = []
    for spec in grid:
        entry = SweepEntry(spec)
        try:
            result = identify(frame, topology, lowpass=spec, nominal=nominal, **pipeline_options)
            entry.summary = result.summary
            entry.trace = result.smoothed
            entry.metric = selection_metric(result.summary, nominal)
            if not math.isfinite(entry.metric):
                raise ValueError("selection metric is not finite")
        except (LoadIdError, ValueError, FloatingPointError) as exc:
            code = getattr(exc, "code", type(exc).__name__)
            entry.error = {"code": code, "message": str(exc)}
            entry.summary = None
            entry.metric = math.inf
        entries.append(entry)
    ranked = [
        (e.metric, e.spec.order, e.spec.cutoff_hz, k) for k, e in enumerate(entries) if e.ok
    ]
    chosen = min(ranked)[3] if ranked else None
    return SweepReport(entries, chosen)
