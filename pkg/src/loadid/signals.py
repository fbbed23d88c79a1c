"""Waveforms, aligned voltage/current frames and their CSV representation."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyFile,
    InvalidWaveform,
    IoFailure,
    MalformedFile,
    NonUniformSampling,
)

CSV_HEADER = ("time_s", "v_volts", "i_amps")
MAX_RELATIVE_JITTER = 1e-6


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled real signal.

    Parameters
    ----------
    samples : array_like
        Sample values (volts or amperes).
    sample_interval_s : float
        Spacing ``h`` between samples, in seconds.
    start_time_s : float
        Time stamp of the first sample.
    """

    samples: np.ndarray
    sample_interval_s: float
    start_time_s: float = 0.0

    def __post_init__(self):
        arr = _frozen_array(self.samples)
        object.__setattr__(self, "samples", arr)
        h = float(self.sample_interval_s)
        if not (h > 0 and math.isfinite(h)):
            raise InvalidWaveform(f"sample interval must be positive, got {h}")
        if arr.size < 1:
            raise InvalidWaveform("waveform needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise InvalidWaveform("waveform contains non-finite samples")
        object.__setattr__(self, "sample_interval_s", h)
        object.__setattr__(self, "start_time_s", float(self.start_time_s))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def sample_rate_hz(self) -> float:
        return 1.0 / self.sample_interval_s

    @property
    def times(self) -> np.ndarray:
        return self.start_time_s + self.sample_interval_s * np.arange(len(self))

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples**2)))

    def with_samples(self, samples) -> "Waveform":
        """Same time base, new sample values."""
        return Waveform(samples, self.sample_interval_s, self.start_time_s)


@dataclass(frozen=True, eq=False)
class MeasurementFrame:
    """Voltage and current captured on a common time base."""

    voltage: Waveform
    current: Waveform

    def __post_init__(self):
        v, i = self.voltage, self.current
        if len(v) != len(i):
            raise InvalidWaveform(
                f"voltage has {len(v)} samples but current has {len(i)}"
            )
        if v.sample_interval_s != i.sample_interval_s:
            raise InvalidWaveform("voltage and current sample intervals differ")
        if v.start_time_s != i.start_time_s:
            raise InvalidWaveform("voltage and current start times differ")

    @classmethod
    def from_arrays(cls, v, i, sample_interval_s: float, start_time_s: float = 0.0):
        return cls(
            Waveform(v, sample_interval_s, start_time_s),
            Waveform(i, sample_interval_s, start_time_s),
        )

    def __len__(self) -> int:
        return len(self.voltage)

    @property
    def sample_interval_s(self) -> float:
        return self.voltage.sample_interval_s

    @property
    def sample_rate_hz(self) -> float:
        return self.voltage.sample_rate_hz

    @property
    def start_time_s(self) -> float:
        return self.voltage.start_time_s

    @property
    def times(self) -> np.ndarray:
        return self.voltage.times

    def map(self, fn) -> "MeasurementFrame":
        """Apply ``fn`` (Waveform -> Waveform) to both channels."""
        return MeasurementFrame(fn(self.voltage), fn(self.current))


def remove_dc(w: Waveform) -> Waveform:
    """Subtract the global mean of the record."""
    x = w.samples
    return w.with_samples(x - np.mean(x))


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise MalformedFile(f"row {row}: non-numeric {col!r} value {cell!r}") from None
    if not math.isfinite(value):
        raise MalformedFile(f"row {row}: non-finite {col!r} value {cell!r}")
    return value


def load_csv(path) -> MeasurementFrame:
    """Read a ``time_s,v_volts,i_amps`` file into a frame.

    The sample interval is the median time step, refined to the mean step
    over the whole record when the two agree within the jitter tolerance
    (this removes the rounding of the decimal time stamps).
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} is empty")
        header = [h.strip() for h in header]
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise MalformedFile(f"{path}: missing column(s) {', '.join(missing)}")
        idx = [header.index(c) for c in CSV_HEADER]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise MalformedFile(f"row {lineno}: expected {len(header)} cells")
            rows.append([_parse_float(row[j], lineno, c) for j, c in zip(idx, CSV_HEADER)])
    if not rows:
        raise EmptyFile(f"{path} has a header but no data rows")
    data = np.array(rows)
    t, v, i = data[:, 0], data[:, 1], data[:, 2]
    if t.size == 1:
        raise MalformedFile(f"{path}: a single row does not define a sample interval")
    dt = np.diff(t)
    h = float(np.median(dt))
    if not h > 0:
        raise NonUniformSampling(f"{path}: time column is not increasing")
    jitter = np.max(np.abs(dt - h)) / h
    if np.any(dt <= 0) or jitter > MAX_RELATIVE_JITTER:
        raise NonUniformSampling(
            f"{path}: relative time-step jitter {jitter:.3g} exceeds {MAX_RELATIVE_JITTER:g}"
        )
    span_h = float((t[-1] - t[0]) / (t.size - 1))
    if abs(span_h - h) <= MAX_RELATIVE_JITTER * h:
        h = span_h
    return MeasurementFrame.from_arrays(v, i, h, float(t[0]))


def save_csv(frame: MeasurementFrame, path) -> None:
    """Write ``frame`` in the format read by :func:`load_csv`.

    Time stamps carry 15 significant digits so that round steps such as
    1e-4 s print exactly; samples carry 17 (lossless for float64).
    """
    if frame is None or len(frame) == 0:
        raise IoFailure("refusing to write an empty frame")
    path = Path(path)
    t = frame.times
    v = frame.voltage.samples
    i = frame.current.samples
    lines = [",".join(CSV_HEADER)]
    lines.extend(
        f"{tk:.15g},{vk:.17g},{ik:.17g}" for tk, vk, ik in zip(t.tolist(), v.tolist(), i.tolist())
    )
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror}") from exc


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {path}: {exc.strerror}") from exc
    return path
