"""Synthetic voltage/current records with known circuit parameters.

Steady-state records are built exactly by phasor superposition, one
harmonic at a time. Records with parameter steps come from integrating the
circuit's state equations with a fixed-step classical Runge-Kutta scheme.
Both can then be degraded with seeded noise and ADC quantization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidParams, StiffnessWarning
from .estimators import Topology
from .signals import MeasurementFrame

DEFAULT_SAMPLE_RATE_HZ = 10_000.0
DEFAULT_OVERSAMPLE = 10


@dataclass(frozen=True)
class HarmonicExcitation:
    """Source voltage ``v(t) = sum A sin(2 pi f t + phi)``.

    ``components`` holds ``(frequency_hz, amplitude_v, phase_rad)`` triples.
    """

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        comps = tuple((float(f), float(a), float(p)) for f, a, p in self.components)
        if not comps:
            raise InvalidParams("excitation needs at least one harmonic component")
        freqs = [c[0] for c in comps]
        if any(f <= 0 or not math.isfinite(f) for f in freqs):
            raise InvalidParams("harmonic frequencies must be positive")
        if len(set(freqs)) != len(freqs):
            raise InvalidParams("harmonic frequencies must be distinct")
        if any(a < 0 or not math.isfinite(a) for _, a, _ in comps):
            raise InvalidParams("harmonic amplitudes must be non-negative")
        object.__setattr__(self, "components", comps)

    @classmethod
    def distorted(cls, fundamental_hz: float = 50.0, amplitude_v: float = 100.0,
                  harmonics: Mapping[int, float] | None = None) -> "HarmonicExcitation":
        """Fundamental plus odd harmonics given as ``{order: relative amplitude}``.

        The default is a 3rd harmonic at 20 % of the fundamental.
        """
        harmonics = {3: 0.2} if harmonics is None else harmonics
        comps = [(fundamental_hz, amplitude_v, 0.0)]
        comps += [(n * fundamental_hz, rel * amplitude_v, 0.0) for n, rel in harmonics.items()]
        return cls(tuple(comps))

    @classmethod
    def tone(cls, frequency_hz: float = 50.0, amplitude_v: float = 100.0) -> "HarmonicExcitation":
        return cls(((frequency_hz, amplitude_v, 0.0),))

    @property
    def non_sinusoidal(self) -> bool:
        return sum(1 for _, a, _ in self.components if a > 0) >= 2

    def voltage(self, t, derivative: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for f, a, ph in self.components:
            w = 2 * math.pi * f
            out += a * w**derivative * np.sin(w * t + ph + derivative * math.pi / 2)
        return out


@dataclass(frozen=True)
class ParameterSchedule:
    """Piecewise-constant parameters: ``segments`` of ``(start_time_s, params)``."""

    segments: tuple[tuple[float, dict], ...]

    def __post_init__(self):
        segs = tuple((float(t0), dict(p)) for t0, p in self.segments)
        if not segs:
            raise InvalidParams("schedule needs at least one segment")
        if segs[0][0] != 0.0:
            raise InvalidParams("first schedule segment must start at t = 0")
        starts = [t0 for t0, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise InvalidParams("schedule start times must be strictly increasing")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, params: Mapping[str, float]) -> "ParameterSchedule":
        return cls(((0.0, dict(params)),))

    def at(self, t: float) -> dict:
        current = self.segments[0][1]
        for t0, p in self.segments:
            if t0 <= t:
                current = p
        return current

    def to_list(self) -> list[dict]:
        return [{"start_time_s": t0, "params": dict(p)} for t0, p in self.segments]


@dataclass(frozen=True)
class CorruptionSpec:
    """Measurement-chain degradation.

    ``snr_db`` sets white Gaussian noise per channel relative to that
    channel's RMS; ``adc_lsb`` is the step of a mid-tread quantizer applied
    to the channels listed in ``adc_channels`` (``"v"``, ``"i"``).
    """

    snr_db: float | None = None
    adc_lsb: float | None = None
    seed: int = 0
    adc_channels: tuple[str, ...] = ("v", "i")

    def __post_init__(self):
        if self.adc_lsb is not None and not self.adc_lsb > 0:
            raise InvalidParams(f"adc_lsb must be positive, got {self.adc_lsb}")
        if set(self.adc_channels) - {"v", "i"}:
            raise InvalidParams(f"adc_channels must be drawn from 'v', 'i': {self.adc_channels}")


def check_params(topology, params: Mapping[str, float]) -> dict:
    topology = Topology.parse(topology)
    names = topology.param_names
    missing = [n for n in names if n not in params]
    extra = [n for n in params if n not in names]
    if missing or extra:
        raise InvalidParams(
            f"{topology.value} takes parameters {names}; missing {missing}, unexpected {extra}"
        )
    out = {}
    for n in names:
        value = float(params[n])
        if not math.isfinite(value) or value < 0:
            raise InvalidParams(f"{n} must be finite and non-negative, got {value}")
        out[n] = value
    return out


def admittance(topology, params: Mapping[str, float], omega: float) -> complex:
    """Complex admittance ``I/V`` of the topology at angular frequency ``omega``."""
    topology = Topology.parse(topology)
    p = check_params(topology, params)
    jw = 1j * omega
    if topology is Topology.SERIES_RL:
        z = p["R"] + jw * p["L"]
    elif topology is Topology.SERIES_RLC:
        z = p["R"] + jw * p["L"] + p["S"] / jw
    elif topology is Topology.PARALLEL_GL:
        return p["G"] + p["Gamma"] / jw
    elif topology is Topology.PARALLEL_GCL:
        return jw * p["C"] + p["G"] + p["Gamma"] / jw
    elif topology is Topology.PARALLEL_RC:
        return p["G"] + jw * p["C"]
    else:
        branch = p["R_ser"] + jw * p["L_ser"]
        if branch == 0:
            raise InvalidParams("series branch R_ser + jwL_ser is a short circuit")
        return p["G_p"] + 1.0 / branch
    if z == 0:
        raise InvalidParams(f"{topology.value} impedance is zero at {omega / (2 * math.pi):g} Hz")
    return 1.0 / z


def _sample_times(duration_s: float, sample_rate_hz: float, start_time_s: float = 0.0):
    if not duration_s > 0:
        raise InvalidParams(f"duration must be positive, got {duration_s}")
    if not sample_rate_hz > 0:
        raise InvalidParams(f"sample rate must be positive, got {sample_rate_hz}")
    n = int(round(duration_s * sample_rate_hz))
    if n < 1:
        raise InvalidParams("duration shorter than one sample")
    return start_time_s + np.arange(n) / sample_rate_hz


def steady_state_current(topology, params, excitation: HarmonicExcitation, t) -> np.ndarray:
    i = np.zeros_like(np.asarray(t, dtype=float))
    for f, a, ph in excitation.components:
        w = 2 * math.pi * f
        y = admittance(topology, params, w)
        i += abs(y) * a * np.sin(w * t + ph + np.angle(y))
    return i


def steady_state_frame(
    topology,
    params: Mapping[str, float],
    excitation: HarmonicExcitation,
    duration_s: float = 1.0,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    start_time_s: float = 0.0,
) -> MeasurementFrame:
    """Exact periodic steady state, sampled uniformly."""
    t = _sample_times(duration_s, sample_rate_hz, start_time_s)
    v = excitation.voltage(t)
    i = steady_state_current(topology, params, excitation, t)
    return MeasurementFrame.from_arrays(v, i, 1.0 / sample_rate_hz, start_time_s)


@dataclass
class _StateSpace:
    """``x' = A x + B u``, ``i = C x + D u`` with input ``u = (v, v')``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray = field(default_factory=lambda: np.zeros(2))


def state_space(topology, params: Mapping[str, float]) -> _StateSpace:
    topology = Topology.parse(topology)
    p = check_params(topology, params)
    empty = (np.zeros((0, 0)), np.zeros((0, 2)), np.zeros(0))
    if topology is Topology.SERIES_RL:
        r, ell = p["R"], p["L"]
        if ell > 0:
            return _StateSpace(np.array([[-r / ell]]), np.array([[1 / ell, 0.0]]), np.array([1.0]))
        if r == 0:
            raise InvalidParams("SeriesRL with R = L = 0 is a short circuit")
        return _StateSpace(*empty, np.array([1 / r, 0.0]))
    if topology is Topology.SERIES_RLC:
        s, r, ell = p["S"], p["R"], p["L"]
        if ell > 0:
            return _StateSpace(
                np.array([[0.0, 1.0], [-s / ell, -r / ell]]),
                np.array([[0.0, 0.0], [1 / ell, 0.0]]),
                np.array([0.0, 1.0]),
            )
        if r == 0:
            raise InvalidParams("SeriesRLC with L = R = 0 has no finite state equation")
        # state is the capacitor charge q; R i + S q = v
        return _StateSpace(
            np.array([[-s / r]]), np.array([[1 / r, 0.0]]), np.array([-s / r]), np.array([1 / r, 0.0])
        )
    if topology is Topology.PARALLEL_GL:
        return _StateSpace(
            np.zeros((1, 1)), np.array([[p["Gamma"], 0.0]]), np.array([1.0]), np.array([p["G"], 0.0])
        )
    if topology is Topology.PARALLEL_GCL:
        return _StateSpace(
            np.zeros((1, 1)),
            np.array([[p["Gamma"], 0.0]]),
            np.array([1.0]),
            np.array([p["G"], p["C"]]),
        )
    if topology is Topology.PARALLEL_RC:
        return _StateSpace(*empty, np.array([p["G"], p["C"]]))
    g, r, ell = p["G_p"], p["R_ser"], p["L_ser"]
    if ell > 0:
        return _StateSpace(
            np.array([[-r / ell]]), np.array([[1 / ell, 0.0]]), np.array([1.0]), np.array([g, 0.0])
        )
    if r == 0:
        raise InvalidParams("series branch with R_ser = L_ser = 0 is a short circuit")
    return _StateSpace(*empty, np.array([g + 1 / r, 0.0]))


def _rk4_maps(a: np.ndarray, h: float):
    """Classical RK4 step for ``x' = A x + b(t)`` written as a linear map.

    One step equals ``x+ = Phi x + P0 b(t) + Pm b(t + h/2) + P1 b(t + h)``.
    """
    n = a.shape[0]
    eye = np.eye(n)
    a2 = a @ a
    a3 = a2 @ a
    a4 = a3 @ a
    phi = eye + h * a + h**2 / 2 * a2 + h**3 / 6 * a3 + h**4 / 24 * a4
    p0 = h / 6 * (eye + h * a + h**2 / 2 * a2 + h**3 / 4 * a3)
    pm = h / 6 * (4 * eye + 2 * h * a + h**2 / 2 * a2)
    p1 = h / 6 * eye
    return phi, p0, pm, p1


def transient_frame(
    topology,
    schedule: ParameterSchedule,
    excitation: HarmonicExcitation,
    duration_s: float = 1.0,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    oversample: int = DEFAULT_OVERSAMPLE,
) -> MeasurementFrame:
    """Integrate the circuit from rest through a parameter schedule.

    Integration runs at ``oversample * sample_rate_hz`` and is decimated by
    plain subsampling. Parameter switches take effect at the first
    integration step at or after their start time; state (inductor
    currents, capacitor charge) is carried across unchanged.
    """
    topology = Topology.parse(topology)
    if oversample < 10:
        raise InvalidParams(f"oversample must be >= 10, got {oversample}")
    t_out = _sample_times(duration_s, sample_rate_hz)
    n_out = t_out.size
    h = 1.0 / (sample_rate_hz * oversample)
    n_fine = (n_out - 1) * oversample + 1
    t_fine = np.arange(n_fine) * h
    models = [(t0, state_space(topology, p)) for t0, p in schedule.segments]
    dims = {m.a.shape[0] for _, m in models}
    if len(dims) != 1:
        raise InvalidParams("schedule changes the number of circuit states")
    dim = dims.pop()
    for t0, m in models:
        if dim and np.any(np.abs(np.linalg.eigvals(m.a)) * h * 5 > 1):
            warnings.warn(
                f"segment at t = {t0:g} s has a time constant shorter than 5 integration steps",
                StiffnessWarning,
                stacklevel=2,
            )

    v = excitation.voltage(t_fine)
    dv = excitation.voltage(t_fine, derivative=1)
    starts = np.array([t0 for t0, _ in models])
    seg_of_step = np.searchsorted(starts, t_fine + 1e-9 * h, side="right") - 1

    x_all = np.zeros((n_fine, dim))
    if dim:
        v_mid = excitation.voltage(t_fine[:-1] + h / 2)
        dv_mid = excitation.voltage(t_fine[:-1] + h / 2, derivative=1)
        x = np.zeros(dim)
        k = 0
        while k < n_fine - 1:
            seg = seg_of_step[k]
            stop = k
            while stop < n_fine - 1 and seg_of_step[stop] == seg:
                stop += 1
            m = models[seg][1]
            phi, p0, pm, p1 = _rk4_maps(m.a, h)
            u0 = np.column_stack([v[k:stop], dv[k:stop]])
            um = np.column_stack([v_mid[k:stop], dv_mid[k:stop]])
            u1 = np.column_stack([v[k + 1 : stop + 1], dv[k + 1 : stop + 1]])
            drive = u0 @ m.b.T @ p0.T + um @ m.b.T @ pm.T + u1 @ m.b.T @ p1.T
            for j in range(stop - k):
                x = phi @ x + drive[j]
                x_all[k + 1 + j] = x
            k = stop

    i_fine = np.empty(n_fine)
    for seg, (_, m) in enumerate(models):
        sel = seg_of_step == seg
        i_fine[sel] = (x_all[sel] @ m.c if dim else 0.0) + m.d[0] * v[sel] + m.d[1] * dv[sel]
    step = slice(0, n_fine, oversample)
    return MeasurementFrame.from_arrays(v[step], i_fine[step], 1.0 / sample_rate_hz)


def quantize(x: np.ndarray, lsb: float) -> np.ndarray:
    """Mid-tread uniform quantizer (a level sits at zero)."""
    return lsb * np.round(x / lsb)


def corrupt(frame: MeasurementFrame, spec: CorruptionSpec) -> MeasurementFrame:
    """Add seeded white noise at ``spec.snr_db`` and then quantize.

    Each noise realization is rescaled so its RMS over the record matches
    the requested SNR exactly.
    """
    if spec.snr_db is None and spec.adc_lsb is None:
        return frame
    rng = np.random.default_rng(spec.seed)
    channels = {"v": frame.voltage.samples.copy(), "i": frame.current.samples.copy()}
    if spec.snr_db is not None:
        for key in ("v", "i"):
            x = channels[key]
            noise = rng.standard_normal(x.size)
            sig_rms = math.sqrt(float(np.mean(x * x)))
            noise_rms = math.sqrt(float(np.mean(noise * noise)))
            if sig_rms > 0 and noise_rms > 0:
                channels[key] = x + noise * (sig_rms * 10 ** (-spec.snr_db / 20) / noise_rms)
    if spec.adc_lsb is not None:
        for key in spec.adc_channels:
            channels[key] = quantize(channels[key], spec.adc_lsb)
    return MeasurementFrame(
        frame.voltage.with_samples(channels["v"]), frame.current.with_samples(channels["i"])
    )


def scenario_record(
    topology,
    schedule: ParameterSchedule,
    excitation: HarmonicExcitation,
    duration_s: float,
    sample_rate_hz: float,
    corruption: CorruptionSpec | None = None,
    oversample: int = DEFAULT_OVERSAMPLE,
) -> MeasurementFrame:
    """Steady state for a single-segment schedule, integrated transient otherwise."""
    if len(schedule.segments) == 1:
        frame = steady_state_frame(
            topology, schedule.segments[0][1], excitation, duration_s, sample_rate_hz
        )
    else:
        frame = transient_frame(
            topology, schedule, excitation, duration_s, sample_rate_hz, oversample
        )
    return corrupt(frame, corruption) if corruption is not None else frame


def excitation_to_list(excitation: HarmonicExcitation) -> list[dict]:
    return [
        {"frequency_hz": f, "amplitude_v": a, "phase_rad": p} for f, a, p in excitation.components
    ]


def parse_components(items: Sequence[Sequence[float]]) -> HarmonicExcitation:
    return HarmonicExcitation(tuple(tuple(float(x) for x in it) for it in items))
