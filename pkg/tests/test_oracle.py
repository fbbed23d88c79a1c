from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loadid.errors import InvalidParams, StiffnessWarning
from loadid.estimators import Topology
from loadid.oracle import (
    CorruptionSpec,
    HarmonicExcitation,
    ParameterSchedule,
    _rk4_maps,
    admittance,
    corrupt,
    quantize,
    scenario_record,
    steady_state_current,
    steady_state_frame,
    transient_frame,
)
from loadid.pipeline import identify
from loadid.signals import MeasurementFrame

from conftest import RATE, TWO_TONE, rel_err

# |I| for 100 V at 50 Hz across 1.54 ohm + 10 mH, cross-checked with cmath.
RL_TONE_AMPLITUDE = 28.581691356536126
RL_TONE_PHASE = -1.11502164660763


def rel_rms(a, b):
    return float(np.sqrt(np.mean((a - b) ** 2) / np.mean(b**2)))


# -- steady state --------------------------------------------------------------


def test_ohms_law():
    frame = steady_state_frame("SeriesRL", {"R": 1.0, "L": 0.0}, HarmonicExcitation.tone(50, 10), 0.1)
    t = frame.times
    np.testing.assert_allclose(frame.current.samples, 10 * np.sin(2 * np.pi * 50 * t), atol=1e-12)


def test_rl_phasor_regression():
    import cmath

    z = complex(1.54, 2 * math.pi * 50 * 0.01)
    assert 100 / abs(z) == pytest.approx(RL_TONE_AMPLITUDE, rel=1e-14)
    assert -cmath.phase(z) == pytest.approx(RL_TONE_PHASE, rel=1e-14)
    frame = steady_state_frame("SeriesRL", {"R": 1.54, "L": 0.01}, HarmonicExcitation.tone(50, 100), 0.02)
    t = frame.times
    expect = RL_TONE_AMPLITUDE * np.sin(2 * np.pi * 50 * t + RL_TONE_PHASE)
    np.testing.assert_allclose(frame.current.samples, expect, atol=1e-12)


def test_gcl_resonance_leaves_only_conductance():
    c, gamma, g = 250e-6, 200.0, 0.18
    f0 = math.sqrt(gamma / c) / (2 * math.pi)
    exc = HarmonicExcitation.tone(f0, 50.0)
    frame = steady_state_frame("ParallelGCL", {"C": c, "G": g, "Gamma": gamma}, exc, 0.1)
    np.testing.assert_allclose(frame.current.samples, g * frame.voltage.samples, atol=1e-12)


def test_admittances_by_hand():
    w = 2 * math.pi * 60
    assert admittance("ParallelRC", {"G": 0.2, "C": 1e-4}, w) == pytest.approx(0.2 + 1j * w * 1e-4)
    assert admittance("SeriesRLC", {"S": 4000, "R": 5, "L": 0.005}, w) == pytest.approx(
        1 / (5 + 1j * w * 0.005 + 4000 / (1j * w))
    )
    assert admittance("ParallelR_SeriesRL", {"G_p": 1.0, "R_ser": 0.1, "L_ser": 0.002}, w) == pytest.approx(
        1.0 + 1 / (0.1 + 1j * w * 0.002)
    )


random_rl = st.fixed_dictionaries({"R": st.floats(0.1, 50), "L": st.floats(0.0, 0.1)})


@given(params=random_rl, seed=st.integers(0, 2**32 - 1))
def test_superposition(params, seed):
    rng = np.random.default_rng(seed)
    fa, fb = rng.choice(np.arange(1, 20), size=2, replace=False) * 50.0
    a = HarmonicExcitation(((fa, rng.uniform(1, 100), rng.uniform(0, 6)),))
    b = HarmonicExcitation(((fb, rng.uniform(1, 100), rng.uniform(0, 6)),))
    both = HarmonicExcitation(a.components + b.components)
    t = np.arange(500) / RATE
    total = steady_state_current("SeriesRL", params, both, t)
    parts = steady_state_current("SeriesRL", params, a, t) + steady_state_current("SeriesRL", params, b, t)
    np.testing.assert_allclose(total, parts, atol=1e-12 * max(1.0, np.max(np.abs(total))))


@given(
    topology=st.sampled_from(list(Topology)),
    values=st.lists(st.floats(0.01, 10.0), min_size=3, max_size=3),
)
def test_energy_is_non_negative(topology, values):
    scales = {"R": 1, "L": 1e-2, "S": 1e3, "G": 1, "Gamma": 100, "C": 1e-4, "G_p": 1, "R_ser": 1, "L_ser": 1e-2}
    params = {n: v * scales[n] for n, v in zip(topology.param_names, values)}
    frame = steady_state_frame(topology, params, TWO_TONE, 0.02)  # one fundamental period
    assert np.mean(frame.voltage.samples * frame.current.samples) >= -1e-9


@pytest.mark.parametrize(
    "params", [{"R": -1.0, "L": 0.01}, {"R": 1.0}, {"R": 1.0, "L": 0.01, "C": 1.0}, {"R": math.nan, "L": 0.0}]
)
def test_invalid_params(params):
    with pytest.raises(InvalidParams):
        steady_state_frame("SeriesRL", params, TWO_TONE, 0.01)


def test_zero_impedance_rejected():
    with pytest.raises(InvalidParams):
        steady_state_frame("SeriesRL", {"R": 0.0, "L": 0.0}, TWO_TONE, 0.01)


def test_zero_duration_rejected():
    with pytest.raises(InvalidParams):
        steady_state_frame("SeriesRL", {"R": 1.0, "L": 0.0}, TWO_TONE, 0.0)


@pytest.mark.parametrize(
    "components", [(), ((50, 1, 0), (50, 2, 0)), ((-50, 1, 0),), ((50, -1, 0),)]
)
def test_invalid_excitation(components):
    with pytest.raises(InvalidParams):
        HarmonicExcitation(components)


def test_excitation_helpers():
    exc = HarmonicExcitation.distorted()
    assert [c[0] for c in exc.components] == [50.0, 150.0]
    assert exc.components[1][1] == pytest.approx(20.0)
    assert exc.non_sinusoidal and not HarmonicExcitation.tone().non_sinusoidal
    t = np.linspace(0, 0.02, 7)
    np.testing.assert_allclose(
        exc.voltage(t, derivative=1),
        100 * 2 * np.pi * 50 * np.cos(2 * np.pi * 50 * t) + 20 * 2 * np.pi * 150 * np.cos(2 * np.pi * 150 * t),
    )


# -- schedules and transients --------------------------------------------------


def test_schedule_invariants():
    with pytest.raises(InvalidParams):
        ParameterSchedule(())
    with pytest.raises(InvalidParams):
        ParameterSchedule(((0.1, {"R": 1.0, "L": 0.0}),))
    with pytest.raises(InvalidParams):
        ParameterSchedule(((0.0, {"R": 1.0}), (0.5, {"R": 2.0}), (0.5, {"R": 3.0})))
    s = ParameterSchedule(((0.0, {"R": 1.0}), (0.5, {"R": 2.0})))
    assert s.at(0.49) == {"R": 1.0} and s.at(0.5) == {"R": 2.0}
    assert s.to_list()[1] == {"start_time_s": 0.5, "params": {"R": 2.0}}


def test_rk4_map_matches_explicit_steps(rng):
    a = rng.normal(size=(2, 2))
    h = 0.01
    b = lambda t: np.array([np.sin(3 * t), np.cos(t)])
    f = lambda t, x: a @ x + b(t)
    phi, p0, pm, p1 = _rk4_maps(a, h)
    x = rng.normal(size=2)
    t = 0.3
    k1 = f(t, x)
    k2 = f(t + h / 2, x + h / 2 * k1)
    k3 = f(t + h / 2, x + h / 2 * k2)
    k4 = f(t + h, x + h * k3)
    explicit = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    mapped = phi @ x + p0 @ b(t) + pm @ b(t + h / 2) + p1 @ b(t + h)
    np.testing.assert_allclose(mapped, explicit, rtol=1e-13)


@pytest.mark.parametrize(
    "topology, params",
    [
        ("SeriesRL", {"R": 5.5, "L": 0.01}),
        ("SeriesRLC", {"S": 4000.0, "R": 5.0, "L": 0.005}),
        ("ParallelRC", {"G": 0.18, "C": 250e-6}),
        ("ParallelR_SeriesRL", {"G_p": 1.299, "R_ser": 0.5, "L_ser": 0.005}),
    ],
)
def test_transient_converges_to_steady_state(topology, params):
    frame = transient_frame(topology, ParameterSchedule.constant(params), TWO_TONE, 0.5)
    steady = steady_state_frame(topology, params, TWO_TONE, 0.5)
    tail = slice(4000, None)  # >= 10 time constants in every case above
    assert rel_rms(frame.current.samples[tail], steady.current.samples[tail]) < 1e-6
    np.testing.assert_allclose(frame.voltage.samples, steady.voltage.samples, atol=1e-10)


@pytest.mark.parametrize(
    "topology, params",
    [("ParallelGL", {"G": 1.3, "Gamma": 200.0}), ("ParallelGCL", {"C": 250e-6, "G": 0.18, "Gamma": 200.0})],
)
def test_lossless_inductor_keeps_a_constant_offset(topology, params):
    # Starting from rest, an ideal inductor keeps the initial flux offset forever;
    # the difference to the steady state is a constant current.
    frame = transient_frame(topology, ParameterSchedule.constant(params), TWO_TONE, 0.2)
    steady = steady_state_frame(topology, params, TWO_TONE, 0.2)
    diff = frame.current.samples - steady.current.samples
    assert np.ptp(diff) < 1e-6 * np.max(np.abs(steady.current.samples))


def test_resistance_step_changes_envelope_by_impedance_ratio():
    exc = HarmonicExcitation.tone(50, 100)
    sched = ParameterSchedule(((0.0, {"R": 5.5, "L": 0.01}), (0.5, {"R": 19.2, "L": 0.01})))
    frame = transient_frame("SeriesRL", sched, exc, 1.0)
    i = frame.current.samples
    before = np.max(np.abs(i[3000:5000]))
    after = np.max(np.abs(i[8000:]))
    z = lambda r: abs(complex(r, 2 * np.pi * 50 * 0.01))
    assert after / before == pytest.approx(z(5.5) / z(19.2), rel=1e-3)


def test_state_continuous_across_switch():
    sched = ParameterSchedule(((0.0, {"R": 5.5, "L": 0.01}), (0.5, {"R": 19.2, "L": 0.01})))
    i = transient_frame("SeriesRL", sched, TWO_TONE, 1.0).current.samples
    jumps = np.abs(np.diff(i))
    assert jumps[4995:5005].max() < 3 * jumps[4000:4990].max()


def test_zero_excitation_is_zero():
    exc = HarmonicExcitation(((50.0, 0.0, 0.0),))
    frame = transient_frame("SeriesRLC", ParameterSchedule.constant({"S": 4000, "R": 5, "L": 0.005}), exc, 0.05)
    assert not np.any(frame.current.samples) and not np.any(frame.voltage.samples)


def test_stiffness_warning():
    with pytest.warns(StiffnessWarning):
        transient_frame("SeriesRL", ParameterSchedule.constant({"R": 10.0, "L": 5e-5}), TWO_TONE, 0.01)


def test_no_warning_for_mild_circuit():
    with warnings.catch_warnings():
        warnings.simplefilter("error", StiffnessWarning)
        transient_frame("SeriesRL", ParameterSchedule.constant({"R": 10.0, "L": 0.01}), TWO_TONE, 0.01)


def test_oversample_minimum():
    with pytest.raises(InvalidParams):
        transient_frame("SeriesRL", ParameterSchedule.constant({"R": 1, "L": 0.01}), TWO_TONE, 0.1, oversample=5)


def test_scenario_record_dispatch():
    const = ParameterSchedule.constant({"R": 1.0, "L": 0.01})
    a = scenario_record("SeriesRL", const, TWO_TONE, 0.05, RATE)
    b = steady_state_frame("SeriesRL", {"R": 1.0, "L": 0.01}, TWO_TONE, 0.05, RATE)
    np.testing.assert_array_equal(a.current.samples, b.current.samples)


# -- corruption ----------------------------------------------------------------


def unit_rms_frame(n=10_000):
    t = np.arange(n) / RATE
    x = np.sqrt(2) * np.sin(2 * np.pi * 50 * t)
    return MeasurementFrame.from_arrays(x, x.copy(), 1 / RATE)


def test_noop_spec_is_identity():
    frame = unit_rms_frame()
    assert corrupt(frame, CorruptionSpec()) is frame


def test_snr_40db_on_unit_rms():
    frame = unit_rms_frame()
    noisy = corrupt(frame, CorruptionSpec(snr_db=40.0, seed=1))
    for clean, dirty in ((frame.voltage, noisy.voltage), (frame.current, noisy.current)):
        noise = dirty.samples - clean.samples
        rms = np.sqrt(np.mean(noise**2))
        assert abs(20 * np.log10(clean.rms() / rms) - 40) < 0.1
        assert rms == pytest.approx(0.01, rel=1e-3)


@given(snr=st.floats(0, 80), seed=st.integers(0, 2**32 - 1))
def test_snr_exact_property(snr, seed):
    frame = unit_rms_frame(2000)
    noisy = corrupt(frame, CorruptionSpec(snr_db=snr, seed=seed))
    noise = noisy.current.samples - frame.current.samples
    measured = 20 * np.log10(frame.current.rms() / np.sqrt(np.mean(noise**2)))
    assert abs(measured - snr) < 0.1


def test_quantized_small_sinusoid():
    t = np.arange(2000) / RATE
    x = 0.02 * np.sin(2 * np.pi * 50 * t)
    frame = MeasurementFrame.from_arrays(x, x, 1 / RATE)
    q = corrupt(frame, CorruptionSpec(adc_lsb=0.05)).current.samples
    assert set(np.unique(q)) <= {-0.05, 0.0, 0.05}


def test_quantizer_levels():
    q = quantize(np.linspace(-1, 1, 1001), 0.1)
    np.testing.assert_allclose(q / 0.1, np.round(q / 0.1), atol=1e-12)
    assert np.max(np.abs(q - np.linspace(-1, 1, 1001))) <= 0.05 + 1e-12
    assert quantize(np.array([0.0]), 0.1)[0] == 0.0


def test_quantize_selected_channel_only():
    frame = unit_rms_frame(500)
    out = corrupt(frame, CorruptionSpec(adc_lsb=0.5, adc_channels=("i",)))
    np.testing.assert_array_equal(out.voltage.samples, frame.voltage.samples)
    assert len(np.unique(out.current.samples)) <= 7  # levels -1.5 .. 1.5


def test_seeded_determinism():
    frame = unit_rms_frame(1000)
    a = corrupt(frame, CorruptionSpec(snr_db=30, adc_lsb=0.01, seed=7))
    b = corrupt(frame, CorruptionSpec(snr_db=30, adc_lsb=0.01, seed=7))
    c = corrupt(frame, CorruptionSpec(snr_db=30, adc_lsb=0.01, seed=8))
    np.testing.assert_array_equal(a.current.samples, b.current.samples)
    np.testing.assert_array_equal(a.voltage.samples, b.voltage.samples)
    assert not np.array_equal(a.current.samples, c.current.samples)


def test_invalid_corruption_spec():
    with pytest.raises(InvalidParams):
        CorruptionSpec(adc_lsb=0.0)
    with pytest.raises(InvalidParams):
        CorruptionSpec(adc_channels=("x",))


# -- end to end ----------------------------------------------------------------

PARAM_RANGES = {
    "SeriesRL": {"R": (0.5, 20.0), "L": (1e-3, 5e-2)},
    "SeriesRLC": {"S": (1e3, 2e4), "R": (1.0, 20.0), "L": (1e-3, 2e-2)},
    "ParallelGL": {"G": (0.05, 2.0), "Gamma": (20.0, 1000.0)},
    "ParallelGCL": {"C": (5e-5, 5e-4), "G": (0.05, 1.0), "Gamma": (20.0, 1000.0)},
    "ParallelRC": {"G": (0.05, 2.0), "C": (5e-5, 1e-3)},
    "ParallelR_SeriesRL": {"G_p": (0.2, 2.0), "R_ser": (0.1, 2.0), "L_ser": (1e-3, 2e-2)},
}


@st.composite
def circuits(draw):
    topology = draw(st.sampled_from(sorted(PARAM_RANGES)))
    params = {n: draw(st.floats(lo, hi)) for n, (lo, hi) in PARAM_RANGES[topology].items()}
    return topology, params


@given(circuit=circuits())
def test_pipeline_recovers_oracle_parameters(circuit):
    topology, params = circuit
    frame = steady_state_frame(topology, params, TWO_TONE, 0.2)
    summary = identify(frame, topology, lowpass=None, nominal=params).summary
    for name, stats in summary.stats.items():
        assert stats.percent_error < 0.5, (name, stats)
