import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ref_flicker, ref_harmonics, ref_transient, ref_window
from pqcnn.signals import (
    EventClass,
    EventParams,
    ParameterRangeError,
    SignalSpec,
    gen_flicker,
    gen_harmonics,
    gen_interruption,
    gen_sag,
    gen_swell,
    gen_transient,
    generate,
    sample_params,
    unit_step,
)

SPEC = SignalSpec()
T = SPEC.time()
PURE = np.sin(SPEC.omega * T)


def test_spec_defaults():
    assert SPEC.n_samples == 1000
    assert SPEC.sample_rate_hz == 5000


@pytest.mark.parametrize(
    "kwargs",
    [dict(sample_rate_hz=800.0), dict(duration_s=0.0), dict(duration_s=0.00031), dict(duration_s=0.0002)],
)
def test_spec_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        SignalSpec(**kwargs)


def test_event_class_codes():
    assert [int(c) for c in EventClass] == [1, 2, 3, 4, 5, 6]


@pytest.mark.parametrize("t,expected", [(0.0, 1.0), (-0.01, 0.0), (0.01, 1.0)])
def test_unit_step(t, expected):
    assert unit_step(t) == expected


# -------------------------------------------------------------- window classes


@pytest.mark.parametrize("gen", [gen_sag, gen_swell, gen_interruption])
def test_zero_alpha_is_pure_sine(gen):
    w = gen(SPEC, EventParams(alpha=0.0, t1_s=0.05, t2_s=0.1), check=False)
    np.testing.assert_array_equal(w.samples, PURE)


def test_sag_inside_window_is_scaled():
    w = gen_sag(SPEC, EventParams(alpha=0.5, t1_s=0.05, t2_s=0.1))
    inside = (T > 0.05) & (T < 0.1)
    np.testing.assert_allclose(w.samples[inside], 0.5 * PURE[inside], rtol=0, atol=1e-15)


def test_sag_matches_reference():
    w = gen_sag(SPEC, EventParams(alpha=0.3, t1_s=0.05, t2_s=0.10))
    ref = ref_window(5000, 1000, 60, 1.0, 0.3, 0.05, 0.10, -1)
    np.testing.assert_allclose(w.samples, ref, rtol=0, atol=1e-12)


def test_swell_inside_window():
    w = gen_swell(SPEC, EventParams(alpha=0.9, t1_s=0.05, t2_s=0.1))
    inside = (T > 0.05) & (T < 0.1)
    np.testing.assert_allclose(w.samples[inside], 1.9 * PURE[inside], rtol=1e-15, atol=1e-15)


def test_interruption_full_depth():
    w = gen_interruption(SPEC, EventParams(alpha=1.0, t1_s=0.05, t2_s=0.1))
    inside = (T > 0.05) & (T < 0.1)
    assert np.all(w.samples[inside] == 0.0)
    outside = (T < 0.05) | (T >= 0.1)
    np.testing.assert_array_equal(w.samples[outside], PURE[outside])


@pytest.mark.parametrize(
    "label,sign",
    [(EventClass.SAG, -1), (EventClass.SWELL, 1), (EventClass.INTERRUPTION, -1)],
)
def test_window_classes_match_reference_randomized(label, sign):
    rng = np.random.default_rng(int(label))
    for _ in range(10):
        p = sample_params(label, rng, SPEC)
        w = generate(label, SPEC, p)
        ref = ref_window(5000, 1000, 60, 1.0, p.alpha, p.t1_s, p.t2_s, sign)
        np.testing.assert_allclose(w.samples, ref, rtol=0, atol=1e-12)


@pytest.mark.parametrize("label", [EventClass.SAG, EventClass.SWELL, EventClass.INTERRUPTION])
def test_window_locality(label):
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = sample_params(label, rng, SPEC)
        w = generate(label, SPEC, p)
        outside = (T < p.t1_s) | (T >= p.t2_s)
        np.testing.assert_array_equal(w.samples[outside], PURE[outside])


# -------------------------------------------------------------- harmonics


def test_harmonics_zero_is_pure_sine():
    w = gen_harmonics(SPEC, EventParams(), check=False)
    np.testing.assert_allclose(w.samples, PURE, rtol=0, atol=1e-15)


def test_harmonics_h1_closed_form():
    p = EventParams(h3=0.05, h5=0.05, h7=0.05)
    assert p.h1 == pytest.approx(math.sqrt(0.9925), abs=1e-15)
    assert abs(p.h1**2 + 3 * 0.05**2 - 1.0) < 1e-12


def test_harmonics_matches_reference():
    rng = np.random.default_rng(4)
    for _ in range(10):
        p = sample_params(EventClass.HARMONICS, rng, SPEC)
        w = gen_harmonics(SPEC, p)
        np.testing.assert_allclose(w.samples, ref_harmonics(5000, 1000, 60, p.h3, p.h5, p.h7), rtol=0, atol=1e-12)


def test_harmonics_rejects_out_of_range():
    with pytest.raises(ParameterRangeError, match="h5"):
        gen_harmonics(SPEC, EventParams(h3=0.1, h5=0.2, h7=0.1))


# -------------------------------------------------------------- transient


def test_transient_zero_alpha():
    w = gen_transient(SPEC, EventParams(alpha=0.0, t1_s=0.06, tau_s=0.02, omega_n_hz=200), check=False)
    np.testing.assert_array_equal(w.samples, PURE)


def test_transient_at_onset_no_decay():
    t1 = 300 / 5000  # lands exactly on a sample
    p = EventParams(alpha=0.5, t1_s=t1, tau_s=0.02, omega_n_hz=200)
    w = gen_transient(SPEC, p)
    expected = math.sin(SPEC.omega * t1) + 0.5 * math.sin(2 * math.pi * 200 * t1)
    assert w.samples[300] == pytest.approx(expected, abs=1e-12)
    np.testing.assert_array_equal(w.samples[:300], PURE[:300])


def test_transient_matches_reference():
    p = EventParams(alpha=0.5, t1_s=0.06, tau_s=0.02, omega_n_hz=200)
    w = gen_transient(SPEC, p)
    np.testing.assert_allclose(w.samples, ref_transient(5000, 1000, 60, 0.5, 0.06, 0.02, 200), rtol=0, atol=1e-12)


def test_transient_envelope_at_tau():
    # envelope alpha * exp(-(t - t1) / tau) evaluated one time constant after onset
    alpha, t1, tau = 0.4, 0.05, 0.01
    spec = SignalSpec()
    p = EventParams(alpha=alpha, t1_s=t1, tau_s=tau, omega_n_hz=230)
    w = gen_transient(spec, p)
    i = int(round((t1 + tau) * spec.sample_rate_hz))
    t = i / spec.sample_rate_hz
    added = w.samples[i] - math.sin(spec.omega * t)
    osc = math.sin(2 * math.pi * 230 * t)
    assert abs(added / osc - alpha / math.e) < 1e-9


# -------------------------------------------------------------- flicker


def test_flicker_zero_alpha():
    w = gen_flicker(SPEC, EventParams(alpha=0.0, beta_hz=10), check=False)
    np.testing.assert_array_equal(w.samples, PURE)


def test_flicker_matches_reference_and_bound():
    p = EventParams(alpha=0.15, beta_hz=10)
    w = gen_flicker(SPEC, p)
    np.testing.assert_allclose(w.samples, ref_flicker(5000, 1000, 60, 0.15, 10), rtol=0, atol=1e-12)
    assert np.all(np.abs(w.samples) <= 1.15)


# -------------------------------------------------------------- parameter sampling


@pytest.mark.parametrize("label", list(EventClass))
def test_sample_params_deterministic(label):
    a = sample_params(label, np.random.default_rng(99), SPEC)
    b = sample_params(label, np.random.default_rng(99), SPEC)
    assert a == b
    np.testing.assert_array_equal(generate(label, SPEC, a).samples, generate(label, SPEC, b).samples)


def test_sag_alpha_range_over_many_draws():
    rng = np.random.default_rng(0)
    alphas = [sample_params(EventClass.SAG, rng, SPEC).alpha for _ in range(10_000)]
    assert 0.1 <= min(alphas) and max(alphas) <= 0.9


def test_harmonic_draws_unit_energy():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        p = sample_params(EventClass.HARMONICS, rng, SPEC)
        assert abs(p.h1**2 + p.h3**2 + p.h5**2 + p.h7**2 - 1.0) < 1e-12


@pytest.mark.parametrize(
    "label,p,match",
    [
        (EventClass.SAG, EventParams(alpha=0.95, t1_s=0.05, t2_s=0.1), "alpha"),
        (EventClass.SWELL, EventParams(alpha=0.05, t1_s=0.05, t2_s=0.1), "alpha"),
        (EventClass.INTERRUPTION, EventParams(alpha=0.8, t1_s=0.05, t2_s=0.1), "alpha"),
        (EventClass.SAG, EventParams(alpha=0.5, t1_s=0.05, t2_s=0.052), "half a cycle"),
        (EventClass.SAG, EventParams(alpha=0.5, t1_s=0.05, t2_s=0.3), "t2_s"),
        (EventClass.TRANSIENT, EventParams(alpha=0.5, t1_s=0.05, tau_s=0.1, omega_n_hz=200), "tau_s"),
        (EventClass.TRANSIENT, EventParams(alpha=0.5, t1_s=0.05, tau_s=0.01, omega_n_hz=50), "omega_n_hz"),
        (EventClass.FLICKER, EventParams(alpha=0.15, beta_hz=30), "beta_hz"),
    ],
)
def test_out_of_range_rejected(label, p, match):
    with pytest.raises(ParameterRangeError, match=match):
        generate(label, SPEC, p)


@given(seed=st.integers(0, 2**32 - 1), label=st.sampled_from(list(EventClass)))
def test_amplitude_bounds(seed, label):
    p = sample_params(label, np.random.default_rng(seed), SPEC)
    v = np.abs(generate(label, SPEC, p).samples)
    tol = 1e-12
    if label in (EventClass.SAG, EventClass.INTERRUPTION):
        assert v.max() <= 1.0 + tol
    elif label is EventClass.SWELL:
        assert v.max() <= 1.0 + p.alpha + tol
    elif label is EventClass.HARMONICS:
        assert v.max() <= p.h1 + p.h3 + p.h5 + p.h7 + tol
    else:
        assert v.max() <= 1.0 + p.alpha + tol


@given(seed=st.integers(0, 2**32 - 1), label=st.sampled_from(list(EventClass)))
def test_sampled_params_validate(seed, label):
    # generate() validates; any raised ParameterRangeError fails the test
    p = sample_params(label, np.random.default_rng(seed), SPEC)
    generate(label, SPEC, p)
