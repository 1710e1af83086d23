"""Closed-form synthesis of the six voltage-disturbance classes.

Every generator evaluates its model on the sample grid ``t_i = i / fs`` and
returns a :class:`Waveform` in per-unit volts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class ParameterRangeError(ValueError):
    """Raised when event parameters fall outside a class's allowed range."""


class EventClass(IntEnum):
    SAG = 1
    SWELL = 2
    INTERRUPTION = 3
    HARMONICS = 4
    TRANSIENT = 5
    FLICKER = 6

    @property
    def display_name(self) -> str:
        return f"Voltage {self.name.title()}"


@dataclass(frozen=True)
class SignalSpec:
    sample_rate_hz: float = 5000.0
    fundamental_hz: float = 60.0
    duration_s: float = 0.2
    amplitude_pu: float = 1.0

    def __post_init__(self):
        for name in ("sample_rate_hz", "fundamental_hz", "duration_s", "amplitude_pu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sample_rate_hz < 14 * self.fundamental_hz:
            raise ValueError(
                "sample_rate_hz must be at least 14x fundamental_hz to carry the 7th harmonic"
            )
        n = self.duration_s * self.sample_rate_hz
        if abs(n - round(n)) > 1e-9 or round(n) < 2:
            raise ValueError("duration_s * sample_rate_hz must be a whole number >= 2")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.fundamental_hz

    @property
    def half_cycle_s(self) -> float:
        return 0.5 / self.fundamental_hz

    def time(self) -> np.ndarray:
        return np.arange(self.n_samples, dtype=np.float64) / self.sample_rate_hz


@dataclass(frozen=True)
class EventParams:
    """Union record of every class's generating parameters; unused fields stay 0."""

    alpha: float = 0.0
    t1_s: float = 0.0
    t2_s: float = 0.0
    h3: float = 0.0
    h5: float = 0.0
    h7: float = 0.0
    omega_n_hz: float = 0.0
    tau_s: float = 0.0
    beta_hz: float = 0.0

    FIELDS = ("alpha", "t1_s", "t2_s", "h3", "h5", "h7", "omega_n_hz", "tau_s", "beta_hz")

    @property
    def h1(self) -> float:
        return math.sqrt(1.0 - self.h3**2 - self.h5**2 - self.h7**2)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in self.FIELDS)


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    label: EventClass
    params: EventParams
    spec: SignalSpec = field(default_factory=SignalSpec)

    def __post_init__(self):
        if self.samples.shape != (self.spec.n_samples,):
            raise ValueError(
                f"expected {self.spec.n_samples} samples, got shape {self.samples.shape}"
            )


# parameter ranges, inclusive
ALPHA_RANGE = {
    EventClass.SAG: (0.1, 0.9),
    EventClass.SWELL: (0.1, 0.9),
    EventClass.INTERRUPTION: (0.9, 1.0),
    EventClass.TRANSIENT: (0.1, 0.8),
    EventClass.FLICKER: (0.1, 0.2),
}
HARMONIC_RANGE = (0.05, 0.15)
OMEGA_N_RANGE_HZ = (100.0, 400.0)
TAU_RANGE_S = (0.008, 0.04)
BETA_RANGE_HZ = (0.5, 25.0)


def _check_range(name: str, value: float, bounds: tuple[float, float]) -> None:
    lo, hi = bounds
    if not lo <= value <= hi:
        raise ParameterRangeError(f"{name}={value!r} outside [{lo}, {hi}]")


def _check_window(p: EventParams, spec: SignalSpec) -> None:
    if p.t1_s < 0:
        raise ParameterRangeError(f"t1_s={p.t1_s!r} must be >= 0")
    # small slack so a window drawn at exactly half a cycle is not rejected by rounding
    if p.t2_s - p.t1_s < spec.half_cycle_s - 1e-12:
        raise ParameterRangeError(
            f"event window t2_s - t1_s = {p.t2_s - p.t1_s!r} shorter than half a cycle "
            f"({spec.half_cycle_s!r} s)"
        )
    if p.t2_s > spec.duration_s:
        raise ParameterRangeError(f"t2_s={p.t2_s!r} exceeds duration_s={spec.duration_s!r}")


def validate_params(label: EventClass, p: EventParams, spec: SignalSpec) -> None:
    """Raise :class:`ParameterRangeError` naming the first violated bound."""
    label = EventClass(label)
    if label in (EventClass.SAG, EventClass.SWELL, EventClass.INTERRUPTION):
        _check_range("alpha", p.alpha, ALPHA_RANGE[label])
        _check_window(p, spec)
    elif label is EventClass.HARMONICS:
        for name in ("h3", "h5", "h7"):
            _check_range(name, getattr(p, name), HARMONIC_RANGE)
    elif label is EventClass.TRANSIENT:
        _check_range("alpha", p.alpha, ALPHA_RANGE[label])
        _check_range("omega_n_hz", p.omega_n_hz, OMEGA_N_RANGE_HZ)
        _check_range("tau_s", p.tau_s, TAU_RANGE_S)
        if not 0 <= p.t1_s <= spec.duration_s:
            raise ParameterRangeError(f"t1_s={p.t1_s!r} outside [0, {spec.duration_s}]")
    else:
        _check_range("alpha", p.alpha, ALPHA_RANGE[label])
        _check_range("beta_hz", p.beta_hz, BETA_RANGE_HZ)


def unit_step(t):
    """Heaviside step with u(0) = 1; works on scalars and arrays."""
    out = np.where(np.asarray(t) >= 0, 1.0, 0.0)
    return float(out) if out.ndim == 0 else out


def _windowed(spec: SignalSpec, p: EventParams, sign: float) -> np.ndarray:
    t = spec.time()
    envelope = 1.0 + sign * p.alpha * (unit_step(t - p.t1_s) - unit_step(t - p.t2_s))
    return spec.amplitude_pu * envelope * np.sin(spec.omega * t)


def gen_sag(spec: SignalSpec, p: EventParams, check: bool = True) -> Waveform:
    if check:
        validate_params(EventClass.SAG, p, spec)
    return Waveform(_windowed(spec, p, -1.0), EventClass.SAG, p, spec)


def gen_swell(spec: SignalSpec, p: EventParams, check: bool = True) -> Waveform:
    if check:
        validate_params(EventClass.SWELL, p, spec)
    return Waveform(_windowed(spec, p, 1.0), EventClass.SWELL, p, spec)


def gen_interruption(spec: SignalSpec, p: EventParams, check: bool = True) -> Waveform:
    if check:
        validate_params(EventClass.INTERRUPTION, p, spec)
    return Waveform(_windowed(spec, p, -1.0), EventClass.INTERRUPTION, p, spec)


def gen_harmonics(spec: SignalSpec, p: EventParams, check: bool = True) -> Waveform:
    """Fundamental plus 3rd/5th/7th harmonics, with h1 fixed by unit total energy."""
    if check:
        validate_params(EventClass.HARMONICS, p, spec)
    t = spec.time()
    wt = spec.omega * t
    v = p.h1 * np.sin(wt) + p.h3 * np.sin(3 * wt) + p.h5 * np.sin(5 * wt) + p.h7 * np.sin(7 * wt)
    return Waveform(v, EventClass.HARMONICS, p, spec)


def gen_transient(spec: SignalSpec, p: EventParams, check: bool = True) -> Waveform:
    """Fundamental plus a decaying oscillation switched on at t1.

    The decaying term is gated to ``t >= t1``; left ungated it grows without
    bound before the event.
    """
    if check:
        validate_params(EventClass.TRANSIENT, p, spec)
    t = spec.time()
    v = np.sin(spec.omega * t)
    on = t >= p.t1_s
    ton = t[on]
    v[on] += p.alpha * np.exp(-(ton - p.t1_s) / p.tau_s) * np.sin(2 * math.pi * p.omega_n_hz * ton)
    return Waveform(v, EventClass.TRANSIENT, p, spec)


def gen_flicker(spec: SignalSpec, p: EventParams, check: bool = True) -> Waveform:
    if check:
        validate_params(EventClass.FLICKER, p, spec)
    t = spec.time()
    v = (1.0 + p.alpha * np.sin(2 * math.pi * p.beta_hz * t)) * np.sin(spec.omega * t)
    return Waveform(v, EventClass.FLICKER, p, spec)


GENERATORS = {
    EventClass.SAG: gen_sag,
    EventClass.SWELL: gen_swell,
    EventClass.INTERRUPTION: gen_interruption,
    EventClass.HARMONICS: gen_harmonics,
    EventClass.TRANSIENT: gen_transient,
    EventClass.FLICKER: gen_flicker,
}


def generate(label: EventClass, spec: SignalSpec, p: EventParams, check: bool = True) -> Waveform:
    return GENERATORS[EventClass(label)](spec, p, check=check)


def _draw_window(rng: np.random.Generator, spec: SignalSpec) -> tuple[float, float]:
    d = spec.duration_s
    t1 = rng.uniform(0.1 * d, 0.5 * d)
    width = rng.uniform(spec.half_cycle_s, d - t1 - 0.1 * d)
    return float(t1), float(t1 + width)


def sample_params(
    label: EventClass, rng: np.random.Generator, spec: SignalSpec = SignalSpec()
) -> EventParams:
    """Draw parameters uniformly from the allowed ranges for ``label``.

    Event onsets land in the first half of the record and every sag, swell or
    interruption window ends at least ``0.1 * duration_s`` before the record does.
    """
    label = EventClass(label)
    if label in (EventClass.SAG, EventClass.SWELL, EventClass.INTERRUPTION):
        alpha = float(rng.uniform(*ALPHA_RANGE[label]))
        t1, t2 = _draw_window(rng, spec)
        return EventParams(alpha=alpha, t1_s=t1, t2_s=t2)
    if label is EventClass.HARMONICS:
        h3, h5, h7 = (float(h) for h in rng.uniform(*HARMONIC_RANGE, size=3))
        return EventParams(h3=h3, h5=h5, h7=h7)
    if label is EventClass.TRANSIENT:
        alpha = float(rng.uniform(*ALPHA_RANGE[label]))
        omega_n = float(rng.uniform(*OMEGA_N_RANGE_HZ))
        tau = float(rng.uniform(*TAU_RANGE_S))
        t1 = float(rng.uniform(0.1 * spec.duration_s, 0.5 * spec.duration_s))
        return EventParams(alpha=alpha, t1_s=t1, omega_n_hz=omega_n, tau_s=tau)
    alpha = float(rng.uniform(*ALPHA_RANGE[label]))
    beta = float(rng.uniform(*BETA_RANGE_HZ))
    return EventParams(alpha=alpha, beta_hz=beta)
