"""Amplification, IF modulation and digitization of the emitted pulses.

A shot consists of four complex traces: the two HBT channels while the
source emits (``sig_a``, ``sig_b``) and the same two channels recorded
with the source idle (``noise_a``, ``noise_b``). The excess amplifier noise
is white; its per-sample variance ``G n_add / dt`` makes the projection onto
any normalized temporal mode carry exactly ``n_add`` quanta, so the mode
statistics do not depend on how finely the trace is sampled. The quantum
vacuum unit of heterodyne detection is already part of the mode outcomes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import scipy.fft

from .emission import ModeOutcome, PulseTrainSpec, TemporalMode
from .errors import ConfigError, GeometryError, ValidationError, WindowError
from .rng import as_generator


@dataclass(frozen=True)
class ChainParams:
    """Detection chain: excess noise per channel, gain and digitizer settings.

    ``n_corr`` is noise common to both channels (e.g. thermal noise entering
    ahead of the splitter); it is zero for the usual model of independent
    amplifier chains.
    """

    n_add_a: float = 1.0
    n_add_b: float = 1.0
    n_corr: float = 0.0
    gain_db: float = 0.0
    if_freq: float = 50e6
    sample_rate: float = 200e6
    trace_len: int = 320
    modulate_if: bool = True

    def __post_init__(self):
        if min(self.n_add_a, self.n_add_b, self.n_corr) < 0:
            raise ValidationError("added noise quanta must be >= 0")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        if abs(self.if_freq) >= self.sample_rate / 2:
            raise ValidationError(
                f"IF {self.if_freq / 1e6:g} MHz is not below Nyquist ({self.sample_rate / 2e6:g} MHz)"
            )
        if int(self.trace_len) != self.trace_len or self.trace_len < 1:
            raise ValidationError("trace_len must be a positive integer")

    @classmethod
    def twpa(cls, **kw) -> "ChainParams":
        """Near-quantum-limited first stage."""
        return cls(n_add_a=1.0, n_add_b=1.0, **kw)

    @classmethod
    def hemt(cls, **kw) -> "ChainParams":
        """HEMT-first chain, roughly an order of magnitude noisier."""
        return cls(n_add_a=15.0, n_add_b=15.0, **kw)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def amplitude_gain(self) -> float:
        return 10 ** (self.gain_db / 20)

    @property
    def carrier_freq(self) -> float:
        return self.if_freq if self.modulate_if else 0.0


@dataclass(frozen=True)
class IQTrace:
    samples: np.ndarray
    dt: float
    channel: str = "a"
    kind: str = "signal"

    def __post_init__(self):
        if self.channel not in ("a", "b"):
            raise ValidationError("channel must be 'a' or 'b'")
        if self.kind not in ("signal", "noise_ref"):
            raise ValidationError("kind must be 'signal' or 'noise_ref'")

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class ShotRecord:
    sig_a: IQTrace
    sig_b: IQTrace
    noise_a: IQTrace
    noise_b: IQTrace
    shot_index: int = 0

    def __post_init__(self):
        traces = (self.sig_a, self.sig_b, self.noise_a, self.noise_b)
        if len({len(t) for t in traces}) != 1 or len({t.dt for t in traces}) != 1:
            raise GeometryError("the four traces of a shot must share length and dt")

    @property
    def dt(self) -> float:
        return self.sig_a.dt


@dataclass
class ShotBlock:
    """A stack of consecutive shots, each field shaped ``(n_shots, trace_len)``."""

    sig_a: np.ndarray
    sig_b: np.ndarray
    noise_a: np.ndarray
    noise_b: np.ndarray
    dt: float
    shot_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        shapes = {a.shape for a in (self.sig_a, self.sig_b, self.noise_a, self.noise_b)}
        if len(shapes) != 1 or self.sig_a.ndim != 2:
            raise GeometryError("block traces must be 2-D arrays of identical shape")
        if self.shot_indices is None:
            self.shot_indices = np.arange(self.sig_a.shape[0])
        self.shot_indices = np.asarray(self.shot_indices, dtype=np.int64)

    def __len__(self):
        return self.sig_a.shape[0]

    @property
    def trace_len(self) -> int:
        return self.sig_a.shape[1]

    def records(self) -> Iterator[ShotRecord]:
        for k in range(len(self)):
            yield ShotRecord(
                IQTrace(self.sig_a[k], self.dt, "a", "signal"),
                IQTrace(self.sig_b[k], self.dt, "b", "signal"),
                IQTrace(self.noise_a[k], self.dt, "a", "noise_ref"),
                IQTrace(self.noise_b[k], self.dt, "b", "noise_ref"),
                int(self.shot_indices[k]),
            )

    @classmethod
    def from_records(cls, records: Sequence[ShotRecord]) -> "ShotBlock":
        if not records:
            raise ValidationError("no shots given")
        return cls(
            np.stack([r.sig_a.samples for r in records]),
            np.stack([r.sig_b.samples for r in records]),
            np.stack([r.noise_a.samples for r in records]),
            np.stack([r.noise_b.samples for r in records]),
            records[0].dt,
            np.array([r.shot_index for r in records]),
        )


@dataclass(frozen=True)
class TrainGeometry:
    """Sample-level layout of the pulse train inside a trace."""

    trace_len: int
    period: int
    origin: int
    n_pulses: int
    mode_len: int

    @property
    def peaks(self) -> np.ndarray:
        return self.origin + self.period * np.arange(self.n_pulses)


def train_geometry(mode: TemporalMode, spec: PulseTrainSpec, chain: ChainParams) -> TrainGeometry:
    """Check that mode, train and trace fit together and return the layout."""
    if not math.isclose(mode.dt, chain.dt, rel_tol=1e-9):
        raise ConfigError(f"mode dt {mode.dt} differs from the digitizer period {chain.dt}")
    try:
        period = spec.period_samples(chain.sample_rate)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    if mode.n_samples > period:
        raise ConfigError(
            f"mode spans {mode.n_samples} samples but a pulse slot has only {period}"
        )
    origin = mode.origin_index
    end = origin + (spec.n_pulses - 1) * period + mode.n_samples
    if origin < 0 or end > chain.trace_len:
        raise ConfigError(f"pulse train needs {end} samples, trace has {chain.trace_len}")
    if chain.trace_len * chain.dt < spec.control_period * (1 - 1e-9):
        raise ConfigError("trace is shorter than the control period")
    return TrainGeometry(chain.trace_len, period, origin, spec.n_pulses, mode.n_samples)


def _carrier(n: int, freq: float, dt: float) -> np.ndarray:
    return np.exp(2j * np.pi * freq * dt * np.arange(n))


def _white_noise(rng: np.random.Generator, shape, variance: float, dtype=np.complex64) -> np.ndarray:
    """CN(0, variance) samples drawn as (I, Q) pairs of the matching real precision."""
    dtype = np.dtype(dtype)
    real = np.float32 if dtype == np.complex64 else np.float64
    z = rng.standard_normal(tuple(shape) + (2,), dtype=real)
    z *= real(math.sqrt(variance / 2))
    return z.view(dtype)[..., 0]


def synthesize_block(
    alpha: np.ndarray,
    beta: np.ndarray,
    mode: TemporalMode,
    spec: PulseTrainSpec,
    chain: ChainParams,
    rng,
    shot_start: int = 0,
    dtype=np.complex64,
) -> ShotBlock:
    """Digitized traces for a block of shots from per-pulse outcomes.

    ``alpha`` and ``beta`` are ``(n_shots, n_pulses)`` arrays. Noise draws
    come from ``rng`` in a fixed order (sig_a, sig_b, noise_a, noise_b,
    then the common components if ``n_corr > 0``). Traces are complex64 by
    default, the precision of the archive; pass ``dtype=np.complex128``
    where float32 rounding matters.
    """
    dtype = np.dtype(dtype)
    if dtype not in (np.complex64, np.complex128):
        raise ValidationError("trace dtype must be complex64 or complex128")
    rng = as_generator(rng)
    alpha = np.atleast_2d(np.asarray(alpha, dtype=complex))
    beta = np.atleast_2d(np.asarray(beta, dtype=complex))
    if alpha.shape != beta.shape or alpha.shape[1] != spec.n_pulses:
        raise ConfigError(f"outcomes must be shaped (n_shots, {spec.n_pulses})")
    geo = train_geometry(mode, spec, chain)
    n_shots, T = alpha.shape[0], chain.trace_len
    g = chain.amplitude_gain
    f = mode.samples

    sig_a = np.zeros((n_shots, T), dtype=dtype)
    sig_b = np.zeros((n_shots, T), dtype=dtype)
    for p, start in enumerate(geo.peaks):
        sl = slice(start, start + geo.mode_len)
        sig_a[:, sl] = np.multiply.outer(g * alpha[:, p], f)
        sig_b[:, sl] = np.multiply.outer(g * beta[:, p], f)
    if chain.carrier_freq:
        carrier = _carrier(T, chain.carrier_freq, chain.dt).astype(dtype)
        sig_a *= carrier
        sig_b *= carrier

    per_quantum = g * g / chain.dt
    noise = {}
    for name, n_add in (("sig_a", chain.n_add_a), ("sig_b", chain.n_add_b),
                        ("noise_a", chain.n_add_a), ("noise_b", chain.n_add_b)):
        noise[name] = _white_noise(rng, (n_shots, T), n_add * per_quantum, dtype) if n_add > 0 else None
    zeros = np.zeros((n_shots, T), dtype=dtype)
    noise_a = noise["noise_a"] if noise["noise_a"] is not None else zeros
    noise_b = noise["noise_b"] if noise["noise_b"] is not None else zeros.copy()
    if noise["sig_a"] is not None:
        sig_a += noise["sig_a"]
    if noise["sig_b"] is not None:
        sig_b += noise["sig_b"]
    if chain.n_corr > 0:
        common_sig = _white_noise(rng, (n_shots, T), chain.n_corr * per_quantum, dtype)
        common_ref = _white_noise(rng, (n_shots, T), chain.n_corr * per_quantum, dtype)
        sig_a += common_sig
        sig_b += common_sig
        noise_a = noise_a + common_ref
        noise_b = noise_b + common_ref
    return ShotBlock(sig_a, sig_b, noise_a, noise_b, chain.dt,
                     np.arange(shot_start, shot_start + n_shots))


def synthesize_shot(
    outcomes: Sequence[ModeOutcome],
    mode: TemporalMode,
    spec: PulseTrainSpec,
    chain: ChainParams,
    rng,
    shot_index: int = 0,
    dtype=np.complex64,
) -> ShotRecord:
    """Single-shot form of :func:`synthesize_block`."""
    if len(outcomes) != spec.n_pulses:
        raise ConfigError(f"expected {spec.n_pulses} outcomes, got {len(outcomes)}")
    ordered = sorted(outcomes, key=lambda o: o.pulse_index)
    a = np.array([[o.alpha for o in ordered]])
    b = np.array([[o.beta for o in ordered]])
    block = synthesize_block(a, b, mode, spec, chain, rng, shot_start=shot_index, dtype=dtype)
    return next(block.records())


def digital_downconvert(trace: IQTrace, if_freq: float) -> IQTrace:
    """Rotate an IF trace to baseband: sample k times exp(-2 pi i f t_k)."""
    if abs(if_freq) * trace.dt >= 0.5:
        raise ValidationError("IF frequency must be below Nyquist")
    samples = np.asarray(trace.samples)
    if if_freq:
        samples = samples * _carrier(samples.size, -if_freq, trace.dt)
    return IQTrace(samples, trace.dt, trace.channel, trace.kind)


def downconvert_array(x: np.ndarray, if_freq: float, dt: float) -> np.ndarray:
    """Array form of :func:`digital_downconvert` acting on the last axis."""
    if not if_freq:
        return x
    return x * _carrier(x.shape[-1], -if_freq, dt)


def matched_filter(trace: IQTrace, mode: TemporalMode, pulse_index: int, if_freq: float,
                   pulse_period: float) -> complex:
    """Project one pulse slot of ``trace`` onto the temporal mode.

    Returns ``sum_k conj(f(t_k - p t_p)) exp(-2 pi i f_IF t_k) S(t_k) dt``;
    for a noiseless synthesized shot this is the gain times the outcome.
    """
    if not math.isclose(trace.dt, mode.dt, rel_tol=1e-9):
        raise GeometryError("trace and mode sample spacings differ")
    period = int(round(pulse_period / trace.dt))
    start = mode.origin_index + pulse_index * period
    stop = start + mode.n_samples
    if pulse_index < 0 or stop > len(trace.samples):
        raise WindowError(f"pulse {pulse_index} window [{start}, {stop}) is outside the trace")
    k = np.arange(start, stop)
    seg = np.asarray(trace.samples)[start:stop]
    if if_freq:
        seg = seg * np.exp(-2j * np.pi * if_freq * trace.dt * k)
    return complex(np.sum(np.conj(mode.samples) * seg) * trace.dt)


def mode_filter(x: np.ndarray, mode: TemporalMode) -> np.ndarray:
    """Sliding mode projection ``y(t) = sum_k conj(f_k) x(t + k) dt`` along the last axis.

    ``y`` at a pulse start equals the matched-filter output of that pulse.
    """
    x = np.asarray(x, dtype=complex)
    T, L = x.shape[-1], mode.n_samples
    n = scipy.fft.next_fast_len(T + L)
    X = scipy.fft.fft(x, n=n, axis=-1)
    Fm = scipy.fft.fft(mode.samples, n=n)
    y = scipy.fft.ifft(X * np.conj(Fm), axis=-1)[..., :T]
    return y * mode.dt


def mode_filter_matrix(mode: TemporalMode, trace_len: int, support: np.ndarray) -> np.ndarray:
    """Matrix ``W`` with ``x @ W == mode_filter(x, mode)[..., support]``."""
    support = np.asarray(support, dtype=np.int64)
    W = np.zeros((trace_len, support.size), dtype=complex)
    taps = np.conj(mode.samples) * mode.dt
    for i, t in enumerate(support):
        n = min(mode.n_samples, trace_len - t)
        if n > 0:
            W[t:t + n, i] = taps[:n]
    return W
