"""Qubit preparation and heterodyne sampling of the emitted photon mode.

The emitted temporal mode carries the qubit state ``rho`` (restricted to
the zero- and one-photon subspace), or a coherent reference state. After a
50/50 split into channels ``a`` and ``b`` each channel is measured by an
ideal heterodyne detector, so the joint outcome ``(alpha, beta)`` follows
the two-mode Husimi density

    P(alpha, beta) = exp(-|alpha|^2 - |beta|^2)
                     * <alpha, beta| rho_ab |alpha, beta> / pi^2.

Rotating back through the splitter, ``u = (alpha + beta)/sqrt 2`` is the
Husimi sample of the source mode and ``v = (alpha - beta)/sqrt 2`` that of
the vacuum entering the unused port, and the two are independent. We
sample them exactly: ``|u|^2`` is a Gamma(1)/Gamma(2) mixture and its phase
follows the conditional law ``(1 + kappa cos psi) / 2 pi``, inverted
numerically.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TruncationError, ValidationError
from .qubit import DecayRates
from .rng import as_generator

SQRT2 = math.sqrt(2.0)


class StateKind(str, enum.Enum):
    QUBIT = "qubit_superposition"
    COHERENT = "coherent"
    VACUUM = "vacuum"


@dataclass(frozen=True)
class PreparedState:
    """State of the emitted mode.

    For ``QUBIT`` the density matrix is
    ``F |psi(theta)><psi(theta)| + (1 - F) |0><0|`` with
    ``|psi> = cos(theta/2)|0> + sin(theta/2)|1>``.
    For ``COHERENT`` only ``alpha`` matters.
    """

    theta_r: float = 0.0
    fidelity: float = 1.0
    kind: StateKind = StateKind.QUBIT
    alpha: complex = 0j

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0:
            raise DomainError(f"fidelity {self.fidelity} outside [0, 1]")
        if not math.isfinite(self.theta_r):
            raise DomainError("theta_r must be finite")
        object.__setattr__(self, "kind", StateKind(self.kind))

    def density_matrix(self) -> np.ndarray:
        """2x2 density matrix in the {|0>, |1>} basis (qubit and vacuum kinds)."""
        if self.kind is StateKind.COHERENT:
            raise ValidationError("a coherent state has no two-level density matrix")
        if self.kind is StateKind.VACUUM:
            return np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
        c0, c1 = math.cos(self.theta_r / 2), math.sin(self.theta_r / 2)
        psi = np.array([c0, c1], dtype=complex)
        ground = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
        return self.fidelity * np.outer(psi, psi.conj()) + (1 - self.fidelity) * ground

    @property
    def excited_population(self) -> float:
        if self.kind is StateKind.QUBIT:
            return self.fidelity * math.sin(self.theta_r / 2) ** 2
        return 0.0

    @property
    def mean_photon_number(self) -> float:
        if self.kind is StateKind.COHERENT:
            return abs(self.alpha) ** 2
        return self.excited_population

    @property
    def mean_field(self) -> complex:
        """<a> of the source mode."""
        if self.kind is StateKind.COHERENT:
            return complex(self.alpha)
        return complex(self.density_matrix()[1, 0])

    @property
    def two_photon_moment(self) -> float:
        """<a+ a+ a a>; zero for anything living in the {|0>, |1>} subspace."""
        if self.kind is StateKind.COHERENT:
            return abs(self.alpha) ** 4
        return 0.0


def prepare_state(theta_r: float, fidelity: float = 1.0) -> PreparedState:
    """Qubit state after a Rabi rotation by ``theta_r`` with preparation fidelity ``fidelity``."""
    return PreparedState(theta_r=float(theta_r), fidelity=float(fidelity), kind=StateKind.QUBIT)


def coherent_state(alpha: complex) -> PreparedState:
    return PreparedState(kind=StateKind.COHERENT, alpha=complex(alpha))


def vacuum_state() -> PreparedState:
    return PreparedState(kind=StateKind.VACUUM)


@dataclass(frozen=True)
class TemporalMode:
    """Discretized single-photon wavepacket ``f(t_k)`` with sum |f|^2 dt = 1."""

    samples: np.ndarray
    dt: float
    origin: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.samples, dtype=complex)
        if f.ndim != 1 or f.size == 0:
            raise ValidationError("mode samples must be a non-empty 1-D array")
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        norm = float(np.sum(np.abs(f) ** 2) * self.dt)
        if abs(norm - 1.0) > 1e-9:
            raise ValidationError(f"mode is not normalized (sum |f|^2 dt = {norm:.12g})")
        f.setflags(write=False)
        object.__setattr__(self, "samples", f)

    @property
    def n_samples(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size * self.dt

    @property
    def origin_index(self) -> int:
        return int(round(self.origin / self.dt))

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt


@dataclass(frozen=True)
class PulseTrainSpec:
    """Timing of the emitted pulse train within one acquisition record.

    The default packs two 700 ns slots into the 1.4 us active part of a
    1.6 us control period; :meth:`eight_pulse` is the longer record holding
    the eight-pulse train used for correlation runs.
    """

    n_pulses: int = 2
    pulse_period: float = 700e-9
    control_period: float = 1.6e-6
    active_window: float = 1.4e-6
    gauss_sigma: float = 4e-9

    def __post_init__(self):
        if self.n_pulses < 1:
            raise ValidationError("n_pulses must be >= 1")
        if min(self.pulse_period, self.control_period, self.active_window, self.gauss_sigma) <= 0:
            raise ValidationError("train durations must be positive")
        eps = 1e-12
        if self.n_pulses * self.pulse_period > self.control_period * (1 + eps):
            raise ValidationError(
                f"{self.n_pulses} pulses x {self.pulse_period * 1e9:g} ns do not fit "
                f"a {self.control_period * 1e9:g} ns control period"
            )
        if self.active_window > self.control_period * (1 + eps):
            raise ValidationError("active window longer than the control period")

    @classmethod
    def eight_pulse(cls) -> "PulseTrainSpec":
        return cls(n_pulses=8, pulse_period=700e-9, control_period=5.6e-6, active_window=5.6e-6)

    def period_samples(self, sample_rate: float) -> int:
        """Pulse period in samples; must be an integer number of samples."""
        n = self.pulse_period * sample_rate
        k = int(round(n))
        if k < 1 or abs(n - k) > 1e-6:
            raise ValidationError(
                f"pulse period {self.pulse_period} s is not a whole number of samples at {sample_rate} S/s"
            )
        return k


@dataclass(frozen=True)
class ModeOutcome:
    """Joint heterodyne outcome of one pulse."""

    alpha: complex
    beta: complex
    pulse_index: int = 0


def emission_envelope(rates: DecayRates, duration: float, dt: float, origin: float = 0.0) -> TemporalMode:
    """Exponential spontaneous-emission wavepacket ``sqrt(G1) exp(-G1 t / 2)``.

    Sampled on ``[0, duration)`` and renormalized on the grid.

    Raises
    ------
    TruncationError
        If ``duration`` is shorter than five lifetimes.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    g1 = rates.gamma1_per_second
    if g1 <= 0:
        raise ValidationError("gamma1 must be positive")
    if duration * g1 < 5.0 * (1 - 1e-9):
        raise TruncationError(
            f"window {duration * 1e9:.1f} ns is shorter than 5/Gamma1 = {5e9 / g1:.1f} ns"
        )
    n = int(round(duration / dt))
    t = np.arange(n) * dt
    f = np.exp(-g1 * t / 2).astype(complex)
    f /= math.sqrt(np.sum(np.abs(f) ** 2) * dt)
    return TemporalMode(samples=f, dt=dt, origin=origin)


def _solve_cardioid(w: np.ndarray, kappa: np.ndarray, iterations: int = 52) -> np.ndarray:
    """Solve ``psi + kappa sin(psi) = w`` on [-pi, pi] by bisection."""
    lo = np.full(w.shape, -math.pi)
    hi = np.full(w.shape, math.pi)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        above = mid + kappa * np.sin(mid) > w
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def _complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """CN(0, 1): E|z|^2 = 1."""
    z = rng.standard_normal(tuple(np.atleast_1d(size)) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / SQRT2


def sample_source_mode(rho: np.ndarray, size, rng) -> np.ndarray:
    """Husimi samples of a state in the {|0>, |1>} subspace."""
    rng = as_generator(rng)
    shape = tuple(np.atleast_1d(size))
    n = int(np.prod(shape))
    p00 = float(rho[0, 0].real)
    p11 = float(rho[1, 1].real)
    rho01 = complex(rho[0, 1])

    excited = rng.random(n) < p11
    s = rng.standard_exponential(n)
    s += np.where(excited, rng.standard_exponential(n), 0.0)
    w = (rng.random(n) * 2 - 1) * math.pi
    if abs(rho01) > 0:
        denom = p00 + p11 * s
        kappa = np.divide(2 * abs(rho01) * np.sqrt(s), denom, out=np.zeros(n), where=denom > 0)
        np.minimum(kappa, 1.0, out=kappa)
        psi = _solve_cardioid(w, kappa)
        phase = psi - np.angle(rho01)
    else:
        phase = w
    return (np.sqrt(s) * np.exp(1j * phase)).reshape(shape)


def sample_mode_outcomes(state: PreparedState, size, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw joint heterodyne outcomes ``(alpha, beta)`` for ``size`` pulses."""
    rng = as_generator(rng)
    shape = tuple(np.atleast_1d(size))
    if state.kind is StateKind.COHERENT:
        u = state.alpha + _complex_normal(rng, shape)
    else:
        u = sample_source_mode(state.density_matrix(), shape, rng)
    v = _complex_normal(rng, shape)
    return (u + v) / SQRT2, (u - v) / SQRT2


def sample_joint_heterodyne(state: PreparedState, rng) -> ModeOutcome:
    a, b = sample_mode_outcomes(state, 1, rng)
    return ModeOutcome(alpha=complex(a[0]), beta=complex(b[0]), pulse_index=0)


def sample_pulse_train(state: PreparedState, spec: PulseTrainSpec, rng) -> list[ModeOutcome]:
    """Independent outcomes for every slot of one train."""
    a, b = sample_mode_outcomes(state, spec.n_pulses, rng)
    return [ModeOutcome(complex(x), complex(y), p) for p, (x, y) in enumerate(zip(a, b))]


def heterodyne_moments(state: PreparedState) -> dict[str, complex | float]:
    """Closed-form moments of the joint heterodyne outcomes.

    Keys: ``mean_alpha``, ``abs2_alpha``, ``cross`` (E[conj(alpha) beta]),
    ``abs2_product`` (E[|alpha|^2 |beta|^2]) and ``g2_product``
    (E[conj(alpha)^2 beta^2]).
    """
    n = state.mean_photon_number
    a = state.mean_field
    if state.kind is StateKind.COHERENT:
        n2 = abs(state.alpha) ** 4 + n  # <n^2>
    else:
        n2 = n
    abs4_u = n2 + 3 * n + 2
    return {
        "mean_alpha": a / SQRT2,
        "abs2_alpha": 1 + n / 2,
        "cross": n / 2,
        "abs2_product": (abs4_u + 2) / 4,
        "g2_product": state.two_photon_moment / 4,
    }
