"""Closed-form transmon physics: flux dispersion, reflection and efficiency.

Units follow the usual circuit-QED bookkeeping: energies and transition
frequencies are in GHz (E/h), decay and dephasing rates are in MHz as
Gamma/2pi. Only ratios of rates enter the reflection coefficient, so any
consistent rate unit works there.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import RegimeError, UnreachableError, ValidationError

#: E_J/E_C below which the transmon dispersion formula is not trusted.
TRANSMON_FLOOR = 20.0


class RegimeWarning(UserWarning):
    """Raised (as a warning) for parameter sets outside the transmon regime."""


@dataclass(frozen=True)
class QubitParams:
    """Device parameters of the flux-tunable source.

    ``ej_max`` and ``ec`` are in GHz; all rates are Gamma/2pi in MHz;
    ``resonator_freq`` is in GHz and is carried as metadata only.
    """

    ej_max: float
    ec: float
    gamma1_e: float
    gamma1_c: float = 0.0
    gamma1_n: float = 0.0
    gamma_phi: float = 0.0
    resonator_freq: float = 6.751

    def __post_init__(self):
        rates = (self.gamma1_e, self.gamma1_c, self.gamma1_n, self.gamma_phi)
        if any(not math.isfinite(r) or r < 0 for r in rates):
            raise ValidationError("all decay and dephasing rates must be finite and >= 0")
        if not (self.ej_max > self.ec > 0):
            raise ValidationError("need ej_max > ec > 0")
        if self.ej_max / self.ec < TRANSMON_FLOOR:
            warnings.warn(
                f"ej_max/ec = {self.ej_max / self.ec:.2f} is below {TRANSMON_FLOOR:g}; "
                "the device is outside the transmon regime at every flux",
                RegimeWarning,
                stacklevel=3,
            )

    @classmethod
    def reference_device(cls) -> "QubitParams":
        """Default device: 39.03/0.400 GHz, fitted rates 2.65/1.85 MHz.

        The non-radiative share is chosen so that Gamma_1 = 2 Gamma_2 with no
        pure dephasing, which makes Gamma_1^e/Gamma_1 and Gamma_1^e/2Gamma_2
        agree at 71.6 %.
        """
        gamma2 = 1.85
        gamma1_e = 2.65
        return cls(
            ej_max=39.03,
            ec=0.400,
            gamma1_e=gamma1_e,
            gamma1_c=0.0,
            gamma1_n=2 * gamma2 - gamma1_e,
            gamma_phi=0.0,
            resonator_freq=6.751,
        )

    @property
    def gamma1(self) -> float:
        return self.gamma1_e + self.gamma1_c + self.gamma1_n

    def decay_rates(self) -> "DecayRates":
        gamma1 = self.gamma1
        return DecayRates(gamma1=gamma1, gamma2=gamma1 / 2 + self.gamma_phi, gamma1_e=self.gamma1_e)


@dataclass(frozen=True)
class DecayRates:
    """Total relaxation, total dephasing and radiative rates (Gamma/2pi, MHz)."""

    gamma1: float
    gamma2: float
    gamma1_e: float

    def __post_init__(self):
        if min(self.gamma1, self.gamma2, self.gamma1_e) < 0:
            raise ValidationError("rates must be non-negative")
        if self.gamma2 < self.gamma1 / 2 * (1 - 1e-12):
            raise ValidationError("gamma2 must be at least gamma1/2")
        if self.gamma1_e > self.gamma1 * (1 + 1e-12):
            raise ValidationError("radiative rate exceeds total relaxation rate (eta > 1)")

    @classmethod
    def from_fit(cls, gamma1_e: float, gamma2: float, gamma_phi: float = 0.0) -> "DecayRates":
        """Rates implied by a reflection fit, assuming the given pure dephasing."""
        return cls(gamma1=2 * (gamma2 - gamma_phi), gamma2=gamma2, gamma1_e=gamma1_e)

    @classmethod
    def from_t1(cls, t1: float, eta: float = 1.0) -> "DecayRates":
        """Rates of a dephasing-free emitter with energy-relaxation time ``t1`` (s)."""
        gamma1 = 1.0 / (2 * math.pi * t1) / 1e6
        return cls(gamma1=gamma1, gamma2=gamma1 / 2, gamma1_e=eta * gamma1)

    @property
    def eta(self) -> float:
        """Radiative fraction Gamma_1^e / Gamma_1."""
        return self.gamma1_e / self.gamma1 if self.gamma1 > 0 else 0.0

    @property
    def gamma1_per_second(self) -> float:
        """Gamma_1 as an energy-decay rate in 1/s."""
        return 2 * math.pi * 1e6 * self.gamma1

    @property
    def t1(self) -> float:
        return 1.0 / self.gamma1_per_second


@dataclass(frozen=True)
class FluxBias:
    """Applied flux in units of the flux quantum."""

    phi_ratio: float

    def __post_init__(self):
        if not math.isfinite(self.phi_ratio):
            raise ValidationError("flux must be finite")

    def reduced(self) -> float:
        """Equivalent flux folded into [0, 0.5]."""
        return float(_fold(self.phi_ratio))


@dataclass(frozen=True)
class DrivePoint:
    """Probe detuning and drive amplitude, in the same unit as the rates.

    Either field may be an array; they broadcast against each other.
    """

    detuning: float | np.ndarray
    rabi_amp: float | np.ndarray = field(default=0.0)

    def __post_init__(self):
        if np.any(np.asarray(self.rabi_amp) < 0):
            raise ValidationError("rabi_amp must be >= 0")


def _fold(phi):
    """Fold flux into [0, 0.5] using periodicity 1 and evenness."""
    red = np.remainder(np.abs(phi), 1.0)
    return np.where(red > 0.5, 1.0 - red, red)


def _flux_value(flux) -> np.ndarray | float:
    if isinstance(flux, FluxBias):
        return flux.phi_ratio
    return flux


def transition_frequency(params: QubitParams, flux) -> float | np.ndarray:
    """Qubit transition frequency omega_01/2pi in GHz at the given flux.

    Uses the symmetric-SQUID transmon dispersion
    ``sqrt(8 E_J(phi) E_C) - E_C`` with ``E_J(phi) = E_J,max |cos(pi phi)|``.

    Raises
    ------
    RegimeError
        If E_J(phi)/E_C falls below :data:`TRANSMON_FLOOR` for any element.
    """
    phi = np.asarray(_flux_value(flux), dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValidationError("flux must be finite")
    ej = params.ej_max * np.abs(np.cos(np.pi * _fold(phi)))
    if np.any(ej / params.ec < TRANSMON_FLOOR):
        raise RegimeError(
            f"E_J/E_C drops below {TRANSMON_FLOOR:g} at the requested flux; "
            "the transmon dispersion is not valid there"
        )
    freq = np.sqrt(8 * ej * params.ec) - params.ec
    return float(freq) if freq.ndim == 0 else freq


def regime_limit(params: QubitParams) -> float:
    """Largest folded flux at which the transmon formula is still valid."""
    c = TRANSMON_FLOOR * params.ec / params.ej_max
    if c >= 1:
        return 0.0
    return math.acos(c) / math.pi


def flux_for_frequency(params: QubitParams, target: float) -> FluxBias:
    """Smallest non-negative flux (<= 0.5) tuning the qubit to ``target`` GHz."""
    f_max = transition_frequency(params, 0.0)
    if target > f_max:
        raise UnreachableError(f"{target} GHz is above the sweet-spot frequency {f_max:.6f} GHz")
    f_min = transition_frequency(params, regime_limit(params))
    if target < f_min:
        raise RegimeError(f"{target} GHz lies below the valid band (min {f_min:.6f} GHz)")
    ej = (target + params.ec) ** 2 / (8 * params.ec)
    ratio = min(ej / params.ej_max, 1.0)
    return FluxBias(math.acos(ratio) / math.pi)


def reflection_coefficient(rates: DecayRates, gamma1_e: float, point: DrivePoint):
    """Complex reflection coefficient of the driven two-level emitter.

    In the weak-drive limit this is ``1 - (G1e/G2) / (1 - i dw/G2)``. A
    finite drive adds the saturation term ``Omega^2/(G1 G2)`` to the
    denominator ``1 + (dw/G2)^2``, which bends the circle into an oval.
    """
    if rates.gamma2 <= 0:
        raise ValidationError("gamma2 must be positive")
    x = np.asarray(point.detuning, dtype=float) / rates.gamma2
    omega = np.asarray(point.rabi_amp, dtype=float)
    if np.any(omega > 0):
        if rates.gamma1 <= 0:
            raise ValidationError("saturation needs gamma1 > 0")
        sat = omega**2 / (rates.gamma1 * rates.gamma2)
        r = 1 - (gamma1_e / rates.gamma2) * (1 + 1j * x) / (1 + x**2 + sat)
    else:
        r = 1 - (gamma1_e / rates.gamma2) / (1 - 1j * x)
    return complex(r) if np.ndim(r) == 0 else r


def efficiency(rates: DecayRates) -> float:
    """Source efficiency Gamma_1^e / (2 Gamma_2)."""
    if rates.gamma2 <= 0:
        raise ValidationError("gamma2 must be positive")
    return rates.gamma1_e / (2 * rates.gamma2)


def _check_grid(grid, name: str) -> np.ndarray:
    g = np.asarray(grid, dtype=float).ravel()
    if g.size == 0:
        raise ValidationError(f"{name} grid is empty")
    if not np.all(np.isfinite(g)):
        raise ValidationError(f"{name} grid has non-finite entries")
    if g.size > 1:
        d = np.diff(g)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValidationError(f"{name} grid must be strictly monotone")
    return g


def flux_spectrum_map(params: QubitParams, flux_grid, probe_grid) -> np.ndarray:
    """|r| over a (probe frequency x flux) grid, shape ``(n_probe, n_flux)``.

    Probe frequencies are in GHz. Flux columns where the transmon formula is
    invalid are filled with 1 (no visible resonance).
    """
    flux = _check_grid(flux_grid, "flux")
    probe = _check_grid(probe_grid, "probe")
    rates = params.decay_rates()
    out = np.ones((probe.size, flux.size))
    for k, phi in enumerate(flux):
        try:
            f01 = transition_frequency(params, phi)
        except RegimeError:
            continue
        detuning_mhz = (probe - f01) * 1e3
        out[:, k] = np.abs(reflection_coefficient(rates, params.gamma1_e, DrivePoint(detuning_mhz)))
    return out


def extract_dips(magnitude: np.ndarray, probe_grid) -> np.ndarray:
    """Probe frequency of the reflection minimum in every flux column.

    Columns without a resonance (all ones) yield NaN.
    """
    probe = np.asarray(probe_grid, dtype=float)
    idx = np.argmin(magnitude, axis=0)
    dips = probe[idx]
    flat = np.all(np.abs(magnitude - 1.0) < 1e-12, axis=0)
    dips[flat] = np.nan
    return dips


def check_rate_consistency(params: QubitParams, t1: float, rtol: float = 0.1) -> list[str]:
    """Compare the spectroscopic Gamma_1 against a time-domain T1 (s).

    Returns human-readable notes; an empty list means the two agree.
    """
    notes = []
    gamma1_t1 = 1.0 / (2 * math.pi * t1) / 1e6
    if abs(gamma1_t1 - params.gamma1) > rtol * params.gamma1:
        notes.append(
            f"T1 = {t1 * 1e9:.1f} ns implies Gamma1/2pi = {gamma1_t1:.3f} MHz, "
            f"but the spectroscopic rates sum to {params.gamma1:.3f} MHz"
        )
    eta_t1 = params.gamma1_e / gamma1_t1
    if eta_t1 > 1 + rtol:
        notes.append(f"Gamma1e with this T1 gives eta = {eta_t1:.3f} > 1")
    return notes
