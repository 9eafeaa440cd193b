"""Least-squares recovery of device and state parameters.

All fits use Levenberg-Marquardt (``scipy.optimize.least_squares`` with
``method="lm"``) with relative tolerances of 1e-10 and at most 200
iterations per parameter. One-sigma uncertainties come from the local
quadratic model, ``cov = (J^T J)^-1 s^2`` with ``s^2`` the residual
variance per degree of freedom.

The estimators follow the scikit-learn conventions (``fit(X, y)``,
``predict(X)``, ``score(X, y)`` giving R^2, ``get_params``); the functional
wrappers ``fit_reflection``, ``fit_flux_spectrum`` and ``fit_rabi`` return a
:class:`FitReport` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator

from ._validation import as_complex_1d, as_real_1d, check_lengths, check_min_points, split_pairs
from .chain import ChainParams
from .correlator import peak_batches
from .emission import PreparedState, PulseTrainSpec, TemporalMode
from .errors import DegenerateData, DomainError, NoConvergence, UnderdeterminedError, ValidationError
from .qubit import DecayRates, QubitParams, efficiency, transition_frequency

TOL = 1e-10
MAX_ITER = 200


@dataclass
class FitReport:
    """Estimates with one-sigma errors and goodness of fit."""

    params: dict[str, float]
    stderr: dict[str, float]
    residual_norm: float
    r_squared: float
    n_points: int
    converged: bool
    gradient_norm: float = 0.0
    derived: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        if name in self.params:
            return self.params[name]
        return self.derived[name]

    def to_dict(self) -> dict:
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            return float(v) if isinstance(v, (np.floating, float, int)) else v

        return {
            "params": {k: float(v) for k, v in self.params.items()},
            "stderr": {k: float(v) for k, v in self.stderr.items()},
            "residual_norm": float(self.residual_norm),
            "r_squared": float(self.r_squared),
            "n_points": int(self.n_points),
            "converged": bool(self.converged),
            "gradient_norm": float(self.gradient_norm),
            "derived": {k: plain(v) for k, v in self.derived.items()},
        }


def _lm(residual, x0, names, n_points, r_squared_fn, max_iter=MAX_ITER, tol=TOL) -> FitReport:
    x0 = np.asarray(x0, dtype=float)
    try:
        res = least_squares(residual, x0, method="lm", xtol=tol, ftol=tol, gtol=tol,
                            x_scale="jac", max_nfev=max_iter * (x0.size + 1))
    except ValueError as exc:
        raise NoConvergence(str(exc)) from exc
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise NoConvergence(f"Levenberg-Marquardt stopped without convergence: {res.message}")
    J, r = res.jac, res.fun
    dof = r.size - x0.size
    s2 = float(r @ r) / dof if dof > 0 else float("nan")
    try:
        cov = np.linalg.inv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(J.T @ J) * s2
    err = np.sqrt(np.abs(np.diag(cov)))
    return FitReport(
        params=dict(zip(names, map(float, res.x))),
        stderr=dict(zip(names, map(float, err))),
        residual_norm=float(np.sqrt(r @ r)),
        r_squared=float(r_squared_fn(res.x)),
        n_points=n_points,
        converged=True,
        gradient_norm=float(np.linalg.norm(J.T @ r)),
    )


def _r2_real(y, yhat) -> float:
    tss = float(np.sum((y - y.mean()) ** 2))
    rss = float(np.sum((y - yhat) ** 2))
    return 1.0 - rss / tss if tss > 0 else (1.0 if rss == 0 else 0.0)


def _r2_complex(y, yhat) -> float:
    tss = float(np.sum(np.abs(y - y.mean()) ** 2))
    rss = float(np.sum(np.abs(y - yhat) ** 2))
    return 1.0 - rss / tss if tss > 0 else (1.0 if rss == 0 else 0.0)


class _Fitted:
    def _check_fitted(self):
        if not hasattr(self, "report_"):
            raise ValidationError(f"{type(self).__name__} is not fitted")


# ---------------------------------------------------------------------------
# reflection


def reflection_model(detuning, gamma1_e, gamma2, amplitude=1.0, phase=0.0, offset=0.0):
    """Weak-drive reflection times a complex background ``amplitude e^{i phase}``."""
    x = (np.asarray(detuning, dtype=float) - offset) / gamma2
    return amplitude * np.exp(1j * phase) * (1 - (gamma1_e / gamma2) / (1 - 1j * x))


def circle_fit(z: np.ndarray) -> tuple[complex, float]:
    """Algebraic least-squares circle through complex points: (center, radius).

    Raises
    ------
    DegenerateData
        If the points are (nearly) constant or collinear.
    """
    z = np.asarray(z, dtype=complex)
    pts = np.column_stack([z.real, z.imag])
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    scale = max(1.0, float(np.max(np.abs(pts))))
    if sv[0] <= 1e-12 * scale * math.sqrt(len(z)):
        raise DegenerateData("data are constant in the complex plane; no resonance visible")
    if sv[1] <= 1e-6 * sv[0]:
        raise DegenerateData("data are collinear in the complex plane")
    A = np.column_stack([z.real, z.imag, np.ones(z.size)])
    b = -(z.real**2 + z.imag**2)
    (D, E, F), *_ = np.linalg.lstsq(A, b, rcond=None)
    center = complex(-D / 2, -E / 2)
    radius = math.sqrt(max(abs(center) ** 2 - F, 0.0))
    return center, radius


class ReflectionFit(BaseEstimator, _Fitted):
    """Fit of complex reflection versus probe detuning.

    Parameters are ``gamma1_e``, ``gamma2`` (same unit as the detuning),
    the background ``amplitude`` and ``phase`` and a resonance ``offset``.
    The efficiency ``eta = gamma1_e / (2 gamma2)`` is reported as derived.
    """

    def __init__(self, fit_background=True, fit_offset=True, max_iter=MAX_ITER, tol=TOL):
        self.fit_background = fit_background
        self.fit_offset = fit_offset
        self.max_iter = max_iter
        self.tol = tol

    def _names(self):
        names = ["gamma1_e", "gamma2"]
        if self.fit_background:
            names += ["amplitude", "phase"]
        if self.fit_offset:
            names.append("offset")
        return names

    def _unpack(self, p):
        kw = dict(zip(self._names(), p))
        return kw

    def _initial(self, x, z):
        center, radius = circle_fit(z)
        near = int(np.argmin(np.abs(x)))
        # resonance point projected on the circle; the far-detuned point sits opposite
        u = z[near] - center
        z_res = center + radius * u / abs(u) if abs(u) > 0 else z[near]
        z_inf = 2 * center - z_res
        if not self.fit_background:
            z_inf = 1.0 + 0j
        k = 2 * radius / abs(z_inf)
        w = 1 - z / z_inf
        ok = np.abs(w) > 1e-3 * k
        xi = -np.imag(k / w[ok])
        A = np.column_stack([xi, np.ones(xi.size)]) if self.fit_offset else xi[:, None]
        coef, *_ = np.linalg.lstsq(A, x[ok], rcond=None)
        gamma2 = abs(coef[0]) if coef[0] != 0 else float(np.ptp(x)) / 4
        p = {"gamma1_e": k * gamma2, "gamma2": gamma2, "amplitude": abs(z_inf),
             "phase": float(np.angle(z_inf)), "offset": float(coef[1]) if self.fit_offset else 0.0}
        return [p[n] for n in self._names()]

    def fit(self, X, y):
        x = as_real_1d(X, "detuning")
        z = as_complex_1d(y, "reflection")
        n = check_lengths(x, z)
        check_min_points(n, 6, "reflection fit")
        x0 = self._initial(x, z)

        def resid(p):
            d = reflection_model(x, **self._unpack(p)) - z
            return np.concatenate([d.real, d.imag])

        def r2(p):
            return _r2_complex(z, reflection_model(x, **self._unpack(p)))

        rep = _lm(resid, x0, self._names(), n, r2, self.max_iter, self.tol)
        rep.params["gamma2"] = abs(rep.params["gamma2"])
        if self.fit_background and rep.params["amplitude"] < 0:
            rep.params["amplitude"] *= -1
            rep.params["phase"] += math.pi
        if "phase" in rep.params:
            rep.params["phase"] = float(np.angle(np.exp(1j * rep.params["phase"])))
        g1e, g2 = rep.params["gamma1_e"], rep.params["gamma2"]
        eta = g1e / (2 * g2)
        eta_err = eta * math.hypot(rep.stderr["gamma1_e"] / g1e, rep.stderr["gamma2"] / g2) if g1e else float("nan")
        rep.derived.update(eta=eta, eta_stderr=eta_err)
        self.report_ = rep
        return self

    def predict(self, X):
        self._check_fitted()
        return reflection_model(as_real_1d(X, "detuning"), **{k: self.report_.params[k] for k in self._names()})

    def score(self, X, y):
        return _r2_complex(as_complex_1d(y, "reflection"), self.predict(X))

    def decay_rates(self, gamma_phi: float = 0.0) -> DecayRates:
        self._check_fitted()
        return DecayRates.from_fit(self.report_.params["gamma1_e"], self.report_.params["gamma2"], gamma_phi)


def saturated_reflection_model(detuning, power_dbm, gamma1_e, gamma2, k, amplitude=1.0, phase=0.0):
    """Reflection with drive saturation, ``Omega^2 = k * P`` (P in mW) and ``Gamma1 = 2 Gamma2``."""
    x = np.asarray(detuning, dtype=float) / gamma2
    omega2 = k * 10 ** (np.asarray(power_dbm, dtype=float) / 10)
    sat = omega2 / (2 * gamma2 * gamma2)
    return amplitude * np.exp(1j * phase) * (1 - (gamma1_e / gamma2) * (1 + 1j * x) / (1 + x**2 + sat))


class PowerSweepReflectionFit(BaseEstimator, _Fitted):
    """Joint fit of reflection traces taken at several drive powers.

    ``X`` has columns ``(detuning, power_dBm)``. Shared parameters are
    ``gamma1_e``, ``gamma2`` and the power-to-Rabi conversion ``k``;
    the per-power Rabi amplitudes are derived as ``sqrt(k P)``.
    Pure dephasing is assumed zero so that ``Gamma1 = 2 Gamma2``.
    """

    def __init__(self, fit_background=True, max_iter=MAX_ITER, tol=TOL):
        self.fit_background = fit_background
        self.max_iter = max_iter
        self.tol = tol

    def _names(self):
        return ["gamma1_e", "gamma2", "k"] + (["amplitude", "phase"] if self.fit_background else [])

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValidationError("X must have columns (detuning, power_dBm)")
        z = as_complex_1d(y, "reflection")
        n = check_lengths(X, z)
        check_min_points(n, 6, "power-sweep reflection fit")
        det, pw = X[:, 0], X[:, 1]
        low = pw <= pw.min() + 1e-9
        if low.sum() >= 6:
            base = ReflectionFit(self.fit_background, fit_offset=False).fit(det[low], z[low]).report_.params
        else:
            center, radius = circle_fit(z)
            base = {"gamma1_e": 2 * radius, "gamma2": float(np.ptp(det)) / 4 or 1.0, "amplitude": 1.0, "phase": 0.0}
        p_lin = 10 ** (pw / 10)
        k0 = 2 * base["gamma2"] ** 2 / float(np.median(p_lin))
        best = None
        for scale in 10.0 ** np.arange(-3, 4):
            x0 = [base["gamma1_e"], base["gamma2"], k0 * scale]
            if self.fit_background:
                x0 += [base.get("amplitude", 1.0), base.get("phase", 0.0)]
            c = float(np.sum(np.abs(self._model(det, pw, x0) - z) ** 2))
            if best is None or c < best[0]:
                best = (c, x0)
        x0 = best[1]

        def resid(p):
            d = self._model(det, pw, p) - z
            return np.concatenate([d.real, d.imag])

        rep = _lm(resid, x0, self._names(), n, lambda p: _r2_complex(z, self._model(det, pw, p)),
                  self.max_iter, self.tol)
        powers = np.unique(pw)
        rep.derived["powers_dbm"] = powers
        rep.derived["rabi_amp"] = np.sqrt(np.abs(rep.params["k"]) * 10 ** (powers / 10))
        rep.derived["eta"] = rep.params["gamma1_e"] / (2 * rep.params["gamma2"])
        self.report_ = rep
        return self

    def _model(self, det, pw, p):
        return saturated_reflection_model(det, pw, **dict(zip(self._names(), p)))

    def predict(self, X):
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        return self._model(X[:, 0], X[:, 1], [self.report_.params[k] for k in self._names()])

    def score(self, X, y):
        return _r2_complex(as_complex_1d(y, "reflection"), self.predict(X))


def fit_reflection(data, y=None, **kw) -> FitReport:
    """Fit reflection data given as ``(detuning, r)`` arrays or a list of pairs."""
    x, z = split_pairs(data, y, complex_y=True)
    return ReflectionFit(**kw).fit(x, z).report_


# ---------------------------------------------------------------------------
# flux spectrum


def _dispersion(flux, ej_max, ec):
    return np.sqrt(8 * ej_max * np.abs(np.cos(np.pi * flux)) * ec) - ec


class FluxSpectrumFit(BaseEstimator, _Fitted):
    """Fit ``ej_max`` and ``ec`` (GHz) to transition frequency versus flux."""

    def __init__(self, max_iter=MAX_ITER, tol=TOL, ec_grid=(0.02, 3.0, 300)):
        self.max_iter = max_iter
        self.tol = tol
        self.ec_grid = ec_grid

    def _initial(self, phi, f):
        c = np.abs(np.cos(np.pi * phi))
        best = None
        lo, hi, n = self.ec_grid
        for ec in np.geomspace(lo, hi, int(n)):
            ej = float(np.dot((f + ec) ** 2, c) / (8 * ec * np.dot(c, c)))
            if ej <= 0:
                continue
            cost = float(np.sum((_dispersion(phi, ej, ec) - f) ** 2))
            if best is None or cost < best[0]:
                best = (cost, ej, ec)
        if best is None:
            raise DegenerateData("no positive E_J is consistent with the data")
        return best[1:]

    def fit(self, X, y):
        phi = as_real_1d(X, "flux")
        f = as_real_1d(y, "frequency")
        n = check_lengths(phi, f)
        check_min_points(n, 3, "flux-spectrum fit")
        if np.unique(np.round(np.abs(np.cos(np.pi * phi)), 12)).size < 2:
            raise UnderdeterminedError("all points share one flux value; E_J and E_C are not separable")
        x0 = self._initial(phi, f)
        rep = _lm(lambda p: _dispersion(phi, *p) - f, x0, ["ej_max", "ec"], n,
                  lambda p: _r2_real(f, _dispersion(phi, *p)), self.max_iter, self.tol)
        if rep.params["ec"] <= 0 or rep.params["ej_max"] <= rep.params["ec"]:
            raise NoConvergence("fit left the physical region (need ej_max > ec > 0)")
        # raises RegimeError if the data lie outside the transmon regime of the fit
        transition_frequency(self.qubit_params(rep), phi)
        self.report_ = rep
        return self

    @staticmethod
    def qubit_params(rep: FitReport) -> QubitParams:
        return QubitParams(ej_max=rep.params["ej_max"], ec=rep.params["ec"], gamma1_e=0.0)

    def predict(self, X):
        self._check_fitted()
        return _dispersion(as_real_1d(X, "flux"), self.report_.params["ej_max"], self.report_.params["ec"])

    def score(self, X, y):
        return _r2_real(as_real_1d(y, "frequency"), self.predict(X))


def fit_flux_spectrum(data, y=None, **kw) -> FitReport:
    """Fit ``(flux, dip frequency)`` data; a list of pairs is accepted too."""
    x, f = split_pairs(data, y)
    return FluxSpectrumFit(**kw).fit(x, f).report_


# ---------------------------------------------------------------------------
# Rabi curves

RABI_MODELS = {
    # mean quadrature ~ <a> = F sin(theta) / 2
    "quadrature": lambda th, s: np.sin(s * th) / 2,
    # emitted power ~ <n> = F sin^2(theta / 2)
    "power": lambda th, s: np.sin(s * th / 2) ** 2,
    # first-order side peaks ~ |<a>|^2
    "coherence": lambda th, s: np.sin(s * th) ** 2 / 4,
    # second-order side peaks ~ <n>^2
    "pair": lambda th, s: np.sin(s * th / 2) ** 4,
}


class RabiFit(BaseEstimator, _Fitted):
    """Fit ``A * shape(s * theta) + c`` for one of :data:`RABI_MODELS`."""

    def __init__(self, model="quadrature", max_iter=MAX_ITER, tol=TOL):
        self.model = model
        self.max_iter = max_iter
        self.tol = tol

    def _shape(self):
        if self.model not in RABI_MODELS:
            raise ValidationError(f"unknown Rabi model {self.model!r}; choose from {sorted(RABI_MODELS)}")
        return RABI_MODELS[self.model]

    def fit(self, X, y, sample_weight=None):
        shape = self._shape()
        th = as_real_1d(X, "theta_r")
        v = as_real_1d(y, "value")
        n = check_lengths(th, v)
        check_min_points(n, 8, "Rabi fit")
        w = np.ones(n) if sample_weight is None else as_real_1d(sample_weight, "sample_weight")
        sw = np.sqrt(w)
        best = None
        for s in np.linspace(0.5, 2.0, 61):
            A = np.column_stack([shape(th, s), np.ones(n)]) * sw[:, None]
            coef, *_ = np.linalg.lstsq(A, v * sw, rcond=None)
            cost = float(np.sum((A @ coef - v * sw) ** 2))
            if best is None or cost < best[0]:
                best = (cost, [coef[0], s, coef[1]])

        def model(p):
            return p[0] * shape(th, p[1]) + p[2]

        rep = _lm(lambda p: (model(p) - v) * sw, best[1], ["amplitude", "scale", "offset"], n,
                  lambda p: _r2_real(v, model(p)), self.max_iter, self.tol)
        self.report_ = rep
        return self

    def predict(self, X):
        self._check_fitted()
        p = self.report_.params
        return p["amplitude"] * self._shape()(as_real_1d(X, "theta_r"), p["scale"]) + p["offset"]

    def score(self, X, y):
        return _r2_real(as_real_1d(y, "value"), self.predict(X))


def fit_rabi(peaks, values=None, model: str = "quadrature", **kw) -> FitReport:
    """Fit Rabi peaks given as ``(theta_r, value)`` arrays or a list of pairs."""
    th, v = split_pairs(peaks, values)
    return RabiFit(model=model, **kw).fit(th, v).report_


# ---------------------------------------------------------------------------
# theory curves


def _state_moments(state: PreparedState):
    n = state.mean_photon_number
    return n, state.mean_field, state.two_photon_moment


def g2_theory(theta_r: float | None = None, fidelity: float = 1.0, *, state: PreparedState | None = None) -> dict:
    """Second-order peaks in photon units: ``center = <a+^2 a^2>``, ``side = <n>^2``.

    For a qubit-prepared mode the center vanishes; for a coherent state the
    two agree.
    """
    if state is None:
        if theta_r is None:
            raise ValidationError("give theta_r or a state")
        if not 0 <= fidelity <= 1:
            raise DomainError("fidelity must lie in [0, 1]")
        state = PreparedState(theta_r=float(theta_r), fidelity=float(fidelity))
    n, _, n2 = _state_moments(state)
    side = n * n
    return {"center": n2, "side": side, "ratio": n2 / side if side > 0 else float("nan")}


def mode_autocorrelation(mode: TemporalMode, max_shift: int) -> np.ndarray:
    """``rho(d) = sum_k conj(f_k) f_{k+d} dt`` for ``d = -max_shift .. max_shift``."""
    f = mode.samples
    out = np.zeros(2 * max_shift + 1, dtype=complex)
    for i, d in enumerate(range(-max_shift, max_shift + 1)):
        if d >= 0:
            out[i] = np.sum(np.conj(f[: f.size - d]) * f[d:]) * mode.dt if d < f.size else 0
        else:
            out[i] = np.sum(np.conj(f[-d:]) * f[: f.size + d]) * mode.dt if -d < f.size else 0
    return out


def gate_factors(mode: TemporalMode | None, gate: int | None) -> tuple[float, float]:
    """Scale factors of the gated first- and second-order peak integrals.

    ``kappa1 = |sum_d rho(d)|^2`` and ``kappa2 = (sum_d |rho(d)|^2)^2`` over
    the gate ``|d| <= gate``; both are 1 without gating.
    """
    if mode is None or not gate:
        return 1.0, 1.0
    rho = mode_autocorrelation(mode, gate)
    return float(abs(rho.sum()) ** 2), float(np.sum(np.abs(rho) ** 2) ** 2)


def correlation_theory(state: PreparedState, mode: TemporalMode | None = None, gate: int | None = 0,
                       gain_db: float = 0.0) -> dict:
    """Expected peak integrals per pulse pair, as reported by ``peak_extract``.

    Each channel carries half the photon flux, so ``G1 center = <n>/2``,
    ``G1 side = |<a>|^2/2``, ``G2 center = <a+^2 a^2>/4`` and
    ``G2 side = <n>^2/4``, times gate factors and the power gain.
    """
    n, a, n2 = _state_moments(state)
    k1, k2 = gate_factors(mode, gate)
    g = 10 ** (gain_db / 10)
    return {
        "G1_center": g * k1 * n / 2,
        "G1_side": g * k1 * abs(a) ** 2 / 2,
        "G2_center": g * g * k2 * n2 / 4,
        "G2_side": g * g * k2 * n * n / 4,
        "quadrature": math.sqrt(g) * a / math.sqrt(2),
        "power": g * n / 2,
    }


def total_efficiency(rates: DecayRates | float, fidelity: float) -> float:
    """Overall single-photon efficiency: source efficiency times preparation fidelity."""
    eta = efficiency(rates) if isinstance(rates, DecayRates) else float(rates)
    if not 0 <= eta <= 1:
        raise DomainError(f"efficiency {eta} outside [0, 1]")
    if not 0 <= fidelity <= 1:
        raise DomainError(f"fidelity {fidelity} outside [0, 1]")
    return eta * fidelity


# ---------------------------------------------------------------------------
# shot budget


#: substream used by pilot runs so they never reuse production random numbers
PILOT_SUBSTREAM = 1 << 40


@dataclass
class PrecisionEstimate:
    """Shots needed for a target standard error of the G2 center/side ratio."""

    n_add: float
    target: float
    shots: float
    pilot_shots: int
    pilot_stderr: float
    ratio: float
    center_ref: float
    side_ref: float

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def _ratio_moments(result):
    """Weighted means and covariance of the means of (center, side) G2 integrals."""
    ns, pairs, _, bG2, w = peak_batches(result)
    side = ns != 0
    sw = pairs[side] / pairs[side].sum()
    rows = np.column_stack([bG2[:, ns == 0][:, 0], bG2[:, side] @ sw])
    B = rows.shape[0]
    mean = w @ rows
    dev = rows - mean
    cov = (dev * (w**2)[:, None]).T @ dev * B / (B - 1)
    return mean, cov


def shots_to_precision(
    n_add: float,
    target: float,
    state: PreparedState,
    *,
    mode: TemporalMode | None = None,
    spec: PulseTrainSpec | None = None,
    chain: ChainParams | None = None,
    pilot_shots: int = 32_000,
    n_batches: int = 64,
    seed: int = 0,
    side_reference: tuple[float, float] | None = None,
    reference_n_add: float = 0.0,
    workers: int = 1,
) -> PrecisionEstimate:
    """Extrapolate the shot count reaching ``target`` stderr on G2(0)/G2(side).

    A pilot run at ``n_add`` gives the variance and covariance of the
    center and side peak integrals. The delta-method variance of the ratio
    is evaluated at reference means (``side_reference`` as ``(center,
    side)``, or a pilot at ``reference_n_add`` with the same seed), so the
    estimate does not inherit the pilot's own noise in the denominator.
    Shots scale as ``pilot_shots * var / target^2``.
    """
    from .pipeline import SimulationPlan, default_mode, simulate_correlation

    if n_add < 0:
        raise DomainError("n_add must be >= 0")
    if target <= 0:
        raise DomainError("target stderr must be positive")
    spec = spec or PulseTrainSpec.eight_pulse()
    chain = chain or ChainParams(trace_len=int(round(spec.control_period * 200e6)))
    mode = mode or default_mode(dt=chain.dt)
    if spec.n_pulses < 2:
        raise ValidationError("the side peak needs at least two pulses")

    def pilot(nadd):
        ch = ChainParams(**{**chain.__dict__, "n_add_a": nadd, "n_add_b": nadd})
        plan = SimulationPlan(state, mode, spec, ch, shots=pilot_shots, seed=seed,
                              n_batches=n_batches, substream=PILOT_SUBSTREAM, time_resolved=False)
        return _ratio_moments(simulate_correlation(plan, workers))

    mean, cov = pilot(n_add)
    if side_reference is not None:
        c_ref, s_ref = map(float, side_reference)
    elif n_add == reference_n_add:
        c_ref, s_ref = map(float, mean)
    else:
        c_ref, s_ref = map(float, pilot(reference_n_add)[0])
    if s_ref == 0:
        raise DegenerateData("the reference side peak vanishes; the ratio is undefined")
    R = c_ref / s_ref
    var = (cov[0, 0] - 2 * R * cov[0, 1] + R * R * cov[1, 1]) / s_ref**2
    stderr = math.sqrt(max(var, 0.0))
    return PrecisionEstimate(
        n_add=float(n_add),
        target=float(target),
        shots=pilot_shots * (stderr / target) ** 2,
        pilot_shots=pilot_shots,
        pilot_stderr=stderr,
        ratio=float(mean[0] / mean[1]) if mean[1] else float("nan"),
        center_ref=c_ref,
        side_ref=s_ref,
    )
