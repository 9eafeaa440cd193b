import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonstat.errors import RegimeError, UnreachableError, ValidationError
from photonstat.qubit import (
    DecayRates,
    DrivePoint,
    FluxBias,
    QubitParams,
    RegimeWarning,
    check_rate_consistency,
    efficiency,
    extract_dips,
    flux_for_frequency,
    flux_spectrum_map,
    reflection_coefficient,
    regime_limit,
    transition_frequency,
)

PARAMS = QubitParams.reference_device()
RATES = DecayRates.from_fit(2.65, 1.85)


def charge_basis_f01(ej, ec, n_max=40):
    """Lowest transition of 4 E_C n^2 - E_J cos(phi), diagonalized in the charge basis."""
    n = np.arange(-n_max, n_max + 1)
    H = np.diag(4 * ec * n.astype(float) ** 2)
    H -= ej / 2 * (np.eye(n.size, k=1) + np.eye(n.size, k=-1))
    e = np.linalg.eigvalsh(H)
    return e[1] - e[0]


# frozen output of charge_basis_f01 for the default device
CHARGE_BASIS = {0.0: 10.759818351015227, 0.2: 9.634142426248157, 0.4: 5.781278174083579}


class TestTransitionFrequency:
    def test_sweet_spot(self):
        assert transition_frequency(PARAMS, 0.0) == pytest.approx(10.775687898290647, abs=1e-12)
        assert transition_frequency(PARAMS, 0.0) == pytest.approx(10.776, abs=5e-4)

    @pytest.mark.parametrize("phi", sorted(CHARGE_BASIS))
    def test_charge_basis_oracle(self, phi):
        ej = PARAMS.ej_max * abs(math.cos(math.pi * phi))
        exact = charge_basis_f01(ej, PARAMS.ec)
        assert exact == pytest.approx(CHARGE_BASIS[phi], abs=1e-9)
        f = transition_frequency(PARAMS, phi)
        # the closed form overshoots by a correction of order E_C sqrt(E_C/E_J)
        scaled = (f - exact) / (PARAMS.ec * math.sqrt(PARAMS.ec / ej))
        assert 0.3 < scaled < 0.5
        if phi == 0.0:
            assert f / exact - 1 < 2e-3

    def test_array_input(self):
        phi = np.linspace(-0.3, 0.3, 7)
        f = transition_frequency(PARAMS, phi)
        assert f.shape == phi.shape
        np.testing.assert_allclose(f, [transition_frequency(PARAMS, p) for p in phi])

    def test_flux_bias_accepted(self):
        assert transition_frequency(PARAMS, FluxBias(0.25)) == transition_frequency(PARAMS, 0.25)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-0.42, 0.42), st.integers(-3, 3))
    def test_periodic_and_even(self, phi, k):
        f = transition_frequency(PARAMS, phi)
        assert transition_frequency(PARAMS, phi + k) == pytest.approx(f, rel=1e-12)
        assert transition_frequency(PARAMS, -phi) == f

    def test_regime_error_near_half_flux(self):
        with pytest.raises(RegimeError):
            transition_frequency(PARAMS, 0.5)
        lim = regime_limit(PARAMS)
        transition_frequency(PARAMS, lim - 1e-6)
        with pytest.raises(RegimeError):
            transition_frequency(PARAMS, lim + 1e-4)

    def test_nonfinite_flux(self):
        with pytest.raises(ValidationError):
            transition_frequency(PARAMS, float("nan"))

    def test_low_ratio_warns(self):
        with pytest.warns(RegimeWarning):
            QubitParams(ej_max=5.0, ec=0.4, gamma1_e=1.0)

    def test_invalid_params(self):
        with pytest.raises(ValidationError):
            QubitParams(ej_max=0.3, ec=0.4, gamma1_e=1.0)
        with pytest.raises(ValidationError):
            QubitParams(ej_max=39.0, ec=0.4, gamma1_e=-1.0)


class TestFluxForFrequency:
    @staticmethod
    def bisect(target, lo=0.0, hi=None, iters=200):
        """Independent oracle: bisection on the monotone branch [0, regime limit]."""
        hi = regime_limit(PARAMS) if hi is None else hi
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if transition_frequency(PARAMS, mid) > target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    @pytest.mark.parametrize("target", [10.5, 8.886, 8.887, 7.0, 6.0])
    def test_matches_bisection(self, target):
        phi = flux_for_frequency(PARAMS, target).phi_ratio
        assert phi == pytest.approx(self.bisect(target), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 0.43))
    def test_round_trip_within_1khz(self, phi):
        f = transition_frequency(PARAMS, phi)
        back = transition_frequency(PARAMS, flux_for_frequency(PARAMS, f))
        assert abs(back - f) < 1e-6  # GHz

    def test_above_sweet_spot_unreachable(self):
        with pytest.raises(UnreachableError):
            flux_for_frequency(PARAMS, 11.0)

    def test_below_band(self):
        with pytest.raises(RegimeError):
            flux_for_frequency(PARAMS, 1.0)

    def test_fold(self):
        assert FluxBias(0.7).reduced() == pytest.approx(0.3)
        assert FluxBias(-1.2).reduced() == pytest.approx(0.2)


class TestReflection:
    def test_resonance_value(self):
        r = reflection_coefficient(RATES, 2.65, DrivePoint(0.0))
        assert r == pytest.approx(1 - 2.65 / 1.85, abs=1e-12)
        assert r.real == pytest.approx(-0.4324, abs=1e-4)

    def test_far_detuned_limit(self):
        r = reflection_coefficient(RATES, 2.65, DrivePoint(np.array([-1e9, 1e9])))
        np.testing.assert_allclose(r, [1, 1], atol=1e-8)

    def test_circle_locus(self):
        dw = np.linspace(-50, 50, 2001)
        r = reflection_coefficient(RATES, 2.65, DrivePoint(dw))
        c = 1 - 2.65 / (2 * 1.85)
        np.testing.assert_allclose(np.abs(r - c), 2.65 / (2 * 1.85), atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(0.01, 10), st.floats(0.0, 1.0), st.floats(0.0, 5.0),
        st.floats(-100, 100), st.floats(0.0, 50.0),
    )
    def test_passive_bound(self, g1, eta, gphi, dw, omega):
        rates = DecayRates(gamma1=g1, gamma2=g1 / 2 + gphi, gamma1_e=eta * g1)
        r = reflection_coefficient(rates, rates.gamma1_e, DrivePoint(dw, omega))
        assert abs(r) <= 1 + 1e-9

    def test_lossless_unit_modulus(self):
        rates = DecayRates(gamma1=2.0, gamma2=1.0, gamma1_e=2.0)
        r = reflection_coefficient(rates, 2.0, DrivePoint(np.linspace(-20, 20, 101)))
        np.testing.assert_allclose(np.abs(r), 1.0, atol=1e-12)

    def test_saturation_monotone(self):
        omegas = np.linspace(0, 20, 81)
        dip = [abs(1 - reflection_coefficient(RATES, 2.65, DrivePoint(0.0, w))) for w in omegas]
        assert np.all(np.diff(dip) < 0)

    def test_zero_drive_matches_weak_formula(self):
        dw = np.linspace(-10, 10, 41)
        weak = 1 - (2.65 / 1.85) / (1 - 1j * dw / 1.85)
        np.testing.assert_allclose(reflection_coefficient(RATES, 2.65, DrivePoint(dw, 0.0)), weak, atol=1e-15)

    def test_negative_drive_rejected(self):
        with pytest.raises(ValidationError):
            DrivePoint(0.0, -1.0)


class TestEfficiency:
    def test_fitted_rates(self):
        assert efficiency(RATES) == pytest.approx(0.716, abs=1e-3)
        assert efficiency(RATES) == 2.65 / (2 * 1.85)

    def test_limits(self):
        assert efficiency(DecayRates(gamma1=2.0, gamma2=1.0, gamma1_e=2.0)) == 1.0
        assert efficiency(DecayRates(gamma1=2.0, gamma2=1.0, gamma1_e=0.0)) == 0.0

    def test_default_device_rates_agree(self):
        rates = PARAMS.decay_rates()
        assert rates.eta == pytest.approx(efficiency(rates), rel=1e-12)
        assert efficiency(rates) == pytest.approx(0.716, abs=1e-3)

    def test_invalid_rates(self):
        with pytest.raises(ValidationError):
            DecayRates(gamma1=1.0, gamma2=0.4, gamma1_e=1.0)
        with pytest.raises(ValidationError):
            DecayRates(gamma1=1.0, gamma2=0.5, gamma1_e=1.5)

    def test_t1_rates(self):
        r = DecayRates.from_t1(60e-9)
        assert r.gamma1 == pytest.approx(2.6526, abs=1e-4)
        assert r.t1 == pytest.approx(60e-9)

    def test_t1_tension_is_reported(self):
        notes = check_rate_consistency(PARAMS, 60e-9)
        assert len(notes) == 1 and "60.0 ns" in notes[0]
        assert check_rate_consistency(PARAMS, PARAMS.decay_rates().t1) == []


class TestSpectrumMap:
    def test_sweet_spot_column(self):
        probe = np.linspace(10.70, 10.85, 1501)
        mag = flux_spectrum_map(PARAMS, [0.0], probe)
        assert mag.shape == (1501, 1)
        f01 = transition_frequency(PARAMS, 0.0)
        assert probe[np.argmin(mag[:, 0])] == probe[np.argmin(np.abs(probe - f01))]
        assert probe[np.argmin(mag[:, 0])] == pytest.approx(10.776, abs=5e-4)

    def test_far_probe_flat(self):
        mag = flux_spectrum_map(PARAMS, np.linspace(-0.3, 0.3, 7), np.linspace(20, 21, 11))
        np.testing.assert_allclose(mag, 1.0, atol=1e-4)

    def test_symmetric_grid(self):
        half = np.linspace(0.0, 0.4, 9)
        flux = np.concatenate([-half[:0:-1], half])
        mag = flux_spectrum_map(PARAMS, flux, np.linspace(5, 11, 601))
        np.testing.assert_array_equal(mag, mag[:, ::-1])

    def test_dips_follow_dispersion(self):
        flux = np.linspace(-0.4, 0.4, 9)
        probe = np.linspace(5.0, 11.0, 6001)
        dips = extract_dips(flux_spectrum_map(PARAMS, flux, probe), probe)
        np.testing.assert_allclose(dips, transition_frequency(PARAMS, flux), atol=1e-3)

    def test_invalid_columns_masked(self):
        flux = np.array([0.0, 0.5])
        probe = np.linspace(5, 11, 101)
        mag = flux_spectrum_map(PARAMS, flux, probe)
        assert np.all(mag[:, 1] == 1.0)
        dips = extract_dips(mag, probe)
        assert np.isfinite(dips[0]) and np.isnan(dips[1])

    @pytest.mark.parametrize("flux,probe", [([], [1.0, 2.0]), ([0.0], []), ([0.0, 0.2, 0.1], [1.0])])
    def test_bad_grids(self, flux, probe):
        with pytest.raises(ValidationError):
            flux_spectrum_map(PARAMS, flux, probe)

    def test_no_regime_warning_for_default(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            QubitParams.reference_device()
