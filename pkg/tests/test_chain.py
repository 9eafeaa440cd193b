import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonstat.chain import (
    ChainParams,
    IQTrace,
    ShotBlock,
    digital_downconvert,
    downconvert_array,
    matched_filter,
    mode_filter,
    mode_filter_matrix,
    synthesize_block,
    synthesize_shot,
    train_geometry,
)
from photonstat.emission import ModeOutcome, PulseTrainSpec, TemporalMode
from photonstat.errors import ConfigError, GeometryError, ValidationError, WindowError
from photonstat.pipeline import default_mode


def outcomes(values):
    return [ModeOutcome(a, b, p) for p, (a, b) in enumerate(values)]


def filtered(block_field, mode, chain, spec, pulse=0):
    """Matched filter of every row of a block field, through the public single-trace API."""
    return np.array([
        matched_filter(IQTrace(row, chain.dt), mode, pulse, chain.carrier_freq, spec.pulse_period)
        for row in block_field
    ])


def zscore(samples, expected):
    se = math.sqrt(np.var(samples.real) + np.var(samples.imag) if np.iscomplexobj(samples)
                   else np.var(samples)) / math.sqrt(samples.size)
    return abs(samples.mean() - expected) / se


class TestParams:
    def test_defaults(self):
        c = ChainParams()
        assert c.dt == 5e-9
        assert c.trace_len == 320
        assert c.amplitude_gain == 1.0

    def test_presets(self):
        assert ChainParams.twpa().n_add_a == 1.0
        assert ChainParams.hemt().n_add_b == 15.0

    @pytest.mark.parametrize("kw", [
        {"n_add_a": -1.0}, {"if_freq": 150e6}, {"sample_rate": 0.0}, {"trace_len": 0}, {"trace_len": 3.5},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            ChainParams(**kw)

    def test_geometry(self, mode, spec, chain):
        geo = train_geometry(mode, spec, chain)
        assert geo.period == 140
        np.testing.assert_array_equal(geo.peaks, [10, 150])

    def test_geometry_errors(self, mode, spec):
        with pytest.raises(ConfigError):
            train_geometry(mode, spec, ChainParams(trace_len=200))
        with pytest.raises(ConfigError):
            train_geometry(mode, spec, ChainParams(sample_rate=400e6))
        long_mode = default_mode(duration=800e-9)
        with pytest.raises(ConfigError):
            train_geometry(long_mode, spec, ChainParams())
        with pytest.raises(ConfigError):
            train_geometry(mode, PulseTrainSpec(pulse_period=702.5e-9), ChainParams())


class TestSynthesis:
    def test_zero_outcomes_noiseless(self, mode, spec):
        c = ChainParams(n_add_a=0, n_add_b=0)
        shot = synthesize_shot(outcomes([(0, 0), (0, 0)]), mode, spec, c, 0)
        for tr in (shot.sig_a, shot.sig_b, shot.noise_a, shot.noise_b):
            assert not np.any(tr.samples)

    def test_unit_outcome(self, mode, spec):
        c = ChainParams(n_add_a=0, n_add_b=0)
        shot = synthesize_shot(outcomes([(1, 0), (0, 0)]), mode, spec, c, 0, dtype=np.complex128)
        y = matched_filter(shot.sig_a, mode, 0, c.carrier_freq, spec.pulse_period)
        assert abs(y - 1) < 1e-9

    @settings(max_examples=25, deadline=None)
    @given(
        st.lists(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False), min_size=4, max_size=4),
        st.floats(-20, 40),
        st.booleans(),
    )
    def test_adjoint_identity(self, vals, gain_db, modulate):
        mode = default_mode()
        spec = PulseTrainSpec()
        c = ChainParams(n_add_a=0, n_add_b=0, gain_db=gain_db, modulate_if=modulate)
        shot = synthesize_shot(outcomes([(vals[0], vals[1]), (vals[2], vals[3])]), mode, spec, c, 0,
                               dtype=np.complex128)
        g = c.amplitude_gain
        for p in range(2):
            ya = matched_filter(shot.sig_a, mode, p, c.carrier_freq, spec.pulse_period)
            yb = matched_filter(shot.sig_b, mode, p, c.carrier_freq, spec.pulse_period)
            assert abs(ya - g * vals[2 * p]) < 1e-9 * max(1.0, g)
            assert abs(yb - g * vals[2 * p + 1]) < 1e-9 * max(1.0, g)

    def test_complex64_storage_precision(self, mode, spec):
        c = ChainParams(n_add_a=0, n_add_b=0)
        shot = synthesize_shot(outcomes([(1.5 - 2j, 0.3j), (0.1, -1)]), mode, spec, c, 0)
        assert shot.sig_a.samples.dtype == np.complex64
        y = matched_filter(shot.sig_a, mode, 0, c.carrier_freq, spec.pulse_period)
        assert abs(y - (1.5 - 2j)) < 1e-5

    def test_orthogonal_windows(self, mode, spec):
        c = ChainParams(n_add_a=0, n_add_b=0)
        ref = synthesize_shot(outcomes([(1, 1), (0, 0)]), mode, spec, c, 0, dtype=np.complex128)
        other = synthesize_shot(outcomes([(1, 1), (3 - 4j, 2)]), mode, spec, c, 0, dtype=np.complex128)
        y0 = matched_filter(ref.sig_a, mode, 0, c.carrier_freq, spec.pulse_period)
        y1 = matched_filter(other.sig_a, mode, 0, c.carrier_freq, spec.pulse_period)
        assert abs(y1 - y0) < 1e-9

    def test_gain_doubles_amplitude(self, mode, spec):
        lo = ChainParams(n_add_a=0, n_add_b=0, gain_db=10.0)
        hi = ChainParams(n_add_a=0, n_add_b=0, gain_db=10.0 + 20 * math.log10(2))
        o = outcomes([(0.7 + 0.2j, 1), (0.5, -0.5j)])
        s_lo = synthesize_shot(o, mode, spec, lo, 0, dtype=np.complex128)
        s_hi = synthesize_shot(o, mode, spec, hi, 0, dtype=np.complex128)
        for p in range(2):
            a = matched_filter(s_lo.sig_a, mode, p, lo.carrier_freq, spec.pulse_period)
            b = matched_filter(s_hi.sig_a, mode, p, hi.carrier_freq, spec.pulse_period)
            assert b == pytest.approx(2 * a, rel=1e-12)

    def test_reproducible_with_seed(self, mode, spec, chain):
        a = np.ones((3, 2))
        b1 = synthesize_block(a, a, mode, spec, chain, 42)
        b2 = synthesize_block(a, a, mode, spec, chain, 42)
        np.testing.assert_array_equal(b1.sig_a, b2.sig_a)
        np.testing.assert_array_equal(b1.noise_b, b2.noise_b)

    def test_per_sample_variance(self, mode, spec):
        c = ChainParams(n_add_a=3.0, n_add_b=0.0, gain_db=6.0)
        blk = synthesize_block(np.zeros((2000, 2)), np.zeros((2000, 2)), mode, spec, c, 1)
        expected = 3.0 * c.amplitude_gain**2 / c.dt
        assert np.mean(np.abs(blk.noise_a) ** 2) == pytest.approx(expected, rel=0.01)
        assert not np.any(blk.noise_b)

    def test_shape_errors(self, mode, spec, chain):
        with pytest.raises(ConfigError):
            synthesize_block(np.zeros((2, 3)), np.zeros((2, 3)), mode, spec, chain, 0)
        with pytest.raises(ConfigError):
            synthesize_shot(outcomes([(0, 0)]), mode, spec, chain, 0)
        with pytest.raises(ValidationError):
            synthesize_block(np.zeros((2, 2)), np.zeros((2, 2)), mode, spec, chain, 0, dtype=np.float64)

    def test_block_records_round_trip(self, mode, spec, chain):
        blk = synthesize_block(np.ones((4, 2)), np.zeros((4, 2)), mode, spec, chain, 5, shot_start=8)
        recs = list(blk.records())
        assert [r.shot_index for r in recs] == [8, 9, 10, 11]
        assert recs[1].noise_b.kind == "noise_ref" and recs[1].sig_b.channel == "b"
        back = ShotBlock.from_records(recs)
        np.testing.assert_array_equal(back.sig_a, blk.sig_a)
        np.testing.assert_array_equal(back.shot_indices, blk.shot_indices)

    def test_block_shape_mismatch(self):
        with pytest.raises(GeometryError):
            ShotBlock(np.zeros((2, 4)), np.zeros((2, 5)), np.zeros((2, 4)), np.zeros((2, 4)), 1.0)


N_NOISE = 100_000


@pytest.fixture(scope="module")
def filtered_noise(mode, spec):
    """Matched-filter outputs of 10^5 pure-noise shots, n_add = 4 on a and 1 on b."""
    chain = ChainParams(n_add_a=4.0, n_add_b=1.0)
    parts = {k: [] for k in ("sig_a", "sig_b", "noise_a", "noise_b")}
    for start in range(0, N_NOISE, 10_000):
        z = np.zeros((10_000, 2))
        blk = synthesize_block(z, z, mode, spec, chain, np.random.default_rng(start), shot_start=start)
        for k in parts:
            parts[k].append(filtered(getattr(blk, k), mode, chain, spec, pulse=1))
    return {k: np.concatenate(v) for k, v in parts.items()}


class TestNoiseStatistics:
    def test_variance_equals_n_add(self, filtered_noise):
        for key, n_add in (("sig_a", 4.0), ("noise_a", 4.0), ("sig_b", 1.0), ("noise_b", 1.0)):
            p = np.abs(filtered_noise[key]) ** 2
            assert zscore(p, n_add) < 5, key

    def test_zero_mean(self, filtered_noise):
        for key, y in filtered_noise.items():
            assert zscore(y, 0.0) < 5, key

    def test_channel_independence(self, filtered_noise):
        for s, n in (("sig_a", "sig_b"), ("noise_a", "noise_b"), ("sig_a", "noise_a")):
            assert zscore(np.conj(filtered_noise[s]) * filtered_noise[n], 0.0) < 5

    def test_common_noise_is_correlated(self, mode, spec):
        chain = ChainParams(n_add_a=0.0, n_add_b=0.0, n_corr=2.0)
        z = np.zeros((5000, 2))
        blk = synthesize_block(z, z, mode, spec, chain, 3)
        ya = filtered(blk.noise_a, mode, chain, spec)
        yb = filtered(blk.noise_b, mode, chain, spec)
        c = np.conj(ya) * yb
        assert c.mean().real == pytest.approx(2.0, abs=5 * c.real.std() / math.sqrt(c.size))


class TestDownconvert:
    def test_zero_if_identity(self):
        x = np.random.default_rng(0).standard_normal(64) + 0j
        tr = IQTrace(x, 5e-9)
        np.testing.assert_array_equal(digital_downconvert(tr, 0.0).samples, x)

    def test_group_property(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(128) + 1j * rng.standard_normal(128)
        tr = IQTrace(x, 5e-9, "b", "noise_ref")
        back = digital_downconvert(digital_downconvert(tr, 37e6), -37e6)
        np.testing.assert_allclose(back.samples, x, atol=1e-12)
        assert back.channel == "b" and back.kind == "noise_ref"

    def test_peak_phase_after_synthesis(self, mode, spec):
        c = ChainParams(n_add_a=0, n_add_b=0)
        shot = synthesize_shot(outcomes([(0.8, 0), (0, 0)]), mode, spec, c, 0, dtype=np.complex128)
        bb = digital_downconvert(shot.sig_a, c.if_freq).samples
        k = int(np.argmax(np.abs(bb)))
        assert k == mode.origin_index
        assert abs(np.angle(bb[k])) < 1e-9

    def test_array_form(self):
        x = np.random.default_rng(2).standard_normal((3, 50)) + 0j
        a = downconvert_array(x, 50e6, 5e-9)
        np.testing.assert_allclose(a[1], digital_downconvert(IQTrace(x[1], 5e-9), 50e6).samples)

    def test_nyquist(self):
        with pytest.raises(ValidationError):
            digital_downconvert(IQTrace(np.zeros(8), 5e-9), 100e6)


class TestMatchedFilter:
    def test_window_error(self, mode, spec, chain):
        tr = IQTrace(np.zeros(chain.trace_len, complex), chain.dt)
        with pytest.raises(WindowError):
            matched_filter(tr, mode, 2, chain.if_freq, spec.pulse_period)
        with pytest.raises(WindowError):
            matched_filter(tr, mode, -1, chain.if_freq, spec.pulse_period)

    def test_dt_mismatch(self, mode, spec):
        tr = IQTrace(np.zeros(640, complex), 2.5e-9)
        with pytest.raises(GeometryError):
            matched_filter(tr, mode, 0, 0.0, spec.pulse_period)

    def test_sliding_filter_matches(self, mode, spec, chain):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(chain.trace_len) + 1j * rng.standard_normal(chain.trace_len)
        y = mode_filter(x, mode)
        for p in range(2):
            start = mode.origin_index + 140 * p
            direct = matched_filter(IQTrace(x, chain.dt), mode, p, 0.0, spec.pulse_period)
            assert y[start] == pytest.approx(direct, abs=1e-12)

    def test_filter_matrix(self, mode):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((3, 320)) + 1j * rng.standard_normal((3, 320))
        support = np.array([0, 9, 10, 11, 149, 150, 151, 250, 319])
        W = mode_filter_matrix(mode, 320, support)
        np.testing.assert_allclose(x @ W, mode_filter(x, mode)[:, support], atol=1e-12)

    def test_short_mode(self):
        f = np.array([1.0, 1.0]) / math.sqrt(2.0)
        m = TemporalMode(f, 1.0)
        x = np.array([1.0, 2.0, 3.0, 4.0])
        expected = [(1 + 2) / math.sqrt(2), (2 + 3) / math.sqrt(2), (3 + 4) / math.sqrt(2), 4 / math.sqrt(2)]
        np.testing.assert_allclose(mode_filter(x, m), expected, atol=1e-12)
