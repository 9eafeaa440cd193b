"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``C<k> PASS|FAIL`` line (visible without ``-s``)
before asserting. The Monte Carlo criteria run at full shot counts and take
several minutes in total.
"""

import json
import math
import time

import numpy as np
import pytest

from photonstat.chain import ChainParams, IQTrace, ShotRecord
from photonstat.cli import bench_throughput, run_rabi
from photonstat.config import build_config
from photonstat.correlator import CorrelationAccumulator, CorrelatorConfig, LagGrid, peak_extract
from photonstat.emission import (
    PulseTrainSpec,
    coherent_state,
    heterodyne_moments,
    prepare_state,
    sample_mode_outcomes,
    vacuum_state,
)
from photonstat.fitting import fit_reflection, reflection_model, shots_to_precision
from photonstat.pipeline import SimulationPlan, accumulate_plan, default_mode, simulate_correlation
from photonstat.qubit import DecayRates, QubitParams, efficiency, transition_frequency
from photonstat.rng import KeyedStream


@pytest.fixture()
def verdict(capsys):
    def report(cid, ok, detail):
        with capsys.disabled():
            print(f"\n{cid} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return report


# ---------------------------------------------------------------------------


def test_c1_efficiency(verdict):
    eta = efficiency(DecayRates.from_fit(2.65, 1.85))
    assert verdict("C1", abs(eta - 0.716) <= 0.001, f"eta = {eta:.5f} (0.716 +- 0.001)")


def test_c2_sweet_spot(verdict):
    f = transition_frequency(QubitParams(ej_max=39.03, ec=0.400, gamma1_e=0.0), 0.0)
    ok = abs(f - 10.776) < 5e-4 and abs(f / 10.8 - 1) < 0.005
    assert verdict("C2", ok, f"f01(0) = {f:.4f} GHz, {100 * (f / 10.8 - 1):+.2f}% from 10.8 GHz")


def test_c3_reflection_round_trip(verdict):
    t0 = time.perf_counter()
    det = np.linspace(-20, 20, 201)
    clean = reflection_model(det, 2.65, 1.85, 0.8, 0.3, 0.1)
    rep0 = fit_reflection(det, clean)
    rng = np.random.default_rng(2024)
    noisy = clean + 0.01 * (rng.standard_normal(det.size) + 1j * rng.standard_normal(det.size))
    rep1 = fit_reflection(det, noisy)
    elapsed = time.perf_counter() - t0
    err0 = max(abs(rep0["gamma1_e"] / 2.65 - 1), abs(rep0["gamma2"] / 1.85 - 1))
    err1 = max(abs(rep1["gamma1_e"] / 2.65 - 1), abs(rep1["gamma2"] / 1.85 - 1))
    ok = err0 < 1e-3 and err1 < 0.02 and abs(rep1["eta"] - 0.716) <= 0.02 and elapsed < 1.0
    assert verdict("C3", ok, f"noiseless err {err0:.1e}, 1% noise err {err1:.4f}, "
                             f"eta {rep1['eta']:.4f}, {elapsed:.3f} s")


# ---------------------------------------------------------------------------
# Rabi sweep shared by C4 and C6: 17 points, 10^5 shots each, n_add = 1


@pytest.fixture(scope="module")
def rabi_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("rabi")
    cfg = build_config({"shots": 100_000, "batches": 100, "seed": 4, "out_dir": str(out),
                        "state": {"sweep_points": 17}})
    return run_rabi(cfg)


def test_c4_rabi_laws(verdict, rabi_sweep):
    th = rabi_sweep["thetas"]
    fits = rabi_sweep["fits"]
    quad = np.array([t.quad_peak for t in rabi_sweep["traces"]])
    power = np.array([t.power_peak for t in rabi_sweep["traces"]])
    step = th[1] - th[0]
    r2q, r2p = fits["quadrature"]["r_squared"], fits["power"]["r_squared"]
    tq, tp = th[np.argmax(quad)], th[np.argmax(power)]
    ok = r2q > 0.99 and r2p > 0.99 and abs(tq - math.pi / 2) <= step + 1e-12 and abs(tp - math.pi) <= step + 1e-12
    assert verdict("C4", ok, f"R2 quad {r2q:.4f}, power {r2p:.4f}; argmax quad {tq:.3f}, power {tp:.3f} "
                             f"(step {step:.3f})")


def test_c6_g1_peak_laws(verdict, rabi_sweep):
    th = rabi_sweep["thetas"]
    peaks = rabi_sweep["peaks"]
    center = np.array([p.center_G1.real for p in peaks])
    side = np.array([p.side_G1.real for p in peaks])

    def r2_of_shape(y, shape):
        A = np.column_stack([shape, np.ones_like(shape)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return 1 - np.sum((A @ coef - y) ** 2) / np.sum((y - y.mean()) ** 2)

    r2c = r2_of_shape(center, np.sin(th / 2) ** 2)
    r2s = r2_of_shape(side, np.sin(th) ** 2 / 4)
    k = int(np.argmin(np.abs(th - math.pi)))
    z = abs(peaks[k].side_G1) / peaks[k].side_G1_stderr
    ok = r2c > 0.98 and r2s > 0.98 and z < 3
    assert verdict("C6", ok, f"R2 center {r2c:.4f}, side {r2s:.4f}; side G1 at pi is {z:.2f} stderr from 0")


# ---------------------------------------------------------------------------


TRAIN8 = PulseTrainSpec.eight_pulse()
CHAIN8 = ChainParams(trace_len=1120)


def ratio_run(state, shots, seed, n_add=1.0, substream=0):
    chain = ChainParams(trace_len=1120, n_add_a=n_add, n_add_b=n_add)
    plan = SimulationPlan(state, default_mode(), TRAIN8, chain, shots=shots, seed=seed, n_batches=100,
                          substream=substream, time_resolved=False)
    return peak_extract(simulate_correlation(plan), TRAIN8)


def test_c5_antibunching(verdict):
    n = 1_000_000
    one = ratio_run(prepare_state(math.pi), n, 51)
    sup = ratio_run(prepare_state(math.pi / 2), n, 52)
    coh = ratio_run(coherent_state(1.0), n, 53)
    ok = one.ratio < 0.1 and sup.ratio < 0.2 and abs(coh.ratio - 1) <= 3 * coh.ratio_stderr
    assert verdict("C5", ok, f"|1>: {one.ratio:.4f}+-{one.ratio_stderr:.4f}; superposition: "
                             f"{sup.ratio:.4f}+-{sup.ratio_stderr:.4f}; coherent: "
                             f"{coh.ratio:.4f}+-{coh.ratio_stderr:.4f}")


def test_c7_background_subtraction_invariance(verdict):
    state = coherent_state(2.0)
    target = 0.1
    floor = 6400
    runs = {}
    for k, n_add in enumerate((0.0, 1.0, 15.0)):
        est = shots_to_precision(n_add, target, state, mode=default_mode(), spec=TRAIN8, chain=CHAIN8,
                                 pilot_shots=6400, seed=70, reference_n_add=0.0)
        shots = max(floor, int(math.ceil(est.shots / 100)) * 100)
        runs[n_add] = (shots, ratio_run(state, shots, 71, n_add=n_add, substream=k))
    worst = 0.0
    for a in runs:
        for b in runs:
            if a < b:
                pa, pb = runs[a][1], runs[b][1]
                worst = max(worst, abs(pa.ratio - pb.ratio) / math.hypot(pa.ratio_stderr, pb.ratio_stderr))
    se15 = runs[15.0][1].ratio_stderr
    ok = worst < 3 and se15 < 1.5 * target
    detail = "; ".join(f"n_add={n:g}: {p.ratio:.3f}+-{p.ratio_stderr:.3f} ({s} shots)" for n, (s, p) in runs.items())
    assert verdict("C7", ok, f"{detail}; max pair deviation {worst:.2f} sigma")


def test_c8_amplifier_speedup(verdict):
    kw = dict(mode=default_mode(), spec=TRAIN8, chain=CHAIN8, pilot_shots=32_000, seed=80, reference_n_add=1.0)
    state = prepare_state(math.pi)
    slow = shots_to_precision(15.0, 0.05, state, **kw)
    fast = shots_to_precision(1.0, 0.05, state, **kw)
    speedup = slow.shots / fast.shots
    assert verdict("C8", speedup >= 10, f"shots n_add=15: {slow.shots:.3g}, n_add=1: {fast.shots:.3g}, "
                                        f"ratio {speedup:.0f}")


# ---------------------------------------------------------------------------


def brute(a, b, lags):
    T = a.size
    g1 = np.zeros(len(lags), complex)
    g2 = np.zeros(len(lags), complex)
    for k, tau in enumerate(lags):
        for t in range(max(0, -tau), min(T, T - tau)):
            g1[k] += np.conj(a[t]) * b[t + tau]
            g2[k] += np.conj(a[t]) * np.conj(a[t + tau]) * b[t + tau] * b[t]
    return g1, g2


def test_c9_correlator_oracle(verdict):
    rng = np.random.default_rng(9)
    worst = 0.0
    for T in (16, 32, 64):
        tr = [rng.standard_normal(T) + 1j * rng.standard_normal(T) for _ in range(4)]
        cfg = CorrelatorConfig(trace_len=T, dt=1.0, grid=LagGrid.dense(T - 1), gate=None, n_batches=2)
        acc = CorrelationAccumulator(cfg)
        acc.accumulate_shot(ShotRecord(*(IQTrace(x, 1.0) for x in tr), 0))
        for got, want in zip((acc.g1_sig, acc.g2_sig, acc.g1_bg, acc.g2_bg),
                             brute(tr[0], tr[1], cfg.grid.lags) + brute(tr[2], tr[3], cfg.grid.lags)):
            worst = max(worst, float(np.max(np.abs(got - want)) / np.max(np.abs(want))))
    plan = SimulationPlan(prepare_state(math.pi), default_mode(), PulseTrainSpec(), ChainParams(),
                          shots=6400, seed=9)
    r1 = json.dumps(accumulate_plan(plan, 1).finalize().to_dict())
    r8 = json.dumps(accumulate_plan(plan, 8).finalize().to_dict())
    ok = worst <= 1e-12 and r1 == r8
    assert verdict("C9", ok, f"max relative deviation {worst:.1e}; 1 vs 8 workers identical: {r1 == r8}")


def test_c10_moment_oracles(verdict):
    n = 1_000_000
    a, b = sample_mode_outcomes(prepare_state(math.pi), n, KeyedStream(10).generator(0))

    def z(x, mu):
        se = math.sqrt(np.var(x.real) + np.var(x.imag)) / math.sqrt(x.size)
        return abs(x.mean() - mu) / se

    m = heterodyne_moments(prepare_state(math.pi))
    za = z(np.abs(a) ** 2, 1.5)
    zb = z(np.abs(a) ** 2 + np.abs(b) ** 2 - 2, 1.0)
    zv = z(np.conj(a) * b, m["cross"])
    # with vacuum at the input the two channels carry independent noise
    a0, b0 = sample_mode_outcomes(vacuum_state(), n, KeyedStream(10).generator(1))
    zi = max(z(np.conj(a0) * b0, 0.0), z(np.abs(a0) ** 2 * np.abs(b0) ** 2, 1.0))
    ok = m["abs2_alpha"] == 1.5 and max(za, zb, zv, zi) < 5
    assert verdict("C10", ok, f"z-scores: E|a|^2 {za:.2f}, photon budget {zb:.2f}, "
                              f"E[a* b] {zv:.2f}, channel independence {zi:.2f}")


def test_c11_throughput(verdict, tmp_path):
    cfg = build_config({"shots": 64_000, "out_dir": str(tmp_path)})
    b = bench_throughput(cfg, workers=4, repeats=3)
    ok = b["single_mean"] >= 1e4 and b["scaling"] >= 2.5 and b["single_spread"] <= 0.2
    assert verdict("C11", ok, f"{b['single_mean']:.0f} shots/s single, spread {b['single_spread']:.1%}, "
                              f"scaling x{b['scaling']:.2f} at 4 workers on {b['cpu_count']} CPU(s)")
