"""Command-line front end: ``photonstat {spectro,rabi,hbt,fit,bench,report}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 runtime or
convergence failure, 4 file I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import fitting
from .archive import ArchiveReader, ArchiveWriter
from .correlator import CorrelationAccumulator, peak_extract, quadrature_phase, rabi_traces
from .config import PRESETS, ExperimentConfig, RunManifest, load_config
from .errors import PhotonStatError, ValidationError
from .pipeline import accumulate_plan, iter_plan_blocks, resolve_workers
from .qubit import extract_dips, flux_spectrum_map, transition_frequency

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# output helpers


def _write_json(path, obj) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(path, header, rows) -> str:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationError(f"{path} has no data rows")
    try:
        return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: non-numeric entry ({exc})") from exc


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config, preset=args.preset)
    workers = resolve_workers(args.workers if args.workers is not None else cfg.workers)
    overrides = dict(seed=args.seed, shots=args.shots, workers=workers,
                     out_dir=args.out, store_traces=True if getattr(args, "store_traces", False) else None)
    cfg = cfg.with_overrides(**overrides)
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def run_spectro(cfg: ExperimentConfig) -> dict:
    man = RunManifest.start("spectro", cfg)
    flux, probe = cfg.flux_grid(), cfg.probe_grid()
    mag = flux_spectrum_map(cfg.qubit, flux, probe)
    dips = extract_dips(mag, probe)
    out = cfg.out_dir
    path = _write_csv(os.path.join(out, "spectro_map.csv"), ["flux", "probe_ghz", "abs_r"],
                      ((f, p, mag[i, k]) for k, f in enumerate(flux) for i, p in enumerate(probe)))
    man.add_output(path)
    rows = []
    for f, d in zip(flux, dips):
        try:
            pred = transition_frequency(cfg.qubit, f)
        except PhotonStatError:
            pred = float("nan")
        rows.append((f, d, pred))
    path = _write_csv(os.path.join(out, "spectro_dips.csv"), ["flux", "dip_ghz", "f01_ghz"], rows)
    man.add_output(path)
    man.finish(out)
    sweet = transition_frequency(cfg.qubit, 0.0)
    return {"sweet_spot_ghz": sweet, "dips": dips}


def _hbt_accumulate(cfg: ExperimentConfig, archive: str | None):
    plan = cfg.plan()
    if archive:
        reader = ArchiveReader(archive)
        h = reader.header
        if h.trace_len != cfg.chain.trace_len or h.n_pulses != cfg.train.n_pulses or \
                not math.isclose(h.sample_rate, cfg.chain.sample_rate) or \
                not math.isclose(h.if_freq, cfg.chain.carrier_freq, abs_tol=0.5):
            raise ValidationError("archive geometry does not match the configuration")
        if len(reader) % cfg.batches:
            raise ValidationError(f"archive holds {len(reader)} shots, not divisible by {cfg.batches} batches")
        plan = plan.with_(shots=len(reader))
        acc = CorrelationAccumulator(plan.correlator_config())
        for blk in reader.iter_blocks(plan.block_size):
            acc.accumulate_block(blk)
        return plan, acc, None
    if cfg.store_traces:
        path = os.path.join(cfg.out_dir, "traces.phst")
        acc = CorrelationAccumulator(plan.correlator_config())
        with ArchiveWriter(path, cfg.chain.sample_rate, cfg.chain.trace_len, cfg.train.n_pulses,
                           cfg.chain.carrier_freq) as w:
            for blk in iter_plan_blocks(plan):
                w.write_block(blk)
                acc.accumulate_block(blk)
        return plan, acc, path
    return plan, accumulate_plan(plan, cfg.workers), None


def run_hbt(cfg: ExperimentConfig, archive: str | None = None) -> dict:
    man = RunManifest.start("hbt", cfg)
    if archive:
        man.notes.append(f"correlated archive {os.path.basename(archive)}")
    plan, acc, trace_path = _hbt_accumulate(cfg, archive)
    res = acc.finalize()
    peaks = peak_extract(res, cfg.train)
    state = plan.state
    theory = fitting.correlation_theory(state, cfg.mode, plan.gate, cfg.chain.gain_db)
    out = {
        "state": {"kind": state.kind.value, "theta_r": state.theta_r, "fidelity": state.fidelity,
                  "alpha_re": state.alpha.real, "alpha_im": state.alpha.imag},
        "correlation": res.to_dict(),
        "peaks": peaks.to_dict(),
        "theory": {k: (v.real if isinstance(v, complex) else v) for k, v in theory.items()},
        "g2_ratio": peaks.ratio,
        "g2_ratio_stderr": peaks.ratio_stderr,
    }
    d = cfg.out_dir
    man.add_output(_write_json(os.path.join(d, "hbt_result.json"), out))
    man.add_output(_write_csv(
        os.path.join(d, "hbt_peaks.csv"),
        ["n", "G1_real", "G1_imag", "G1_stderr", "G2", "G2_stderr", "pairs"],
        ([r["n"], r["G1_real"], r["G1_imag"], r["G1_stderr"], r["G2"], r["G2_stderr"], r["pairs"]]
         for r in peaks.rows()),
    ))
    if trace_path:
        man.add_output(trace_path)
    man.finish(d)
    return out


def run_rabi(cfg: ExperimentConfig) -> dict:
    man = RunManifest.start("rabi", cfg)
    thetas = cfg.sweep()
    results = []
    for k, th in enumerate(thetas):
        plan = cfg.plan(cfg.state(th), substream=k)
        results.append(accumulate_plan(plan, cfg.workers).finalize())
        _log(f"rabi: theta_r = {th:.4f} done ({k + 1}/{len(thetas)})")
    # one rotation for the whole sweep, from the point with the largest quadrature
    amps = [abs(np.mean(r.support_mean_a[r.peak_support])) for r in results]
    phase = quadrature_phase(results[int(np.argmax(amps))])
    # the phase is fixed mod pi; orient the axis so rotations with sin(theta) > 0 read positive
    q = np.array([np.mean(r.support_mean_a[r.peak_support]) for r in results])
    if np.sum(np.sin(thetas) * (q * np.exp(-1j * phase)).real) < 0:
        phase += math.pi
    traces = [rabi_traces(r, cfg.mode, phase=phase) for r in results]
    peaks = [peak_extract(r, cfg.train) for r in results]

    d = cfg.out_dir
    man.add_output(_write_csv(
        os.path.join(d, "rabi_peaks.csv"),
        ["theta_r", "quad_peak", "power_peak", "stderr", "power_stderr"],
        ((th, t.quad_peak, t.power_peak, t.quad_stderr, t.power_stderr) for th, t in zip(thetas, traces)),
    ))
    man.add_output(_write_csv(
        os.path.join(d, "rabi_correlations.csv"),
        ["theta_r", "G1_center", "G1_center_stderr", "G1_side", "G1_side_stderr",
         "G2_center", "G2_center_stderr", "G2_side", "G2_side_stderr"],
        ((th, p.center_G1.real, p.G1_stderr[p.n == 0][0], p.side_G1.real, p.side_G1_stderr,
          p.center_G2, p.G2_stderr[p.n == 0][0], p.side_G2, p.side_G2_stderr)
         for th, p in zip(thetas, peaks)),
    ))
    man.add_output(_write_csv(
        os.path.join(d, "rabi_traces.csv"),
        ["theta_r", "time_ns", "quadrature_re", "quadrature_im", "cross_power"],
        ((th, t.times[i] * 1e9, t.quadrature[i].real, t.quadrature[i].imag, t.cross_power[i].real)
         for th, t in zip(thetas, traces) for i in range(t.times.size)),
    ))
    fits = {}
    series = {
        "quadrature": [t.quad_peak for t in traces],
        "power": [t.power_peak for t in traces],
        "coherence": [p.side_G1.real for p in peaks],
        "pair": [p.side_G2 for p in peaks],
    }
    for model, values in series.items():
        try:
            fits[model] = fitting.fit_rabi(thetas, values, model=model).to_dict()
        except PhotonStatError as exc:
            fits[model] = {"error": f"{type(exc).__name__}: {exc}"}
    fits["phase"] = phase
    man.add_output(_write_json(os.path.join(d, "rabi_fits.json"), fits))
    man.finish(d)
    return {"thetas": thetas, "traces": traces, "peaks": peaks, "fits": fits}


def run_fit(kind: str, path: str, out_dir: str, model: str = "quadrature") -> dict:
    cols = _read_csv(path)

    def need(*names):
        missing = [n for n in names if n not in cols]
        if missing:
            raise ValidationError(f"{path} lacks column(s) {missing}")

    if kind == "reflection":
        need("detuning", "re", "im")
        z = cols["re"] + 1j * cols["im"]
        if "power_dbm" in cols and np.unique(cols["power_dbm"]).size > 1:
            est = fitting.PowerSweepReflectionFit().fit(np.column_stack([cols["detuning"], cols["power_dbm"]]), z)
        else:
            est = fitting.ReflectionFit().fit(cols["detuning"], z)
        rep = est.report_
    elif kind == "flux":
        need("flux", "freq_ghz")
        rep = fitting.fit_flux_spectrum(cols["flux"], cols["freq_ghz"])
    elif kind == "rabi":
        need("theta_r", "value")
        rep = fitting.fit_rabi(cols["theta_r"], cols["value"], model=model)
    else:
        raise ValidationError(f"unknown fit kind {kind!r}")
    out = rep.to_dict()
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, f"fit_{kind}.json"), out)
    return out


def bench_throughput(cfg: ExperimentConfig, workers: int = 4, repeats: int = 2) -> dict:
    """Shots per second of synthesis plus accumulation, 1 vs ``workers`` processes."""
    if cfg.shots < 1:
        raise ValidationError("benchmark needs shots >= 1")
    plan = cfg.plan()
    accumulate_plan(plan.with_(shots=plan.n_batches), 1)  # warm-up

    def rate(w):
        t0 = time.perf_counter()
        accumulate_plan(plan, w)
        return plan.shots / (time.perf_counter() - t0)

    single = [rate(1) for _ in range(repeats)]
    multi = [rate(workers) for _ in range(repeats)]
    out = {
        "shots": plan.shots,
        "trace_len": cfg.chain.trace_len,
        "n_pulses": cfg.train.n_pulses,
        "lags": int(len(plan.correlator_config().grid)),
        "workers": workers,
        "cpu_count": os.cpu_count(),
        "single_shots_per_s": single,
        "multi_shots_per_s": multi,
        "single_mean": float(np.mean(single)),
        "multi_mean": float(np.mean(multi)),
        "scaling": float(np.mean(multi) / np.mean(single)),
        "single_spread": float((max(single) - min(single)) / np.mean(single)),
    }
    man = RunManifest.start("bench", cfg)
    man.add_output(_write_json(os.path.join(cfg.out_dir, "bench.json"), out))
    man.finish(cfg.out_dir)
    return out


def report(out_dir: str) -> str:
    """Plain-text summary of whatever results a run directory holds."""
    lines = []

    def load(name):
        p = os.path.join(out_dir, name)
        if os.path.exists(p):
            with open(p, encoding="utf-8") as fh:
                return json.load(fh)
        return None

    hbt = load("hbt_result.json")
    if hbt:
        pk = hbt["peaks"]
        lines.append(f"HBT ({hbt['correlation']['n_shots']} shots, state {hbt['state']['kind']}, "
                     f"theta_r={hbt['state']['theta_r']:.4f})")
        lines.append(f"  G2(0)/G2(side) = {pk['ratio']:.4f} +- {pk['ratio_stderr']:.4f}")
        lines.append(f"  G1 center = {pk['center_G1']:.5g}, G1 side = {pk['side_G1']:.5g} +- {pk['side_G1_stderr']:.2g}")
    fits = load("rabi_fits.json")
    if fits:
        lines.append("Rabi fits")
        for model in ("quadrature", "power", "coherence", "pair"):
            f = fits.get(model, {})
            if "params" in f:
                p = f["params"]
                lines.append(f"  {model:10s} A={p['amplitude']:.5g} s={p['scale']:.5f} "
                             f"c={p['offset']:.3g} R2={f['r_squared']:.5f}")
            elif f:
                lines.append(f"  {model:10s} {f.get('error')}")
    bench = load("bench.json")
    if bench:
        lines.append(f"Throughput: {bench['single_mean']:.0f} shots/s (1 worker), "
                     f"{bench['multi_mean']:.0f} shots/s ({bench['workers']} workers), "
                     f"scaling {bench['scaling']:.2f}x on {bench['cpu_count']} CPU(s)")
    for name in sorted(os.listdir(out_dir)) if os.path.isdir(out_dir) else []:
        if name.startswith("manifest_"):
            m = load(name)
            lines.append(f"{name}: config {m['config_hash'][:12]}, seed {m['seed']}, "
                         f"{len(m['outputs'])} output file(s)")
            lines.extend(f"  note: {n}" for n in m.get("notes", []))
    if not lines:
        raise ValidationError(f"no results found in {out_dir}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON configuration file")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper", help="defaults to start from")
    p.add_argument("--seed", type=int, help="64-bit run seed")
    p.add_argument("--workers", type=int, help="worker processes (PHOTONSTAT_THREADS overrides)")
    p.add_argument("--shots", type=int, help="number of shots")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--store-traces", action="store_true", help="also write the binary trace archive")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="photonstat", description="Single-photon source HBT simulator and analysis")
    sub = ap.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("spectro", help="flux-dependent reflection map and dip table"))
    _common(sub.add_parser("rabi", help="Rabi sweep: quadrature and power peaks plus fits"))
    p = sub.add_parser("hbt", help="simulate (or read) shots and correlate them")
    _common(p)
    p.add_argument("--archive", metavar="PATH", help="correlate an existing trace archive instead of simulating")
    p = sub.add_parser("fit", help="fit a CSV data set")
    p.add_argument("kind", choices=["reflection", "flux", "rabi"])
    p.add_argument("input", help="CSV with columns detuning,re,im[,power_dbm] | flux,freq_ghz | theta_r,value")
    p.add_argument("--model", default="quadrature", choices=sorted(fitting.RABI_MODELS))
    p.add_argument("--out", metavar="DIR", default=".", help="output directory")
    p = sub.add_parser("bench", help="throughput benchmark")
    _common(p)
    p.add_argument("--bench-workers", type=int, default=4, help="worker count of the parallel run")
    p.add_argument("--repeats", type=int, default=2)
    p = sub.add_parser("report", help="summarize a result directory")
    p.add_argument("dir", nargs="?", default="out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "spectro":
            cfg = _config(args)
            res = run_spectro(cfg)
            print(f"sweet spot {res['sweet_spot_ghz']:.6f} GHz; results in {cfg.out_dir}")
        elif args.command == "hbt":
            cfg = _config(args)
            res = run_hbt(cfg, archive=args.archive)
            print(f"G2(0)/G2(side) = {res['g2_ratio']:.4f} +- {res['g2_ratio_stderr']:.4f}; "
                  f"results in {cfg.out_dir}")
        elif args.command == "rabi":
            cfg = _config(args)
            res = run_rabi(cfg)
            for model in ("quadrature", "power"):
                f = res["fits"][model]
                if "r_squared" in f:
                    print(f"{model} fit R^2 = {f['r_squared']:.5f}")
        elif args.command == "fit":
            res = run_fit(args.kind, args.input, args.out, args.model)
            print(json.dumps(res["params"], sort_keys=True))
        elif args.command == "bench":
            cfg = _config(args)
            res = bench_throughput(cfg, resolve_workers(args.bench_workers), args.repeats)
            print(f"{res['single_mean']:.0f} shots/s single, scaling x{res['scaling']:.2f} "
                  f"at {res['workers']} workers")
        elif args.command == "report":
            print(report(args.dir))
    except ValidationError as exc:
        _log(f"error: {exc}")
        return EXIT_VALIDATION
    except PhotonStatError as exc:
        _log(f"error: {exc}")
        return EXIT_RUNTIME
    except OSError as exc:
        _log(f"I/O error: {exc}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
