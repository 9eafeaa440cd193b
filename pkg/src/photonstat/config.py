"""Experiment configuration, presets and run manifests.

A configuration is a JSON object whose sections mirror the modules:
``qubit``, ``chain``, ``train``, ``emission``, ``state``, ``correlator``
and ``spectro``, plus the run-level keys ``shots``, ``batches``, ``seed``,
``workers``, ``out_dir`` and ``store_traces``. Omitted keys take the
defaults of the chosen preset; unknown keys are rejected. The fully
resolved configuration is echoed into every manifest and its canonical
JSON form is hashed, so any parameter change changes the hash.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .chain import ChainParams, train_geometry
from .emission import PreparedState, PulseTrainSpec, StateKind, TemporalMode, coherent_state, vacuum_state
from .errors import ParseError, ValidationError
from .pipeline import SimulationPlan, default_mode
from .qubit import QubitParams, check_rate_consistency

VERSION = "0.1.0"

_DEVICE = QubitParams.reference_device()

_BASE = {
    "qubit": {
        "ej_max": _DEVICE.ej_max,
        "ec": _DEVICE.ec,
        "gamma1_e": _DEVICE.gamma1_e,
        "gamma1_c": _DEVICE.gamma1_c,
        "gamma1_n": _DEVICE.gamma1_n,
        "gamma_phi": _DEVICE.gamma_phi,
        "resonator_freq": _DEVICE.resonator_freq,
    },
    "chain": {
        "n_add_a": 1.0,
        "n_add_b": 1.0,
        "n_corr": 0.0,
        "gain_db": 0.0,
        "if_freq": 50e6,
        "sample_rate": 200e6,
        "trace_len": None,
        "modulate_if": True,
    },
    "train": {
        "n_pulses": 2,
        "pulse_period": 700e-9,
        "control_period": 1.6e-6,
        "active_window": 1.4e-6,
        "gauss_sigma": 4e-9,
    },
    "emission": {"t1": 60e-9, "mode_duration": 600e-9},
    "state": {
        "kind": "qubit_superposition",
        "theta_r": math.pi,
        "fidelity": 1.0,
        "alpha_re": 1.0,
        "alpha_im": 0.0,
        "sweep_points": 17,
        "sweep_start": 0.0,
        "sweep_stop": 2 * math.pi,
    },
    "correlator": {
        "window": 3,
        "gate": 1,
        "prefilter": True,
        "compensation": "full",
        "block_size": 500,
    },
    "spectro": {
        "flux_start": -0.5,
        "flux_stop": 0.5,
        "flux_points": 41,
        "probe_start": 4.5,
        "probe_stop": 11.0,
        "probe_points": 3251,
    },
    "shots": 64_000,
    "batches": 64,
    "seed": 20240601,
    "workers": 1,
    "out_dir": "out",
    "store_traces": False,
}

PRESETS = {
    "paper": {},
    "paper-train8": {
        "train": {"n_pulses": 8, "control_period": 5.6e-6, "active_window": 5.6e-6},
    },
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise ValidationError(f"unknown configuration field '{where}'")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ValidationError(f"field '{where}' must be an object")
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = v
    return out


def preset_dict(name: str = "paper") -> dict:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return _merge(_BASE, PRESETS[name])


def _number(d: dict, key: str, path: str, integer: bool = False):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"field '{path}.{key}' must be a number, got {v!r}")
    if integer:
        if float(v) != int(v):
            raise ValidationError(f"field '{path}.{key}' must be an integer")
        return int(v)
    if not math.isfinite(v):
        raise ValidationError(f"field '{path}.{key}' must be finite")
    return float(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully resolved configuration."""

    raw: dict
    qubit: QubitParams
    chain: ChainParams
    train: PulseTrainSpec
    mode: TemporalMode
    shots: int
    batches: int
    seed: int
    workers: int
    out_dir: str
    store_traces: bool
    preset: str = "paper"
    warnings: tuple[str, ...] = field(default=())

    # -- states --------------------------------------------------------------

    @property
    def state_kind(self) -> StateKind:
        return StateKind(self.raw["state"]["kind"])

    def state(self, theta_r: float | None = None) -> PreparedState:
        s = self.raw["state"]
        kind = self.state_kind
        if kind is StateKind.COHERENT:
            return coherent_state(complex(s["alpha_re"], s["alpha_im"]))
        if kind is StateKind.VACUUM:
            return vacuum_state()
        theta = s["theta_r"] if theta_r is None else theta_r
        return PreparedState(theta_r=float(theta), fidelity=float(s["fidelity"]))

    def sweep(self) -> np.ndarray:
        s = self.raw["state"]
        return np.linspace(s["sweep_start"], s["sweep_stop"], int(s["sweep_points"]))

    def plan(self, state: PreparedState | None = None, substream: int = 0, **changes) -> SimulationPlan:
        c = self.raw["correlator"]
        kw = dict(
            state=state or self.state(), mode=self.mode, spec=self.train, chain=self.chain,
            shots=self.shots, seed=self.seed, n_batches=self.batches, block_size=int(c["block_size"]),
            substream=substream, window=int(c["window"]), gate=c["gate"],
            prefilter=bool(c["prefilter"]), compensation=c["compensation"],
        )
        kw.update(changes)
        return SimulationPlan(**kw)

    # -- grids ---------------------------------------------------------------

    def flux_grid(self) -> np.ndarray:
        s = self.raw["spectro"]
        return np.linspace(s["flux_start"], s["flux_stop"], int(s["flux_points"]))

    def probe_grid(self) -> np.ndarray:
        s = self.raw["spectro"]
        return np.linspace(s["probe_start"], s["probe_stop"], int(s["probe_points"]))

    # -- provenance ----------------------------------------------------------

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(self, **run) -> "ExperimentConfig":
        """Re-validate with run-level keys replaced (None values are ignored)."""
        raw = copy.deepcopy(self.raw)
        for k, v in run.items():
            if v is not None:
                raw[k] = v
        return build_config(raw, self.preset)


def build_config(raw: dict, preset: str = "paper") -> ExperimentConfig:
    """Validate a (possibly partial) config dict against a preset."""
    if not isinstance(raw, dict):
        raise ValidationError("configuration must be a JSON object")
    full = _merge(preset_dict(preset), raw)
    warnings = []

    q = full["qubit"]
    qubit = QubitParams(**{k: _number(q, k, "qubit") for k in q})

    t = full["train"]
    train = PulseTrainSpec(
        n_pulses=_number(t, "n_pulses", "train", integer=True),
        pulse_period=_number(t, "pulse_period", "train"),
        control_period=_number(t, "control_period", "train"),
        active_window=_number(t, "active_window", "train"),
        gauss_sigma=_number(t, "gauss_sigma", "train"),
    )

    c = full["chain"]
    sample_rate = _number(c, "sample_rate", "chain")
    if c["trace_len"] is None:
        c["trace_len"] = int(math.ceil(train.control_period * sample_rate - 1e-6))
    chain = ChainParams(
        n_add_a=_number(c, "n_add_a", "chain"),
        n_add_b=_number(c, "n_add_b", "chain"),
        n_corr=_number(c, "n_corr", "chain"),
        gain_db=_number(c, "gain_db", "chain"),
        if_freq=_number(c, "if_freq", "chain"),
        sample_rate=sample_rate,
        trace_len=_number(c, "trace_len", "chain", integer=True),
        modulate_if=bool(c["modulate_if"]),
    )

    e = full["emission"]
    t1 = _number(e, "t1", "emission")
    mode = default_mode(t1=t1, duration=_number(e, "mode_duration", "emission"), dt=chain.dt)
    train_geometry(mode, train, chain)
    warnings += check_rate_consistency(qubit, t1)

    s = full["state"]
    try:
        StateKind(s["kind"])
    except ValueError:
        raise ValidationError(f"field 'state.kind' must be one of {[k.value for k in StateKind]}") from None
    for k in ("theta_r", "fidelity", "alpha_re", "alpha_im", "sweep_start", "sweep_stop"):
        _number(s, k, "state")
    if _number(s, "sweep_points", "state", integer=True) < 1:
        raise ValidationError("field 'state.sweep_points' must be >= 1")
    PreparedState(theta_r=s["theta_r"], fidelity=s["fidelity"])

    cc = full["correlator"]
    if cc["gate"] is not None:
        _number(cc, "gate", "correlator", integer=True)
    _number(cc, "window", "correlator", integer=True)
    if _number(cc, "block_size", "correlator", integer=True) < 1:
        raise ValidationError("field 'correlator.block_size' must be >= 1")
    if cc["compensation"] not in ("full", "noise_only"):
        raise ValidationError("field 'correlator.compensation' must be 'full' or 'noise_only'")

    sp = full["spectro"]
    for k in sp:
        _number(sp, k, "spectro", integer=k.endswith("points"))
    if sp["flux_points"] < 1 or sp["probe_points"] < 1:
        raise ValidationError("spectro grids must not be empty")

    shots = _number(full, "shots", "run", integer=True)
    batches = _number(full, "batches", "run", integer=True)
    seed = _number(full, "seed", "run", integer=True)
    workers = _number(full, "workers", "run", integer=True)
    if shots < 1:
        raise ValidationError("field 'shots' must be >= 1")
    if batches < 2:
        raise ValidationError("field 'batches' must be >= 2 for error bars")
    if shots % batches:
        raise ValidationError(f"shots ({shots}) must be divisible by batches ({batches})")
    if not 0 <= seed < 2**64:
        raise ValidationError("field 'seed' must be a 64-bit unsigned integer")
    if workers < 1:
        raise ValidationError("field 'workers' must be >= 1")

    cfg = ExperimentConfig(
        raw=full, qubit=qubit, chain=chain, train=train, mode=mode, shots=shots, batches=batches,
        seed=seed, workers=workers, out_dir=str(full["out_dir"]), store_traces=bool(full["store_traces"]),
        preset=preset, warnings=tuple(warnings),
    )
    cfg.plan()  # cross-checks correlator geometry
    return cfg


def load_config(path=None, preset: str = "paper") -> ExperimentConfig:
    """Read and validate a JSON configuration file (``None`` gives the preset)."""
    if path is None:
        return build_config({}, preset)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if isinstance(raw, dict) and "preset" in raw:
        preset = raw.pop("preset")
    return build_config(raw, preset)


# ---------------------------------------------------------------------------
# manifest


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    parameters: dict
    version: str = VERSION
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @classmethod
    def start(cls, command: str, cfg: ExperimentConfig) -> "RunManifest":
        return cls(command=command, config_hash=cfg.config_hash(), seed=cfg.seed,
                   parameters=cfg.to_dict(), notes=list(cfg.warnings))

    def add_output(self, path) -> None:
        self.outputs[os.path.basename(path)] = file_digest(path)

    def finish(self, out_dir) -> str:
        self.finished = _now()
        path = os.path.join(out_dir, f"manifest_{self.command}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path
