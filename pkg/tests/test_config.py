import json
import math

import pytest

from photonstat.config import PRESETS, RunManifest, build_config, load_config, preset_dict
from photonstat.errors import ConfigError, ParseError, ValidationError
from photonstat.emission import StateKind


class TestDefaults:
    def test_paper_preset(self):
        cfg = build_config({})
        assert cfg.chain.trace_len == 320
        assert cfg.train.n_pulses == 2
        assert cfg.mode.origin_index == 10
        assert cfg.shots % cfg.batches == 0
        assert cfg.state_kind is StateKind.QUBIT
        assert cfg.state().theta_r == math.pi

    def test_train8_preset(self):
        cfg = build_config({}, "paper-train8")
        assert cfg.train.n_pulses == 8
        assert cfg.chain.trace_len == 1120

    def test_load_none_is_preset(self):
        assert load_config().config_hash() == build_config({}).config_hash()

    def test_plan(self):
        plan = build_config({"shots": 1280}).plan()
        assert plan.shots == 1280 and plan.n_batches == 64

    def test_grids(self):
        cfg = build_config({"spectro": {"flux_points": 5, "flux_start": -0.2, "flux_stop": 0.2}})
        assert cfg.flux_grid().tolist() == pytest.approx([-0.2, -0.1, 0.0, 0.1, 0.2])
        assert cfg.sweep().size == 17


class TestValidation:
    def test_shots_divisible_by_batches(self):
        with pytest.raises(ValidationError, match="divisible"):
            build_config({"shots": 1000, "batches": 64})

    def test_if_above_nyquist(self):
        with pytest.raises(ValidationError):
            build_config({"chain": {"if_freq": 150e6}})

    @pytest.mark.parametrize("raw", [
        {"bogus": 1},
        {"chain": {"bogus": 1}},
        {"chain": 3},
        {"shots": "many"},
        {"shots": 64.5},
        {"batches": 1, "shots": 64},
        {"workers": 0},
        {"seed": -1},
        {"state": {"kind": "squeezed"}},
        {"state": {"fidelity": 1.5}},
        {"correlator": {"compensation": "partial"}},
        {"correlator": {"block_size": 0}},
        {"spectro": {"flux_points": 0}},
        {"qubit": {"ej_max": float("nan")}},
    ])
    def test_rejected(self, raw):
        with pytest.raises(ValidationError):
            build_config(raw)

    def test_short_trace_is_geometry_error(self):
        with pytest.raises(ConfigError):
            build_config({"chain": {"trace_len": 200}})

    def test_unknown_preset(self):
        with pytest.raises(ValidationError):
            preset_dict("nope")
        assert set(PRESETS) == {"paper", "paper-train8"}

    def test_not_an_object(self):
        with pytest.raises(ValidationError):
            build_config([1, 2])


class TestFiles:
    def test_parse_error_location(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{\n  "shots": 640,\n  "seed": ,\n}\n')
        with pytest.raises(ParseError) as err:
            load_config(p)
        assert "line 3" in str(err.value) and "column 11" in str(err.value)

    def test_preset_key(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"preset": "paper-train8", "shots": 640}))
        cfg = load_config(p)
        assert cfg.train.n_pulses == 8 and cfg.shots == 640


class TestHash:
    def test_stable(self):
        assert build_config({"seed": 4}).config_hash() == build_config({"seed": 4}).config_hash()

    @pytest.mark.parametrize("raw", [
        {"seed": 5}, {"shots": 128}, {"chain": {"n_add_a": 1.5}}, {"state": {"theta_r": 1.0}},
        {"correlator": {"gate": 2}}, {"qubit": {"ec": 0.41}}, {"emission": {"t1": 61e-9}},
    ])
    def test_any_change_changes_hash(self, raw):
        assert build_config(raw).config_hash() != build_config({}).config_hash()

    def test_overrides(self):
        cfg = build_config({})
        o = cfg.with_overrides(shots=640, seed=None)
        assert o.shots == 640 and o.seed == cfg.seed
        assert o.config_hash() != cfg.config_hash()
        with pytest.raises(ValidationError):
            cfg.with_overrides(shots=650)


class TestManifest:
    def test_written(self, tmp_path):
        cfg = build_config({"shots": 640})
        out = tmp_path / "r.txt"
        out.write_text("x")
        m = RunManifest.start("hbt", cfg)
        m.add_output(out)
        path = m.finish(tmp_path)
        data = json.loads(open(path).read())
        assert data["config_hash"] == cfg.config_hash()
        assert data["parameters"]["shots"] == 640
        assert data["outputs"]["r.txt"] == "2d711642b726b04401627ca9fbac32f5c8530fb1903cc4db02258717921a4881"
        assert data["finished"] >= data["started"]

    def test_rate_tension_noted(self):
        cfg = build_config({})
        assert len(cfg.warnings) == 1
        assert RunManifest.start("hbt", cfg).notes == list(cfg.warnings)
