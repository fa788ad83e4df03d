import json
from pathlib import Path

import numpy as np
import pytest

from pulsedesr.config import OUTPUT_DIR_ENV, ConfigError, ExperimentConfig, load_config
from pulsedesr.fitting import fit
from pulsedesr.io import FormatError, read_csv, read_fit_result, write_csv, write_fit_result, write_svg
from pulsedesr.powder import Spectrum
from pulsedesr.pulses import Trace

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def base(**sections):
    return {"schema_version": 1, **sections}


class TestCsv:
    def test_trace_round_trip_is_lossless(self, tmp_path):
        rng = np.random.default_rng(0)
        x = np.sort(rng.uniform(0, 1e4, 64))
        tr = Trace(x, rng.normal(size=64), "delay_ns", {"T2_ns": 379.0, "label": "a=b", "n": 3})
        back = read_csv(write_csv(tmp_path / "t.csv", tr))
        assert back.axis.tobytes() == tr.axis.tobytes()
        assert back.amplitude.tobytes() == tr.amplitude.tobytes()
        assert back.kind == "delay_ns"
        assert back.meta == tr.meta

    def test_spectrum_round_trip(self, tmp_path):
        s = Spectrum(np.linspace(0, 1.2, 11), np.linspace(0, 1, 11) ** 3, {"mw_GHz": 9.7})
        back = read_csv(write_csv(tmp_path / "s.csv", s))
        assert isinstance(back, Spectrum)
        assert back.amplitude.tobytes() == s.amplitude.tobytes()
        assert back.meta == {"mw_GHz": 9.7}

    def test_header_layout(self, tmp_path):
        tr = Trace(np.array([0.0, 1.0]), np.array([1.0, 0.5]), "recovery_ns", {"tau_ns": 200.0})
        lines = write_csv(tmp_path / "r.csv", tr).read_text().splitlines()
        assert lines == ["# kind=recovery_ns", "# tau_ns=200.0", "T_ns,amplitude", "0.0,1.0", "1.0,0.5"]

    @pytest.mark.parametrize("text", [
        "tau_ns,amplitude\n1,2\n",
        "# kind=bogus\nx,y\n1,2\n",
        "# kind=delay_ns\ntau_ns,amplitude\n1,2,3\n",
        "# kind=delay_ns\ntau_ns,amplitude\n1,abc\n",
        "# kind=delay_ns\ntau_ns,amplitude\n",
        "# kind=delay_ns\ntau_ns,amplitude\n1,nan\n",
    ])
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(FormatError):
            read_csv(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_csv(tmp_path / "nope.csv")


class TestFitResultFile:
    def test_round_trip(self, tmp_path):
        x = np.linspace(50, 1500, 40)
        r = fit("mono_exponential", (x, np.exp(-2 * x / 379.0)))
        back = read_fit_result(write_fit_result(tmp_path / "r.json", r))
        assert back.params == r.params and back.converged

    def test_not_a_result(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("[1, 2]")
        with pytest.raises(FormatError):
            read_fit_result(p)


class TestSvg:
    def test_deterministic(self, tmp_path):
        tr = Trace(np.linspace(0, 10, 30), np.exp(-np.linspace(0, 10, 30)), "delay_ns")
        a = write_svg(tmp_path / "a.svg", tr, model=tr.amplitude, title="t").read_bytes()
        b = write_svg(tmp_path / "b.svg", tr, model=tr.amplitude, title="t").read_bytes()
        assert a == b and a.lstrip().startswith(b"<?xml")


class TestConfig:
    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
    def test_shipped_configs_valid(self, path):
        load_config(path)

    @pytest.mark.parametrize("doc", [
        {},
        {"schema_version": 2},
        base(bogus={}),
        base(system={"S": 1, "Dz": 3}),
        base(system={"S": -1}),
        base(spectrum={"grid": {"scheme": "zcw"}}),
        base(sequence={"sequence": "cpmg"}),
        base(noise={"sigma": -1, "seed": 0}),
        base(eseem={"nuclei": [{"isotope": "13C", "k": 0.1}]}),
        base(eseem={"nuclei": [{"isotope": "1H", "k": 1.5}]}),
    ])
    def test_schema_rejections(self, doc):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(doc)

    def test_semantic_rejection(self):
        with pytest.raises(ConfigError, match="E"):
            ExperimentConfig.from_dict(base(system={"S": 1, "D_GHz": 3.0, "E_GHz": 2.0}))

    def test_seed_required_with_noise(self):
        with pytest.raises(ConfigError, match="seed"):
            ExperimentConfig.from_dict(base(noise={"sigma": 0.01}))
        ExperimentConfig.from_dict(base(noise={"sigma": 0.0}))

    def test_ranges(self):
        cfg = ExperimentConfig.from_dict(base(
            sequence={"sequence": "hahn", "tau_ns": [100, 200, 300]},
            spectrum={"field_T": {"start": 0.3, "stop": 0.4, "points": 11}}))
        np.testing.assert_array_equal(cfg.tau_values(), [100, 200, 300])
        np.testing.assert_allclose(cfg.field_axis(), np.linspace(0.3, 0.4, 11))
        single = ExperimentConfig.from_dict(base(sequence={"sequence": "hahn", "tau_ns": 200}))
        np.testing.assert_array_equal(single.tau_values(), [200.0])

    def test_defaults(self):
        cfg = ExperimentConfig.from_dict(base(system={"S": 1}))
        assert len(cfg.field_axis()) == 1201 and cfg.field_axis()[-1] == 1.2
        assert len(cfg.grid()) == 100 * 100
        assert cfg.noise_sigma == 0.0 and cfg.noise_seed is None
        assert cfg.eseem_model() is None

    def test_builders(self):
        cfg = load_config(CONFIGS / "cr7ni_d_decay.json")
        assert cfg.relaxation().T2 == 2210
        assert cfg.eseem_model().frequencies()[0] == pytest.approx(2.556, rel=1e-6)
        assert [p.duration for p in cfg.pulses()] == [16, 32]
        assert cfg.pulses()[1].nominal_angle == pytest.approx(np.pi)

    def test_output_dir_precedence(self, tmp_path, monkeypatch):
        monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
        monkeypatch.chdir(tmp_path)
        plain = ExperimentConfig.from_dict(base(), source=tmp_path / "c.json")
        assert plain.output_dir() == Path.cwd()
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
        assert plain.output_dir() == tmp_path / "env"
        own = ExperimentConfig.from_dict(base(output={"dir": "runs"}), source=tmp_path / "sub" / "c.json")
        assert own.output_dir() == tmp_path / "sub" / "runs"
        assert own.output_dir(tmp_path / "cli") == tmp_path / "cli"

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(p)
        p.write_text(json.dumps([1]))
        with pytest.raises(ConfigError):
            load_config(p)
