import json
import subprocess
import sys

import numpy as np
import pytest

from strainmodal.cli import main
from strainmodal.schemas import scenario_to_dict, write_json
from strainmodal.signal import StrainRecord, load_record, save_record
from strainmodal.sim import default_scenario

LAYOUT = {"spans": [16.0, 18.0, 16.0], "d": 0.5}


def _scenario(path, **kw):
    scen = default_scenario(duration_s=kw.pop("duration_s", 120.0), **kw)
    return write_json(path, scenario_to_dict(scen))


def _run_pipeline(root):
    root.mkdir(parents=True, exist_ok=True)
    sim, ident, fit, comp = (root / n for n in ("sim", "identify", "fit", "compare"))
    config = write_json(root / "config.json", {"layout": LAYOUT})
    codes = [
        main(["simulate", "--config", str(_scenario(root / "scenario.json")), "--out", str(sim)]),
        main(["identify", "--config", str(config), "--record", str(sim / "strain.smr"), "--out", str(ident)]),
        main(["fit-shapes", "--config", str(config), "--modes", str(ident / "modes.json"), "--out", str(fit)]),
        main(["compare", str(fit / "shapes.json"), str(sim / "truth.json"), "--out", str(comp),
              "--label-a", "DAS", "--label-b", "truth"]),
    ]
    return codes, sim, ident, fit, comp


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return _run_pipeline(tmp_path_factory.mktemp("run1"))


def test_exit_codes(pipeline):
    assert pipeline[0] == [0, 0, 0, 0]


def test_simulate_outputs(pipeline):
    sim = pipeline[1]
    assert sorted(p.name for p in sim.iterdir()) == ["accel.smr", "strain.smr", "truth.json"]
    truth = json.loads((sim / "truth.json").read_text())
    assert truth["schema_version"] == 1 and len(truth["modes"]) == 3
    assert load_record(sim / "strain.smr").samples.shape == (51, 30000)


def test_identify_outputs(pipeline):
    ident, sim = pipeline[2], pipeline[1]
    modes = json.loads((ident / "modes.json").read_text())["modes"]
    truth = json.loads((sim / "truth.json").read_text())["modes"]
    assert len(modes) == 3
    for m, t in zip(modes, truth):
        assert abs(m["frequency_hz"] / t["frequency_hz"] - 1) < 0.005
    header = (ident / "stabilization.csv").read_text().splitlines()[0]
    assert header == "order,frequency_hz,damping,f_stable,d_stable,s_stable"


def test_fit_outputs(pipeline):
    fit = pipeline[3]
    assert len(list(fit.glob("mode*_shape_model.json"))) == 3
    assert len(list(fit.glob("mode*_dms_*.csv"))) == 9
    assert len(list(fit.glob("mode*_sms.csv"))) == 3
    shapes = json.loads((fit / "shapes.json").read_text())["modes"]
    layout_supports = [0.0, 16.0, 34.0, 50.0]
    for mode in shapes:
        assert mode["fit_status"] == "ok"
        dms = mode["dms"]["physics"]
        pos = np.asarray(dms["positions_m"])
        vals = np.asarray(dms["values"])
        assert np.max(np.abs(vals[np.isin(pos, layout_supports)])) < 1e-6


def test_compare_outputs(pipeline):
    comp = pipeline[4]
    doc = json.loads((comp / "comparison.json").read_text())
    assert doc["comparison"]["mean_mac"] >= 0.95
    assert doc["route_mean_mac"]["physics"] >= 0.95
    head = (comp / "comparison.txt").read_text().splitlines()[0].split("  ")
    cols = [c.strip() for c in head if c.strip()]
    assert cols == ["Mode #", "Freq-DAS (Hz)", "Freq-truth (Hz)", "Abs diff (Hz)", "MAC"]


def test_compare_identical(pipeline, tmp_path):
    truth = pipeline[1] / "truth.json"
    assert main(["compare", str(truth), str(truth), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "comparison.json").read_text())
    assert doc["comparison"]["mean_mac"] == pytest.approx(1.0, abs=1e-12)
    assert doc["comparison"]["mad_hz"] == 0.0


def test_byte_identical_rerun(pipeline, tmp_path):
    again = _run_pipeline(tmp_path / "run2")
    for first, second in zip(pipeline[1:], again[1:]):
        names = sorted(p.name for p in first.iterdir())
        assert names == sorted(p.name for p in second.iterdir())
        for n in names:
            assert (first / n).read_bytes() == (second / n).read_bytes(), n


class TestErrors:
    def test_usage(self):
        assert main([]) == 2
        assert main(["identify", "--kind", "bogus"]) == 2

    def test_missing_scenario(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2

    def test_nyquist(self, tmp_path):
        doc = scenario_to_dict(default_scenario(duration_s=10.0))
        doc["fs_hz"] = 15.0
        cfg = write_json(tmp_path / "s.json", doc)
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3

    def test_short_record(self, tmp_path):
        rec = StrainRecord(np.random.default_rng(0).standard_normal((51, 500)), 250.0, np.arange(51.0))
        path = save_record(rec, tmp_path / "short.smr")
        assert main(["identify", "--record", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_white_noise_exit_4_with_partial_output(self, tmp_path):
        rec = StrainRecord(np.random.default_rng(1).standard_normal((51, 30000)), 250.0, np.arange(51.0))
        path = save_record(rec, tmp_path / "noise.smr")
        out = tmp_path / "o"
        assert main(["identify", "--record", str(path), "--out", str(out)]) == 4
        doc = json.loads((out / "modes.json").read_text())
        assert "error" in doc["meta"] and len(doc["modes"]) < 3
        assert (out / "stabilization.csv").exists()

    def test_fit_without_layout(self, pipeline, tmp_path):
        cfg = write_json(tmp_path / "c.json", {})
        modes = pipeline[2] / "modes.json"
        assert main(["fit-shapes", "--config", str(cfg), "--modes", str(modes), "--out", str(tmp_path)]) == 2

    def test_degenerate_mode_flagged(self, pipeline, tmp_path):
        doc = json.loads((pipeline[2] / "modes.json").read_text())
        doc["modes"][1]["shape_re"] = [0.0] * 51
        doc["modes"][1]["shape_im"] = [0.0] * 51
        modes = tmp_path / "modes.json"
        modes.write_text(json.dumps(doc))
        cfg = write_json(tmp_path / "c.json", {"layout": LAYOUT})
        out = tmp_path / "o"
        assert main(["fit-shapes", "--config", str(cfg), "--modes", str(modes), "--out", str(out)]) == 0
        status = [m["fit_status"] for m in json.loads((out / "shapes.json").read_text())["modes"]]
        assert status == ["ok", "failed", "ok"]

    def test_compare_schema_mismatch(self, tmp_path):
        bad = write_json(tmp_path / "bad.json", {"modes": "nope"})
        assert main(["compare", str(bad), str(bad), "--out", str(tmp_path)]) == 2
        (tmp_path / "v2.json").write_text(json.dumps({"schema_version": 2, "modes": []}))
        assert main(["compare", str(tmp_path / "v2.json"), str(bad), "--out", str(tmp_path)]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "strainmodal", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "strainmodal" in out.stdout
