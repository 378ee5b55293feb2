import csv
import json
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest
from click.testing import CliRunner

from erase.cli import main

SMALL = str(Path(__file__).resolve().parents[1] / "configs" / "small.json")


def invoke(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env)


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    res = invoke("simulate", "--config", SMALL, "--out", out)
    assert res.exit_code == 0, res.output
    return out


@pytest.fixture(scope="module")
def runs(scene_dir, tmp_path_factory):
    out = {}
    for cond in ("baseline", "erase", "conventional"):
        d = tmp_path_factory.mktemp(cond)
        res = invoke("run", scene_dir / "recording.ercd", "--config", SMALL, "--condition", cond, "--out", d)
        assert res.exit_code == 0, res.output
        out[cond] = d
    return out


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_outputs_and_manifest(scene_dir):
    for name in ("recording.ercd", "events.txt", "montage.csv", "truth/clean.ercd", "truth/emg.ercd",
                 "truth/emg_sources.ercd", "truth/truth.json"):
        assert (scene_dir / name).exists(), name
    manifest = json.loads((scene_dir / "manifest.json").read_text())
    assert manifest["seeds"]["scene"] == 3
    assert manifest["scene"]["n_trials"] == 30
    assert set(manifest["outputs"]) >= {"recording.ercd", "truth/clean.ercd"}


def test_simulate_is_repeatable(scene_dir, tmp_path):
    assert invoke("simulate", "--config", SMALL, "--out", tmp_path).exit_code == 0
    for p in scene_dir.rglob("*"):
        if p.is_file():
            assert (tmp_path / p.relative_to(scene_dir)).read_bytes() == p.read_bytes(), p.name


def test_seed_flag_and_env(tmp_path):
    res = invoke("simulate", "--config", SMALL, "--seed", 11, "--out", tmp_path / "a")
    assert res.exit_code == 0
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seeds"]["scene"] == 11
    res = invoke("simulate", "--config", SMALL, env={"ERASE_SEED": "12", "ERASE_OUT": str(tmp_path / "b")})
    assert res.exit_code == 0, res.output
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seeds"]["scene"] == 12


def test_invalid_spec_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scene": {"n_trials": 0}}))
    res = invoke("simulate", "--config", bad, "--out", tmp_path / "o")
    assert res.exit_code == 2
    assert "n_trials" in res.output
    bad.write_text(json.dumps({"scene": {"n_trails": 5}}))
    assert invoke("simulate", "--config", bad, "--out", tmp_path / "o").exit_code == 2
    bad.write_text("{not json")
    assert invoke("simulate", "--config", bad, "--out", tmp_path / "o").exit_code == 2


def test_usage_errors_exit_2(scene_dir, tmp_path):
    rec = scene_dir / "recording.ercd"
    assert invoke("run", rec, "--condition", "bogus", "--out", tmp_path).exit_code == 2
    assert invoke("run", rec, "--theta", -1, "--out", tmp_path).exit_code == 2
    assert invoke("run", rec).exit_code == 2  # --out missing
    assert invoke("nonsense").exit_code == 2


def test_runtime_errors_exit_1(scene_dir, tmp_path):
    broken = tmp_path / "broken.ercd"
    broken.write_bytes((scene_dir / "recording.ercd").read_bytes()[:100])
    res = invoke("run", broken, "--events", scene_dir / "events.txt", "--montage", scene_dir / "montage.csv",
                 "--out", tmp_path / "o")
    assert res.exit_code == 1
    assert "erase.io.RecordingFormatError" in res.output


def test_baseline_run_has_no_ica(runs):
    names = {p.name for p in runs["baseline"].iterdir()}
    assert "cleaned.ercd" not in names and "ica_model.bin" not in names
    assert {"band_power.csv", "snr.csv", "fd_correlation.csv", "fd_levels.csv", "region_summary.csv",
            "manifest.json"} <= names


def test_run_csv_columns(runs):
    d = runs["erase"]
    assert list(rows(d / "band_power.csv")[0]) == ["band", "electrode", "region", "move_mean_z", "idle_mean_z",
                                                   "pvalue", "significant"]
    assert list(rows(d / "snr.csv")[0]) == ["band", "trial", "mean_force", "electrode", "snr_db"]
    assert list(rows(d / "fd_correlation.csv")[0]) == ["electrode", "region", "r", "t", "pvalue", "significant_r"]
    assert list(rows(d / "components.csv")[0]) == ["component", "loading_ratio", "rejected"]
    summary = {r["quantity"]: r["value"] for r in rows(d / "region_summary.csv")}
    assert summary["condition"] == "erase"
    assert "gamma_reduction_nha_percent" in summary
    manifest = json.loads((d / "manifest.json").read_text())
    assert manifest["seeds"] == {"ica": 0, "virtual_emg": 1}
    assert manifest["n_virtual"] == 8
    assert manifest["inputs"]["recording"]["name"] == "recording.ercd"


def test_erase_beats_conventional_on_small_scene(runs):
    red = {}
    for cond in ("erase", "conventional"):
        summary = {r["quantity"]: r["value"] for r in rows(runs[cond] / "region_summary.csv")}
        red[cond] = float(summary["gamma_reduction_nha_percent"])
    assert red["erase"] > red["conventional"]


def test_erase_region_summary_on_default_scene(default_run):
    r = default_run.conditions["erase"].region
    assert r.ha_mean > r.nha_mean and r.ha_vs_nha_p < 0.05


def test_report_outputs(runs, scene_dir, tmp_path):
    res = invoke("report", runs["erase"], "--montage", scene_dir / "montage.csv", "--out", tmp_path)
    assert res.exit_code == 0, res.output
    for name in ("topography_gamma.svg", "topography_mu.svg", "fd_correlation_bars.svg"):
        root = ET.parse(tmp_path / name).getroot()
        assert root.tag.endswith("svg")
    topo = ET.parse(tmp_path / "topography_gamma.svg").getroot()
    virtual = [e for e in topo.iter() if e.get("class") == "virtual"]
    assert len(virtual) == 8
    assert (tmp_path / "summary.csv").read_text().startswith("quantity,value\n")


def test_report_missing_metrics_exit_1(tmp_path):
    (tmp_path / "empty").mkdir()
    res = invoke("report", tmp_path / "empty", "--out", tmp_path / "o")
    assert res.exit_code == 1
    assert "band_power.csv" in res.output


def test_default_config_matches_dataclass_defaults():
    from erase.cli import scene_spec
    from erase.config import PipelineConfig, load_json, pipeline_config
    from erase.synth import SceneSpec

    raw = load_json(Path(SMALL).with_name("default.json"))
    assert pipeline_config(raw) == PipelineConfig()
    assert scene_spec(raw) == SceneSpec()
