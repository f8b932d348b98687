import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from fuselab.cli import main


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("synth", "--out-dir", d / "data", "--seed", 0) == 0
    assert run("train", "--cuboids", d / "data" / "cuboids.csv", "--tensile", d / "data" / "tensile.csv",
               "--out", d / "pipe.json", "--n-starts", 2) == 0
    return d


def test_unknown_subcommand():
    assert run("frobnicate") == 2


def test_missing_input_exit_3(tmp_path, capsys):
    assert run("corr", "--cuboids", tmp_path / "absent.csv", "--tensile", tmp_path / "t.csv") == 3
    assert "absent.csv" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("[train]\nno_such_option = 3\n")
    assert run("train", "--config", cfg, "--cuboids", "x", "--tensile", "y", "--out", tmp_path / "p.json") in (2, 3)


def test_synth_outputs_and_header(workdir):
    data = workdir / "data"
    for name in ("cuboids.csv", "tensile.csv", "truth.json"):
        assert (data / name).exists()
    first = (data / "cuboids.csv").read_text().splitlines()[0]
    assert first.startswith("# fuselab ") and "config_sha256=" in first
    meta = json.loads((data / "truth.json").read_text())["_meta"]
    assert meta["tool"] == "fuselab" and len(meta["config_sha256"]) == 16


def test_pipeline_document(workdir):
    doc = json.loads((workdir / "pipe.json").read_text())
    assert doc["version"] == "pipeline_v1"
    assert doc["_meta"]["config"]["hierarchy"]["stages"]["ys"]["n_starts"] == 2


def test_predict_row(workdir, tmp_path):
    out = tmp_path / "pred.csv"
    assert run("predict", "--pipeline", workdir / "pipe.json", "--params", "233,1471,20,71,90", "--out", out) == 0
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert rows[0].split(",")[-1] == "ved"
    vals = rows[1].split(",")
    assert len(rows) == 2 and float(vals[-1]) == pytest.approx(111.5, abs=0.05)
    assert float(vals[6]) > 0 and float(vals[8]) > 0


def test_optimize_and_map(workdir, tmp_path, capsys):
    cand = tmp_path / "cand.csv"
    assert run("optimize", "--pipeline", workdir / "pipe.json", "--n", 2000, "--seed", 3, "--out", cand) == 0
    assert "pick 1" in capsys.readouterr().out
    lines = [l for l in cand.read_text().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    assert header[0] == "rank" and "pass_all" in header
    body = [dict(zip(header, l.split(","))) for l in lines[1:]]
    assert all(100 <= float(r["ved"]) <= 200 and float(r["ys_pred"]) > 1000 and float(r["ef_pred"]) > 12
               for r in body)
    m = tmp_path / "map.csv"
    iso = tmp_path / "iso.csv"
    assert run("map", "--pipeline", workdir / "pipe.json", "--res", 6, "--out", m, "--isolines", iso) == 0
    rows = [l for l in m.read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "power,speed,ved,ys_pred,ef_pred,objective" and len(rows) == 37


def test_sobol_cv_corr(workdir, tmp_path):
    s = tmp_path / "s.json"
    assert run("sobol", "--pipeline", workdir / "pipe.json", "--stage", "h", "--n", 256, "--out", s) == 0
    doc = json.loads(s.read_text())
    assert doc["features"][-1] == "scan_rot" and "scan_rot" in doc["dropped"]
    c = tmp_path / "cv.json"
    assert run("cv", "--data", workdir / "data" / "cuboids.csv", "--k", 5, "--n-starts", 1, "--out", c) == 0
    rep = json.loads(c.read_text())
    assert rep["fold_sizes"] == [54] * 5 and rep["metric"] == "metric_eq1"
    corr = tmp_path / "corr.csv"
    assert run("corr", "--cuboids", workdir / "data" / "cuboids.csv", "--tensile",
               workdir / "data" / "tensile.csv", "--out", corr) == 0
    lines = [l for l in corr.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "property,hardness,porosity,ys,uts,ef"


def test_porosity_command(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    img = np.full((200, 200), 150, np.uint8)
    img[60:70, 60:70] = 0
    Image.fromarray(img).save(d / "a.png")
    Image.fromarray(np.full((200, 200), 150, np.uint8)).save(d / "b.tif")
    out, hist = tmp_path / "p.csv", tmp_path / "h.csv"
    assert run("porosity", "--in", d, "--out", out, "--hist", hist) == 0
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "filename,porosity" and rows[2] == "b.tif,0.0"
    assert float(rows[1].split(",")[1]) > 0


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FUSELAB_SEED", "7")
    assert run("synth", "--out-dir", tmp_path / "a") == 0
    monkeypatch.delenv("FUSELAB_SEED")
    assert run("synth", "--out-dir", tmp_path / "b", "--seed", 7) == 0
    assert (tmp_path / "a" / "cuboids.csv").read_bytes() == (tmp_path / "b" / "cuboids.csv").read_bytes()


def test_config_file_overrides(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("seed = 11\n[synth]\nn_cuboid = 30\nn_tensile = 6\n")
    assert run("synth", "--config", cfg, "--out-dir", tmp_path / "o") == 0
    lines = [l for l in (tmp_path / "o" / "cuboids.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == 31


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "fuselab.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "fuselab" in r.stdout
