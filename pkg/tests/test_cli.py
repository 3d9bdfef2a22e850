import csv
import io
import json

import pytest

from helpneed.cli import ConfigError, fixture_check, load_config, main

SMALL = """seed = 5
[population]
historical_students = 8
cohort_students = 6
[predictor]
n_trees = 10
k = 3
grid = [1.0, 2.0]
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "cfg.toml").write_text(SMALL)
    return tmp_path


def test_fixture_check_passes(capsys):
    assert all(ok for _, ok, _ in fixture_check())
    assert main(["fixture-check"]) == 0
    assert capsys.readouterr().out.count("PASS") == len(fixture_check())


def test_solve_chain(workdir, capsys):
    assert main(["fixtures", "--out", "nets"]) == 0
    assert main(["solve", "--network", "nets/chain.inet.json", "--out", "chain.csv"]) == 0
    rows = list(csv.DictReader(io.StringIO((workdir / "chain.csv").read_text())))
    start = max(rows, key=lambda r: -float(r["lqv"]))
    assert float(start["lqv"]) == pytest.approx(79.1, abs=1e-9)
    assert max(float(r["gqv"]) for r in rows) == 100.0


def test_bad_config_exits_one(workdir, capsys):
    (workdir / "bad.json").write_text(json.dumps({"predictor": {"trees": 5}}))
    assert main(["fixture-check", "--config", "bad.json"]) == 1
    assert main(["classify", "--metric", "Sideways"]) == 1
    with pytest.raises(ConfigError):
        load_config(str(workdir / "bad.json"))


def test_missing_input_exits_one(workdir, capsys):
    assert main(["ingest"]) == 1


def test_pipeline_and_cv_determinism(workdir, capsys):
    cfg = ["--config", "cfg.toml"]
    for cmd in ("gen", "ingest", "build", "solve", "classify", "train"):
        assert main([cmd] + cfg) == 0, cmd
    assert main(["cv"] + cfg) == 0
    first = (workdir / "out/reports/cv.json").read_text()
    assert main(["cv"] + cfg) == 0
    assert (workdir / "out/reports/cv.json").read_text() == first
    assert main(["predict"] + cfg) == 0
    preds = list(csv.DictReader(open(workdir / "out/predictions.csv")))
    assert preds and {r["label"] for r in preds} <= {"0", "1"}
    manifest = json.loads((workdir / "out/reports/manifest.json").read_text())
    for stage in ("gen", "build", "solve", "train", "cv", "predict"):
        assert manifest[stage]["outputs"], stage
    assert main(["report"] + cfg) == 0
    assert (workdir / "out/reports/summary.json").exists()
