import csv
import io
import json
import os

import pytest

from polymer_lab.cli import MOMENT_COLUMNS, main, render_report
from polymer_lab.utils.io import read_json, write_json

SMOKE = """[model]
d = 3
beta = 0.4

[experiment]
n_grid = 4,8
horizon_factor = 4
replicates = 4
llt_k_grid = 8
homog_k_grid = 16

[run]
smoke = true
"""


@pytest.fixture
def cache(tmp_path, monkeypatch):
    monkeypatch.setenv("POLYMERLAB_CACHE", str(tmp_path / "cache"))
    return tmp_path


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_constants(cache, capsys):
    assert main(["constants", "--d", "3", "--beta", "0"]) == 0
    out = _json(capsys)
    assert abs(out["pi_d"] - 0.3405) < 1e-3
    assert (cache / "cache" / "tables" / "return_d3_k1024.pt").exists()
    assert out["profile"]["sigma2"] == 0.0 and out["oracle_verdict"] is None

    assert main(["constants", "--d", "3", "--beta", "0.4"]) == 0
    out = _json(capsys)
    assert out["profile"]["lambda2"] == pytest.approx(0.16)
    assert out["profile"]["in_l2_region"] and out["winfty"]["proof"] > 1.0

    assert main(["constants", "--d", "3", "--beta", "1.2"]) == 0
    out = _json(capsys)
    assert not out["profile"]["in_l2_region"]
    assert out["profile"]["sigma2"] is None and out["winfty"] is None

    assert main(["constants", "--d", "3"]) == 0
    assert _json(capsys)["beta2"] == pytest.approx(1.0379, abs=1e-4)


def test_usage_errors(cache, capsys):
    assert main(["constants", "--d", "2"]) == 2
    assert main(["beta2", "--family", "cauchy"]) == 2
    assert main(["constants", "--beta", "-1"]) == 2
    assert main(["moments", "--n-max", "8"]) == 2
    with pytest.raises(SystemExit):
        main([])


def test_beta2(cache, capsys):
    assert main(["beta2", "--d", "3", "--family", "rademacher"]) == 0
    assert _json(capsys)["beta2"] == "inf"
    assert main(["beta2", "--d", "3", "--family", "bernoulli", "--params", "p=0.3"]) == 0
    assert isinstance(_json(capsys)["beta2"], float)


def test_moments(cache, capsys):
    assert main(["moments", "--d", "3", "--lambda2", "0.25", "--n-max", "64", "--stride", "16"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert tuple(rows[0]) == MOMENT_COLUMNS
    assert [int(row[0]) for row in rows[1:]] == [0, 16, 32, 48, 64]
    assert float(rows[1][1]) == 1.0
    assert float(rows[1][3]) == pytest.approx(1.1718, abs=2e-4)
    second = [float(row[1]) for row in rows[1:]]
    assert all(a < b for a, b in zip(second, second[1:]))


def test_run_and_report(cache, capsys):
    config = cache / "tiny.cfg"
    config.write_text(SMOKE, encoding="utf-8")
    run_dir = str(cache / "run")
    assert main(["run", str(config), "--out", run_dir, "--threads", "1", "--quiet"]) == 0
    for name in ("manifest.json", "samples.csv", "references.json", "report.json"):
        assert os.path.exists(os.path.join(run_dir, name))
    capsys.readouterr()

    assert main(["report", run_dir]) == 0
    out = capsys.readouterr().out
    assert "insufficient replicates (smoke run)" in out and "PARTIAL" not in out

    # a config change is refused for an existing run directory
    config.write_text(SMOKE.replace("beta = 0.4", "beta = 0.3"), encoding="utf-8")
    assert main(["run", str(config), "--out", run_dir, "--threads", "1", "--quiet"]) == 2

    manifest_path = os.path.join(run_dir, "manifest.json")
    manifest = read_json(manifest_path)
    write_json(manifest_path, dict(manifest, status="incomplete"))
    assert main(["report", run_dir]) == 0
    assert "PARTIAL RUN" in capsys.readouterr().out

    report_path = os.path.join(run_dir, "report.json")
    report = read_json(report_path)
    test = report["tests"][2]
    test["status"] = "fail"
    test["entries"][0].update(gating=True, passed=False)
    write_json(report_path, report)
    assert main(["report", run_dir]) == 1
    assert f"FAILED {test['name']}: {test['entries'][0]['name']}" in capsys.readouterr().out


def test_resume_without_outside_l2_switch(cache, capsys):
    config = cache / "tiny.cfg"
    config.write_text(SMOKE, encoding="utf-8")
    run_dir = str(cache / "run")
    assert main(["run", str(config), "--out", run_dir, "--threads", "1", "--quiet", "--allow-outside-l2"]) == 0
    assert main(["run", str(config), "--out", run_dir, "--threads", "1", "--quiet"]) == 0
    assert read_json(os.path.join(run_dir, "manifest.json"))["config"]["run.allow_outside_l2"] == "false"


def test_render_inconclusive_trend():
    entry = dict(name="trend", value=0.0, reference=0.0, tolerance="decreasing", passed=None, gating=True, n=None)
    report = {"tests": [{"name": "lindeberg", "status": "pass", "anchor": "", "reason": "", "entries": [entry]}]}
    assert render_report(report, partial=False).splitlines()[-1].rstrip().endswith("inconclusive")
    report["tests"][0]["entries"] = [dict(entry, gating=False)]
    assert render_report(report, partial=False).splitlines()[-1].rstrip().endswith("info")


def test_report_errors(cache, capsys):
    assert main(["report", str(cache / "nowhere")]) == 2
    corrupt = cache / "corrupt"
    corrupt.mkdir()
    (corrupt / "report.json").write_text("{", encoding="utf-8")
    assert main(["report", str(corrupt)]) == 2
    (corrupt / "report.json").write_text("[]", encoding="utf-8")
    assert main(["report", str(corrupt)]) == 2
