import math
import os
from dataclasses import replace

import numpy as np
import pytest
import torch
from colossalai.testing import parameterize

from polymer_lab.environment import create_named_family, temperature_profile
from polymer_lab.errors import ConfigError, DegenerateTestError, RareEventError
from polymer_lab.experiments import (
    SAMPLE_COLUMNS,
    ExperimentConfig,
    FluctuationSample,
    box_test,
    clt_test,
    homogenization_test,
    lindeberg_test,
    llt_test,
    load_samples,
    mixing_test,
    run_checks,
    run_experiment,
    run_replicate,
    synthetic_references,
    synthetic_samples,
)
from polymer_lab.experiments.harness import replicate_path
from polymer_lab.experiments.statistics import (
    decreasing,
    ks_coefficient,
    ks_critical_value,
    ks_one_sample,
    ks_two_sample,
    merge_by_id,
    summarize,
    through_origin_slope,
)
from polymer_lab.utils.io import read_csv, read_json

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")

TINY = ExperimentConfig(
    n_grid=(4, 8),
    horizon_factor=4,
    replicates=4,
    llt_k_grid=(8,),
    homog_k_grid=(16,),
    smoke=True,
)


def _write_config(path, body: str) -> str:
    with open(path, "w", encoding="utf-8") as f:
        f.write(body)
    return str(path)


def test_config_parsing(tmp_path):
    path = _write_config(
        tmp_path / "point.cfg",
        "[model]\nd = 4\nbeta = 0.3\n\n[env]\nfamily = bernoulli\nparams = p=0.3\n\n"
        "[experiment]\nn_grid = 4, 8\neps_grid = 0.5,inf\n\n[run]\nsmoke = yes\n",
    )
    config = ExperimentConfig.from_file(path)
    assert config.d == 4 and config.beta == 0.3
    assert config.family_params == {"p": 0.3}
    assert config.n_grid == (4, 8) and config.horizon == 64
    assert config.eps_grid == (0.5, math.inf)
    assert config.smoke and not config.snapshots
    assert config.n0 == 2
    assert ExperimentConfig.from_flat(config.to_flat()) == config
    for name in ("default", "smoke", "stress", "acceptance"):
        ExperimentConfig.from_file(os.path.join(CONFIG_DIR, f"{name}.cfg")).validate()


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(str(tmp_path / "missing.cfg"))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_flat({"model.temperature": "1"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_flat({"run.smoke": "maybe"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_flat({"env.params": "p"})
    invalid = [
        dict(n_grid=()),
        dict(n_grid=(8, 4)),
        dict(horizon_factor=3),
        dict(replicates=50),
        dict(lk_exponent=0.5),
        dict(d=2),
        dict(family="cauchy"),
        dict(eps_grid=(0.0,)),
        dict(llt_k_grid=(2,)),
        dict(mixing_event="quantile:1.5"),
        dict(mixing_n0=8),
    ]
    for kwargs in invalid:
        with pytest.raises(ConfigError):
            ExperimentConfig(**kwargs).validate()
    ExperimentConfig(replicates=50, smoke=True).validate()


def test_statistics():
    assert ks_coefficient(0.01) == pytest.approx(1.628, abs=1e-3)
    assert ks_critical_value(400) == pytest.approx(1.628 / 20.0, abs=1e-4)
    s = summarize([1.0, 2.0, 3.0, 4.0])
    assert s.mean == 2.5 and s.variance == pytest.approx(5.0 / 3.0)
    assert s.skewness == pytest.approx(0.0, abs=1e-15)
    assert through_origin_slope([1.0, 2.0], [2.0, 4.0]) == pytest.approx(2.0)
    assert decreasing(2.0, 1.0) and decreasing(1.0, 0.0)
    assert decreasing(0.0, 0.0) is None
    assert not decreasing(1.0, 1.0) and not decreasing(1.0, 2.0)
    with pytest.raises(ValueError):
        summarize([1.0])


def test_ks_calibration():
    # rejection rate at level 0.01 on exact normal samples
    rng = np.random.default_rng(3)
    crit = ks_critical_value(400)
    rejections = sum(ks_one_sample(rng.standard_normal(400)).statistic >= crit for _ in range(200))
    assert rejections <= 8
    shifted = ks_two_sample(rng.standard_normal(400), rng.standard_normal(400) + 0.5)
    assert shifted.statistic > 0.2 and shifted.pvalue < 1e-6


def test_merge_by_id():
    a, b, c = {0: "x", 3: "w"}, {2: "z"}, {1: "y"}
    assert merge_by_id(a, b, c) == merge_by_id(c, a, b) == ["x", "y", "z", "w"]
    with pytest.raises(ValueError):
        merge_by_id(a, {3: "v"})


def test_replicate_at_zero_temperature():
    config = replace(TINY, beta=0.0)
    sample = run_replicate(config, 0)
    for j in range(len(config.n_grid)):
        assert sample.t[j] == pytest.approx(0.0, abs=1e-9)
        assert sample.u[j] == pytest.approx(0.0, abs=1e-9)
        assert sample.l[j] == pytest.approx(0.0, abs=1e-9)
        assert sample.s2[j] == 0.0
    assert sample.llt_delta[0].abs().max().item() < 1e-12


def test_replicate_is_deterministic():
    first = run_replicate(TINY, 3)
    second = run_replicate(TINY, 3)
    assert first.trajectory == second.trajectory
    assert first.s2 == second.s2 and first.homog == second.homog
    assert torch.equal(first.llt_delta[0], second.llt_delta[0])
    assert len(first.trajectory) == TINY.horizon + 1
    assert len(first.csv_rows()) == len(TINY.n_grid)
    assert run_replicate(TINY, 4).trajectory != first.trajectory
    restored = FluctuationSample.from_state_dict(first.to_state_dict())
    assert restored.csv_rows() == first.csv_rows()


def _null_model(d: int = 3, replicates: int = 1600):
    # at beta = 0.4 the drift of W_N against W_n shifts mean s_n^2 by about 1%
    config = ExperimentConfig(d=d, beta=0.4, replicates=replicates, eps_grid=(0.5, math.inf))
    profile = temperature_profile(create_named_family("gaussian"), 0.4, d)
    return config, profile, synthetic_references(config, profile)


@parameterize("d", [3, 4])
def check_null_model_false_alarms(d: int):
    config, profile, refs = _null_model(d)
    failures = 0
    for seed in range(20):
        reports = run_checks(synthetic_samples(profile, config, seed), profile, config, refs)
        assert all(report.status in ("pass", "fail") for report in reports)
        failures += any(report.status == "fail" for report in reports)
    assert failures <= 3


def test_checks_on_null_model():
    check_null_model_false_alarms()


def test_check_edge_cases():
    config, profile, refs = _null_model(replicates=400)
    samples = synthetic_samples(profile, config, 0)
    with pytest.raises(RareEventError):
        mixing_test(samples, config, event_spec="quantile:0.95")
    lindeberg = lindeberg_test(samples, config, eps_grid=(math.inf,))
    assert all(entry.value == 0.0 for entry in lindeberg.entries)
    assert lindeberg.conclude().status == "pass"
    llt = llt_test(samples, profile, config).conclude()
    assert llt.status == "pass" and llt.entries[-1].passed is None
    smoke = run_checks(samples, profile, replace(config, smoke=True), refs)
    assert {report.status for report in smoke} == {"skipped"}
    assert all(report.entries for report in smoke)
    flat = [replace(s, t=[0.0] * len(s.t)) for s in samples]
    with pytest.raises(DegenerateTestError):
        clt_test(flat, profile, config, refs)
    reports = run_checks(flat, profile, config, refs)
    assert reports[0].status == "error"


def test_checks_at_zero_temperature():
    config, _, _ = _null_model(replicates=400)
    cold = temperature_profile(create_named_family("gaussian"), 0.0, 3)
    samples = synthetic_samples(cold, config, 0)
    assert clt_test(samples, cold, config, None).status == "skipped"
    assert homogenization_test(samples, cold, config).status == "skipped"
    assert mixing_test(samples, replace(config, beta=0.0)).status == "skipped"


def _trend_config():
    config = ExperimentConfig(d=3, beta=0.4, replicates=100, n_grid=(8, 32), horizon_factor=4, eps_grid=(1e-3, 10.0))
    profile = temperature_profile(create_named_family("gaussian"), 0.4, 3)
    return config, profile, synthetic_samples(profile, config, 1)


def test_zero_trends_are_inconclusive():
    config, profile, samples = _trend_config()
    # |D_{k+1}| = 1/(k+1): every increment clears eps = 1e-3, none clears eps = 10
    decaying = [replace(s, increments=[1.0 / (k + 1) for k in range(config.horizon)]) for s in samples]
    report = lindeberg_test(decaying, config).conclude()
    small, large = [e for e in report.entries if e.tolerance_kind == "trend"]
    assert small.passed is True and small.value < small.reference
    assert large.passed is None and large.value == large.reference == 0.0
    assert "inconclusive" in large.detail
    assert report.status == "pass"

    m = len(config.alpha_grid)
    windows = {
        "zero": [0.0] * m,
        "ordered": [2.0, 1.0] + [0.0] * (m - 2),
        "unordered": [1.0, 2.0] + [0.0] * (m - 2),
    }
    verdicts = {}
    for key, window in windows.items():
        shaped = [replace(s, window=[list(window) for _ in config.n_grid]) for s in samples]
        entries = homogenization_test(shaped, profile, config).entries
        verdicts[key] = [e for e in entries if e.name == "window term F_n along alpha"]
    assert all(e.passed is None and "inconclusive" in e.detail for e in verdicts["zero"])
    assert all(e.passed is True and "inconclusive" in e.detail for e in verdicts["ordered"])
    assert all(e.passed is False for e in verdicts["unordered"])


def test_box_certification():
    config, _, samples = _trend_config()
    report = box_test(samples, config).conclude()
    assert report.status == "pass" and report.entries[0].gating
    leaky = list(samples)
    leaky[3] = replace(leaky[3], clipped_mass=1e-3 * leaky[3].trajectory[-1])
    report = box_test(leaky, config).conclude()
    assert report.status == "fail"
    assert report.entries[0].detail["replicates over tolerance"] == 1


def test_llt_report_entries():
    config = replace(TINY, replicates=3)
    profile = temperature_profile(create_named_family("gaussian"), config.beta, config.d)
    samples = [run_replicate(config, r) for r in range(config.replicates)]
    report = llt_test(samples, profile, config)
    nearest = [e for e in report.entries if e.name == "E|delta_k^x|^2 at the site nearest the origin"]
    assert [e.n for e in nearest] == list(config.llt_k_grid)
    assert sum(abs(c) for c in nearest[0].detail["site"]) == 1
    sup = [e for e in report.entries if e.name == "sup_x E|delta_k^x|^2"][0]
    assert 0.0 < nearest[0].value <= sup.value
    assert any(e.name == "mean over the window of delta_k^x" for e in report.entries)


def test_run_experiment(tmp_path, monkeypatch):
    monkeypatch.setenv("POLYMERLAB_CACHE", str(tmp_path / "cache"))
    run_dir = str(tmp_path / "run")
    result = run_experiment(TINY, run_dir, threads=1, quiet=True)
    assert result.exit_code == 0
    assert {report.status for report in result.reports} == {"skipped"}
    assert result.reports[-1].name == "box" and result.reports[-1].entries[0].passed
    manifest = read_json(os.path.join(run_dir, "manifest.json"))
    assert manifest["status"] == "complete" and manifest["config"] == TINY.to_flat()
    rows = read_csv(os.path.join(run_dir, "samples.csv"), SAMPLE_COLUMNS)
    assert len(rows) == TINY.replicates * len(TINY.n_grid)
    assert [int(row["replicate"]) for row in rows[::2]] == list(range(TINY.replicates))
    with open(os.path.join(run_dir, "report.json"), "rb") as f:
        report = f.read()

    # a rerun only re-evaluates; a lost replicate is recomputed bit for bit
    before = load_samples(run_dir, TINY)
    os.remove(replicate_path(run_dir, 2))
    run_experiment(TINY, run_dir, threads=1, quiet=True)
    with open(os.path.join(run_dir, "report.json"), "rb") as f:
        assert f.read() == report
    after = load_samples(run_dir, TINY)
    assert after[2].trajectory == before[2].trajectory

    with pytest.raises(ConfigError):
        run_experiment(replace(TINY, seed=1), run_dir, threads=1, quiet=True)
    with pytest.raises(ConfigError):
        run_experiment(replace(TINY, beta=1.2), str(tmp_path / "hot"), threads=1, quiet=True)


def test_thread_count_does_not_change_results(tmp_path, monkeypatch):
    monkeypatch.setenv("POLYMERLAB_CACHE", str(tmp_path / "cache"))
    outputs = {}
    for threads in (1, 2):
        run_dir = str(tmp_path / f"threads{threads}")
        run_experiment(TINY, run_dir, threads=threads, quiet=True)
        outputs[threads] = {}
        for name in ("samples.csv", "report.json"):
            with open(os.path.join(run_dir, name), "rb") as f:
                outputs[threads][name] = f.read()
    assert outputs[1] == outputs[2]


def test_snapshots(tmp_path, monkeypatch):
    monkeypatch.setenv("POLYMERLAB_CACHE", str(tmp_path / "cache"))
    config = replace(TINY, replicates=2, snapshots=True)
    run_experiment(config, str(tmp_path / "run"), threads=1, quiet=True)
    names = sorted(os.listdir(tmp_path / "run" / "raw"))
    assert names == ["r000000_k00004.bin", "r000000_k00008.bin", "r000001_k00004.bin", "r000001_k00008.bin"]


if __name__ == "__main__":
    test_statistics()
    test_replicate_is_deterministic()
    test_checks_on_null_model()
