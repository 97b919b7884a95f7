import logging
import os

import pandas as pd
import pytest

from rebmbo import cli
from rebmbo.config import parse_config
from rebmbo.errors import ConfigError, RunAborted
from rebmbo.traces import RunTrace, load_trace


TINY_CONFIG = """\
benchmark: branin
iterations: 3
initial_design: 3
methods: [rebmbo-c, gp-ucb, random]
seeds: [0, 1]
checkpoints: [1, 3]
gp:
  hyperparam_budget: 10
  hyperparam_starts: 2
ebm:
  hidden: 8
  epochs: 1
  langevin_steps: 3
acquisition:
  n_candidates: 32
  n_refine_steps: 2
  top_k: 1
agent:
  hidden: 8
  layers: 1
  warmup: 1
  anchors: 4
  epochs: 1
"""


@pytest.fixture(autouse=True)
def restore_package_logger():
    package_logger = logging.getLogger("rebmbo")
    handlers, level, propagate = list(package_logger.handlers), package_logger.level, package_logger.propagate
    yield
    package_logger.handlers = handlers
    package_logger.setLevel(level)
    package_logger.propagate = propagate


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(TINY_CONFIG)
    return str(path)


def read(path):
    with open(path) as f:
        return f.read()


def test_run_writes_traces(tmp_path, config_path):
    out = str(tmp_path / "out")
    assert cli.main(["run", "--config", config_path, "--method", "rebmbo-c", "--seed", "0", "--out", out]) == 0
    json_path = os.path.join(out, "branin_rebmbo-c_seed0.json")
    csv_path = os.path.join(out, "branin_rebmbo-c_seed0.csv")
    trace = load_trace(json_path)
    assert len(trace.records) == 3
    assert len(pd.read_csv(csv_path)) == 3

    first = read(json_path)
    assert cli.main(["run", "--config", config_path, "--method", "rebmbo-c", "--seed", "0", "--out", out]) == 0
    assert read(json_path) == first


def test_sweep_and_report(tmp_path, config_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    out = str(tmp_path / "sweep")
    assert cli.main(["sweep", "--config", config_path, "--out", out]) == 0
    manifest_path = os.path.join(out, cli.MANIFEST_FILENAME)
    manifest = cli.SweepManifest.read_from_file(manifest_path)
    assert len(manifest.entries) == 6
    assert not manifest.failed
    assert manifest.entries[0]["json"] == "branin_rebmbo-c_seed0.json"

    assert cli.main(["report", "--manifest", manifest_path]) == 0
    summary = pd.read_csv(os.path.join(out, "summary.csv"))
    assert list(summary.columns) == ["setting", "method", "metric", "t", "mean", "std", "n", "single_run"]
    assert set(summary["setting"]) == {"base"}
    assert set(summary["method"]) == {"rebmbo-c", "gp-ucb", "random"}
    assert set(summary[summary.metric == "lar"]["method"]) == {"rebmbo-c"}
    assert sorted(set(summary["t"])) == [1, 3]
    assert set(summary["n"]) == {2}

    curves = pd.read_csv(os.path.join(out, "plot_data.csv"))
    assert list(curves.columns) == ["setting", "method", "metric", "t", "mean", "std"]
    assert sorted(set(curves["t"])) == [1, 2, 3]

    report = read(os.path.join(out, "report.md"))
    assert "## gp-ucb" in report and "## random" in report
    assert "Runs left out" not in report


def test_sweep_over_settings(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    path = tmp_path / "exp.yaml"
    path.write_text(
        TINY_CONFIG.replace("methods: [rebmbo-c, gp-ucb, random]", "methods: [rebmbo-c, random]").replace(
            "seeds: [0, 1]", "seeds: [0]"
        )
        + "sweep:\n  ebm.mcmc: [false]\n  metrics.alpha: [0.5]\n"
    )
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--config", str(path), "--out", str(out)]) == 0
    manifest = cli.SweepManifest.read_from_file(str(out / cli.MANIFEST_FILENAME))
    settings = [e["setting"] for e in manifest.entries]
    assert settings == ["base"] * 2 + ["ebm.mcmc=False"] * 2 + ["metrics.alpha=0.5"] * 2
    assert [e["alpha"] for e in manifest.entries] == [0.3] * 4 + [0.5] * 2
    assert manifest.entries[0]["json"] == "branin_rebmbo-c_seed0.json"
    assert manifest.entries[2]["json"] == os.path.join("ebm.mcmc=False", "branin_rebmbo-c_seed0.json")
    swept = load_trace(str(out / manifest.entries[2]["json"]))
    assert swept.header["config"]["ebm"]["mcmc"] is False

    assert cli.main(["report", "--manifest", str(out / cli.MANIFEST_FILENAME)]) == 0
    summary = pd.read_csv(out / "summary.csv")
    assert list(summary.drop_duplicates("setting")["setting"]) == ["base", "ebm.mcmc=False", "metrics.alpha=0.5"]
    assert set(summary[summary.setting == "ebm.mcmc=False"]["method"]) == {"rebmbo-c", "random"}
    report = read(out / "report.md")
    assert "## rebmbo-c\n" in report
    assert "## rebmbo-c [ebm.mcmc=False]" in report
    assert "## random [metrics.alpha=0.5]" in report


def test_report_checkpoints_override(tmp_path, config_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    out = str(tmp_path / "sweep")
    experiment = parse_config(config_path)
    manifest_path, _ = cli.cmd_sweep(experiment, out)
    summary = cli.cmd_report(manifest_path, checkpoints=[2, 50], output_dir=str(tmp_path / "report"))
    assert sorted(set(summary["t"])) == [2, 3]
    assert os.path.exists(tmp_path / "report" / "report.md")


def test_parallel_sweep_matches_serial(tmp_path, config_path):
    experiment = parse_config(config_path)
    _, serial = cli.cmd_sweep(experiment, str(tmp_path / "serial"), workers=1)
    _, parallel = cli.cmd_sweep(experiment, str(tmp_path / "parallel"), workers=2)
    for a, b in zip(serial.entries, parallel.entries):
        assert a["json"] == b["json"]
        assert read(tmp_path / "serial" / a["json"]) == read(tmp_path / "parallel" / b["json"])


def test_partial_sweep(tmp_path, config_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    original = cli.run_method

    def failing_gp_ucb(config):
        if config.method == "gp-ucb":
            raise RunAborted("NumericalError: boom", RunTrace(header={"run_id": "branin-gp-ucb"}, status="partial"))
        return original(config)

    monkeypatch.setattr(cli, "run_method", failing_gp_ucb)
    out = str(tmp_path / "sweep")
    assert cli.main(["sweep", "--config", config_path, "--out", out]) == cli.EXIT_PARTIAL

    manifest = cli.SweepManifest.read_from_file(os.path.join(out, cli.MANIFEST_FILENAME))
    assert {e["method"] for e in manifest.failed} == {"gp-ucb"}
    assert all(e["status"] == "partial" for e in manifest.failed)
    assert os.path.exists(os.path.join(out, "branin_gp-ucb_seed0.partial.json"))

    assert cli.main(["report", "--manifest", os.path.join(out, cli.MANIFEST_FILENAME)]) == 0
    summary = pd.read_csv(os.path.join(out, "summary.csv"))
    assert "gp-ucb" not in set(summary["method"])
    assert "Runs left out" in read(os.path.join(out, "report.md"))


def test_run_failure_exit_code(tmp_path, config_path, monkeypatch):
    def aborted(config):
        raise RunAborted("NumericalError: boom", RunTrace(header={}, status="partial"))

    monkeypatch.setattr(cli, "run_method", aborted)
    out = str(tmp_path / "out")
    code = cli.main(["run", "--config", config_path, "--method", "random", "--seed", "0", "--out", out])
    assert code == cli.EXIT_RUNTIME
    assert os.path.exists(os.path.join(out, "branin_random_seed0.partial.json"))


def test_configuration_errors(tmp_path, config_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("benchmark: branin\nlengthscale: 2\n")
    assert cli.main(["run", "--config", str(bad), "--method", "random", "--seed", "0"]) == cli.EXIT_CONFIG
    assert cli.main(["sweep", "--config", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG
    out = str(tmp_path / "out")
    code = cli.main(["run", "--config", config_path, "--method", "tpe", "--seed", "0", "--out", out])
    assert code == cli.EXIT_CONFIG


def test_report_without_completed_runs(tmp_path):
    manifest = cli.SweepManifest("branin", 2, 3, [3], 0.3, [{"method": "random", "seed": 0, "status": "failed"}])
    path = str(tmp_path / cli.MANIFEST_FILENAME)
    manifest.write_to_file(path)
    assert cli.main(["report", "--manifest", path]) == cli.EXIT_CONFIG


def test_sweep_workers(monkeypatch):
    monkeypatch.delenv(cli.THREADS_ENV, raising=False)
    assert cli.sweep_workers(5) == 5
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    assert cli.sweep_workers(5) == 2
    monkeypatch.setenv(cli.THREADS_ENV, "zero")
    with pytest.raises(ConfigError):
        cli.sweep_workers(5)
