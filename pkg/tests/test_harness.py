import csv
import hashlib

import numpy as np
import pytest
from scipy import stats

from bayessim.errors import ConfigError, ExperimentError
from bayessim.harness import EXPERIMENTS, ExperimentReport, emit_csv, load_config, run, write_report
from bayessim.harness.cli import main
from bayessim.harness.experiments import tail_risk
from bayessim.harness.report import format_value

FAST = {
    "reconstruct2": ["sizes.model_count=2"],
    "classify-compare": ["sizes.grid_resolution=401", "sizes.pair_count=1500",
                         "sizes.train_count=300", "sizes.test_count=300"],
    "multiclass": ["sizes.instance_count=2", "sizes.restarts=3"],
    "hierarchical-gap": [],
    "batched-nn": ["sizes.instance_count=2", "sizes.batch_count=50"],
    "discriminate": [],
    "threshold-sweep": ["sizes.trial_count=2000"],
}
ZERO = {
    "reconstruct2": "sizes.model_count=0",
    "classify-compare": "sizes.grid_resolution=0",
    "multiclass": "sizes.instance_count=0",
    "hierarchical-gap": "sizes.grid_resolution=0",
    "batched-nn": "sizes.instance_count=0",
    "threshold-sweep": "sizes.trial_count=0",
}


def digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.glob("*.csv"))}


class TestConfig:
    def test_unknown_experiment(self):
        with pytest.raises(ConfigError) as info:
            load_config("reconstruct3")
        assert info.value.field == "experiment"

    def test_unknown_field(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[sizes]\nrestart = 3\n")
        with pytest.raises(ConfigError) as info:
            load_config("multiclass", path)
        assert info.value.field == "sizes.restart"

    def test_negative_count(self):
        with pytest.raises(ConfigError) as info:
            load_config("multiclass", overrides=["sizes.restarts=-1"])
        assert info.value.field == "sizes.restarts"

    def test_bad_model_kind(self):
        with pytest.raises(ConfigError) as info:
            load_config("discriminate", overrides=["model.kind=gaussian-pair"])
        assert info.value.field == "model.kind"

    def test_precedence(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[run]\nseed = 4\nout = a  # comment\n[sizes]\nrestarts = 7\n")
        cfg = load_config("multiclass", path)
        assert (cfg.seed, cfg.out, cfg.sizes["restarts"]) == (4, "a", 7)
        cfg = load_config("multiclass", path, seed="9", overrides=["sizes.restarts=2"])
        assert (cfg.seed, cfg.sizes["restarts"], cfg.sizes["instance_count"]) == (9, 2, 50)

    def test_experiment_mismatch(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[run]\nexperiment = multiclass\n")
        with pytest.raises(ConfigError):
            load_config("discriminate", path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config("multiclass", tmp_path / "nope.ini")
        assert info.value.field == "config"

    def test_every_experiment_has_defaults(self):
        for name in EXPERIMENTS:
            assert load_config(name).experiment == name


class TestReport:
    def test_empty_report_is_header_only(self, tmp_path):
        emit_csv(ExperimentReport("x", []), tmp_path / "m.csv")
        assert (tmp_path / "m.csv").read_text() == "experiment,metric,value,criterion,status\n"

    def test_one_metric_two_lines(self, tmp_path):
        report = ExperimentReport("x", [])
        report.add("err", 1 / 3, "A1", True)
        emit_csv(report, tmp_path / "m.csv")
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines == ["experiment,metric,value,criterion,status", "x,err,0.333333333333,A1,pass"]

    def test_twelve_significant_digits(self):
        assert format_value(0.1586552539314571) == "0.158655253931"
        assert format_value(3) == "3" and format_value(True) == "true"

    def test_flags_need_a_criterion(self):
        with pytest.raises(ValueError):
            ExperimentReport("x", []).add("err", 0.1, passed=True)

    def test_overall_status(self):
        report = ExperimentReport("x", [])
        report.add("a", 1, "A1", True)
        report.add("b", 1, "A2", skipped=True)
        assert report.passed
        report.add("c", 1, "A1", False)
        assert report.criteria() == {"A1": "fail", "A2": "skipped"}
        assert not report.passed


class TestRun:
    def test_reconstruct_gaussian_pair(self):
        report = run(load_config("reconstruct2", overrides=["model.kind=gaussian-pair"]))
        metrics = {m.name: m for m in report.metrics}
        assert metrics["max_posterior_error"].value <= 1e-9
        assert report.criteria() == {"A1": "pass"}

    @pytest.mark.parametrize("name", sorted(ZERO))
    def test_zero_counts_are_skipped(self, name, tmp_path):
        report = run(load_config(name, overrides=[ZERO[name]]))
        statuses = {m.status for m in report.metrics if m.criterion}
        # parts of an experiment that do not depend on the zeroed count still run
        assert "skipped" in statuses and "fail" not in statuses
        assert report.passed
        write_report(report, tmp_path)
        assert (tmp_path / "metrics.csv").exists()

    @pytest.mark.parametrize("name", EXPERIMENTS)
    def test_byte_identical_reruns(self, name, tmp_path):
        for sub in ("a", "b"):
            cfg = load_config(name, out=str(tmp_path / sub), overrides=FAST[name])
            write_report(run(cfg), cfg.out)
        assert digest(tmp_path / "a") == digest(tmp_path / "b")
        assert digest(tmp_path / "a")

    def test_module_errors_carry_experiment(self):
        # 500 pairs leave the kernel estimate far outside the valid self-similarity range
        cfg = load_config("classify-compare", overrides=["sizes.pair_count=500"])
        with pytest.raises(ExperimentError, match="classify-compare") as info:
            run(cfg)
        assert type(info.value.cause).__name__ == "InvalidSelfSimilarityError"

    def test_table_schemas(self, tmp_path):
        cfg = load_config("discriminate", out=str(tmp_path))
        write_report(run(cfg), cfg.out)
        with open(tmp_path / "pair_scores.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x", "x_other", "same_likelihood", "diff_likelihood",
                           "posterior_same", "decision"]
        assert len(rows) == 5


@pytest.mark.parametrize("prior", [0.5, 0.2, 0.9])
def test_tail_risk_matches_closed_form(prior):
    sep, var = 1.3, 0.6
    sd = np.sqrt(var)
    b = var * np.log(prior / (1 - prior)) / (2 * sep)
    expected = prior * stats.norm.sf(b, -sep, sd) + (1 - prior) * stats.norm.cdf(b, sep, sd)
    assert tail_risk(sep, var, prior) == pytest.approx(expected, rel=1e-10)


def test_tail_reference_value():
    assert abs(tail_risk(1.0, 1.0, 0.5) - 0.1587) <= 1e-4


class TestCli:
    def test_pass_exit_code(self, tmp_path, capsys):
        assert main(["discriminate", "--out", str(tmp_path), "--quiet"]) == 0
        assert capsys.readouterr().out == ""
        assert "A7: pass" in (tmp_path / "summary.txt").read_text()

    def test_config_error_exit_code(self, tmp_path, capsys):
        assert main(["discriminate", "--out", str(tmp_path), "--set", "sizes.bogus=1"]) == 2
        assert "sizes.bogus" in capsys.readouterr().err

    def test_misspelled_experiment(self, capsys):
        assert main(["discriminat"]) == 2
        assert "experiment" in capsys.readouterr().err

    def test_failing_criterion_exit_code(self, tmp_path):
        # with only 300 training points the gap check cannot reach 3 standard errors
        args = ["classify-compare", "--out", str(tmp_path), "--quiet"]
        for item in FAST["classify-compare"]:
            args += ["--set", item]
        assert main(args) == 1

    def test_runtime_error_exit_code(self, tmp_path, capsys):
        assert main(["classify-compare", "--out", str(tmp_path),
                     "--set", "sizes.pair_count=500"]) == 3
        assert "classify-compare" in capsys.readouterr().err

    def test_summary_printed(self, tmp_path, capsys):
        main(["hierarchical-gap", "--out", str(tmp_path), "--seed", "3"])
        out = capsys.readouterr().out
        assert "A5: pass" in out and "seed = 3" in out
