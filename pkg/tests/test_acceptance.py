"""Acceptance gate: every criterion A1 to A8 at its stated tolerance.

Each test prints one ``A<n>: pass|fail`` line, and the same lines are
repeated in the terminal summary.  Experiments run once at their default
configuration and are shared between criteria.
"""
import hashlib
from pathlib import Path

import pytest

from bayessim.harness import EXPERIMENTS, load_config, run, write_report
from conftest import ACCEPTANCE_LINES

RUNS = {
    "reconstruct2": ("reconstruct2", []),
    "classify-compare": ("classify-compare", []),
    "multiclass": ("multiclass", []),
    "hierarchical-gap": ("hierarchical-gap", []),
    "batched-nn": ("batched-nn", []),
    "discriminate": ("discriminate", []),
    "threshold-sweep": ("threshold-sweep", ["model.kind=flip-noise"]),
    "threshold-sweep-gaussian": ("threshold-sweep", ["model.kind=gaussian-theta"]),
}


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(key):
        if key not in cache:
            name, overrides = RUNS[key]
            cfg = load_config(name, out=str(root / key), overrides=overrides)
            report = run(cfg)
            write_report(report, cfg.out)
            cache[key] = (cfg, report)
        return cache[key]

    return get


def check(criterion, metrics, detail=""):
    failed = [m for m in metrics if m.status != "pass"]
    verdict = "fail" if failed or not metrics else "pass"
    values = ", ".join(f"{m.name}={m.value:.6g}" if isinstance(m.value, float)
                       else f"{m.name}={m.value}" for m in metrics)
    line = f"{criterion}: {verdict}  {values}{'  ' + detail if detail else ''}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    assert not failed, line


def flagged(report, criterion):
    return [m for m in report.metrics if m.criterion == criterion]


def test_a1_reconstruction_round_trip(outputs):
    _, report = outputs("reconstruct2")
    check("A1", flagged(report, "A1"))


def test_a2_reconstructed_classifier_risk(outputs):
    _, report = outputs("classify-compare")
    check("A2", flagged(report, "A2"))


def test_a3_nearest_neighbour_gap(outputs):
    _, report = outputs("classify-compare")
    info = {m.name: m.value for m in report.metrics}
    detail = f"nn={info['nn_error']:.4f} reconstructed={info['reconstructed_mc_error']:.4f}"
    check("A3", flagged(report, "A3"), detail)


def test_a4_multiclass_inversion(outputs):
    _, report = outputs("multiclass")
    check("A4", flagged(report, "A4"))


def test_a5_factorization_failure(outputs):
    _, report = outputs("hierarchical-gap")
    check("A5", flagged(report, "A5"))


def test_a6_batched_distance_optimality(outputs):
    _, report = outputs("batched-nn")
    check("A6", flagged(report, "A6"))


def test_a7_discrimination_optimality(outputs):
    metrics = []
    for key in ("discriminate", "threshold-sweep", "threshold-sweep-gaussian"):
        _, report = outputs(key)
        metrics += flagged(report, "A7")
    check("A7", metrics)


def digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.glob("*.csv"))}


def test_a8_byte_identical_reruns(outputs, tmp_path):
    mismatched = []
    for key, (name, overrides) in RUNS.items():
        cfg, _ = outputs(key)
        again = load_config(name, out=str(tmp_path / key), overrides=overrides)
        write_report(run(again), again.out)
        first = digest(Path(cfg.out))
        if not first or first != digest(tmp_path / key):
            mismatched.append(key)
    line = f"A8: {'fail' if mismatched else 'pass'}  reruns={len(RUNS)} mismatched={mismatched}"
    ACCEPTANCE_LINES["A8"] = line
    print(line)
    assert not mismatched, line


def test_every_experiment_is_exercised():
    assert {name for name, _ in RUNS.values()} == set(EXPERIMENTS)
