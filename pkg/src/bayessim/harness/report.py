"""Experiment reports and their CSV / text serialisation."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

METRIC_HEADER = ("experiment", "metric", "value", "criterion", "status")
STATUSES = ("pass", "fail", "info", "skipped")


def format_value(v):
    """Text form used in every CSV: floats with 12 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


@dataclass(frozen=True)
class Metric:
    name: str
    value: object
    criterion: str = ""
    status: str = "info"

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status in ("pass", "fail") and not self.criterion:
            raise ValueError("pass/fail metrics must name an acceptance criterion")


@dataclass
class ExperimentReport:
    experiment: str
    config_echo: list
    metrics: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    seconds: float = 0.0

    def add(self, name, value, criterion="", passed=None, skipped=False):
        if skipped:
            status = "skipped"
        elif passed is None:
            status = "info"
        else:
            status = "pass" if passed else "fail"
        self.metrics.append(Metric(name, value, criterion, status))

    def criteria(self):
        """criterion -> "pass" / "fail" / "skipped", failing if any metric fails."""
        out = {}
        for m in self.metrics:
            if not m.criterion or m.status == "info":
                continue
            prev = out.get(m.criterion)
            if m.status == "fail" or prev == "fail":
                out[m.criterion] = "fail"
            elif m.status == "pass" or prev == "pass":
                out[m.criterion] = "pass"
            else:
                out[m.criterion] = "skipped"
        return dict(sorted(out.items()))

    @property
    def passed(self):
        return all(v != "fail" for v in self.criteria().values())


def write_rows(path, header, rows):
    """UTF-8 comma-separated file with a header row and formatted values."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def emit_csv(report, path):
    """Write one metric per row."""
    write_rows(path, METRIC_HEADER,
               [(report.experiment, m.name, m.value, m.criterion, m.status)
                for m in report.metrics])


def write_report(report, out_dir):
    """metrics.csv, one CSV per table and summary.txt; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "metrics.csv"]
    emit_csv(report, paths[0])
    for name, (header, rows) in sorted(report.tables.items()):
        paths.append(out / f"{name}.csv")
        write_rows(paths[-1], header, rows)
    paths.append(out / "summary.txt")
    paths[-1].write_text(summary_text(report), encoding="utf-8")
    return paths


def summary_text(report):
    lines = [f"experiment: {report.experiment}"]
    lines += [f"  {k} = {format_value(v)}" for k, v in report.config_echo]
    lines.append("criteria:")
    crit = report.criteria()
    lines += [f"  {k}: {v}" for k, v in crit.items()] or ["  (none)"]
    lines.append(f"overall: {'pass' if report.passed else 'fail'}")
    lines.append(f"wall-clock seconds: {report.seconds:.3f}")
    return "\n".join(lines) + "\n"
