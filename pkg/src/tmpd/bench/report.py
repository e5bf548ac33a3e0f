"""Benchmark result records, aggregation, and on-disk report formats.

``emit_report`` writes, under the output directory:

* report.csv    - one row per (cell, model, method) measurement
* report.json   - config echo, records, aggregates, curves, timings
* timings.csv   - wall-clock seconds per record
* curves/*.tsv  - two-column numeric series (one file per curve)

Identical config and seed reproduce report.csv and curves byte for byte;
report.json is reproducible apart from its "timings" entry, which is the
one place wall-clock measurements live.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from pathlib import Path

import numpy as np

__all__ = [
    "CellRecord",
    "ExperimentReport",
    "aggregate",
    "emit_report",
    "load_report",
    "save_samples_csv",
]

_CSV_COLUMNS = [
    "experiment",
    "method",
    "d_x",
    "d_y",
    "sigma_y",
    "model_index",
    "sample_count",
    "metric",
    "value",
    "status",
    "reason",
    "ridge_fallbacks",
]


@dataclasses.dataclass
class CellRecord:
    """One measurement: a method on one model draw of one cell."""

    experiment: str
    method: str
    d_x: int
    d_y: int
    sigma_y: float
    model_index: int
    sample_count: int
    metric: str
    value: float | None
    status: str = "ok"
    reason: str = ""
    ridge_fallbacks: int = 0
    wall_time_s: float = 0.0


def aggregate(records: list[CellRecord]) -> list[dict]:
    """Mean and normal 95% half-width per (cell, method, sample_count).

    Failed records count into n_failed and are excluded from the mean.
    The half-width is 1.96 std / sqrt(n) with the n-1 std, or None when
    fewer than two values contribute.
    """
    groups: dict = {}
    for rec in records:
        key = (rec.method, rec.d_x, rec.d_y, rec.sigma_y, rec.sample_count, rec.metric)
        groups.setdefault(key, []).append(rec)
    out = []
    for key in sorted(groups, key=repr):
        method, d_x, d_y, sigma_y, sample_count, metric = key
        values = [r.value for r in groups[key] if r.status == "ok"]
        n_failed = sum(1 for r in groups[key] if r.status != "ok")
        if values:
            mean = float(np.mean(values))
            ci95 = (
                float(1.96 * np.std(values, ddof=1) / math.sqrt(len(values)))
                if len(values) > 1
                else None
            )
        else:
            mean, ci95 = None, None
        out.append(
            {
                "method": method,
                "d_x": d_x,
                "d_y": d_y,
                "sigma_y": sigma_y,
                "sample_count": sample_count,
                "metric": metric,
                "n_ok": len(values),
                "n_failed": n_failed,
                "mean": mean,
                "ci95": ci95,
            }
        )
    return out


@dataclasses.dataclass
class ExperimentReport:
    """Everything a benchmark run produced."""

    config: dict
    config_hash: str
    version: str
    records: list[CellRecord]
    curves: dict[str, list[list[float]]] = dataclasses.field(default_factory=dict)

    @property
    def aggregates(self) -> list[dict]:
        return aggregate(self.records)

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if r.status != "ok")


def _record_public(rec: CellRecord) -> dict:
    data = dataclasses.asdict(rec)
    data.pop("wall_time_s")
    return data


def _report_json_dict(report: ExperimentReport) -> dict:
    return {
        "version": report.version,
        "config_hash": report.config_hash,
        "config": report.config,
        "records": [_record_public(r) for r in report.records],
        "aggregates": report.aggregates,
        "curves": report.curves,
        "timings": {"wall_time_s": [r.wall_time_s for r in report.records]},
    }


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def _curve_filename(name: str) -> str:
    return name.replace("/", "_").replace(":", "-") + ".tsv"


def emit_report(report: ExperimentReport, out_dir, formats=("csv", "json")):
    """Write the report files under out_dir; returns the directory path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if "csv" in formats:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for rec in report.records:
            public = _record_public(rec)
            writer.writerow([_fmt(public[c]) for c in _CSV_COLUMNS])
        (out / "report.csv").write_text(buf.getvalue())
        tbuf = io.StringIO()
        writer = csv.writer(tbuf, lineterminator="\n")
        writer.writerow(["record_index", "wall_time_s"])
        for i, rec in enumerate(report.records):
            writer.writerow([i, repr(rec.wall_time_s)])
        (out / "timings.csv").write_text(tbuf.getvalue())
    if "json" in formats:
        (out / "report.json").write_text(
            json.dumps(_report_json_dict(report), indent=1, sort_keys=True) + "\n"
        )
    if report.curves:
        curve_dir = out / "curves"
        curve_dir.mkdir(exist_ok=True)
        for name, series in sorted(report.curves.items()):
            lines = [f"{_fmt(float(xv))}\t{_fmt(float(yv))}" for xv, yv in series]
            (curve_dir / _curve_filename(name)).write_text("\n".join(lines) + "\n")
    return out


def load_report(path) -> ExperimentReport:
    """Parse report.json back into an ExperimentReport."""
    data = json.loads(Path(path).read_text())
    times = data.get("timings", {}).get("wall_time_s", [])
    records = []
    for i, rec in enumerate(data["records"]):
        records.append(
            CellRecord(wall_time_s=times[i] if i < len(times) else 0.0, **rec)
        )
    return ExperimentReport(
        config=data["config"],
        config_hash=data["config_hash"],
        version=data["version"],
        records=records,
        curves={k: [list(p) for p in v] for k, v in data["curves"].items()},
    )


def save_samples_csv(path, samples: np.ndarray):
    """Write samples as CSV, one row per sample, one column per coordinate."""
    samples = np.asarray(samples)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])
