"""
Report types and writers: report.json, one CSV per time series, summary.txt.
"""

import csv
import json
import math
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from tabulate import tabulate

from config import Config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Verdict:
    invariant: str
    passed: bool
    detail: str = ""


@dataclass
class SeriesTable:
    columns: List[str]
    rows: np.ndarray  # (n, len(columns))


@dataclass
class ExperimentReport:
    name: str
    verdicts: List[Verdict] = field(default_factory=list)
    metrics: Dict[str, Any] = field(default_factory=dict)
    series: Dict[str, SeriesTable] = field(default_factory=dict)
    complete: bool = True
    error: Optional[str] = None

    def check(self, invariant: str, passed: bool, detail: str = "") -> bool:
        self.verdicts.append(Verdict(invariant, bool(passed), detail))
        return bool(passed)

    def add_series(self, name: str, columns: Sequence[str], *arrays) -> None:
        self.series[name] = SeriesTable(list(columns), np.column_stack([np.asarray(a, dtype=float) for a in arrays]))

    @property
    def passed(self) -> bool:
        return self.complete and self.error is None and all(v.passed for v in self.verdicts)


@dataclass
class RunReport:
    scenario_name: str
    scenario_hash: str
    seed: int
    bounds: Optional[Dict[str, float]] = None
    experiments: List[ExperimentReport] = field(default_factory=list)
    forced: bool = False
    tool_version: str = Config.TOOL_VERSION

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.experiments)


def _plain(value: Any) -> Any:
    """JSON-safe value; non-finite floats become the strings 'inf', '-inf', 'nan'."""
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def report_to_dict(run: RunReport, series_files: Optional[Dict[str, str]] = None) -> Dict[str, Any]:
    series_files = series_files or {}
    return _plain({
        "tool_version": run.tool_version,
        "scenario": {"name": run.scenario_name, "hash": run.scenario_hash},
        "seed": run.seed,
        "forced": run.forced,
        "bounds": run.bounds,
        "passed": run.passed,
        "experiments": [
            {
                "name": e.name,
                "passed": e.passed,
                "complete": e.complete,
                "error": e.error,
                "verdicts": [{"invariant": v.invariant, "passed": v.passed, "detail": v.detail} for v in e.verdicts],
                "metrics": e.metrics,
                "series": {name: series_files.get(f"{e.name}.{name}", "") for name in e.series},
            }
            for e in run.experiments
        ],
    })


def write_series_csv(path: Path, columns: Sequence[str], rows) -> Path:
    """Header row, '.' decimals, '\\n' newlines, floats in shortest round-trip form."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in np.atleast_2d(rows):
            writer.writerow([repr(float(v)) for v in row])
    return path


def write_report_json(path: Path, run: RunReport, series_files: Optional[Dict[str, str]] = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report_to_dict(run, series_files), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def summary_rows(run: RunReport) -> List[List[str]]:
    rows = []
    for experiment in run.experiments:
        if experiment.error:
            rows.append([experiment.name, "(run)", "ERROR", experiment.error])
        if not experiment.complete:
            rows.append([experiment.name, "(complete)", "FAIL", "partial results"])
        for verdict in experiment.verdicts:
            rows.append([experiment.name, verdict.invariant, "PASS" if verdict.passed else "FAIL", verdict.detail])
    return rows


def write_summary(path: Path, run: RunReport) -> Path:
    path = Path(path)
    table = tabulate(summary_rows(run), headers=["Experiment", "Invariant", "Verdict", "Detail"], tablefmt="grid")
    header = (f"scenario {run.scenario_name} ({run.scenario_hash[:12]}), seed {run.seed}, "
              f"tool {run.tool_version}{' [forced]' if run.forced else ''}\n")
    path.write_text(header + table + f"\n\noverall: {'PASS' if run.passed else 'FAIL'}\n", encoding="utf-8")
    return path


def write_run(out_dir: Path, run: RunReport) -> Path:
    """Write every artifact of a run into out_dir; returns the report path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series_files = {}
    for experiment in run.experiments:
        for name, table in experiment.series.items():
            filename = f"{experiment.name}_{name}.csv"
            write_series_csv(out_dir / filename, table.columns, table.rows)
            series_files[f"{experiment.name}.{name}"] = filename
    write_summary(out_dir / "summary.txt", run)
    report_path = write_report_json(out_dir / "report.json", run, series_files)
    logger.info(f"Wrote {len(series_files)} series and the report to {out_dir}")
    return report_path
