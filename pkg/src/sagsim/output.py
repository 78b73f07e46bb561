"""CSV and JSON emission of a finished run."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .config import ScenarioConfig, non_paper_defaults
from .engine import MetricsSeries

CSV_HEADER = ("slot", "total_cost", "mean_latency", "iotd_energy", "uav_energy_u1", "uav_energy_u2",
              "q_u1", "q_u2", "uav_x", "uav_y", "n_local", "n_uav", "n_cloud", "satellite")


def write_csv(series: MetricsSeries, path) -> Path:
    path = Path(path)
    cols = [series[c] for c in CSV_HEADER[1:]]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for i in range(series.n_recorded):
            # repr keeps full float precision so the file round-trips exactly
            w.writerow([i + 1, *(repr(c[i].item()) for c in cols)])
    return path


def summary_dict(series: MetricsSeries, cfg: ScenarioConfig) -> dict:
    return {
        "metrics": series.summary(),
        "config": cfg.model_dump(mode="json"),
        "non_paper_defaults": non_paper_defaults(cfg),
    }


def write_json(series: MetricsSeries, cfg: ScenarioConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(summary_dict(series, cfg), indent=2))
    return path


def emit(series: MetricsSeries, cfg: ScenarioConfig, fmt: str, path) -> Path:
    if not series.finalized:
        raise ValueError("series must be finalized before emission")
    if fmt == "csv":
        return write_csv(series, path)
    if fmt == "json":
        return write_json(series, cfg, path)
    raise ValueError(f"unknown output format {fmt!r}")


def read_csv(path) -> dict:
    """Columns of an emitted CSV as lists of floats."""
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in CSV_HEADER}
