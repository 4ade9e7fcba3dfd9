"""Report serialization: metrics records, JSON reports with schema versioning,
and the summary-table CSV writer.

Reports are JSON with sorted keys; floats round-trip bit-exactly through
Python's shortest-repr formatting.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import SchemaError

SCHEMA_VERSION = 1
GENERATOR_NAME = "qcreg"

HISTOGRAM_BINS = 50

TABLE_COLUMNS = ("method", "mean_mu", "sd_mu", "landmark_error",
                 "sd_landmark_error", "time_seconds")


@dataclass(frozen=True)
class MetricsRecord:
    """Headline registration metrics plus the |mu| histogram."""
    mean_mu: float
    sd_mu: float
    landmark_rmse: float
    wall_time_seconds: float
    histogram: tuple = ()
    parameters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "MetricsRecord":
        return MetricsRecord(mean_mu=d["mean_mu"], sd_mu=d["sd_mu"],
                             landmark_rmse=d["landmark_rmse"],
                             wall_time_seconds=d["wall_time_seconds"],
                             histogram=tuple(d.get("histogram", ())),
                             parameters=dict(d.get("parameters", {})))


def _check_finite(obj, path="$"):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite value at {path}")
    elif isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


def write_report(payload, path) -> None:
    """Write a versioned JSON report (UTF-8, sorted keys)."""
    from . import __version__

    if isinstance(payload, MetricsRecord):
        payload = payload.to_dict()
    doc = dict(payload)
    doc["schema_version"] = SCHEMA_VERSION
    doc.setdefault("generator", {"name": GENERATOR_NAME, "version": __version__})
    _check_finite(doc)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def read_report(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"report schema version {version!r} unsupported "
                          f"(this reader expects {SCHEMA_VERSION})")
    return doc


def read_metrics(path) -> MetricsRecord:
    return MetricsRecord.from_dict(read_report(path))


def write_table_csv(rows, path) -> None:
    """Summary table with one row per method/configuration."""
    lines = [",".join(TABLE_COLUMNS)]
    for row in rows:
        lines.append(",".join(
            str(row[c]) if c == "method" else "%.17g" % float(row[c])
            for c in TABLE_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")
