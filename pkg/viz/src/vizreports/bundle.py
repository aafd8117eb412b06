"""Load and validate exported pattern reports before any rendering happens.

The bundle holds everything a report directory can contain: the component
reports (required), plus the solver trace and benchmark table when present.
Validation is strict about required fields and types and silent about
unknown fields, so producers can add fields without breaking renderers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import jsonschema

REPORT_SCHEMA = {
    "type": "array",
    "minItems": 0,
    "items": {
        "type": "object",
        "required": ["component_id", "weight", "degenerate", "topic", "spatial", "temporal"],
        "properties": {
            "component_id": {"type": "integer", "minimum": 0},
            "weight": {"type": "number", "minimum": 0},
            "degenerate": {"type": "boolean"},
            "topic": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["term", "weight"],
                    "properties": {
                        "term": {"type": "string"},
                        "weight": {"type": "number"},
                    },
                },
            },
            "spatial": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["name", "weight"],
                    "properties": {
                        "name": {"type": "string"},
                        "lat": {"type": ["number", "null"]},
                        "lon": {"type": ["number", "null"]},
                        "weight": {"type": "number"},
                    },
                },
            },
            "temporal": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["date", "weight"],
                    "properties": {
                        "date": {"type": "string", "pattern": r"^\d{4}-\d{2}-\d{2}$"},
                        "weight": {"type": "number"},
                    },
                },
            },
        },
    },
}

TRACE_COLUMNS = (
    "iter",
    "objective",
    "rel_change",
    "active_frac_u",
    "active_frac_l",
    "active_frac_t",
    "seconds",
)

BENCH_COLUMNS = (
    "algorithm",
    "final_rel_error",
    "fms",
    "iterations",
    "seconds",
    "mean_active_fraction",
)


class SchemaError(ValueError):
    """A report artifact does not match its contract."""


@dataclass(frozen=True)
class SpatialPoint:
    name: str
    lat: float | None
    lon: float | None
    weight: float


@dataclass(frozen=True)
class Component:
    component_id: int
    weight: float
    degenerate: bool
    topic: list[tuple[str, float]]
    spatial: list[SpatialPoint]
    temporal: list[tuple[date, float]]

    @property
    def label(self) -> str:
        base = f"Topic {self.component_id + 1}"
        return f"{base} (degenerate)" if self.degenerate else base

    def has_coordinates(self) -> bool:
        return any(p.lat is not None and p.lon is not None for p in self.spatial)


@dataclass
class ReportBundle:
    components: list[Component]
    trace: list[dict] | None = None
    bench: list[dict] | None = None

    def is_empty(self) -> bool:
        return not self.components


def _parse_components(payload) -> list[Component]:
    try:
        jsonschema.validate(payload, REPORT_SCHEMA)
    except jsonschema.ValidationError as err:
        raise SchemaError(f"report.json: {err.message} (at {list(err.absolute_path)})") from err
    components = []
    for item in payload:
        components.append(
            Component(
                component_id=item["component_id"],
                weight=float(item["weight"]),
                degenerate=item["degenerate"],
                topic=[(t["term"], float(t["weight"])) for t in item["topic"]],
                spatial=[
                    SpatialPoint(
                        name=s["name"],
                        lat=s.get("lat"),
                        lon=s.get("lon"),
                        weight=float(s["weight"]),
                    )
                    for s in item["spatial"]
                ],
                temporal=[
                    (date.fromisoformat(t["date"]), float(t["weight"]))
                    for t in item["temporal"]
                ],
            )
        )
    return components


def _read_csv_table(path: Path, required: tuple[str, ...], name: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(required) <= set(reader.fieldnames):
            raise SchemaError(
                f"{name}: expected columns {list(required)}, found {reader.fieldnames}"
            )
        return list(reader)


def load_report_json(path: str | Path) -> list[Component]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path}: not valid JSON: {err}") from err
    return _parse_components(payload)


def load_bundle(report_dir: str | Path) -> ReportBundle:
    """Read report.json (required) plus trace.csv / bench.csv when present."""
    report_dir = Path(report_dir)
    report_path = report_dir / "report.json"
    if not report_path.exists():
        raise FileNotFoundError(f"{report_path} not found")
    components = load_report_json(report_path)
    trace = None
    if (report_dir / "trace.csv").exists():
        trace = _read_csv_table(report_dir / "trace.csv", TRACE_COLUMNS, "trace.csv")
    bench = None
    if (report_dir / "bench.csv").exists():
        bench = _read_csv_table(report_dir / "bench.csv", BENCH_COLUMNS, "bench.csv")
    return ReportBundle(components=components, trace=trace, bench=bench)
