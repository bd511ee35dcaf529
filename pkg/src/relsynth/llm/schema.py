"""Compile the dataset schema to a JSON-schema grammar, and render real
entities as JSON documents in that shape.

The compiled schema uses a deliberately small JSON-schema subset — object,
array, string, number, integer, enum, required — so an endpoint's grammar
engine and the local validator agree on exactly the same language.
Numeric training ranges travel in non-assertive ``description`` text: the
model is told the range but out-of-range numbers are clamped after the
fact rather than rejected.
"""

from __future__ import annotations

import datetime as dt
from typing import Optional

from ..analytics import AnalyticsSpec
from ..dataset import RelationalDataset, parse_datetime_parts
from ..discretize import CategoricalCodec, DateCodec, NumericCodec, TimeCodec
from ..errors import ConfigError


def _clock(minutes: float) -> str:
    return f"{int(minutes // 60):02d}:{int(minutes % 60):02d}"


def _field_schema(codec, kind: str, has_time: bool) -> dict:
    if kind == "categorical":
        assert isinstance(codec, CategoricalCodec)
        return {"type": "string", "enum": list(codec.categories)}
    if kind in ("numeric-continuous", "numeric-integer"):
        assert isinstance(codec, NumericCodec)
        json_type = "integer" if codec.integer else "number"
        lo = int(codec.lo) if codec.integer else round(codec.lo, 6)
        hi = int(codec.hi) if codec.integer else round(codec.hi, 6)
        return {"type": json_type, "description": f"value between {lo} and {hi}"}
    if kind == "datetime":
        assert isinstance(codec, DateCodec)
        lo = dt.date.fromordinal(int(codec.lo)).isoformat()
        hi = dt.date.fromordinal(int(round(codec.hi))).isoformat()
        if has_time:
            return {
                "type": "string",
                "format": "date-time",
                "description": f"date and time like {lo} 14:30, between {lo} and {hi}",
            }
        return {"type": "string", "format": "date", "description": f"date between {lo} and {hi}"}
    if kind == "time-of-day":
        assert isinstance(codec, TimeCodec)
        return {"type": "string", "format": "time", "description": "clock time like 14:30"}
    raise ConfigError(f"column kind {kind!r} has no JSON mapping")


def _table_object_schema(dataset: RelationalDataset, spec: AnalyticsSpec, table: str) -> dict:
    schema = dataset.tables[table].schema
    properties: dict = {}
    required: list[str] = []
    for col in schema.data_columns:
        codec = spec.codec(f"{table}.{col.name}")
        has_time = spec.has_column(f"{table}.{col.name}#time")
        properties[col.name] = _field_schema(codec, col.kind, has_time)
        if not col.nullable:
            required.append(col.name)
    for rel in dataset.children_of(table):
        properties[rel.child] = {
            "type": "array",
            "items": _table_object_schema(dataset, spec, rel.child),
        }
        required.append(rel.child)
    return {"type": "object", "properties": properties, "required": required}


def compile_schema(dataset: RelationalDataset, spec: AnalyticsSpec) -> dict:
    """JSON schema of one entity: main-table fields plus nested child arrays."""
    return _table_object_schema(dataset, spec, dataset.main_table)


class EntityRenderer:
    """Render real entities as JSON documents under the compiled schema shape.

    Values are coarsened to their codes first — a rendered document carries
    bin representatives, not raw cells — so a round trip through encoding
    lands on the same codes while never exposing raw numeric detail beyond
    the bin resolution. Key columns are omitted; null cells are omitted.
    """

    def __init__(self, dataset: RelationalDataset, spec: AnalyticsSpec):
        self.dataset = dataset
        self.spec = spec
        self._row_of_entity = {e: i for i, e in enumerate(dataset.entity_ids)}
        self._groups = {
            rel.child: dataset.rows_by_parent(rel.child)
            for table in dataset.tables
            for rel in dataset.children_of(table)
        }

    def render(self, entity_id: str) -> dict:
        if entity_id not in self._row_of_entity:
            raise KeyError(f"unknown entity {entity_id!r}")
        return self._render_row(self.dataset.main_table, self._row_of_entity[entity_id])

    def _render_cell(self, table: str, col, cell: str):
        name = f"{table}.{col.name}"
        codec = self.spec.codec(name)
        if col.kind == "categorical":
            code = codec.encode_cell(cell)
            if code == codec.unknown_code:
                return cell  # out-of-training category (e.g. hold-out data)
            return codec.render_value(code)
        if col.kind == "datetime":
            ordinal, minutes = parse_datetime_parts(cell)
            value = codec.render_value(codec.encode_ordinal(ordinal))
            time_name = f"{name}#time"
            if self.spec.has_column(time_name):
                tcodec = self.spec.codec(time_name)
                start = tcodec.encode_minutes(minutes) * tcodec.bin_minutes
                value = f"{value} {_clock(start)}"
            return value
        return codec.render_value(codec.encode_cell(cell))

    def _render_row(self, table: str, row_idx: int) -> dict:
        tbl = self.dataset.tables[table]
        out: dict = {}
        for col in tbl.schema.data_columns:
            cell = tbl.rows[row_idx][tbl.schema.index_of(col.name)]
            if cell is None:
                continue
            out[col.name] = self._render_cell(table, col, cell)
        for rel in self.dataset.children_of(table):
            rows = self._groups[rel.child].get(row_idx, [])
            out[rel.child] = [self._render_row(rel.child, i) for i in rows]
        return out


def entity_to_json(dataset: RelationalDataset, spec: AnalyticsSpec, entity_id: str) -> dict:
    return EntityRenderer(dataset, spec).render(entity_id)


def minimal_instance(schema: dict):
    """Smallest instance conforming to a compiled schema (used by the mock)."""
    t = schema.get("type")
    if t == "object":
        return {
            key: minimal_instance(schema["properties"][key])
            for key in schema.get("required", [])
        }
    if t == "array":
        return []
    if "enum" in schema:
        return schema["enum"][0]
    if t in ("number", "integer"):
        return 0
    if t == "string":
        fmt = schema.get("format")
        if fmt == "date":
            return "2000-01-01"
        if fmt == "date-time":
            return "2000-01-01 00:00"
        if fmt == "time":
            return "0:00"
        return "text"
    raise ConfigError(f"cannot build an instance for schema {schema!r}")
