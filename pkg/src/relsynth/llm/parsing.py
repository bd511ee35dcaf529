"""Validate completion JSON against the compiled schema and convert it back
to relational rows.

The validator here is written from scratch on purpose: it is the runtime
gatekeeper for model output, and the tests compare its accept/reject
decisions against an independent general-purpose JSON-schema implementation.
Semantics follow the modern drafts for the subset in use: booleans are not
numbers, a float with zero fractional part is a valid integer, ``required``
applies only to objects, and unknown extra properties are allowed.

Accepted documents are then mapped to rows. Values arrive coarsened (the
model sees bins, not raw data), so numbers outside the training range are
clamped to the range edge and unparseable date/time strings are replaced by
the first bin's representative; both cases are counted, not rejected.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from typing import Optional

from ..analytics import AnalyticsSpec
from ..dataset import (
    Cell,
    RelationalDataset,
    parse_datetime_parts,
    parse_time_minutes,
)
from ..errors import ConfigError, SchemaViolation


def _type_ok(value, t: str) -> bool:
    if t == "object":
        return isinstance(value, dict)
    if t == "array":
        return isinstance(value, list)
    if t == "string":
        return isinstance(value, str)
    if t == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if t == "integer":
        if isinstance(value, bool):
            return False
        return isinstance(value, int) or (isinstance(value, float) and value.is_integer())
    raise ConfigError(f"unsupported schema type {t!r}")


def _json_equal(a, b) -> bool:
    if isinstance(a, bool) != isinstance(b, bool):
        return False
    return type(a) in (int, float, bool, str, type(None), list, dict) and a == b


def validate_instance(instance, schema: dict, path: str = "$") -> list[str]:
    """All violations of the schema subset; empty list means accepted."""
    errors: list[str] = []
    t = schema.get("type")
    if t is not None and not _type_ok(instance, t):
        errors.append(f"{path}: expected {t}, got {type(instance).__name__}")
        return errors
    if "enum" in schema and not any(_json_equal(instance, e) for e in schema["enum"]):
        errors.append(f"{path}: {instance!r} is not one of the allowed values")
    if t == "object":
        for key in schema.get("required", []):
            if key not in instance:
                errors.append(f"{path}.{key}: required field missing")
        for key, sub in schema.get("properties", {}).items():
            if key in instance:
                errors.extend(validate_instance(instance[key], sub, f"{path}.{key}"))
    elif t == "array":
        items = schema.get("items")
        if items is not None:
            for i, element in enumerate(instance):
                errors.extend(validate_instance(element, items, f"{path}[{i}]"))
    return errors


@dataclass
class ParseStats:
    clamped: int = 0  # numeric values pulled back to the training range edge
    substituted: int = 0  # unparseable date/time strings replaced
    notes: list[str] = field(default_factory=list)


def _clock(minutes: float) -> str:
    return f"{int(minutes // 60):02d}:{int(minutes % 60):02d}"


class _RowBuilder:
    def __init__(self, spec: AnalyticsSpec, dataset: RelationalDataset, stats: ParseStats):
        self.spec = spec
        self.dataset = dataset
        self.stats = stats
        self.rows: dict[str, list[tuple[Cell, ...]]] = {t: [] for t in dataset.tables}
        self._serial: dict[str, int] = {}

    def _mint_key(self, entity_key: str, table: str) -> str:
        self._serial[table] = self._serial.get(table, 0) + 1
        return f"{entity_key}-{table}-{self._serial[table]}"

    def _numeric_cell(self, name: str, col, value) -> str:
        codec = self.spec.codec(name)
        v = float(value)
        if v < codec.lo:
            self.stats.clamped += 1
            self.stats.notes.append(f"{name}: {v} below training range, clamped")
            v = codec.lo
        elif v > codec.hi:
            self.stats.clamped += 1
            self.stats.notes.append(f"{name}: {v} above training range, clamped")
            v = codec.hi
        if col.kind == "numeric-integer":
            return str(int(round(v)))
        return repr(v)

    def _datetime_cell(self, name: str, value: str) -> str:
        codec = self.spec.codec(name)
        time_name = f"{name}#time"
        try:
            ordinal, minutes = parse_datetime_parts(value)
        except ValueError:
            self.stats.substituted += 1
            self.stats.notes.append(f"{name}: unparseable date {value!r}, substituted")
            cell = codec.render_value(0)
            if self.spec.has_column(time_name):
                tcodec = self.spec.codec(time_name)
                cell = f"{cell} {_clock(0 * tcodec.bin_minutes)}"
            return cell
        if ordinal < codec.lo or ordinal > codec.hi:
            self.stats.clamped += 1
            self.stats.notes.append(f"{name}: date {value!r} outside training range, clamped")
            ordinal = min(max(ordinal, codec.lo), codec.hi)
        day = dt.date.fromordinal(int(round(ordinal))).isoformat()
        if minutes:
            return f"{day} {_clock(minutes)}"
        return day

    def _time_cell(self, name: str, value: str) -> str:
        codec = self.spec.codec(name)
        try:
            parse_time_minutes(value)
        except ValueError:
            self.stats.substituted += 1
            self.stats.notes.append(f"{name}: unparseable time {value!r}, substituted")
            return codec.render_value(0)
        return value.strip()

    def build(self, table: str, obj: dict, entity_key: str, row_key: str, parent_key: Optional[str]):
        schema = self.dataset.tables[table].schema
        rel = None if table == self.dataset.main_table else self.dataset.relationship_for(table)
        cells: list[Cell] = []
        for col in schema.columns:
            if col.kind == "key":
                if rel is not None and col.name == rel.foreign_key:
                    cells.append(parent_key)
                else:
                    cells.append(row_key)
                continue
            name = f"{table}.{col.name}"
            if col.name not in obj:
                cells.append(None)  # optional field omitted = null
                continue
            value = obj[col.name]
            if col.kind == "categorical":
                cells.append(value)
            elif col.kind in ("numeric-continuous", "numeric-integer"):
                cells.append(self._numeric_cell(name, col, value))
            elif col.kind == "datetime":
                cells.append(self._datetime_cell(name, value))
            else:  # time-of-day
                cells.append(self._time_cell(name, value))
        self.rows[table].append(tuple(cells))
        for child_rel in self.dataset.children_of(table):
            for child_obj in obj.get(child_rel.child, []):
                child_key = self._mint_key(entity_key, child_rel.child)
                self.build(child_rel.child, child_obj, entity_key, child_key, row_key)


def parse_sample(
    text: str,
    schema: dict,
    spec: AnalyticsSpec,
    dataset: RelationalDataset,
    entity_key: str,
) -> tuple[dict[str, list[tuple[Cell, ...]]], ParseStats]:
    """One completion document -> rows per table, with fresh keys.

    ``dataset`` supplies only the table schemas and relationship tree; no
    rows are read from it. Raises ``SchemaViolation`` when the document is
    not JSON or does not conform; the caller decides whether to regenerate.
    """
    try:
        instance = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation([f"$: not valid JSON: {exc.msg}"])
    errors = validate_instance(instance, schema)
    if errors:
        raise SchemaViolation(errors)
    stats = ParseStats()
    builder = _RowBuilder(spec, dataset, stats)
    builder.build(dataset.main_table, instance, entity_key, entity_key, None)
    return builder.rows, stats
