"""Flattened per-entity analytics view.

Each entity becomes one encoded row. Columns are collected depth-first from
the main table: the main table's data columns, then for each child table its
data columns (taken from one *selected* row), a child-row count, and its own
children transitively under that selected row. The selected row is the first
row by the relationship's order-by column for sequential tables, and the
lowest-index row otherwise. Entities with no child rows get null codes for
that child's columns and a count of zero.

Datetime columns expand to a date column plus a time-of-day column; the time
column is only present when some training value has a time component.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Cell, ColumnSpec, RelationalDataset, parse_datetime_parts
from .discretize import (
    DEFAULT_BIN_COUNT,
    DEFAULT_TIME_BIN_COUNT,
    ColumnCodec,
    codec_from_dict,
    fit_categorical,
    fit_count,
    fit_datetime,
    fit_numeric,
    fit_time,
)
from .errors import ConfigError, DataValidationError

_ALLOWED_STRATEGY = {
    "categorical": {"identity-categorical"},
    "numeric-continuous": {"equal-width-bins", "quantile-bins"},
    "numeric-integer": {"equal-width-bins", "quantile-bins"},
    "datetime": {"datetime-component"},
    "time-of-day": {"datetime-component"},
}


@dataclass(frozen=True)
class AnalyticsColumn:
    name: str  # e.g. "admission.ward", "admission.admit_date#time", "admission#count"
    table: str
    role: str  # "data" or "count"
    source: Optional[str]  # source column name for data columns
    part: str  # "value" or "time"
    display: str  # name used in prompt text
    codec: ColumnCodec

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "table": self.table,
            "role": self.role,
            "source": self.source,
            "part": self.part,
            "display": self.display,
            "codec": self.codec.to_dict(),
        }


@dataclass
class EncodedTable:
    """Column-major encoded analytics rows (one row per entity)."""

    columns: tuple[str, ...]
    codes: dict[str, np.ndarray]
    domain_sizes: dict[str, int]
    unknown_counts: dict[str, int]
    n_rows: int

    def matrix(self) -> np.ndarray:
        if not self.columns:
            return np.zeros((self.n_rows, 0), dtype=np.int64)
        return np.stack([self.codes[c].astype(np.int64) for c in self.columns], axis=1)


@dataclass
class AnalyticsSpec:
    main_table: str
    columns: tuple[AnalyticsColumn, ...]

    def __post_init__(self):
        self._by_name = {c.name: c for c in self.columns}

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> AnalyticsColumn:
        return self._by_name[name]

    def has_column(self, name: str) -> bool:
        return name in self._by_name

    def codec(self, name: str) -> ColumnCodec:
        return self._by_name[name].codec

    def columns_for_table(self, table: str) -> list[AnalyticsColumn]:
        return [c for c in self.columns if c.table == table]

    def to_dict(self) -> dict:
        payload = {
            "main_table": self.main_table,
            "columns": [c.to_dict() for c in self.columns],
        }
        payload["spec_hash"] = _hash_payload(payload)
        return payload

    @property
    def spec_hash(self) -> str:
        payload = {
            "main_table": self.main_table,
            "columns": [c.to_dict() for c in self.columns],
        }
        return _hash_payload(payload)

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyticsSpec":
        columns = tuple(
            AnalyticsColumn(
                name=c["name"],
                table=c["table"],
                role=c["role"],
                source=c["source"],
                part=c["part"],
                display=c["display"],
                codec=codec_from_dict(c["codec"]),
            )
            for c in d["columns"]
        )
        return cls(main_table=d["main_table"], columns=columns)


def _hash_payload(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ----------------------------------------------------------------- flattening

@dataclass
class _RawBlock:
    role: str  # "data" or "count"
    table: str
    column: Optional[ColumnSpec]
    cells: list  # data: list[Cell]; count: list[int]


def _selected_rows(
    dataset: RelationalDataset, child_table: str, parent_rows: Sequence[Optional[int]]
) -> tuple[list[Optional[int]], list[int]]:
    groups = dataset.rows_by_parent(child_table)
    selected: list[Optional[int]] = []
    counts: list[int] = []
    for p in parent_rows:
        rows = groups.get(p, []) if p is not None else []
        selected.append(rows[0] if rows else None)
        counts.append(len(rows))
    return selected, counts


def _emit_blocks(
    dataset: RelationalDataset,
    table: str,
    rows: Sequence[Optional[int]],
    count_block: Optional[_RawBlock],
    out: list[_RawBlock],
) -> None:
    tbl = dataset.tables[table]
    for col in tbl.schema.data_columns:
        idx = tbl.schema.index_of(col.name)
        cells = [tbl.rows[i][idx] if i is not None else None for i in rows]
        out.append(_RawBlock("data", table, col, cells))
    if count_block is not None:
        out.append(count_block)
    for rel in dataset.children_of(table):
        selected, counts = _selected_rows(dataset, rel.child, rows)
        _emit_blocks(
            dataset,
            rel.child,
            selected,
            _RawBlock("count", rel.child, None, counts),
            out,
        )


def flatten_raw(dataset: RelationalDataset) -> list[_RawBlock]:
    main_rows = list(range(dataset.tables[dataset.main_table].n_rows))
    out: list[_RawBlock] = []
    _emit_blocks(dataset, dataset.main_table, main_rows, None, out)
    return out


# ----------------------------------------------------------------- fitting

def _override_for(overrides: dict, table: str, column: str) -> dict:
    return overrides.get(f"{table}.{column}", {})


def _display_names(entries: list[tuple[str, str, str]]) -> dict[str, str]:
    """Map analytics name -> display name.

    ``entries`` holds (analytics_name, table, bare_name) for data columns;
    the bare name is used alone unless two tables share it.
    """
    bare_counts: dict[str, int] = {}
    for _, _, bare in entries:
        bare_counts[bare] = bare_counts.get(bare, 0) + 1
    displays = {}
    for name, table, bare in entries:
        displays[name] = bare if bare_counts[bare] == 1 else f"{table} {bare}"
    return displays


def build_analytics_spec(
    train_dataset: RelationalDataset, overrides: Optional[dict] = None
) -> AnalyticsSpec:
    """Fit all column codecs from training entities and fix the column order."""
    if overrides is None:
        overrides = train_dataset.config.get("discretization", {})
    known = {f"{t}.{c.name}" for t, tbl in train_dataset.tables.items() for c in tbl.schema.columns}
    for key in overrides:
        if key not in known:
            raise ConfigError(f"discretization override for unknown column {key!r}")

    blocks = flatten_raw(train_dataset)
    staged: list[dict] = []  # name/table/role/source/part/codec, display filled later
    for block in blocks:
        if block.role == "count":
            codec = fit_count(f"{block.table}#count", block.cells)
            staged.append(
                dict(
                    name=f"{block.table}#count",
                    table=block.table,
                    role="count",
                    source=None,
                    part="value",
                    codec=codec,
                )
            )
            continue
        col = block.column
        name = f"{block.table}.{col.name}"
        over = _override_for(overrides, block.table, col.name)
        strategy = over.get("strategy")
        if strategy is not None and strategy not in _ALLOWED_STRATEGY[col.kind]:
            raise ConfigError(
                f"strategy {strategy!r} is not valid for {col.kind} column {name}"
            )
        nullable = col.nullable or block.table != train_dataset.main_table
        bin_count = int(over.get("bin_count", DEFAULT_BIN_COUNT))
        # fit on every training row of the table, not only the selected rows,
        # so the domain also covers child rows beyond the first
        fit_cells = train_dataset.tables[block.table].column_values(col.name)
        if col.kind == "categorical":
            codec = fit_categorical(name, fit_cells, nullable)
            parts = [("value", codec)]
        elif col.kind in ("numeric-continuous", "numeric-integer"):
            codec = fit_numeric(
                name,
                fit_cells,
                nullable,
                integer=col.kind == "numeric-integer",
                strategy=strategy or "equal-width-bins",
                bin_count=bin_count,
            )
            parts = [("value", codec)]
        elif col.kind == "datetime":
            time_bins = int(over.get("time_bin_count", DEFAULT_TIME_BIN_COUNT))
            date_codec, time_codec = fit_datetime(
                name, fit_cells, nullable, bin_count=bin_count, time_bin_count=time_bins
            )
            parts = [("value", date_codec)]
            if time_codec is not None:
                parts.append(("time", time_codec))
        elif col.kind == "time-of-day":
            time_bins = int(over.get("bin_count", DEFAULT_TIME_BIN_COUNT))
            codec = fit_time(name, fit_cells, nullable, bin_count=time_bins)
            parts = [("value", codec)]
        else:  # pragma: no cover - kinds are validated at load
            raise ConfigError(f"column {name}: kind {col.kind} cannot be encoded")
        for part, codec in parts:
            staged.append(
                dict(
                    name=name if part == "value" else f"{name}#time",
                    table=block.table,
                    role="data",
                    source=col.name,
                    part=part,
                    codec=codec,
                )
            )

    display_entries = []
    for s in staged:
        if s["role"] == "data":
            bare = s["source"] if s["part"] == "value" else f"{s['source']} time"
            display_entries.append((s["name"], s["table"], bare))
    displays = _display_names(display_entries)
    columns = tuple(
        AnalyticsColumn(
            name=s["name"],
            table=s["table"],
            role=s["role"],
            source=s["source"],
            part=s["part"],
            display=displays.get(s["name"], f"{s['table']} count"),
            codec=s["codec"],
        )
        for s in staged
    )
    return AnalyticsSpec(main_table=train_dataset.main_table, columns=columns)


# ----------------------------------------------------------------- encoding

def _encode_block_part(codec: ColumnCodec, part: str, cells: list) -> np.ndarray:
    if part == "time":
        codes = []
        for cell in cells:
            if cell is None:
                if codec.null_code is None:
                    raise DataValidationError(f"{codec.column}: unexpected null")
                codes.append(codec.null_code)
            else:
                codes.append(codec.encode_minutes(parse_datetime_parts(cell)[1]))
        return np.array(codes, dtype=codec.dtype)
    return codec.encode_column(cells)


def encode_table_rows(
    dataset: RelationalDataset, spec: AnalyticsSpec, table: str
) -> dict[str, np.ndarray]:
    """Codes for every row of one table, column by column.

    Unlike the flattened entity view this covers all child rows, so it is
    the encoding used for row-level statistics. Datetime columns yield the
    date column and, when fitted, the companion time column.
    """
    tbl = dataset.tables[table]
    out: dict[str, np.ndarray] = {}
    for col in tbl.schema.data_columns:
        name = f"{table}.{col.name}"
        codec = spec.codec(name)
        cells = tbl.column_values(col.name)
        out[name] = codec.encode_column(cells)
        time_name = f"{name}#time"
        if col.kind == "datetime" and spec.has_column(time_name):
            out[time_name] = _encode_block_part(spec.codec(time_name), "time", cells)
    return out


def encode_with_spec(dataset: RelationalDataset, spec: AnalyticsSpec) -> EncodedTable:
    """Encode any structurally matching dataset under a fitted spec."""
    blocks = flatten_raw(dataset)
    expected: list[tuple[str, _RawBlock, str]] = []  # (column name, block, part)
    for block in blocks:
        if block.role == "count":
            expected.append((f"{block.table}#count", block, "value"))
            continue
        base = f"{block.table}.{block.column.name}"
        expected.append((base, block, "value"))
        if block.column.kind == "datetime" and spec.has_column(f"{base}#time"):
            expected.append((f"{base}#time", block, "time"))
    names = [n for n, _, _ in expected]
    if names != list(spec.column_names):
        raise DataValidationError(
            "dataset does not match the fitted analytics layout: "
            f"expected columns {list(spec.column_names)}, got {names}"
        )

    codes: dict[str, np.ndarray] = {}
    unknown_counts: dict[str, int] = {}
    for name, block, part in expected:
        codec = spec.codec(name)
        if block.role == "count":
            arr = np.array([codec.encode_count(c) for c in block.cells], dtype=codec.dtype)
        else:
            arr = _encode_block_part(codec, part, block.cells)
        codes[name] = arr
        unknown_counts[name] = int(np.count_nonzero(arr == codec.unknown_code))
    n_rows = dataset.tables[dataset.main_table].n_rows
    return EncodedTable(
        columns=spec.column_names,
        codes=codes,
        domain_sizes={c.name: c.codec.domain_size for c in spec.columns},
        unknown_counts=unknown_counts,
        n_rows=n_rows,
    )
