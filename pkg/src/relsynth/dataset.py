"""Relational dataset loading, validation, entity split, and serialization.

A dataset is a tree of tables rooted at a main table. One row of the main
table plus all transitively referencing child rows is an *entity*, the unit
of splitting and of synthesis output. Cells are kept as raw strings (None
for null) so that serialize/reload round-trips are cell-identical; typed
views are parsed on demand.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from .errors import (
    ConfigError,
    DanglingForeignKeyError,
    DataValidationError,
    RelationshipCycleError,
)
from .random_streams import substream

COLUMN_KINDS = frozenset(
    {"categorical", "numeric-continuous", "numeric-integer", "datetime", "time-of-day", "key"}
)
RELATIONSHIP_KINDS = frozenset({"sequential", "associative", "independent"})

Cell = Optional[str]


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    nullable: bool = False

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise ConfigError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "key" and self.nullable:
            raise ConfigError(f"column {self.name!r}: key columns cannot be nullable")


@dataclass(frozen=True)
class Relationship:
    child: str
    parent: str
    foreign_key: str
    kind: str
    order_by: Optional[str] = None

    def __post_init__(self):
        if self.kind not in RELATIONSHIP_KINDS:
            raise ConfigError(f"relationship {self.child}->{self.parent}: unknown kind {self.kind!r}")
        if self.kind == "sequential" and not self.order_by:
            raise ConfigError(
                f"relationship {self.child}->{self.parent}: sequential requires order-by"
            )


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[ColumnSpec, ...]
    primary_key: str

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ConfigError(f"table {self.name!r}: duplicate column names")
        if self.primary_key not in names:
            raise ConfigError(f"table {self.name!r}: primary key {self.primary_key!r} not declared")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(f"{self.name}.{name}")

    def index_of(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(f"{self.name}.{name}")

    @property
    def data_columns(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.kind != "key")


@dataclass
class Table:
    schema: TableSchema
    rows: list[tuple[Cell, ...]]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column_values(self, name: str) -> list[Cell]:
        i = self.schema.index_of(name)
        return [r[i] for r in self.rows]

    def cell(self, row: int, column: str) -> Cell:
        return self.rows[row][self.schema.index_of(column)]


@dataclass(frozen=True)
class HoldoutSplit:
    train_entities: tuple[str, ...]
    holdout_entities: tuple[str, ...]
    fraction: float

    @property
    def train_set(self) -> frozenset:
        return frozenset(self.train_entities)

    @property
    def holdout_set(self) -> frozenset:
        return frozenset(self.holdout_entities)


@dataclass
class RelationalDataset:
    main_table: str
    tables: dict[str, Table]
    relationships: tuple[Relationship, ...]
    config: dict = field(default_factory=dict)
    # derived indexes, filled by _reindex()
    _parent_rows: dict[str, list[int]] = field(default_factory=dict, repr=False)
    _entity_of_row: dict[str, list[str]] = field(default_factory=dict, repr=False)

    @property
    def entity_count(self) -> int:
        return self.tables[self.main_table].n_rows

    @property
    def entity_ids(self) -> list[str]:
        main = self.tables[self.main_table]
        return [r[main.schema.index_of(main.schema.primary_key)] for r in main.rows]

    def children_of(self, table: str) -> list[Relationship]:
        return [r for r in self.relationships if r.parent == table]

    def relationship_for(self, child_table: str) -> Relationship:
        for r in self.relationships:
            if r.child == child_table:
                return r
        raise KeyError(child_table)

    def parent_row_index(self, child_table: str) -> list[int]:
        """For each row of a child table, the row index of its parent row."""
        return self._parent_rows[child_table]

    def entity_of_rows(self, table: str) -> list[str]:
        """For each row of a table, the entity id it transitively belongs to."""
        return self._entity_of_row[table]

    def rows_by_parent(self, child_table: str) -> dict[int, list[int]]:
        """Child row indexes grouped by parent row index, in table order.

        Sequential child tables are sorted at load, so each group is already
        in order-by order.
        """
        groups: dict[int, list[int]] = {}
        for child_idx, parent_idx in enumerate(self._parent_rows[child_table]):
            groups.setdefault(parent_idx, []).append(child_idx)
        return groups

    def _reindex(self) -> None:
        main = self.tables[self.main_table]
        pk_idx = main.schema.index_of(main.schema.primary_key)
        self._entity_of_row = {self.main_table: [r[pk_idx] for r in main.rows]}
        self._parent_rows = {}
        pending = [self.main_table]
        while pending:
            parent_name = pending.pop(0)
            parent = self.tables[parent_name]
            parent_pk = parent.schema.index_of(parent.schema.primary_key)
            pk_to_row = {}
            for i, row in enumerate(parent.rows):
                key = row[parent_pk]
                if key in pk_to_row:
                    raise DataValidationError(
                        f"duplicate primary key {parent_name}.{parent.schema.primary_key} = {key!r}"
                    )
                pk_to_row[key] = i
            for rel in self.children_of(parent_name):
                child = self.tables[rel.child]
                fk_idx = child.schema.index_of(rel.foreign_key)
                parent_rows = []
                for row in child.rows:
                    fk = row[fk_idx]
                    if fk is None or fk not in pk_to_row:
                        raise DanglingForeignKeyError(rel.child, rel.foreign_key, str(fk))
                    parent_rows.append(pk_to_row[fk])
                self._parent_rows[rel.child] = parent_rows
                parent_entities = self._entity_of_row[parent_name]
                self._entity_of_row[rel.child] = [parent_entities[i] for i in parent_rows]
                pending.append(rel.child)


# ----------------------------------------------------------------- typed cell parsing

def parse_numeric(cell: str) -> float:
    return float(cell)


def parse_time_minutes(cell: str) -> float:
    """Clock string 'H:MM' or 'HH:MM[:SS]' to minutes since midnight."""
    parts = cell.strip().split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"not a clock time: {cell!r}")
    hour = int(parts[0])
    minute = int(parts[1])
    second = float(parts[2]) if len(parts) == 3 else 0.0
    if not (0 <= hour < 24 and 0 <= minute < 60 and 0 <= second < 60):
        raise ValueError(f"clock time out of range: {cell!r}")
    return hour * 60 + minute + second / 60.0


def parse_datetime_parts(cell: str) -> tuple[int, float]:
    """ISO date or datetime to (day ordinal, minutes since midnight)."""
    value = dt.datetime.fromisoformat(cell.strip())
    minutes = value.hour * 60 + value.minute + value.second / 60.0
    return value.date().toordinal(), minutes


def _validate_cell(table: str, col: ColumnSpec, cell: Cell) -> None:
    if cell is None:
        if col.nullable:
            return
        raise DataValidationError(f"null in non-nullable column {table}.{col.name}")
    try:
        if col.kind in ("numeric-continuous", "numeric-integer"):
            value = parse_numeric(cell)
            if col.kind == "numeric-integer" and not float(value).is_integer():
                raise ValueError("not an integer")
        elif col.kind == "datetime":
            parse_datetime_parts(cell)
        elif col.kind == "time-of-day":
            parse_time_minutes(cell)
    except ValueError as exc:
        raise DataValidationError(
            f"cell {cell!r} in {table}.{col.name} is not a valid {col.kind}: {exc}"
        ) from None


def order_key(col: ColumnSpec, cell: Cell):
    """Sort key for an order-by column; nulls first, then typed order."""
    if cell is None:
        return (0, 0.0, "")
    if col.kind in ("numeric-continuous", "numeric-integer"):
        return (1, parse_numeric(cell), "")
    if col.kind == "datetime":
        day, minutes = parse_datetime_parts(cell)
        return (1, day * 1440.0 + minutes, "")
    if col.kind == "time-of-day":
        return (1, parse_time_minutes(cell), "")
    return (1, 0.0, cell)


# ----------------------------------------------------------------- config + csv IO

def _parse_config(config: dict, base_dir: Path) -> tuple[str, dict[str, TableSchema], dict[str, Path], tuple[Relationship, ...]]:
    try:
        main_table = config["main_table"]
        tables_cfg = config["tables"]
        rels_cfg = config.get("relationships", [])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"dataset config missing required field: {exc}") from None
    if main_table not in tables_cfg:
        raise ConfigError(f"main table {main_table!r} not among declared tables")

    schemas: dict[str, TableSchema] = {}
    paths: dict[str, Path] = {}
    for name, tcfg in tables_cfg.items():
        try:
            columns = tuple(
                ColumnSpec(c["name"], c["kind"], bool(c.get("nullable", False)))
                for c in tcfg["columns"]
            )
            schemas[name] = TableSchema(name, columns, tcfg["primary_key"])
            paths[name] = base_dir / tcfg["path"]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"table {name!r}: malformed config ({exc})") from None

    relationships = tuple(
        Relationship(
            child=r["child"],
            parent=r["parent"],
            foreign_key=r["foreign_key"],
            kind=r["kind"],
            order_by=r.get("order_by"),
        )
        for r in rels_cfg
    )
    return main_table, schemas, paths, relationships


def _check_tree(main_table: str, tables: Iterable[str], relationships: tuple[Relationship, ...]) -> None:
    names = set(tables)
    child_counts: dict[str, int] = {}
    for rel in relationships:
        if rel.child not in names or rel.parent not in names:
            raise ConfigError(f"relationship {rel.child}->{rel.parent}: unknown table")
        child_counts[rel.child] = child_counts.get(rel.child, 0) + 1
    if child_counts.get(main_table):
        raise RelationshipCycleError(f"main table {main_table!r} appears as a child")
    for name, count in child_counts.items():
        if count > 1:
            raise RelationshipCycleError(f"table {name!r} has {count} parents")
    parent_of = {rel.child: rel.parent for rel in relationships}
    for name in names:
        if name == main_table:
            continue
        if name not in parent_of:
            raise RelationshipCycleError(f"table {name!r} is not connected to the main table")
        seen = {name}
        node = name
        while node != main_table:
            node = parent_of[node]
            if node in seen:
                raise RelationshipCycleError(f"cycle through table {node!r}")
            seen.add(node)


def _read_csv(path: Path, schema: TableSchema) -> list[tuple[Cell, ...]]:
    if not path.exists():
        raise ConfigError(f"missing table file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        declared = [c.name for c in schema.columns]
        if set(header) != set(declared):
            raise DataValidationError(
                f"{path}: header {header} does not match declared columns {declared}"
            )
        order = [header.index(name) for name in declared]
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise DataValidationError(f"{path}:{lineno}: expected {len(header)} cells")
            cells = tuple(raw[i] if raw[i] != "" else None for i in order)
            rows.append(cells)
    return rows


def load_dataset(config_path) -> RelationalDataset:
    """Load and fully validate a relational dataset from its config file.

    Validation covers cell types, null policy, primary key uniqueness,
    foreign key resolution, and the tree shape of the relationship graph.
    Sequential child tables come back sorted by their order-by column.
    """
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"missing dataset config: {config_path}")
    try:
        config = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: invalid JSON ({exc})") from None

    main_table, schemas, paths, relationships = _parse_config(config, config_path.parent)
    _check_tree(main_table, schemas, relationships)
    for rel in relationships:
        child_schema = schemas[rel.child]
        if child_schema.column(rel.foreign_key).kind != "key":
            raise ConfigError(
                f"foreign key {rel.child}.{rel.foreign_key} must be declared with kind 'key'"
            )
        if rel.order_by is not None:
            try:
                child_schema.column(rel.order_by)
            except KeyError:
                raise ConfigError(
                    f"order-by column {rel.child}.{rel.order_by} is not declared"
                ) from None
    tables: dict[str, Table] = {}
    for name, schema in schemas.items():
        rows = _read_csv(paths[name], schema)
        for row in rows:
            for col, cell in zip(schema.columns, row):
                _validate_cell(name, col, cell)
        tables[name] = Table(schema, rows)

    for rel in relationships:
        if rel.kind == "sequential":
            table = tables[rel.child]
            col = table.schema.column(rel.order_by)
            idx = table.schema.index_of(rel.order_by)
            table.rows = sorted(table.rows, key=lambda r: order_key(col, r[idx]))

    dataset = RelationalDataset(main_table, tables, relationships, config=config)
    dataset._reindex()
    return dataset


def save_dataset(dataset: RelationalDataset, out_dir) -> Path:
    """Write the dataset back out as one CSV per table plus a config file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables_cfg = {}
    for name, table in dataset.tables.items():
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([c.name for c in table.schema.columns])
            for row in table.rows:
                writer.writerow(["" if cell is None else cell for cell in row])
        tables_cfg[name] = {
            "path": f"{name}.csv",
            "primary_key": table.schema.primary_key,
            "columns": [
                {"name": c.name, "kind": c.kind, "nullable": c.nullable}
                for c in table.schema.columns
            ],
        }
    config = {
        "main_table": dataset.main_table,
        "tables": tables_cfg,
        "relationships": [
            {
                "child": r.child,
                "parent": r.parent,
                "foreign_key": r.foreign_key,
                "kind": r.kind,
                **({"order_by": r.order_by} if r.order_by else {}),
            }
            for r in dataset.relationships
        ],
    }
    if "discretization" in dataset.config:
        config["discretization"] = dataset.config["discretization"]
    config_path = out_dir / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return config_path


def split_holdout(dataset: RelationalDataset, fraction: float, seed: int) -> HoldoutSplit:
    """Entity-level split: each child row follows its entity's partition."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"holdout fraction must be in (0, 1), got {fraction}")
    ids = dataset.entity_ids
    n_holdout = int(round(fraction * len(ids)))
    rng = substream(seed, "split")
    chosen = rng.choice(len(ids), size=n_holdout, replace=False)
    holdout_pos = set(int(i) for i in chosen)
    train = tuple(e for i, e in enumerate(ids) if i not in holdout_pos)
    holdout = tuple(e for i, e in enumerate(ids) if i in holdout_pos)
    return HoldoutSplit(train, holdout, fraction)


def filter_entities(dataset: RelationalDataset, keep: Iterable[str]) -> RelationalDataset:
    """Sub-dataset containing only the given entities (and their child rows)."""
    keep_set = set(keep)
    tables = {}
    for name, table in dataset.tables.items():
        entity_of = dataset.entity_of_rows(name)
        rows = [row for row, ent in zip(table.rows, entity_of) if ent in keep_set]
        tables[name] = Table(table.schema, rows)
    sub = replace(dataset, tables=tables, _parent_rows={}, _entity_of_row={})
    sub._reindex()
    return sub
