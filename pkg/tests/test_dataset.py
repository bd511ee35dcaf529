"""Loading, validation, ordering, splitting, and serialization of
relational datasets."""

import json

import pytest

from relsynth.dataset import (
    ColumnSpec,
    Relationship,
    TableSchema,
    filter_entities,
    load_dataset,
    order_key,
    parse_datetime_parts,
    parse_time_minutes,
    save_dataset,
    split_holdout,
)
from relsynth.errors import (
    ConfigError,
    DanglingForeignKeyError,
    DataValidationError,
    RelationshipCycleError,
)


def write_dataset(tmp_path, tables, relationships, main_table="person", extra=None):
    """tables: {name: (primary_key, [(col, kind, nullable)], [rows])}."""
    cfg = {"main_table": main_table, "tables": {}, "relationships": relationships}
    for name, (pk, cols, rows) in tables.items():
        cfg["tables"][name] = {
            "path": f"{name}.csv",
            "primary_key": pk,
            "columns": [{"name": c, "kind": k, "nullable": n} for c, k, n in cols],
        }
        lines = [",".join(c for c, _, _ in cols)]
        lines += [",".join("" if v is None else str(v) for v in row) for row in rows]
        (tmp_path / f"{name}.csv").write_text("\n".join(lines) + "\n")
    if extra:
        cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


BASIC_TABLES = {
    "person": (
        "pid",
        [("pid", "key", False), ("age", "numeric-integer", False)],
        [("p1", 30), ("p2", 40)],
    ),
    "visit": (
        "vid",
        [("vid", "key", False), ("pid", "key", False), ("day", "numeric-integer", False)],
        [("v1", "p1", 5), ("v2", "p1", 2), ("v3", "p2", 9)],
    ),
}
BASIC_RELS = [
    {"child": "visit", "parent": "person", "foreign_key": "pid", "kind": "sequential", "order_by": "day"}
]


class TestColumnAndRelationshipSpecs:
    def test_key_columns_cannot_be_nullable(self):
        with pytest.raises(ConfigError):
            ColumnSpec("id", "key", nullable=True)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            ColumnSpec("x", "floatish")

    def test_sequential_requires_order_by(self):
        with pytest.raises(ConfigError):
            Relationship("visit", "person", "pid", "sequential")

    def test_duplicate_column_names_rejected(self):
        with pytest.raises(ConfigError):
            TableSchema("t", (ColumnSpec("a", "key"), ColumnSpec("a", "categorical")), "a")


class TestLoading:
    def test_load_and_reload_round_trip(self, tmp_path):
        path = write_dataset(tmp_path, BASIC_TABLES, BASIC_RELS)
        ds = load_dataset(path)
        out = tmp_path / "copy"
        save_dataset(ds, out)
        ds2 = load_dataset(out / "config.json")
        for name in ds.tables:
            assert ds.tables[name].rows == ds2.tables[name].rows

    def test_sequential_tables_sorted_by_order_column(self, tmp_path):
        path = write_dataset(tmp_path, BASIC_TABLES, BASIC_RELS)
        ds = load_dataset(path)
        assert ds.tables["visit"].column_values("day") == ["2", "5", "9"]

    def test_empty_cell_reads_as_none(self, tmp_path):
        tables = {
            "person": (
                "pid",
                [("pid", "key", False), ("note", "categorical", True)],
                [("p1", "a"), ("p2", None)],
            )
        }
        ds = load_dataset(write_dataset(tmp_path, tables, []))
        assert ds.tables["person"].cell(1, "note") is None

    def test_dangling_foreign_key(self, tmp_path):
        tables = dict(BASIC_TABLES)
        tables["visit"] = (
            "vid",
            [("vid", "key", False), ("pid", "key", False), ("day", "numeric-integer", False)],
            [("v1", "p9", 5)],
        )
        with pytest.raises(DanglingForeignKeyError):
            load_dataset(write_dataset(tmp_path, tables, BASIC_RELS))

    def test_duplicate_primary_key(self, tmp_path):
        tables = {
            "person": (
                "pid",
                [("pid", "key", False), ("age", "numeric-integer", False)],
                [("p1", 1), ("p1", 2)],
            )
        }
        with pytest.raises(DataValidationError):
            load_dataset(write_dataset(tmp_path, tables, []))

    def test_cycle_rejected(self, tmp_path):
        tables = dict(BASIC_TABLES)
        tables["extra"] = ("eid", [("eid", "key", False), ("vid", "key", False)], [])
        rels = BASIC_RELS + [
            {"child": "extra", "parent": "visit", "foreign_key": "vid", "kind": "associative"},
            {"child": "visit", "parent": "extra", "foreign_key": "vid", "kind": "associative"},
        ]
        with pytest.raises(RelationshipCycleError):
            load_dataset(write_dataset(tmp_path, tables, rels))

    def test_disconnected_table_rejected(self, tmp_path):
        tables = dict(BASIC_TABLES)
        tables["orphan"] = ("oid", [("oid", "key", False)], [])
        with pytest.raises(RelationshipCycleError):
            load_dataset(write_dataset(tmp_path, tables, BASIC_RELS))

    def test_non_integer_cell_rejected(self, tmp_path):
        tables = {
            "person": ("pid", [("pid", "key", False), ("age", "numeric-integer", False)], [("p1", "30.5")])
        }
        with pytest.raises(DataValidationError):
            load_dataset(write_dataset(tmp_path, tables, []))

    def test_null_in_non_nullable_rejected(self, tmp_path):
        tables = {
            "person": ("pid", [("pid", "key", False), ("age", "numeric-integer", False)], [("p1", None)])
        }
        with pytest.raises(DataValidationError):
            load_dataset(write_dataset(tmp_path, tables, []))

    def test_missing_order_by_column(self, tmp_path):
        rels = [{"child": "visit", "parent": "person", "foreign_key": "pid",
                 "kind": "sequential", "order_by": "nope"}]
        with pytest.raises(ConfigError):
            load_dataset(write_dataset(tmp_path, BASIC_TABLES, rels))

    def test_foreign_key_must_be_key_kind(self, tmp_path):
        tables = dict(BASIC_TABLES)
        tables["visit"] = (
            "vid",
            [("vid", "key", False), ("pid", "categorical", False), ("day", "numeric-integer", False)],
            [("v1", "p1", 5)],
        )
        with pytest.raises(ConfigError):
            load_dataset(write_dataset(tmp_path, tables, BASIC_RELS))

    def test_missing_config_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_dataset(tmp_path / "nope.json")


class TestIndexes:
    def test_parent_row_index_and_entities(self, tmp_path):
        ds = load_dataset(write_dataset(tmp_path, BASIC_TABLES, BASIC_RELS))
        # visits sorted by day: v2(p1,2), v1(p1,5), v3(p2,9)
        assert ds.entity_of_rows("visit") == ["p1", "p1", "p2"]
        assert [ds.tables["person"].cell(i, "pid") for i in ds.parent_row_index("visit")] == [
            "p1", "p1", "p2",
        ]

    def test_rows_by_parent_groups_in_order(self, tmp_path):
        ds = load_dataset(write_dataset(tmp_path, BASIC_TABLES, BASIC_RELS))
        groups = ds.rows_by_parent("visit")
        flat = [r for rows in groups.values() for r in rows]
        assert sorted(flat) == [0, 1, 2]
        for rows in groups.values():
            assert rows == sorted(rows)


class TestParsers:
    def test_time_minutes(self):
        assert parse_time_minutes("4:05") == 245
        assert parse_time_minutes("23:59:30") == pytest.approx(1439.5)
        with pytest.raises(ValueError):
            parse_time_minutes("25:00")

    def test_datetime_parts(self):
        day, minutes = parse_datetime_parts("2020-01-02 08:30")
        assert minutes == 510
        day2, m2 = parse_datetime_parts("2020-01-03")
        assert day2 == day + 1 and m2 == 0

    def test_order_key_nulls_first(self):
        col = ColumnSpec("x", "numeric-integer", nullable=True)
        keys = [order_key(col, c) for c in [None, "5", "2"]]
        assert sorted(keys) == [keys[0], keys[2], keys[1]]


class TestSplit:
    def test_split_fraction_and_determinism(self, toy_dataset):
        s1 = split_holdout(toy_dataset, 0.2, seed=1)
        s2 = split_holdout(toy_dataset, 0.2, seed=1)
        assert s1 == s2
        assert len(s1.holdout_entities) == round(0.2 * toy_dataset.entity_count)
        assert set(s1.train_entities) | set(s1.holdout_entities) == set(toy_dataset.entity_ids)
        assert not set(s1.train_entities) & set(s1.holdout_entities)

    def test_split_changes_with_seed(self, toy_dataset):
        s1 = split_holdout(toy_dataset, 0.2, seed=1)
        s2 = split_holdout(toy_dataset, 0.2, seed=2)
        assert s1.holdout_entities != s2.holdout_entities

    def test_split_preserves_main_table_order(self, toy_dataset):
        s = split_holdout(toy_dataset, 0.2, seed=1)
        ids = toy_dataset.entity_ids
        pos = {e: i for i, e in enumerate(ids)}
        assert list(s.train_entities) == sorted(s.train_entities, key=pos.get)

    def test_invalid_fraction(self, toy_dataset):
        with pytest.raises(ValueError):
            split_holdout(toy_dataset, 1.5, seed=0)

    def test_filter_entities_keeps_child_rows_consistent(self, toy_dataset):
        split = split_holdout(toy_dataset, 0.2, seed=1)
        train = filter_entities(toy_dataset, split.train_entities)
        assert set(train.entity_ids) == set(split.train_entities)
        for table in train.tables:
            assert set(train.entity_of_rows(table)) <= set(split.train_entities)
