"""Deterministic toy data generators used by tests and example scripts.

``generate_toy_dataset`` writes a small three-level hospital-flavored
relational dataset (person -> admission -> transfer) with correlated
columns, nullable cells, zero-child entities, and conspicuous key formats
(P00001, A00042, ...) so leak checks have something to catch.

``chain_columns`` produces three columns with a known A -> B -> C joint
distribution for convergence tests against analytic marginals.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .analytics import EncodedTable
from .discretize import storage_dtype
from .random_streams import substream

WARDS = ("Cardiology", "ER", "ICU", "Maternity", "Surgery")
UNITS = ("GeneralWard", "ICU", "Rehab", "StepDown")


def _clock(hour: int, minute: int) -> str:
    return f"{hour}:{minute:02d}"


def _sample_ward(rng: np.random.Generator, age: int, sex: str) -> str:
    if age >= 65:
        probs = [0.30, 0.15, 0.30, 0.0, 0.25]
    elif sex == "F" and 20 <= age <= 45:
        probs = [0.05, 0.30, 0.10, 0.35, 0.20]
    else:
        probs = [0.10, 0.40, 0.15, 0.0, 0.35]
    return WARDS[int(rng.choice(len(WARDS), p=probs))]


def generate_toy_dataset(out_dir, entities: int = 2000, seed: int = 7) -> Path:
    """Write CSVs plus config.json under ``out_dir``; return the config path."""
    rng = substream(seed, "toyset")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    person_rows = []
    admission_rows = []
    transfer_rows = []
    base_date = dt.date(2019, 1, 2)
    admission_serial = 0
    transfer_serial = 0
    for p in range(1, entities + 1):
        person_id = f"P{p:05d}"
        age = int(rng.integers(18, 95))
        sex = "M" if rng.random() < 0.52 else "F"
        person_rows.append([person_id, str(age), sex])

        n_admissions = int(rng.choice(4, p=[0.25, 0.40, 0.22, 0.13]))
        for _ in range(n_admissions):
            admission_serial += 1
            admission_id = f"A{admission_serial:05d}"
            ward = _sample_ward(rng, age, sex)
            day = base_date + dt.timedelta(days=int(rng.integers(0, 730)))
            hour, minute = int(rng.integers(0, 24)), int(rng.integers(0, 60))
            admit_date = f"{day.isoformat()} {hour:02d}:{minute:02d}"
            entry_time = None if rng.random() < 0.05 else _clock(
                int(rng.integers(0, 24)), int(rng.integers(0, 60))
            )
            mean_los = {"ICU": 2.2, "Cardiology": 1.8, "Surgery": 1.4, "ER": 0.4, "Maternity": 1.0}
            los = float(np.round(rng.lognormal(mean_los[ward], 0.5), 2))
            admission_rows.append(
                [admission_id, person_id, admit_date, ward, entry_time, str(los)]
            )

            max_transfers = 2 if ward == "ICU" else 1
            n_transfers = int(rng.integers(0, max_transfers + 1))
            for t in range(n_transfers):
                transfer_serial += 1
                unit = UNITS[int(rng.choice(len(UNITS), p=[0.4, 0.15, 0.2, 0.25]))]
                day_offset = int(rng.integers(0, max(2, int(los)) + 1))
                transfer_rows.append(
                    [f"T{transfer_serial:05d}", admission_id, unit, str(day_offset)]
                )

    def write(name: str, header: list[str], rows: list[list]):
        with open(out_dir / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow(["" if c is None else c for c in row])

    write("person", ["person_id", "age", "sex"], person_rows)
    write(
        "admission",
        ["admission_id", "person_id", "admit_date", "ward", "entry_time", "los_days"],
        admission_rows,
    )
    write("transfer", ["transfer_id", "admission_id", "unit", "day_offset"], transfer_rows)

    config = {
        "main_table": "person",
        "tables": {
            "person": {
                "path": "person.csv",
                "primary_key": "person_id",
                "columns": [
                    {"name": "person_id", "kind": "key"},
                    {"name": "age", "kind": "numeric-integer"},
                    {"name": "sex", "kind": "categorical"},
                ],
            },
            "admission": {
                "path": "admission.csv",
                "primary_key": "admission_id",
                "columns": [
                    {"name": "admission_id", "kind": "key"},
                    {"name": "person_id", "kind": "key"},
                    {"name": "admit_date", "kind": "datetime"},
                    {"name": "ward", "kind": "categorical"},
                    {"name": "entry_time", "kind": "time-of-day", "nullable": True},
                    {"name": "los_days", "kind": "numeric-continuous"},
                ],
            },
            "transfer": {
                "path": "transfer.csv",
                "primary_key": "transfer_id",
                "columns": [
                    {"name": "transfer_id", "kind": "key"},
                    {"name": "admission_id", "kind": "key"},
                    {"name": "unit", "kind": "categorical"},
                    {"name": "day_offset", "kind": "numeric-integer"},
                ],
            },
        },
        "relationships": [
            {
                "child": "admission",
                "parent": "person",
                "foreign_key": "person_id",
                "kind": "sequential",
                "order_by": "admit_date",
            },
            {
                "child": "transfer",
                "parent": "admission",
                "foreign_key": "admission_id",
                "kind": "sequential",
                "order_by": "day_offset",
            },
        ],
        "discretization": {
            "person.age": {"bin_count": 8},
            "admission.los_days": {"strategy": "quantile-bins", "bin_count": 10},
        },
    }
    config_path = out_dir / "config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return config_path


CHAIN_PA = np.array([0.4, 0.3, 0.2, 0.1])
CHAIN_PB_A = np.array(
    [
        [0.7, 0.2, 0.1],
        [0.2, 0.6, 0.2],
        [0.1, 0.3, 0.6],
        [0.3, 0.3, 0.4],
    ]
)
CHAIN_PC_B = np.array(
    [
        [0.5, 0.2, 0.1, 0.1, 0.1],
        [0.1, 0.4, 0.3, 0.1, 0.1],
        [0.05, 0.15, 0.2, 0.3, 0.3],
    ]
)


def chain_true_joint() -> np.ndarray:
    """Exact joint P(A, B, C) of the chain, shape (4, 3, 5)."""
    return CHAIN_PA[:, None, None] * CHAIN_PB_A[:, :, None] * CHAIN_PC_B[None, :, :]


def _draw_rows(rng: np.random.Generator, row_probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(row_probs, axis=1)
    u = rng.random(row_probs.shape[0])
    return (u[:, None] > cdf).sum(axis=1)


def chain_columns(n: int, seed: int = 0) -> np.ndarray:
    """n samples of the A -> B -> C chain; integer codes, shape (n, 3)."""
    rng = substream(seed, "chain")
    a = rng.choice(len(CHAIN_PA), size=n, p=CHAIN_PA)
    b = _draw_rows(rng, CHAIN_PB_A[a])
    c = _draw_rows(rng, CHAIN_PC_B[b])
    return np.stack([a, b, c], axis=1).astype(np.int64)


def encoded_from_codes(
    codes: np.ndarray, names: Sequence[str], domains: Sequence[int]
) -> EncodedTable:
    """Wrap a plain code matrix as an EncodedTable (for tests and examples)."""
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[1] != len(names) or len(names) != len(domains):
        raise ValueError("codes shape must be (rows, len(names)) with matching domains")
    columns = tuple(names)
    return EncodedTable(
        columns=columns,
        codes={
            name: codes[:, i].astype(storage_dtype(domains[i]))
            for i, name in enumerate(columns)
        },
        domain_sizes={name: int(domains[i]) for i, name in enumerate(columns)},
        unknown_counts={name: 0 for name in columns},
        n_rows=codes.shape[0],
    )
