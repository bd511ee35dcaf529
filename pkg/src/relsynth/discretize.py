"""Per-column discretization codecs.

Every analytics column is encoded to a small integer domain:

* codes ``0 .. domain_size-1`` are in-domain values;
* when a column can be null (declared nullable, or belonging to a child
  table where entities may have zero rows), the last in-domain code is the
  null code;
* ``unknown_code == domain_size`` is an out-of-domain sentinel used for
  categorical values never seen in training. It is never sampled by the
  network; evaluation histograms reserve an extra bucket for it.

Storage width is 8 bits when the domain size is at most 256, 16 bits up to
65536, and 32 bits beyond; the backing dtype is upcast one step in the rare
case the sentinel itself would not fit.
"""

from __future__ import annotations

import bisect
import datetime as dt
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Cell, parse_datetime_parts, parse_numeric, parse_time_minutes
from .errors import ConfigError, DataValidationError

DEFAULT_BIN_COUNT = 20
DEFAULT_TIME_BIN_COUNT = 24
IDENTITY_COUNT_LIMIT = 20

STRATEGIES = frozenset(
    {"identity-categorical", "equal-width-bins", "quantile-bins", "datetime-component"}
)

NULL_LABEL = "null"
UNKNOWN_LABEL = "unknown"
RANGE_DASH = "–"  # en dash between bin endpoints


def storage_width(domain_size: int) -> int:
    if domain_size <= 256:
        return 8
    if domain_size <= 65536:
        return 16
    return 32


def storage_dtype(domain_size: int) -> np.dtype:
    # must also hold the out-of-domain sentinel == domain_size
    if domain_size <= 255:
        return np.dtype(np.uint8)
    if domain_size <= 65535:
        return np.dtype(np.uint16)
    return np.dtype(np.uint32)


def _fmt(x: float) -> str:
    return str(round(float(x), 6))


def _range_label(lo: float, hi: float, fmt=_fmt) -> str:
    if fmt(lo) == fmt(hi):
        return fmt(lo)
    return f"{fmt(lo)}{RANGE_DASH}{fmt(hi)}"


def equal_width_edges(lo: float, hi: float, bins: int) -> list[float]:
    """Inner edges of ``bins`` equal-width bins over [lo, hi]."""
    return [lo + i * (hi - lo) / bins for i in range(1, bins)]


def quantile_edges(values: Sequence[float], bins: int) -> list[float]:
    """Inner edges at the 1/bins .. (bins-1)/bins quantiles, deduplicated."""
    qs = [i / bins for i in range(1, bins)]
    raw = np.quantile(np.asarray(values, dtype=float), qs)
    edges: list[float] = []
    for e in raw:
        e = float(e)
        if not edges or e > edges[-1]:
            edges.append(e)
    return edges


class ColumnCodec:
    """Common interface: encode raw cells to codes and back to labels/values."""

    column: str
    kind: str
    nullable: bool

    @property
    def domain_size(self) -> int:
        raise NotImplementedError

    @property
    def base_size(self) -> int:
        """In-domain codes that are actual values (excludes the null code)."""
        return self.domain_size - (1 if self.nullable else 0)

    @property
    def null_code(self) -> Optional[int]:
        return self.domain_size - 1 if self.nullable else None

    @property
    def unknown_code(self) -> int:
        return self.domain_size

    @property
    def width(self) -> int:
        return storage_width(self.domain_size)

    @property
    def dtype(self) -> np.dtype:
        return storage_dtype(self.domain_size)

    def encode_cell(self, cell: Cell) -> int:
        raise NotImplementedError

    def encode_column(self, cells: Sequence[Cell]) -> np.ndarray:
        return np.array([self.encode_cell(c) for c in cells], dtype=self.dtype)

    def decode_label(self, code: int) -> str:
        raise NotImplementedError

    def render_value(self, code: int):
        """A concrete value representative of the code, for JSON output."""
        raise NotImplementedError

    def _shared_label(self, code: int) -> Optional[str]:
        if self.nullable and code == self.null_code:
            return NULL_LABEL
        if code == self.unknown_code:
            return UNKNOWN_LABEL
        if not 0 <= code < self.domain_size:
            raise ValueError(f"{self.column}: code {code} out of range")
        return None

    def _check_value_code(self, code: int) -> None:
        if self.nullable and code == self.null_code:
            raise ValueError(f"{self.column}: null code has no concrete value")
        if not 0 <= code < self.base_size:
            raise ValueError(f"{self.column}: code {code} out of range")

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass
class CategoricalCodec(ColumnCodec):
    column: str
    categories: tuple[str, ...]
    nullable: bool
    kind: str = "categorical"

    @property
    def domain_size(self) -> int:
        return len(self.categories) + (1 if self.nullable else 0)

    def encode_category(self, value: str) -> int:
        try:
            return self.categories.index(value)
        except ValueError:
            return self.unknown_code

    def encode_cell(self, cell: Cell) -> int:
        if cell is None:
            if not self.nullable:
                raise DataValidationError(f"{self.column}: unexpected null")
            return self.null_code
        return self.encode_category(cell)

    def decode_label(self, code: int) -> str:
        shared = self._shared_label(code)
        return shared if shared is not None else self.categories[code]

    def render_value(self, code: int) -> str:
        self._check_value_code(code)
        return self.categories[code]

    def to_dict(self) -> dict:
        return {
            "codec": "categorical",
            "column": self.column,
            "nullable": self.nullable,
            "categories": list(self.categories),
        }


@dataclass
class NumericCodec(ColumnCodec):
    """Numeric column binned into intervals.

    ``edges`` are the inner edges; bin i covers (edges[i-1], edges[i]], with
    values at or below the first edge in bin 0 and values above the last
    edge in the final bin. ``lo``/``hi`` record the training value range.
    """

    column: str
    edges: tuple[float, ...]
    lo: float
    hi: float
    integer: bool
    nullable: bool
    strategy: str = "equal-width-bins"

    @property
    def kind(self) -> str:
        return "numeric-integer" if self.integer else "numeric-continuous"

    @property
    def bin_count(self) -> int:
        return len(self.edges) + 1

    @property
    def domain_size(self) -> int:
        return self.bin_count + (1 if self.nullable else 0)

    def encode_number(self, value: float) -> int:
        return bisect.bisect_left(self.edges, float(value))

    def encode_cell(self, cell: Cell) -> int:
        if cell is None:
            if not self.nullable:
                raise DataValidationError(f"{self.column}: unexpected null")
            return self.null_code
        return self.encode_number(parse_numeric(cell))

    def bin_bounds(self, code: int) -> tuple[float, float]:
        lo = self.lo if code == 0 else self.edges[code - 1]
        hi = self.hi if code == self.bin_count - 1 else self.edges[code]
        return lo, hi

    def decode_label(self, code: int) -> str:
        shared = self._shared_label(code)
        if shared is not None:
            return shared
        return _range_label(*self.bin_bounds(code))

    def render_value(self, code: int):
        self._check_value_code(code)
        lo, hi = self.bin_bounds(code)
        mid = (lo + hi) / 2.0
        if not self.integer:
            return round(mid, 6)
        value = int(round(mid))
        if self.encode_number(value) != code:
            # rounding pushed the midpoint across an edge; step back inside
            for candidate in (value - 1, value + 1):
                if self.encode_number(candidate) == code:
                    return candidate
        return value

    def to_dict(self) -> dict:
        return {
            "codec": "numeric",
            "column": self.column,
            "nullable": self.nullable,
            "integer": self.integer,
            "strategy": self.strategy,
            "edges": list(self.edges),
            "lo": self.lo,
            "hi": self.hi,
        }


@dataclass
class DateCodec(ColumnCodec):
    """Date component of a datetime column, binned over day ordinals."""

    column: str
    edges: tuple[float, ...]
    lo: float
    hi: float
    nullable: bool
    kind: str = "datetime"

    @property
    def bin_count(self) -> int:
        return len(self.edges) + 1

    @property
    def domain_size(self) -> int:
        return self.bin_count + (1 if self.nullable else 0)

    def encode_ordinal(self, ordinal: float) -> int:
        return bisect.bisect_left(self.edges, float(ordinal))

    def encode_cell(self, cell: Cell) -> int:
        if cell is None:
            if not self.nullable:
                raise DataValidationError(f"{self.column}: unexpected null")
            return self.null_code
        ordinal, _ = parse_datetime_parts(cell)
        return self.encode_ordinal(ordinal)

    def bin_bounds(self, code: int) -> tuple[float, float]:
        lo = self.lo if code == 0 else self.edges[code - 1]
        hi = self.hi if code == self.bin_count - 1 else self.edges[code]
        return lo, hi

    @staticmethod
    def _iso(ordinal: float) -> str:
        return dt.date.fromordinal(int(round(ordinal))).isoformat()

    def decode_label(self, code: int) -> str:
        shared = self._shared_label(code)
        if shared is not None:
            return shared
        lo, hi = self.bin_bounds(code)
        return _range_label(lo, hi, fmt=self._iso)

    def render_value(self, code: int) -> str:
        self._check_value_code(code)
        lo, hi = self.bin_bounds(code)
        return self._iso((lo + hi) / 2.0)

    def to_dict(self) -> dict:
        return {
            "codec": "date",
            "column": self.column,
            "nullable": self.nullable,
            "edges": list(self.edges),
            "lo": self.lo,
            "hi": self.hi,
        }


@dataclass
class TimeCodec(ColumnCodec):
    """Time of day in equal clock bins (default: 24 one-hour bins)."""

    column: str
    bin_count: int
    nullable: bool
    kind: str = "time-of-day"

    @property
    def domain_size(self) -> int:
        return self.bin_count + (1 if self.nullable else 0)

    @property
    def bin_minutes(self) -> float:
        return 1440.0 / self.bin_count

    def encode_minutes(self, minutes: float) -> int:
        return min(int(minutes // self.bin_minutes), self.bin_count - 1)

    def encode_cell(self, cell: Cell) -> int:
        if cell is None:
            if not self.nullable:
                raise DataValidationError(f"{self.column}: unexpected null")
            return self.null_code
        return self.encode_minutes(parse_time_minutes(cell))

    def _start_clock(self, code: int) -> str:
        start = code * self.bin_minutes
        hour, minute = int(start // 60), int(start % 60)
        return f"{hour}:{minute:02d}"

    def decode_label(self, code: int) -> str:
        shared = self._shared_label(code)
        return shared if shared is not None else self._start_clock(code)

    def render_value(self, code: int) -> str:
        self._check_value_code(code)
        return self._start_clock(code)

    def to_dict(self) -> dict:
        return {
            "codec": "time",
            "column": self.column,
            "nullable": self.nullable,
            "bin_count": self.bin_count,
        }


@dataclass
class CountCodec(ColumnCodec):
    """Number of child rows per parent row.

    Identity coding (one code per count) when the largest observed count is
    small; quantile bins otherwise. Counts are never null: zero children is
    the value 0.
    """

    column: str
    max_count: int
    edges: tuple[float, ...]  # empty for identity coding
    identity: bool
    kind: str = "count"
    nullable: bool = False

    @property
    def domain_size(self) -> int:
        return self.max_count + 1 if self.identity else len(self.edges) + 1

    def encode_count(self, count: int) -> int:
        if count < 0:
            raise ValueError(f"{self.column}: negative count")
        if self.identity:
            return min(count, self.max_count)
        return bisect.bisect_left(self.edges, float(count))

    def encode_cell(self, cell: Cell) -> int:
        if cell is None:
            raise DataValidationError(f"{self.column}: counts cannot be null")
        return self.encode_count(int(cell))

    def _bounds(self, code: int) -> tuple[float, float]:
        lo = 0.0 if code == 0 else self.edges[code - 1]
        hi = float(self.max_count) if code == len(self.edges) else self.edges[code]
        return lo, hi

    def decode_label(self, code: int) -> str:
        shared = self._shared_label(code)
        if shared is not None:
            return shared
        if self.identity:
            return str(code)
        return _range_label(*self._bounds(code))

    def render_value(self, code: int) -> int:
        self._check_value_code(code)
        if self.identity:
            return code
        lo, hi = self._bounds(code)
        value = int(round((lo + hi) / 2.0))
        if self.encode_count(max(value, 0)) != code:
            for candidate in (value - 1, value + 1):
                if candidate >= 0 and self.encode_count(candidate) == code:
                    return candidate
        return max(value, 0)

    def to_dict(self) -> dict:
        return {
            "codec": "count",
            "column": self.column,
            "identity": self.identity,
            "max_count": self.max_count,
            "edges": list(self.edges),
        }


# ----------------------------------------------------------------- fitting

def _fit_bin_edges(values: list[float], strategy: str, bins: int, column: str) -> list[float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        warnings.warn(f"{column}: single distinct value; collapsing to one bin")
        return []
    if strategy == "quantile-bins":
        return quantile_edges(values, bins)
    return equal_width_edges(lo, hi, bins)


def fit_categorical(column: str, cells: Sequence[Cell], nullable: bool) -> CategoricalCodec:
    seen = sorted({c for c in cells if c is not None})
    if not seen:
        raise DataValidationError(f"{column}: no non-null training values")
    return CategoricalCodec(column=column, categories=tuple(seen), nullable=nullable)


def fit_numeric(
    column: str,
    cells: Sequence[Cell],
    nullable: bool,
    integer: bool,
    strategy: str = "equal-width-bins",
    bin_count: int = DEFAULT_BIN_COUNT,
) -> NumericCodec:
    values = [parse_numeric(c) for c in cells if c is not None]
    if not values:
        raise DataValidationError(f"{column}: no non-null training values")
    edges = _fit_bin_edges(values, strategy, bin_count, column)
    return NumericCodec(
        column=column,
        edges=tuple(edges),
        lo=min(values),
        hi=max(values),
        integer=integer,
        nullable=nullable,
        strategy=strategy,
    )


def fit_datetime(
    column: str,
    cells: Sequence[Cell],
    nullable: bool,
    bin_count: int = DEFAULT_BIN_COUNT,
    time_bin_count: int = DEFAULT_TIME_BIN_COUNT,
) -> tuple[DateCodec, Optional[TimeCodec]]:
    """Date codec plus a time-of-day codec when any training value has one."""
    parts = [parse_datetime_parts(c) for c in cells if c is not None]
    if not parts:
        raise DataValidationError(f"{column}: no non-null training values")
    ordinals = [float(day) for day, _ in parts]
    edges = _fit_bin_edges(ordinals, "equal-width-bins", bin_count, column)
    date_codec = DateCodec(
        column=column,
        edges=tuple(edges),
        lo=min(ordinals),
        hi=max(ordinals),
        nullable=nullable,
    )
    time_codec = None
    if any(minutes != 0.0 for _, minutes in parts):
        time_codec = TimeCodec(
            column=f"{column}#time", bin_count=time_bin_count, nullable=nullable
        )
    return date_codec, time_codec


def fit_time(
    column: str,
    cells: Sequence[Cell],
    nullable: bool,
    bin_count: int = DEFAULT_TIME_BIN_COUNT,
) -> TimeCodec:
    if not any(c is not None for c in cells):
        raise DataValidationError(f"{column}: no non-null training values")
    return TimeCodec(column=column, bin_count=bin_count, nullable=nullable)


def fit_count(
    column: str,
    counts: Sequence[int],
    bin_count: int = DEFAULT_BIN_COUNT,
    identity_limit: int = IDENTITY_COUNT_LIMIT,
) -> CountCodec:
    counts = [int(c) for c in counts]
    if not counts:
        raise DataValidationError(f"{column}: no training counts")
    if min(counts) < 0:
        raise ValueError(f"{column}: negative count")
    max_count = max(counts)
    if max_count <= identity_limit:
        return CountCodec(column=column, max_count=max_count, edges=(), identity=True)
    edges = quantile_edges([float(c) for c in counts], bin_count)
    if not edges:
        edges = []
        warnings.warn(f"{column}: single distinct count; collapsing to one bin")
    return CountCodec(column=column, max_count=max_count, edges=tuple(edges), identity=False)


def codec_from_dict(d: dict) -> ColumnCodec:
    tag = d.get("codec")
    if tag == "categorical":
        return CategoricalCodec(
            column=d["column"], categories=tuple(d["categories"]), nullable=d["nullable"]
        )
    if tag == "numeric":
        return NumericCodec(
            column=d["column"],
            edges=tuple(d["edges"]),
            lo=d["lo"],
            hi=d["hi"],
            integer=d["integer"],
            nullable=d["nullable"],
            strategy=d.get("strategy", "equal-width-bins"),
        )
    if tag == "date":
        return DateCodec(
            column=d["column"],
            edges=tuple(d["edges"]),
            lo=d["lo"],
            hi=d["hi"],
            nullable=d["nullable"],
        )
    if tag == "time":
        return TimeCodec(column=d["column"], bin_count=d["bin_count"], nullable=d["nullable"])
    if tag == "count":
        return CountCodec(
            column=d["column"],
            max_count=d["max_count"],
            edges=tuple(d["edges"]),
            identity=d["identity"],
        )
    raise ConfigError(f"unknown codec tag {tag!r}")
