"""Statistical and judged evaluation of a synthetic dataset.

Three families of metrics, always comparing *original vs other* in that
direction:

* aggregated KL — joint histograms over column pairs in three categories
  (intra-table, inter-table across each relationship, and sequential at lag
  1 and 2 within a parent's ordered child rows), each mapped to (0, 1] via
  1/(1+KL) and averaged per (category, table), per category, then across
  categories;
* aggregated χ² — a two-sample homogeneity test per column, averaged per
  table and then across tables;
* realism — an LLM judge scores entities 1–5 given similar real references,
  reported as mean plus histogram, with the same procedure on hold-out
  entities as the baseline.

Pairs or columns with no observations on either side are skipped and listed
in the report rather than poisoning the aggregates (a synthetic run can
legitimately produce, say, no grandchild rows at lag 2).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .analytics import AnalyticsSpec, encode_table_rows, encode_with_spec
from .dataset import RelationalDataset, order_key
from .errors import DataValidationError, StructuredOutputViolation
from .llm.client import CompletionRequest, EndpointClient
from .llm.parsing import validate_instance
from .llm.prompts import PromptTemplate, fit_eval_prompt
from .llm.schema import EntityRenderer
from .similarity import SimilarityIndex, top_n_similar

KL_ALPHA = 0.5
JUDGE_SCHEMA = {"type": "integer", "enum": [1, 2, 3, 4, 5]}
DEFAULT_REALISM_CAP = 2000

INTRA = "intra-table"
INTER = "inter-table"
SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class ColumnPair:
    category: str  # intra-table | inter-table | sequential
    table: str  # table the pair is attributed to (child table for cross-table pairs)
    col_a: str
    col_b: str
    lag: int = 0

    def as_dict(self) -> dict:
        return {
            "category": self.category,
            "table": self.table,
            "col_a": self.col_a,
            "col_b": self.col_b,
            "lag": self.lag,
        }


class EmptySupportError(DataValidationError):
    """No observations on one side of a comparison."""


def eval_columns(spec: AnalyticsSpec, table: str) -> list[str]:
    """Row-level evaluation columns of a table (datetime splits included)."""
    return [c.name for c in spec.columns_for_table(table) if c.role == "data"]


def enumerate_pairs(dataset: RelationalDataset, spec: AnalyticsSpec) -> list[ColumnPair]:
    pairs: list[ColumnPair] = []
    for table in dataset.tables:
        cols = eval_columns(spec, table)
        for a, b in combinations(cols, 2):
            pairs.append(ColumnPair(INTRA, table, a, b))
    for rel in dataset.relationships:
        parent_cols = eval_columns(spec, rel.parent)
        child_cols = eval_columns(spec, rel.child)
        for a in parent_cols:
            for b in child_cols:
                pairs.append(ColumnPair(INTER, rel.child, a, b))
        if rel.kind == "sequential":
            for lag in (1, 2):
                for a in child_cols:
                    for b in child_cols:
                        pairs.append(ColumnPair(SEQUENTIAL, rel.child, a, b, lag=lag))
    return pairs


# ------------------------------------------------------------ encoded views

@dataclass
class EvalEncoding:
    """Row-level encodings plus the link structure needed to join pairs."""

    tables: dict[str, dict[str, np.ndarray]]
    parent_rows: dict[str, np.ndarray]
    groups: dict[str, list[np.ndarray]]  # ordered child row groups per parent row
    histogram_sizes: dict[str, int]  # per column: domain + 1 (out-of-domain bucket)


def build_eval_encoding(dataset: RelationalDataset, spec: AnalyticsSpec) -> EvalEncoding:
    tables = {t: encode_table_rows(dataset, spec, t) for t in dataset.tables}
    parent_rows = {}
    groups = {}
    for rel in dataset.relationships:
        parent_rows[rel.child] = np.asarray(dataset.parent_row_index(rel.child), dtype=np.int64)
        by_parent = dataset.rows_by_parent(rel.child)
        if rel.kind == "sequential":
            tbl = dataset.tables[rel.child]
            col = tbl.schema.column(rel.order_by)
            idx = tbl.schema.index_of(rel.order_by)
            by_parent = {
                p: sorted(rows, key=lambda r: (order_key(col, tbl.rows[r][idx]), r))
                for p, rows in by_parent.items()
            }
        groups[rel.child] = [np.asarray(rows, dtype=np.int64) for rows in by_parent.values()]
    sizes = {
        c.name: c.codec.domain_size + 1 for c in spec.columns if c.role == "data"
    }
    return EvalEncoding(tables, parent_rows, groups, sizes)


def _table_of(column: str) -> str:
    return column.split(".", 1)[0]


def pair_codes(enc: EvalEncoding, pair: ColumnPair) -> tuple[np.ndarray, np.ndarray]:
    """Aligned code arrays (a, b) for one pair, pooled across the dataset."""
    if pair.category == INTRA:
        cols = enc.tables[pair.table]
        return cols[pair.col_a], cols[pair.col_b]
    if pair.category == INTER:
        child = pair.table
        parent_codes = enc.tables[_table_of(pair.col_a)][pair.col_a]
        child_codes = enc.tables[child][pair.col_b]
        link = enc.parent_rows[child]
        return parent_codes[link], child_codes
    # sequential: column a at row r, column b at row r-lag, within a parent
    cols = enc.tables[pair.table]
    a_parts, b_parts = [], []
    for rows in enc.groups[pair.table]:
        if len(rows) > pair.lag:
            a_parts.append(cols[pair.col_a][rows[pair.lag:]])
            b_parts.append(cols[pair.col_b][rows[: len(rows) - pair.lag]])
    if not a_parts:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(a_parts), np.concatenate(b_parts)


# ------------------------------------------------------------ KL

def kl_to_score(kl: float) -> float:
    """Map a divergence in [0, ∞) to a score in (0, 1]: 0 → 1, 1 → 0.5."""
    if kl < 0:
        raise ValueError(f"divergence must be >= 0, got {kl}")
    return 1.0 / (1.0 + kl)


def kl_pair(
    original: EvalEncoding,
    other: EvalEncoding,
    pair: ColumnPair,
    alpha: float = KL_ALPHA,
) -> float:
    """1/(1 + KL(original ‖ other)) over the pair's smoothed joint histogram."""
    a1, b1 = pair_codes(original, pair)
    a2, b2 = pair_codes(other, pair)
    if a1.size == 0 or a2.size == 0:
        raise EmptySupportError(
            f"pair {pair.col_a} x {pair.col_b} (lag {pair.lag}): no observations"
        )
    da = original.histogram_sizes[pair.col_a]
    db = original.histogram_sizes[pair.col_b]
    h1 = np.bincount(a1.astype(np.int64) * db + b1.astype(np.int64), minlength=da * db)
    h2 = np.bincount(a2.astype(np.int64) * db + b2.astype(np.int64), minlength=da * db)
    p = (h1 + alpha) / (h1 + alpha).sum()
    q = (h2 + alpha) / (h2 + alpha).sum()
    # the true divergence is >= 0; guard against rounding in the summation
    return kl_to_score(max(0.0, float(np.sum(p * np.log(p / q)))))


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def kl_aggregate(
    original: EvalEncoding,
    other: EvalEncoding,
    pairs: Sequence[ColumnPair],
    alpha: float = KL_ALPHA,
) -> dict:
    """Mean per (category, table), per category, then across categories."""
    scored: list[dict] = []
    skipped: list[dict] = []
    by_cat_table: dict[str, dict[str, list[float]]] = {}
    for pair in pairs:
        try:
            score = kl_pair(original, other, pair, alpha)
        except EmptySupportError as exc:
            skipped.append({**pair.as_dict(), "reason": str(exc)})
            continue
        scored.append({**pair.as_dict(), "score": score})
        by_cat_table.setdefault(pair.category, {}).setdefault(pair.table, []).append(score)
    if not scored:
        raise EmptySupportError("no scorable pairs in any category")
    per_table = {
        cat: {table: _mean(scores) for table, scores in tables.items()}
        for cat, tables in by_cat_table.items()
    }
    per_category = {cat: _mean(list(tables.values())) for cat, tables in per_table.items()}
    aggregate = _mean(list(per_category.values()))
    return {
        "aggregate": aggregate,
        "per_category": per_category,
        "per_table": per_table,
        "pairs": scored,
        "skipped": skipped,
    }


# ------------------------------------------------------------ chi-squared

def chi2_column(
    original_codes: np.ndarray, other_codes: np.ndarray, histogram_size: int
) -> float:
    """Two-sample homogeneity P value over one column's code histograms."""
    if original_codes.size == 0 or other_codes.size == 0:
        raise EmptySupportError("no observations in one of the samples")
    h1 = np.bincount(original_codes.astype(np.int64), minlength=histogram_size).astype(float)
    h2 = np.bincount(other_codes.astype(np.int64), minlength=histogram_size).astype(float)
    pooled = h1 + h2
    keep = pooled > 0
    k = int(keep.sum())
    if k <= 1:
        return 1.0
    n1, n2 = h1.sum(), h2.sum()
    expected1 = n1 * pooled[keep] / (n1 + n2)
    expected2 = n2 * pooled[keep] / (n1 + n2)
    stat = float(
        np.sum((h1[keep] - expected1) ** 2 / expected1)
        + np.sum((h2[keep] - expected2) ** 2 / expected2)
    )
    return float(scipy_stats.chi2.sf(stat, k - 1))


def chi2_aggregate(original: EvalEncoding, other: EvalEncoding) -> dict:
    """Per-column P values, averaged per table, then across tables."""
    columns: list[dict] = []
    skipped: list[dict] = []
    per_table: dict[str, float] = {}
    for table, cols in original.tables.items():
        p_values = []
        for name in cols:
            try:
                p = chi2_column(
                    cols[name], other.tables[table][name], original.histogram_sizes[name]
                )
            except EmptySupportError as exc:
                skipped.append({"table": table, "column": name, "reason": str(exc)})
                continue
            columns.append({"table": table, "column": name, "p_value": p})
            p_values.append(p)
        if p_values:
            per_table[table] = _mean(p_values)
    if not per_table:
        raise EmptySupportError("no comparable columns in any table")
    return {
        "aggregate": _mean(list(per_table.values())),
        "per_table": per_table,
        "columns": columns,
        "skipped": skipped,
    }


# ------------------------------------------------------------ realism judge

def realism_evaluate(
    candidates: RelationalDataset,
    references: RelationalDataset,
    spec: AnalyticsSpec,
    index: SimilarityIndex,
    template: PromptTemplate,
    client: EndpointClient,
    n_references: int = 3,
    cap: int = DEFAULT_REALISM_CAP,
) -> dict:
    """Judge up to ``cap`` candidate entities against similar real references."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    n_references = min(n_references, index.n_rows)
    candidate_ids = candidates.entity_ids[:cap]
    if not candidate_ids:
        raise DataValidationError("no candidate entities to judge")
    encoded = encode_with_spec(candidates, spec)
    rows = encoded.matrix()
    candidate_renderer = EntityRenderer(candidates, spec)
    reference_renderer = EntityRenderer(references, spec)

    def judge(position: int) -> Optional[int]:
        entity_id = candidate_ids[position]
        refs = top_n_similar(rows[position], index, n_references) if n_references else []
        ref_docs = [reference_renderer.render(e) for e in refs]
        candidate_doc = candidate_renderer.render(entity_id)
        prompt, _ = fit_eval_prompt(
            template, ref_docs, candidate_doc, client.config.context_char_budget
        )
        request = CompletionRequest(prompt, JUDGE_SCHEMA, "realism_score")
        for _ in range(2):  # one validation retry
            try:
                response = client.complete(request)
            except StructuredOutputViolation:
                continue
            value = json.loads(response.text)
            if not validate_instance(value, JUDGE_SCHEMA):
                return int(value)
        return None

    workers = min(client.config.max_concurrency, len(candidate_ids))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(judge, range(len(candidate_ids))))

    scores = [s for s in results if s is not None]
    skipped = len(results) - len(scores)
    histogram = {str(v): sum(1 for s in scores if s == v) for v in range(1, 6)}
    return {
        "mean": _mean(scores) if scores else None,
        "histogram": histogram,
        "count": len(scores),
        "skipped": skipped,
    }


# ------------------------------------------------------------ report

@dataclass
class MetricsReport:
    kl: dict
    chi2: dict
    realism: Optional[dict] = None
    baseline_realism: Optional[dict] = None
    notes: dict = field(default_factory=dict)

    @property
    def kl_aggregate(self) -> float:
        return self.kl["aggregate"]

    @property
    def chi2_aggregate(self) -> float:
        return self.chi2["aggregate"]

    def to_dict(self) -> dict:
        return {
            "kl": self.kl,
            "chi2": self.chi2,
            "realism": self.realism,
            "baseline_realism": self.baseline_realism,
            "notes": self.notes,
        }

    def breakdown_rows(self) -> list[dict]:
        """Flat rows for CSV export: one per pair, column, and summary."""
        rows = [
            {"metric": "kl_aggregate", "detail": "", "value": self.kl["aggregate"]},
            {"metric": "chi2_aggregate", "detail": "", "value": self.chi2["aggregate"]},
        ]
        for cat, value in self.kl["per_category"].items():
            rows.append({"metric": "kl_category", "detail": cat, "value": value})
        for cat, tables in self.kl["per_table"].items():
            for table, value in tables.items():
                rows.append({"metric": "kl_table", "detail": f"{cat}/{table}", "value": value})
        for pair in self.kl["pairs"]:
            detail = f"{pair['category']}/{pair['table']}/{pair['col_a']}~{pair['col_b']}"
            if pair["lag"]:
                detail += f"@lag{pair['lag']}"
            rows.append({"metric": "kl_pair", "detail": detail, "value": pair["score"]})
        for table, value in self.chi2["per_table"].items():
            rows.append({"metric": "chi2_table", "detail": table, "value": value})
        for col in self.chi2["columns"]:
            rows.append(
                {
                    "metric": "chi2_column",
                    "detail": f"{col['table']}/{col['column']}",
                    "value": col["p_value"],
                }
            )
        for side, fragment in (("realism", self.realism), ("baseline", self.baseline_realism)):
            if fragment is None:
                continue
            rows.append({"metric": f"{side}_mean", "detail": "", "value": fragment["mean"]})
            for score, count in fragment["histogram"].items():
                rows.append({"metric": f"{side}_histogram", "detail": score, "value": count})
        return rows


def evaluate_statistics(
    original: RelationalDataset,
    other: RelationalDataset,
    spec: AnalyticsSpec,
    alpha: float = KL_ALPHA,
) -> MetricsReport:
    """KL and χ² metrics between two datasets sharing one encoding spec."""
    enc_original = build_eval_encoding(original, spec)
    enc_other = build_eval_encoding(other, spec)
    pairs = enumerate_pairs(original, spec)
    return MetricsReport(
        kl=kl_aggregate(enc_original, enc_other, pairs, alpha),
        chi2=chi2_aggregate(enc_original, enc_other),
    )
