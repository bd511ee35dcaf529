"""Rarity-weighted similarity between analytics rows.

A conditioning row is compared against every training row: each column on
which the two rows agree contributes the reciprocal of the training marginal
probability of that value, so matches on rare values dominate. Retrieval is
a full linear scan — no approximate index; generation cost dwarfs it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analytics import EncodedTable
from .errors import DataValidationError
from .pgm import single_column_histograms


@dataclass
class SimilarityIndex:
    columns: tuple[str, ...]
    codes: np.ndarray  # (train rows, columns) int64
    weights: np.ndarray  # (columns, max domain+1): reciprocal marginals
    entity_ids: tuple[str, ...]
    zero_cap: float
    score_evaluations: int = field(default=0, repr=False)

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]


def build_index(
    encoded: EncodedTable,
    entity_ids: Sequence[str],
    histograms: Optional[dict[str, np.ndarray]] = None,
    zero_cap: Optional[float] = None,
) -> SimilarityIndex:
    """Index train rows with per-value weights 1/pᵢ.

    Values with zero marginal probability (never observed in training) get a
    capped weight — by default 1/p_min with p_min = 1/(2N) — instead of a
    division by zero.
    """
    if len(entity_ids) != encoded.n_rows:
        raise DataValidationError("entity id list does not match row count")
    if histograms is None:
        histograms = single_column_histograms(encoded)
    if zero_cap is None:
        zero_cap = 2.0 * encoded.n_rows
    max_dom = max((encoded.domain_sizes[c] for c in encoded.columns), default=0)
    weights = np.full((len(encoded.columns), max_dom + 1), float(zero_cap))
    for i, name in enumerate(encoded.columns):
        p = np.asarray(histograms[name], dtype=float)
        if len(p) != encoded.domain_sizes[name]:
            raise DataValidationError(
                f"column {name}: histogram length {len(p)} != domain {encoded.domain_sizes[name]}"
            )
        nonzero = p > 0
        weights[i, : len(p)][nonzero] = 1.0 / p[nonzero]
    return SimilarityIndex(
        columns=encoded.columns,
        codes=encoded.matrix(),
        weights=weights,
        entity_ids=tuple(entity_ids),
        zero_cap=float(zero_cap),
    )


def _check_row(index: SimilarityIndex, row: np.ndarray) -> np.ndarray:
    row = np.asarray(row, dtype=np.int64)
    if row.shape != (len(index.columns),):
        raise DataValidationError(
            f"row has {row.shape} values, index expects {len(index.columns)} columns"
        )
    return row


def similarity_score(a: np.ndarray, b: np.ndarray, index: SimilarityIndex) -> float:
    """Σᵢ [aᵢ = bᵢ] · (1/pᵢ) with pᵢ the training marginal of the value."""
    a = _check_row(index, a)
    b = _check_row(index, b)
    cols = np.arange(len(index.columns))
    index.score_evaluations += 1
    return float(((a == b) * index.weights[cols, a]).sum())


def scores_against(conditioning: np.ndarray, index: SimilarityIndex) -> np.ndarray:
    """Similarity of every train row against one conditioning row."""
    cond = _check_row(index, conditioning)
    cols = np.arange(len(index.columns))
    w = index.weights[cols, cond]  # weight of each conditioning value
    index.score_evaluations += index.n_rows
    return (index.codes == cond[None, :]).astype(float) @ w


def top_n_similar(conditioning: np.ndarray, index: SimilarityIndex, n: int) -> list[str]:
    """Entity ids of the n most similar train rows, descending score.

    Ties break toward the lower train row index.
    """
    if not 1 <= n <= index.n_rows:
        raise ValueError(f"n must be in [1, {index.n_rows}], got {n}")
    scores = scores_against(conditioning, index)
    order = np.lexsort((np.arange(index.n_rows), -scores))
    return [index.entity_ids[i] for i in order[:n]]
