"""Differentially private Bayesian network over the analytics table.

Greedy structure learning: the first node is uniform-random; each later node
is picked together with a parent set by the exponential mechanism over the
mutual information between node and parents. Conditional tables are then
estimated from Laplace-noised joint counts. Budget bookkeeping is done in
exact rational arithmetic so the per-invocation amounts sum to the total ε
bit-for-bit.

A noise-disabled mode (for tests and oracles only) replaces the exponential
mechanism with argmax and uses exact counts; it consumes no budget and is
flagged as such in the noise account.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .analytics import EncodedTable
from .errors import ConfigError, DataValidationError
from .random_streams import substream

DEFAULT_DEGREE_BOUND = 3
DEFAULT_STRUCTURE_SHARE = 0.5
DEFAULT_CELL_CAP = 1_000_000


def default_mi_sensitivity(n_rows: int) -> float:
    """Conservative exponential-mechanism sensitivity for empirical MI (bits)."""
    n = float(n_rows)
    if n < 2:
        raise ValueError("need at least 2 rows")
    return np.log2(n) / n + (n - 1.0) / n * np.log2(n / (n - 1.0))


def mutual_information_bits(x: np.ndarray, cfg: np.ndarray, dx: int, ncfg: int) -> float:
    """Empirical I(X; parents) in bits from code arrays."""
    joint = np.bincount(cfg.astype(np.int64) * dx + x.astype(np.int64), minlength=ncfg * dx)
    joint = joint.reshape(ncfg, dx).astype(float)
    total = joint.sum()
    p = joint / total
    px = p.sum(axis=0)
    pc = p.sum(axis=1)
    mask = p > 0
    ratio = p[mask] / (pc[:, None] * px[None, :])[mask]
    return float(np.sum(p[mask] * np.log2(ratio)))


@dataclass
class NoiseAccount:
    invocations: list[dict] = field(default_factory=list)
    noise_disabled: bool = False

    def record(self, mechanism: str, target: str, epsilon: Fraction, sensitivity: float, **extra):
        self.invocations.append(
            {
                "mechanism": mechanism,
                "target": target,
                "epsilon": float(epsilon),
                "epsilon_exact": str(epsilon),
                "sensitivity": sensitivity,
                **extra,
            }
        )

    def total_exact(self) -> Fraction:
        return sum((Fraction(i["epsilon_exact"]) for i in self.invocations), Fraction(0))

    def to_dict(self) -> dict:
        return {
            "invocations": self.invocations,
            "noise_disabled": self.noise_disabled,
            "total_epsilon": float(self.total_exact()),
            "total_epsilon_exact": str(self.total_exact()),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseAccount":
        return cls(invocations=list(d["invocations"]), noise_disabled=d["noise_disabled"])


@dataclass
class DpBayesNet:
    columns: tuple[str, ...]  # analytics column order
    domain_sizes: dict[str, int]
    node_order: tuple[str, ...]
    parents: dict[str, tuple[str, ...]]
    cpts: dict[str, np.ndarray]  # (parent configurations, node domain)
    epsilon: Optional[float]
    structure_share: float
    degree_bound: int
    sensitivity: Optional[float]
    noise_account: NoiseAccount
    spec_hash: str = ""

    def sample(self, m: int, seed: int) -> np.ndarray:
        """Ancestral sampling: m analytics rows of codes, in column order."""
        if m < 1:
            raise ValueError(f"sample count must be >= 1, got {m}")
        rng = substream(seed, "sample-network")
        drawn: dict[str, np.ndarray] = {}
        for node in self.node_order:
            cpt = self.cpts[node]
            parents = self.parents[node]
            if parents:
                dims = [self.domain_sizes[p] for p in parents]
                cfg = np.ravel_multi_index([drawn[p] for p in parents], dims)
            else:
                cfg = np.zeros(m, dtype=np.int64)
            rows = cpt[cfg]  # (m, domain)
            cdf = np.cumsum(rows, axis=1)
            u = rng.random(m)
            codes = (u[:, None] > cdf).sum(axis=1)
            drawn[node] = np.minimum(codes, cpt.shape[1] - 1).astype(np.int64)
        return np.stack([drawn[c] for c in self.columns], axis=1)

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "domain_sizes": self.domain_sizes,
            "node_order": list(self.node_order),
            "parents": {k: list(v) for k, v in self.parents.items()},
            "cpts": {k: v.tolist() for k, v in self.cpts.items()},
            "epsilon": self.epsilon,
            "structure_share": self.structure_share,
            "degree_bound": self.degree_bound,
            "sensitivity": self.sensitivity,
            "noise_account": self.noise_account.to_dict(),
            "spec_hash": self.spec_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DpBayesNet":
        return cls(
            columns=tuple(d["columns"]),
            domain_sizes={k: int(v) for k, v in d["domain_sizes"].items()},
            node_order=tuple(d["node_order"]),
            parents={k: tuple(v) for k, v in d["parents"].items()},
            cpts={k: np.asarray(v, dtype=float) for k, v in d["cpts"].items()},
            epsilon=d["epsilon"],
            structure_share=d["structure_share"],
            degree_bound=d["degree_bound"],
            sensitivity=d["sensitivity"],
            noise_account=NoiseAccount.from_dict(d["noise_account"]),
            spec_hash=d.get("spec_hash", ""),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "DpBayesNet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _budget_split(
    epsilon: Optional[float], structure_share: float, d: int
) -> tuple[Fraction, Fraction, Fraction, Fraction]:
    """Exact rational split: (structure total, per selection, parameter total, per marginal)."""
    eps_total = Fraction(epsilon)
    share = Fraction(structure_share)
    if not 0 <= share <= 1:
        raise ConfigError(f"structure share must be in [0, 1], got {structure_share}")
    if d == 1:
        # no structure to select; the whole budget goes to the one marginal
        return Fraction(0), Fraction(0), eps_total, eps_total
    eps_struct = eps_total * share
    eps_param = eps_total - eps_struct
    return eps_struct, eps_struct / (d - 1), eps_param, eps_param / d


def _cpt_cells(domain_sizes: dict[str, int], node: str, parents: Sequence[str]) -> int:
    cells = domain_sizes[node]
    for p in parents:
        cells *= domain_sizes[p]
    return cells


def _candidate_pairs(
    domain_sizes: dict[str, int],
    chosen: list[str],
    remaining: list[str],
    degree_bound: int,
    cell_cap: int,
) -> list[tuple[str, tuple[str, ...]]]:
    """All (node, parent set) pairs at the largest feasible parent-set size."""
    size = min(degree_bound, len(chosen))
    while size >= 0:
        pairs = [
            (node, parent_set)
            for node in remaining
            for parent_set in combinations(chosen, size)
            if _cpt_cells(domain_sizes, node, parent_set) <= cell_cap
        ]
        if pairs:
            return pairs
        size -= 1
    raise ConfigError(
        "no candidate fits the CPT cell cap; a single column domain exceeds it"
    )


def _estimate_cpt(
    codes: dict[str, np.ndarray],
    domain_sizes: dict[str, int],
    node: str,
    parents: Sequence[str],
    rng: Optional[np.random.Generator],
    laplace_scale: Optional[float],
) -> np.ndarray:
    dx = domain_sizes[node]
    if parents:
        dims = [domain_sizes[p] for p in parents]
        cfg = np.ravel_multi_index([codes[p] for p in parents], dims)
        ncfg = int(np.prod(dims))
    else:
        cfg = np.zeros(len(codes[node]), dtype=np.int64)
        ncfg = 1
    counts = np.bincount(cfg * dx + codes[node], minlength=ncfg * dx).reshape(ncfg, dx)
    counts = counts.astype(float)
    if laplace_scale is not None:
        counts += rng.laplace(0.0, laplace_scale, size=counts.shape)
        counts = np.clip(counts, 0.0, None)
    totals = counts.sum(axis=1, keepdims=True)
    zero_rows = totals[:, 0] <= 0
    counts[zero_rows] = 1.0  # unseen configuration: fall back to uniform
    totals = counts.sum(axis=1, keepdims=True)
    return counts / totals


def fit_network(
    encoded: EncodedTable,
    epsilon: Optional[float],
    degree_bound: int = DEFAULT_DEGREE_BOUND,
    seed: int = 0,
    structure_share: float = DEFAULT_STRUCTURE_SHARE,
    sensitivity: Optional[float] = None,
    cell_cap: int = DEFAULT_CELL_CAP,
    noise_disabled: bool = False,
    spec_hash: str = "",
) -> DpBayesNet:
    """Fit the network on encoded analytics rows under a total budget ε."""
    if encoded.n_rows < 1:
        raise DataValidationError("cannot fit a network on an empty analytics table")
    if degree_bound < 1:
        raise ConfigError(f"degree bound must be >= 1, got {degree_bound}")
    if not noise_disabled and (epsilon is None or epsilon <= 0):
        raise ConfigError(f"privacy budget must be > 0, got {epsilon}")

    columns = list(encoded.columns)
    d = len(columns)
    domain_sizes = dict(encoded.domain_sizes)
    codes = {c: encoded.codes[c].astype(np.int64) for c in columns}
    for c in columns:
        if codes[c].max(initial=0) >= domain_sizes[c]:
            raise DataValidationError(f"column {c}: codes outside the declared domain")

    account = NoiseAccount(noise_disabled=noise_disabled)
    if noise_disabled:
        eps_sel = eps_param = eps_param_each = Fraction(0)
    else:
        _, eps_sel, eps_param, eps_param_each = _budget_split(epsilon, structure_share, d)
    if sensitivity is None:
        sensitivity = default_mi_sensitivity(encoded.n_rows) if d > 1 else 0.0

    rng = substream(seed, "structure")
    first = columns[int(rng.integers(d))]
    node_order = [first]
    parents: dict[str, tuple[str, ...]] = {first: ()}
    remaining = [c for c in columns if c != first]
    while remaining:
        pairs = _candidate_pairs(domain_sizes, node_order, remaining, degree_bound, cell_cap)
        scores = np.array(
            [
                mutual_information_bits(
                    codes[node],
                    np.ravel_multi_index([codes[p] for p in ps], [domain_sizes[p] for p in ps])
                    if ps
                    else np.zeros(encoded.n_rows, dtype=np.int64),
                    domain_sizes[node],
                    int(np.prod([domain_sizes[p] for p in ps])) if ps else 1,
                )
                for node, ps in pairs
            ]
        )
        if noise_disabled:
            pick = int(np.argmax(scores))
        else:
            logits = float(eps_sel) * scores / (2.0 * sensitivity)
            logits -= logits.max()
            weights = np.exp(logits)
            probs = weights / weights.sum()
            pick = int(rng.choice(len(pairs), p=probs))
            account.record(
                "exponential", pairs[pick][0], eps_sel, sensitivity, scale=None
            )
        node, ps = pairs[pick]
        node_order.append(node)
        parents[node] = ps
        remaining.remove(node)

    param_rng = substream(seed, "parameters")
    if noise_disabled:
        laplace_scale = None
    else:
        laplace_scale = 2.0 * d / float(eps_param)
    cpts = {}
    for node in node_order:
        cpts[node] = _estimate_cpt(
            codes, domain_sizes, node, parents[node], param_rng, laplace_scale
        )
        if not noise_disabled:
            account.record(
                "laplace", node, eps_param_each, 2.0, scale=laplace_scale
            )

    return DpBayesNet(
        columns=tuple(columns),
        domain_sizes=domain_sizes,
        node_order=tuple(node_order),
        parents=parents,
        cpts=cpts,
        epsilon=None if noise_disabled else float(epsilon),
        structure_share=structure_share,
        degree_bound=degree_bound,
        sensitivity=sensitivity,
        noise_account=account,
        spec_hash=spec_hash,
    )


def single_column_histograms(encoded: EncodedTable) -> dict[str, np.ndarray]:
    """Per-column marginal probabilities over in-domain codes."""
    if encoded.n_rows < 1:
        raise DataValidationError("empty analytics table")
    out = {}
    for name in encoded.columns:
        dom = encoded.domain_sizes[name]
        values = encoded.codes[name].astype(np.int64)
        values = values[values < dom]  # drop out-of-domain sentinels
        if values.size == 0:
            raise DataValidationError(f"column {name}: no in-domain values")
        counts = np.bincount(values, minlength=dom)[:dom]
        out[name] = counts / counts.sum()
    return out
