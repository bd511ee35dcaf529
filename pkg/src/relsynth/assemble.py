"""End-to-end synthesis: conditioning rows -> references -> prompts ->
completions -> parsed entities -> synthetic relational dataset.

Each requested entity is one unit of work: draw its conditioning row from
the network, fetch the most similar training entities as references, render
the synthesis prompt, and ask the endpoint for a document, re-asking up to
the regeneration limit when the response fails validation. Failed entities
are dropped, never backfilled from the network, so the output stays purely
model-generated.

Progress is checkpointed: a JSON-lines log gains one record per finished
sample, and the partial CSVs are rewritten every ``checkpoint_every``
completions. A run killed mid-way resumes by replaying the log and redoing
only unfinished samples. Rows are accumulated in sample-id order, so a
completed run's CSVs are byte-identical for a fixed seed and a
deterministic endpoint.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .analytics import AnalyticsSpec
from .dataset import RelationalDataset, Table, load_dataset, save_dataset
from .errors import (
    EndpointError,
    SchemaViolation,
    SpecHashMismatchError,
    StructuredOutputViolation,
)
from .llm.client import CompletionRequest, EndpointClient
from .llm.parsing import parse_sample
from .llm.prompts import PromptTemplate, conditioning_lines, fit_synthesis_prompt
from .llm.schema import EntityRenderer, compile_schema
from .pgm import DpBayesNet
from .similarity import SimilarityIndex, top_n_similar

DEFAULT_REFERENCES = 3
DEFAULT_REGENERATION_ATTEMPTS = 2
DEFAULT_CHECKPOINT_EVERY = 50
LOG_FILENAME = "synthesis_log.jsonl"


@dataclass
class SampleOutcome:
    sample_id: int
    entity_key: str
    status: str  # "ok" or "failed"
    attempts: int
    conditioning: list[int]
    reference_ids: list[str]
    references_used: int
    usage: dict
    wall_time: float
    clamped: int
    substituted: int
    error: Optional[str]
    rows: Optional[dict[str, list[tuple]]]  # present when status == "ok"

    def log_record(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "entity_key": self.entity_key,
            "status": self.status,
            "attempts": self.attempts,
            "conditioning": self.conditioning,
            "reference_ids": self.reference_ids,
            "references_used": self.references_used,
            "usage": self.usage,
            "wall_time": self.wall_time,
            "clamped": self.clamped,
            "substituted": self.substituted,
            "error": self.error,
        }


@dataclass
class SynthesisResult:
    dataset: RelationalDataset
    records: list[dict]  # log records in sample-id order
    completed: int
    failed: int


def _entity_key(sample_id: int) -> str:
    return f"syn-{sample_id:05d}"


def _accumulate_usage(total: dict, usage: dict) -> None:
    for key in ("prompt_tokens", "completion_tokens", "total_tokens"):
        total[key] = total.get(key, 0) + int(usage.get(key, 0) or 0)


def _build_dataset(
    source: RelationalDataset, outcomes: dict[int, SampleOutcome]
) -> RelationalDataset:
    rows: dict[str, list[tuple]] = {name: [] for name in source.tables}
    for sample_id in sorted(outcomes):
        outcome = outcomes[sample_id]
        if outcome.status != "ok" or outcome.rows is None:
            continue
        for table, table_rows in outcome.rows.items():
            rows[table].extend(table_rows)
    tables = {
        name: Table(source.tables[name].schema, rows[name]) for name in source.tables
    }
    synthetic = RelationalDataset(
        main_table=source.main_table,
        tables=tables,
        relationships=source.relationships,
        config={
            key: source.config[key] for key in ("discretization",) if key in source.config
        },
    )
    synthetic._reindex()
    return synthetic


def _replay_log(out_dir: Path, source: RelationalDataset) -> dict[int, SampleOutcome]:
    """Rebuild finished outcomes from the log plus the partial CSVs."""
    log_path = out_dir / LOG_FILENAME
    if not log_path.exists():
        return {}
    records: dict[int, dict] = {}
    with open(log_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            records[int(record["sample_id"])] = record

    rows_by_entity: dict[str, dict[str, list[tuple]]] = {}
    partial_config = out_dir / "config.json"
    if partial_config.exists():
        partial = load_dataset(partial_config)
        for table in partial.tables:
            entity_of = partial.entity_of_rows(table)
            for row, entity in zip(partial.tables[table].rows, entity_of):
                rows_by_entity.setdefault(entity, {}).setdefault(table, []).append(row)

    outcomes: dict[int, SampleOutcome] = {}
    for sample_id, record in records.items():
        status = record["status"]
        rows = rows_by_entity.get(record["entity_key"])
        if status == "ok" and rows is None:
            continue  # logged but never checkpointed: redo it
        outcomes[sample_id] = SampleOutcome(
            sample_id=sample_id,
            entity_key=record["entity_key"],
            status=status,
            attempts=record["attempts"],
            conditioning=record["conditioning"],
            reference_ids=record["reference_ids"],
            references_used=record["references_used"],
            usage=record["usage"],
            wall_time=record["wall_time"],
            clamped=record["clamped"],
            substituted=record["substituted"],
            error=record.get("error"),
            rows={t: list(r) for t, r in rows.items()} if rows else None,
        )
    return outcomes


def synthesize(
    net: DpBayesNet,
    index: SimilarityIndex,
    dataset: RelationalDataset,
    spec: AnalyticsSpec,
    template: PromptTemplate,
    client: EndpointClient,
    m: int,
    seed: int,
    n_references: int = DEFAULT_REFERENCES,
    regeneration_attempts: int = DEFAULT_REGENERATION_ATTEMPTS,
    out_dir=None,
    resume: bool = False,
    checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY,
) -> SynthesisResult:
    """Produce a synthetic dataset of up to m entities.

    ``dataset`` must be the training split the model was fitted on; the
    spec hash stored in the network guards against mixing artifacts.
    """
    if m < 1:
        raise ValueError(f"sample count must be >= 1, got {m}")
    if net.spec_hash and net.spec_hash != spec.spec_hash:
        raise SpecHashMismatchError(
            f"network was fitted under spec {net.spec_hash[:12]}..., "
            f"got spec {spec.spec_hash[:12]}..."
        )
    if n_references > index.n_rows:
        warnings.warn(
            f"n_references={n_references} exceeds the train size {index.n_rows}; clamping"
        )
        n_references = index.n_rows

    conditioning = net.sample(m, seed)
    schema = compile_schema(dataset, spec)
    renderer = EntityRenderer(dataset, spec)

    out_path: Optional[Path] = None
    log_fh = None
    outcomes: dict[int, SampleOutcome] = {}
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        if resume:
            outcomes = _replay_log(out_path, dataset)
        log_fh = open(out_path / LOG_FILENAME, "a" if resume else "w", encoding="utf-8")

    pending = [i for i in range(1, m + 1) if i not in outcomes]
    since_checkpoint = 0

    def checkpoint() -> None:
        if out_path is not None:
            save_dataset(_build_dataset(dataset, outcomes), out_path)

    def worker(sample_id: int) -> SampleOutcome:
        start = time.monotonic()
        cond = conditioning[sample_id - 1]
        key = _entity_key(sample_id)
        refs = top_n_similar(cond, index, n_references) if n_references else []
        ref_docs = [renderer.render(e) for e in refs]
        prompt, used_refs = fit_synthesis_prompt(
            template, ref_docs, conditioning_lines(spec, cond),
            client.config.context_char_budget,
        )
        usage: dict = {}
        error = None
        attempts_allowed = 1 + regeneration_attempts
        for attempt in range(1, attempts_allowed + 1):
            try:
                response = client.complete(CompletionRequest(prompt, schema, "entity"))
            except StructuredOutputViolation as exc:
                error = str(exc)
                continue
            _accumulate_usage(usage, response.usage)
            try:
                rows, stats = parse_sample(response.text, schema, spec, dataset, key)
            except SchemaViolation as exc:
                error = "; ".join(exc.reasons[:3])
                continue
            return SampleOutcome(
                sample_id, key, "ok", attempt, [int(c) for c in cond], refs,
                len(used_refs), usage, time.monotonic() - start,
                stats.clamped, stats.substituted, None, rows,
            )
        return SampleOutcome(
            sample_id, key, "failed", attempts_allowed, [int(c) for c in cond], refs,
            len(used_refs), usage, time.monotonic() - start, 0, 0, error, None,
        )

    abort: Optional[EndpointError] = None
    if pending:
        workers = min(client.config.max_concurrency, len(pending))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(worker, i) for i in pending]
            try:
                for future in as_completed(futures):
                    outcome = future.result()
                    outcomes[outcome.sample_id] = outcome
                    if log_fh is not None:
                        log_fh.write(json.dumps(outcome.log_record()) + "\n")
                        log_fh.flush()
                    since_checkpoint += 1
                    if since_checkpoint >= checkpoint_every:
                        checkpoint()
                        since_checkpoint = 0
            except EndpointError as exc:
                abort = exc
                for future in futures:
                    future.cancel()

    checkpoint()
    if log_fh is not None:
        log_fh.close()
    if abort is not None:
        raise abort

    synthetic = _build_dataset(dataset, outcomes)
    records = [outcomes[i].log_record() for i in sorted(outcomes)]
    completed = sum(1 for r in records if r["status"] == "ok")
    return SynthesisResult(
        dataset=synthetic,
        records=records,
        completed=completed,
        failed=len(records) - completed,
    )
