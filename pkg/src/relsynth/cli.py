"""Command-line front-end: ``fit``, ``sample``, ``evaluate``, ``report``.

A thin sequential driver over the library modules. Exit codes: 0 on
success, 2 for usage or configuration problems, 3 for endpoint failures,
4 for data validation failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .analytics import AnalyticsSpec, build_analytics_spec, encode_with_spec
from .assemble import (
    DEFAULT_CHECKPOINT_EVERY,
    DEFAULT_REFERENCES,
    DEFAULT_REGENERATION_ATTEMPTS,
    synthesize,
)
from .dataset import RelationalDataset, filter_entities, load_dataset, split_holdout
from .errors import (
    ConfigError,
    DataValidationError,
    EndpointError,
    PromptBudgetError,
    RelsynthError,
    SchemaViolation,
    SpecHashMismatchError,
    StructuredOutputViolation,
)
from .evaluate import (
    DEFAULT_REALISM_CAP,
    MetricsReport,
    evaluate_statistics,
    realism_evaluate,
)
from .llm.client import EndpointClient, EndpointConfig
from .llm.prompts import PromptTemplate
from .pgm import DpBayesNet, fit_network, single_column_histograms
from .similarity import build_index

DEFAULT_HOLDOUT_FRACTION = 0.2

FIT_FILES = (
    "discretization.json",
    "network.json",
    "histograms.json",
    "split.json",
    "analytics_summary.json",
    "fit_info.json",
)


def _config_path(path) -> Path:
    """Accept either a dataset directory or its config.json."""
    p = Path(path)
    if p.is_dir():
        p = p / "config.json"
    if not p.exists():
        raise ConfigError(f"dataset config not found: {p}")
    return p


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path):
    if not path.exists():
        raise ConfigError(f"expected artifact not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def _load_fit(fit_dir) -> tuple[AnalyticsSpec, DpBayesNet, dict, dict]:
    d = Path(fit_dir)
    spec = AnalyticsSpec.from_dict(_read_json(d / "discretization.json"))
    net = DpBayesNet.from_dict(_read_json(d / "network.json"))
    histograms = {
        name: np.asarray(values, dtype=float)
        for name, values in _read_json(d / "histograms.json").items()
    }
    split = _read_json(d / "split.json")
    return spec, net, histograms, split


def _make_client(endpoint_path) -> EndpointClient:
    if endpoint_path is None:
        raise ConfigError("an --endpoint config file is required for this command")
    return EndpointClient(EndpointConfig.from_file(endpoint_path))


def _template(path, default_name: str) -> PromptTemplate:
    if path is not None:
        return PromptTemplate.from_file(path)
    return PromptTemplate.bundled(default_name)


# ------------------------------------------------------------ subcommands

def cmd_fit(args) -> int:
    dataset = load_dataset(_config_path(args.data))
    split = split_holdout(dataset, args.holdout_fraction, args.seed)
    train = filter_entities(dataset, split.train_entities)
    spec = build_analytics_spec(train, dataset.config.get("discretization", {}))
    encoded = encode_with_spec(train, spec)

    start = time.monotonic()
    net = fit_network(
        encoded,
        args.epsilon,
        degree_bound=args.degree_bound,
        seed=args.seed,
        structure_share=args.structure_share,
        cell_cap=args.cell_cap,
        noise_disabled=args.noise_disabled,
        spec_hash=spec.spec_hash,
    )
    wall = time.monotonic() - start
    histograms = single_column_histograms(encoded)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "discretization.json", spec.to_dict())
    _write_json(out / "network.json", net.to_dict())
    _write_json(out / "histograms.json", {k: [float(x) for x in v] for k, v in histograms.items()})
    _write_json(
        out / "split.json",
        {
            "fraction": split.fraction,
            "seed": args.seed,
            "train_entities": list(split.train_entities),
            "holdout_entities": list(split.holdout_entities),
        },
    )
    _write_json(
        out / "analytics_summary.json",
        {
            "main_table": spec.main_table,
            "spec_hash": spec.spec_hash,
            "n_rows": encoded.n_rows,
            "columns": [
                {
                    "name": c.name,
                    "display": c.display,
                    "table": c.table,
                    "role": c.role,
                    "domain_size": c.codec.domain_size,
                    "width": c.codec.width,
                }
                for c in spec.columns
            ],
            "unknown_counts": {k: int(v) for k, v in encoded.unknown_counts.items()},
        },
    )
    _write_json(
        out / "fit_info.json",
        {
            "epsilon": args.epsilon,
            "degree_bound": args.degree_bound,
            "structure_share": args.structure_share,
            "seed": args.seed,
            "holdout_fraction": args.holdout_fraction,
            "noise_disabled": args.noise_disabled,
            "epsilon_spent_exact": str(net.noise_account.total_exact()),
            "fit_wall_time_s": wall,
        },
    )
    print(f"fitted network over {len(spec.columns)} columns, {encoded.n_rows} train rows")
    print(f"privacy budget spent (exact): {net.noise_account.total_exact()}")
    print(f"fit wall time: {wall:.2f}s")
    print(f"artifacts written to {out}")
    return 0


def cmd_sample(args) -> int:
    spec, net, histograms, split = _load_fit(args.fit)
    dataset = load_dataset(_config_path(args.data))
    train = filter_entities(dataset, split["train_entities"])
    encoded = encode_with_spec(train, spec)
    index = build_index(encoded, train.entity_ids, histograms=histograms)
    template = _template(args.template, "hospital_synthesis")
    client = _make_client(args.endpoint)

    result = synthesize(
        net,
        index,
        train,
        spec,
        template,
        client,
        m=args.m,
        seed=args.seed,
        n_references=args.references,
        regeneration_attempts=args.regeneration_attempts,
        out_dir=args.out,
        resume=args.resume,
        checkpoint_every=args.checkpoint_every,
    )
    print(f"completed {result.completed} of {args.m} entities ({result.failed} failed)")
    print(f"synthetic dataset written to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    spec, _net, histograms, split = _load_fit(args.fit)
    original = load_dataset(_config_path(args.data))
    synthetic = load_dataset(_config_path(args.synthetic))

    report = evaluate_statistics(original, synthetic, spec)

    if args.skip_realism:
        report.notes["realism"] = "skipped on request"
    else:
        client = _make_client(args.endpoint)
        template = _template(args.eval_template, "hospital_evaluation")
        train = filter_entities(original, split["train_entities"])
        holdout = filter_entities(original, split["holdout_entities"])
        index = build_index(encode_with_spec(train, spec), train.entity_ids, histograms=histograms)
        report.realism = realism_evaluate(
            synthetic, train, spec, index, template, client,
            n_references=args.references, cap=args.realism_cap,
        )
        report.baseline_realism = realism_evaluate(
            holdout, train, spec, index, template, client,
            n_references=args.references, cap=args.realism_cap,
        )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", report.to_dict())
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["metric", "detail", "value"])
        writer.writeheader()
        writer.writerows(report.breakdown_rows())
    _print_report(report.to_dict())
    print(f"metrics written to {out}")
    return 0


def cmd_report(args) -> int:
    path = Path(args.metrics)
    if path.is_dir():
        path = path / "metrics.json"
    _print_report(_read_json(path))
    return 0


def _print_report(payload: dict) -> None:
    kl, chi2 = payload["kl"], payload["chi2"]
    print(f"KL score (aggregate):    {kl['aggregate']:.4f}")
    for cat, value in kl["per_category"].items():
        print(f"  {cat:<22} {value:.4f}")
    print(f"chi-squared P (aggregate): {chi2['aggregate']:.4f}")
    for table, value in chi2["per_table"].items():
        print(f"  {table:<22} {value:.4f}")
    skipped = len(kl.get("skipped", [])) + len(chi2.get("skipped", []))
    if skipped:
        print(f"  ({skipped} comparisons skipped for lack of observations)")
    for label, fragment in (("realism", payload.get("realism")),
                            ("baseline realism", payload.get("baseline_realism"))):
        if not fragment:
            continue
        mean = fragment["mean"]
        mean_text = f"{mean:.2f}" if mean is not None else "n/a"
        print(f"{label}: mean {mean_text} over {fragment['count']} judged "
              f"({fragment['skipped']} skipped)")
        histogram = " ".join(f"{k}:{v}" for k, v in sorted(fragment["histogram"].items()))
        print(f"  histogram {histogram}")


# ------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relsynth",
        description="Differentially private relational data synthesis with an LLM back-end.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the private network and write model artifacts")
    p.add_argument("--data", required=True, help="dataset config.json (or its directory)")
    p.add_argument("--out", required=True, help="output directory for model artifacts")
    p.add_argument("--epsilon", type=float, default=None, help="total privacy budget")
    p.add_argument("--degree-bound", type=int, default=3, help="max parents per node")
    p.add_argument("--structure-share", type=float, default=0.5,
                   help="fraction of the budget spent on structure selection")
    p.add_argument("--holdout-fraction", type=float, default=DEFAULT_HOLDOUT_FRACTION,
                   help="fraction of entities held out of training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cell-cap", type=float, default=1e6,
                   help="max CPT cells when choosing candidate parent sets")
    p.add_argument("--noise-disabled", action="store_true",
                   help="fit without privacy noise (argmax selection, exact counts)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", help="synthesize entities through the endpoint")
    p.add_argument("--fit", required=True, help="directory written by `fit`")
    p.add_argument("--data", required=True, help="original dataset config.json")
    p.add_argument("--endpoint", required=True, help="endpoint config JSON")
    p.add_argument("--out", required=True, help="output directory for the synthetic dataset")
    p.add_argument("-m", type=int, required=True, help="number of entities to synthesize")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--references", type=int, default=DEFAULT_REFERENCES,
                   help="similar real entities included per prompt")
    p.add_argument("--regeneration-attempts", type=int, default=DEFAULT_REGENERATION_ATTEMPTS,
                   help="extra attempts per entity after a rejected response")
    p.add_argument("--checkpoint-every", type=int, default=DEFAULT_CHECKPOINT_EVERY)
    p.add_argument("--resume", action="store_true",
                   help="continue a partially completed run in --out")
    p.add_argument("--template", default=None, help="synthesis prompt template file")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="score a synthetic dataset against the original")
    p.add_argument("--fit", required=True, help="directory written by `fit`")
    p.add_argument("--data", required=True, help="original dataset config.json")
    p.add_argument("--synthetic", required=True, help="synthetic dataset directory")
    p.add_argument("--out", required=True, help="output directory for metrics files")
    p.add_argument("--skip-realism", action="store_true",
                   help="compute statistics only; no endpoint needed")
    p.add_argument("--endpoint", default=None, help="endpoint config JSON (for realism)")
    p.add_argument("--realism-cap", type=int, default=DEFAULT_REALISM_CAP,
                   help="max judged entities per side")
    p.add_argument("--references", type=int, default=DEFAULT_REFERENCES)
    p.add_argument("--eval-template", default=None, help="judge prompt template file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="pretty-print a metrics file")
    p.add_argument("--metrics", required=True, help="metrics.json (or its directory)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EndpointError, StructuredOutputViolation) as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return 3
    except (DataValidationError, SchemaViolation) as exc:
        print(f"data validation error: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, PromptBudgetError, SpecHashMismatchError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (RelsynthError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
