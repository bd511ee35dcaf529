"""Score a synthetic dataset: aggregated KL, χ² P values, judged realism.

Three comparisons are made here:

1. hold-out entities vs the training split — a "real vs real" reading that
   anchors what good scores look like at this sample size,
2. mock-synthesized entities vs the training split, and
3. realism scores from a scripted judge, for the synthetic entities and for
   the hold-out baseline (real entities the model never saw).

Run from the repository root:  python3 demos/03_evaluate_quality.py
"""

import json
import os
import tempfile
from pathlib import Path

from relsynth.analytics import build_analytics_spec, encode_with_spec
from relsynth.assemble import synthesize
from relsynth.dataset import filter_entities, load_dataset, split_holdout
from relsynth.evaluate import evaluate_statistics, realism_evaluate
from relsynth.llm.client import EndpointClient, EndpointConfig
from relsynth.llm.mock import MockEndpoint
from relsynth.llm.prompts import PromptTemplate
from relsynth.pgm import fit_network
from relsynth.similarity import build_index
from relsynth.toyset import generate_toy_dataset

os.environ.setdefault("RELSYNTH_DEMO_TOKEN", "demo-token")


def show(report, title):
    print(f"\n{title}")
    print(f"  KL score (aggregate):      {report.kl['aggregate']:.4f}")
    for category, value in sorted(report.kl["per_category"].items()):
        print(f"    {category:<22} {value:.4f}")
    print(f"  chi-squared P (aggregate): {report.chi2['aggregate']:.4f}")
    for table, value in sorted(report.chi2["per_table"].items()):
        print(f"    {table:<22} {value:.4f}")


# ---------------------------------------------------------------- setup

workdir = Path(tempfile.mkdtemp(prefix="relsynth-demo-"))
config_path = generate_toy_dataset(workdir / "data", entities=600, seed=7)
dataset = load_dataset(config_path)
split = split_holdout(dataset, fraction=0.2, seed=1)
train = filter_entities(dataset, split.train_entities)
holdout = filter_entities(dataset, split.holdout_entities)
discretization = json.loads(config_path.read_text())["discretization"]
spec = build_analytics_spec(train, discretization)
encoded = encode_with_spec(train, spec)
print(f"train {train.entity_count} / holdout {holdout.entity_count} entities")

# ------------------------------------------------- 1. real-vs-real anchor

show(evaluate_statistics(train, holdout, spec), "holdout vs train (anchor):")

# ------------------------------------------------- 2. synthetic vs train

net = fit_network(encoded, epsilon=None, noise_disabled=True, seed=3,
                  spec_hash=spec.spec_hash)
index = build_index(encoded, train.entity_ids)
with MockEndpoint() as endpoint:
    client = EndpointClient(EndpointConfig.from_dict({
        "url": endpoint.url, "model": "mock-model",
        "auth_env_var": "RELSYNTH_DEMO_TOKEN", "max_concurrency": 4,
    }))
    synthetic = synthesize(
        net=net, index=index, dataset=train, spec=spec,
        template=PromptTemplate.bundled("hospital_synthesis"),
        client=client, m=100, seed=5,
    ).dataset
show(evaluate_statistics(train, synthetic, spec),
     "mock-synthesized vs train (the mock echoes similar real entities):")

# ------------------------------------------------- 3. judged realism

judge_template = PromptTemplate.bundled("hospital_evaluation")
with MockEndpoint(scores=(4, 5, 4, 3)) as endpoint:  # scripted verdicts
    client = EndpointClient(EndpointConfig.from_dict({
        "url": endpoint.url, "model": "mock-judge",
        "auth_env_var": "RELSYNTH_DEMO_TOKEN", "max_concurrency": 4,
    }))
    scored = realism_evaluate(synthetic, train, spec, index, judge_template,
                              client, cap=20)
    baseline = realism_evaluate(holdout, train, spec, index, judge_template,
                                client, cap=20)

print("\nscripted judge (cycle 4,5,4,3 — stands in for a real model):")
print(f"  synthetic mean {scored['mean']:.2f} over {scored['count']} judged, "
      f"histogram {scored['histogram']}")
print(f"  holdout baseline mean {baseline['mean']:.2f} over "
      f"{baseline['count']} judged")
print("\nwith a real endpoint the baseline anchors the synthetic score: "
      "close means indistinguishable to the judge.")
