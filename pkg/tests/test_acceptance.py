"""Acceptance checks for the whole pipeline, one test per criterion.

Each test prints a single ``CRITERION n: PASS/FAIL`` line (run pytest with
``-s`` to watch them live; with captured output pytest shows the lines for
failed tests and `-rA` shows them for passing ones).

Criterion 8 exercises a real language-model endpoint and is therefore
optional: it runs only when the environment variable
``RELSYNTH_LIVE_ENDPOINT`` names an endpoint config JSON (same format as
the CLI ``--endpoint`` file). It is informational and never gates CI.
"""

import copy
import json
import os
import time
from fractions import Fraction

import numpy as np
import pytest
from jsonschema import Draft202012Validator
from scipy import stats as scipy_stats

from relsynth.analytics import build_analytics_spec, encode_with_spec
from relsynth.cli import main
from relsynth.dataset import filter_entities, load_dataset, split_holdout
from relsynth.errors import SchemaViolation
from relsynth.evaluate import (
    build_eval_encoding,
    chi2_aggregate,
    enumerate_pairs,
    evaluate_statistics,
    kl_aggregate,
    kl_to_score,
    pair_codes,
    realism_evaluate,
)
from relsynth.llm.client import EndpointClient, EndpointConfig
from relsynth.llm.mock import MockEndpoint
from relsynth.llm.parsing import parse_sample
from relsynth.llm.prompts import PromptTemplate
from relsynth.llm.schema import compile_schema, entity_to_json
from relsynth.pgm import fit_network
from relsynth.similarity import build_index, similarity_score, top_n_similar
from relsynth.toyset import (
    chain_columns,
    chain_true_joint,
    encoded_from_codes,
    generate_toy_dataset,
)

from test_dataset import write_dataset

LIVE_VAR = "RELSYNTH_LIVE_ENDPOINT"


def _verdict(n: int, ok: bool, detail: str) -> None:
    print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {n} failed: {detail}"


# ------------------------------------------------------------ criterion 1

def test_criterion_1_privacy_budget_is_exact():
    """Every fit's noise account sums to the requested ε at bit level."""
    rng = np.random.default_rng(20240817)
    start = time.perf_counter()
    exact = 0
    for trial in range(100):
        d = int(rng.integers(1, 9))
        n_rows = int(rng.integers(30, 80))
        domains = [int(rng.integers(2, 6)) for _ in range(d)]
        codes = np.stack(
            [rng.integers(0, dom, size=n_rows) for dom in domains], axis=1
        )
        encoded = encoded_from_codes(codes, [f"c{i}" for i in range(d)], domains)
        epsilon = float(rng.uniform(0.05, 8.0))
        net = fit_network(
            encoded,
            epsilon=epsilon,
            degree_bound=int(rng.integers(1, 4)),
            seed=trial,
            structure_share=float(rng.uniform(0.1, 0.9)),
        )
        exact += net.noise_account.total_exact() == Fraction(epsilon)
    elapsed = time.perf_counter() - start
    _verdict(
        1,
        exact == 100 and elapsed < 60.0,
        f"{exact}/100 random configs spent exactly ε (bit-level), {elapsed:.1f}s",
    )


# ------------------------------------------------------------ criterion 2

def _pair_tvs(sample: np.ndarray, true_joint: np.ndarray) -> list[float]:
    dims = true_joint.shape
    tvs = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        axis_out = ({0, 1, 2} - {i, j}).pop()
        true_pair = true_joint.sum(axis=axis_out)
        joint = np.bincount(
            sample[:, i] * dims[j] + sample[:, j], minlength=dims[i] * dims[j]
        ).reshape(dims[i], dims[j]) / len(sample)
        tvs.append(0.5 * float(np.abs(joint - true_pair).sum()))
    return tvs


def test_criterion_2_network_matches_known_marginals():
    """Sampled 2-way marginals track the generator's exact ones."""
    start = time.perf_counter()
    n = m = 50_000
    encoded = encoded_from_codes(chain_columns(n, seed=11), ["a", "b", "c"], [4, 3, 5])
    true_joint = chain_true_joint()

    clean_net = fit_network(encoded, epsilon=None, noise_disabled=True, seed=1)
    clean_tvs = _pair_tvs(clean_net.sample(m, seed=2), true_joint)

    dp_net = fit_network(encoded, epsilon=2.0, seed=1)
    dp_tvs = _pair_tvs(dp_net.sample(m, seed=2), true_joint)

    elapsed = time.perf_counter() - start
    _verdict(
        2,
        max(clean_tvs) < 0.05 and max(dp_tvs) < 0.15 and elapsed < 300.0,
        f"noise-free max TV {max(clean_tvs):.4f} < 0.05, "
        f"ε=2 max TV {max(dp_tvs):.4f} < 0.15 at N=m=50k, {elapsed:.1f}s",
    )


# ------------------------------------------------------------ criterion 3

def test_criterion_3_similarity_matches_brute_force():
    """top_n_similar equals an explicit per-row rescore, ties included."""
    rng = np.random.default_rng(99)
    start = time.perf_counter()
    matches = 0
    for case in range(200):
        n_rows = int(rng.integers(1, 1001))
        n_cols = int(rng.integers(1, 6))
        domains = [int(rng.integers(2, 5)) for _ in range(n_cols)]
        codes = np.stack(
            [rng.integers(0, dom, size=n_rows) for dom in domains], axis=1
        )
        ids = [f"row-{i:04d}" for i in range(n_rows)]
        index = build_index(
            encoded_from_codes(codes, [f"c{i}" for i in range(n_cols)], domains), ids
        )
        query = np.array([rng.integers(0, dom) for dom in domains])
        n = int(rng.integers(1, min(50, n_rows) + 1))

        got = top_n_similar(query, index, n)
        scores = [similarity_score(codes[i], query, index) for i in range(n_rows)]
        order = sorted(range(n_rows), key=lambda i: (-scores[i], i))
        matches += got == [ids[i] for i in order[:n]]
    elapsed = time.perf_counter() - start
    _verdict(
        3,
        matches == 200 and elapsed < 60.0,
        f"{matches}/200 random cases identical to brute force "
        f"(exact tie order), {elapsed:.1f}s",
    )


# ------------------------------------------------------------ criterion 4

def _random_relational_dataset(tmp_path, rng, case: int):
    """A small random two-or-three-table dataset written to disk."""
    n_entities = int(rng.integers(40, 90))
    categories = ["alpha", "beta", "gamma", "delta"]

    def cat(k):
        return categories[int(rng.integers(0, k))]

    main_rows = [
        (f"m{i:03d}", cat(int(rng.integers(2, 5))), int(rng.integers(0, 8)))
        for i in range(n_entities)
    ]
    tables = {
        "main": (
            "mid",
            [("mid", "key", False), ("flavor", "categorical", False),
             ("level", "numeric-integer", False)],
            main_rows,
        )
    }
    rels = []
    for c in range(int(rng.integers(1, 3))):
        name = f"child{c}"
        rows = []
        serial = 0
        for i in range(n_entities):
            for _ in range(int(rng.integers(0, 4))):
                serial += 1
                rows.append((f"{name}-{serial:04d}", f"m{i:03d}",
                             cat(3), int(rng.integers(0, 6))))
            if not rows:  # guarantee at least one child row overall
                serial += 1
                rows.append((f"{name}-{serial:04d}", f"m{i:03d}", cat(3), 0))
        tables[name] = (
            "cid",
            [("cid", "key", False), ("mid", "key", False),
             ("tag", "categorical", False), ("step", "numeric-integer", False)],
            rows,
        )
        kind = "sequential" if rng.random() < 0.5 else "associative"
        rel = {"child": name, "parent": "main", "foreign_key": "mid", "kind": kind}
        if kind == "sequential":
            rel["order_by"] = "step"
        rels.append(rel)
    out = tmp_path / f"case{case}"
    out.mkdir()
    return load_dataset(write_dataset(out, tables, rels, main_table="main"))


def _kl_pair_oracle(enc_a, enc_b, pair) -> float:
    a1, b1 = (v.astype(np.int64) for v in pair_codes(enc_a, pair))
    a2, b2 = (v.astype(np.int64) for v in pair_codes(enc_b, pair))
    da = enc_a.histogram_sizes[pair.col_a]
    db = enc_a.histogram_sizes[pair.col_b]
    h1 = np.bincount(a1 * db + b1, minlength=da * db) + 0.5
    h2 = np.bincount(a2 * db + b2, minlength=da * db) + 0.5
    p, q = h1 / h1.sum(), h2 / h2.sum()
    return 1.0 / (1.0 + max(0.0, float(np.sum(p * np.log(p / q)))))


def _tree_oracle(scored: list[tuple[str, str, float]]) -> float:
    by_table: dict[tuple[str, str], list[float]] = {}
    for category, table, score in scored:
        by_table.setdefault((category, table), []).append(score)
    by_category: dict[str, list[float]] = {}
    for (category, _), scores in by_table.items():
        by_category.setdefault(category, []).append(sum(scores) / len(scores))
    means = [sum(v) / len(v) for v in by_category.values()]
    return sum(means) / len(means)


def _chi2_column_oracle(enc_a, enc_b, table: str, column: str) -> float:
    size = enc_a.histogram_sizes[column]
    ha = np.bincount(enc_a.tables[table][column].astype(np.int64), minlength=size)
    hb = np.bincount(enc_b.tables[table][column].astype(np.int64), minlength=size)
    keep = (ha + hb) > 0
    if keep.sum() <= 1:
        return 1.0
    obs = np.stack([ha[keep], hb[keep]])
    return float(scipy_stats.chi2_contingency(obs, correction=False).pvalue)


def test_criterion_4_metric_self_tests(tmp_path, toy_train, toy_spec):
    failures = []

    if kl_to_score(0.0) != 1.0 or kl_to_score(1.0) != 0.5:
        failures.append("score map endpoints")

    enc = build_eval_encoding(toy_train, toy_spec)
    pairs = enumerate_pairs(toy_train, toy_spec)
    if kl_aggregate(enc, enc, pairs)["aggregate"] != 1.0:
        failures.append("self KL != 1.0")
    if chi2_aggregate(enc, enc)["aggregate"] != 1.0:
        failures.append("self chi2 != 1.0")

    codes = np.array([0] * 7 + [1] * 4 + [2] * 9)
    from relsynth.evaluate import chi2_column

    if chi2_column(codes, codes.copy(), histogram_size=4) != 1.0:
        failures.append("identical histograms P != 1.0")

    rng = np.random.default_rng(4)
    agreements = 0
    for case in range(20):
        ds = _random_relational_dataset(tmp_path, rng, case)
        split = split_holdout(ds, 0.5, seed=case)
        half_a = filter_entities(ds, split.train_entities)
        half_b = filter_entities(ds, split.holdout_entities)
        spec = build_analytics_spec(half_a)
        enc_a = build_eval_encoding(half_a, spec)
        enc_b = build_eval_encoding(half_b, spec)

        kl = kl_aggregate(enc_a, enc_b, enumerate_pairs(ds, spec))
        kl_ok = all(
            p["score"] == pytest.approx(
                _kl_pair_oracle(enc_a, enc_b, _pair_of(p)), rel=1e-12
            )
            for p in kl["pairs"]
        ) and kl["aggregate"] == pytest.approx(
            _tree_oracle([(p["category"], p["table"], p["score"]) for p in kl["pairs"]]),
            rel=1e-12,
        )

        chi2 = chi2_aggregate(enc_a, enc_b)
        chi2_ok = all(
            c["p_value"] == pytest.approx(
                _chi2_column_oracle(enc_a, enc_b, c["table"], c["column"]), rel=1e-9
            )
            for c in chi2["columns"]
        ) and chi2["aggregate"] == pytest.approx(
            _tree_oracle([("all", c["table"], c["p_value"]) for c in chi2["columns"]]),
            rel=1e-12,
        )
        agreements += kl_ok and chi2_ok
    if agreements != 20:
        failures.append(f"averaging tree oracle agreed on {agreements}/20 schemas")

    _verdict(
        4,
        not failures,
        "self-comparisons exactly 1.0, score map pinned, averaging tree matches "
        "an independent oracle on 20 random schemas"
        if not failures
        else "; ".join(failures),
    )


def _pair_of(entry: dict):
    from relsynth.evaluate import ColumnPair

    return ColumnPair(
        category=entry["category"],
        table=entry["table"],
        col_a=entry["col_a"],
        col_b=entry["col_b"],
        lag=entry.get("lag", 0),
    )


# ------------------------------------------------------------ criterion 5

def test_criterion_5_end_to_end_with_mock(tmp_path):
    start = time.perf_counter()
    data_dir = tmp_path / "data"
    generate_toy_dataset(data_dir, entities=400, seed=7)
    fit_dir = tmp_path / "fit"
    out_dir = tmp_path / "synthetic"

    # plumbing check: fit without noise so the mock's nearest-reference echo
    # tracks the training marginals (privacy noise is covered by criterion 2)
    assert main(["fit", "--data", str(data_dir), "--out", str(fit_dir),
                 "--noise-disabled", "--seed", "3"]) == 0

    endpoint_cfg = tmp_path / "endpoint.json"
    with MockEndpoint() as ep:
        endpoint_cfg.write_text(json.dumps(
            {"url": ep.url, "model": "mock-model",
             "auth_env_var": "RELSYNTH_TEST_TOKEN", "backoff_base": 0.0}
        ))
        rc = main(["sample", "--fit", str(fit_dir), "--data", str(data_dir),
                   "--endpoint", str(endpoint_cfg), "--out", str(out_dir),
                   "-m", "100", "--seed", "1"])
    assert rc == 0

    log = [json.loads(line)
           for line in (out_dir / "synthesis_log.jsonl").read_text().splitlines()]
    all_valid = len(log) == 100 and all(r["status"] == "ok" for r in log)

    # load_dataset re-validates keys and foreign-key resolution in full
    synthetic = load_dataset(out_dir / "config.json")
    integrity = synthetic.entity_count == 100

    original = load_dataset(data_dir / "config.json")
    split = json.loads((fit_dir / "split.json").read_text())
    train = filter_entities(original, split["train_entities"])
    spec = build_analytics_spec(train, json.loads(
        (data_dir / "config.json").read_text())["discretization"])
    chi2 = evaluate_statistics(train, synthetic, spec).chi2["aggregate"]

    elapsed = time.perf_counter() - start
    _verdict(
        5,
        all_valid and integrity and chi2 >= 0.5 and elapsed < 120.0,
        f"100/100 schema-valid, referential integrity intact, "
        f"χ² aggregate vs train {chi2:.3f} ≥ 0.5, {elapsed:.1f}s",
    )


# ------------------------------------------------------------ criterion 6

def _mutate(doc: dict, rng: np.random.Generator):
    doc = copy.deepcopy(doc)
    admissions = [a for a in doc.get("admission", []) if isinstance(a, dict)]
    transfers = [t for a in admissions for t in a.get("transfer", [])
                 if isinstance(t, dict)]
    objects = [doc] + admissions + transfers
    target = objects[int(rng.integers(0, len(objects)))]
    keys = [k for k in target.keys()]
    op = int(rng.integers(0, 10))
    if op == 0 or not keys:
        return doc  # unchanged: stays valid
    key = keys[int(rng.integers(0, len(keys)))]
    if op == 1:
        del target[key]  # invalid only if the key was required
    elif op == 2:
        target[key] = True  # booleans are never integers or numbers here
    elif op == 3:
        target[key] = None  # explicit null is always rejected
    elif op == 4:
        target[key] = "zzz-not-a-real-category"
    elif op == 5:
        target[key] = 13.5
    elif op == 6:
        target[key] = [1, 2]
    elif op == 7:
        target["unrequested_extra"] = {"x": 1}  # extra properties stay valid
    elif op == 8:
        target[key] = 41.0  # a float with integral value is a valid integer
    elif op == 9:
        return [doc]  # wrong top-level type
    return doc


def test_criterion_6_parser_matches_oracle(toy_train, toy_spec):
    schema = compile_schema(toy_train, toy_spec)
    oracle = Draft202012Validator(schema)
    rng = np.random.default_rng(6)
    ids = list(toy_train.entity_ids)

    agree = accepted = rejected = 0
    for i in range(1000):
        base = entity_to_json(toy_train, toy_spec, ids[int(rng.integers(0, len(ids)))])
        doc = _mutate(base, rng)
        text = json.dumps(doc)
        try:
            parse_sample(text, schema, toy_spec, toy_train, f"syn-{i:05d}")
            ours = True
        except SchemaViolation:
            ours = False
        theirs = oracle.is_valid(json.loads(text))
        agree += ours == theirs
        accepted += ours and theirs
        rejected += (not ours) and (not theirs)
    _verdict(
        6,
        agree == 1000,
        f"1000 fuzzed documents: {accepted} accepted and {rejected} rejected "
        f"by both the parser and the independent validator ({agree}/1000 agree)",
    )


# ------------------------------------------------------------ criterion 7

def test_criterion_7_scripted_judge_and_disjoint_baseline(
    toy_dataset, toy_split, toy_train, toy_holdout, toy_spec, toy_index, make_client
):
    template = PromptTemplate.bundled("hospital_evaluation")
    with MockEndpoint(scores=(4,)) as ep:
        constant = realism_evaluate(
            toy_holdout, toy_train, toy_spec, toy_index, template,
            make_client(ep.url), cap=10,
        )
    with MockEndpoint(scores=(1, 2, 3, 4, 5)) as ep:
        cycle = realism_evaluate(
            toy_holdout, toy_train, toy_spec, toy_index, template,
            make_client(ep.url), cap=5,
        )
    script_ok = (
        constant["mean"] == 4.0
        and constant["histogram"] == {"1": 0, "2": 0, "3": 0, "4": 10, "5": 0}
        and cycle["mean"] == 3.0
        and cycle["histogram"] == {"1": 1, "2": 1, "3": 1, "4": 1, "5": 1}
    )
    overlap = set(toy_holdout.entity_ids) & set(toy_train.entity_ids)
    covered = set(toy_split.train_entities) | set(toy_split.holdout_entities)
    disjoint_ok = not overlap and covered == set(toy_dataset.entity_ids)
    _verdict(
        7,
        script_ok and disjoint_ok,
        "scripted judge means/histograms reproduced exactly; "
        f"baseline candidates disjoint from {len(toy_train.entity_ids)} train ids",
    )


# ------------------------------------------------------------ criterion 8

@pytest.mark.skipif(
    LIVE_VAR not in os.environ,
    reason=f"optional live check: set {LIVE_VAR} to an endpoint config JSON "
    "(see README); informational only, never gates CI",
)
def test_criterion_8_live_endpoint(tmp_path, toy_train, toy_spec, toy_net, toy_index):
    from relsynth.assemble import synthesize

    config = EndpointConfig.from_dict(
        json.loads(open(os.environ[LIVE_VAR], encoding="utf-8").read())
    )
    client = EndpointClient(config)
    result = synthesize(
        net=toy_net,
        index=toy_index,
        dataset=toy_train,
        spec=toy_spec,
        template=PromptTemplate.bundled("hospital_synthesis"),
        client=client,
        m=25,
        seed=0,
        regeneration_attempts=2,
    )
    rate = result.completed / 25
    _verdict(
        8,
        rate >= 0.8,
        f"{result.completed}/25 live samples parsed within 2 regenerations "
        f"({rate:.0%} ≥ 80%)",
    )
