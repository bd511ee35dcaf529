"""From relational schema to JSON grammar and back, plus similarity lookups.

1. compile the dataset's schema into the JSON-schema subset sent to the
   endpoint (objects, arrays, enums, required lists — nothing assertive
   beyond that, so any structured-output implementation can honor it),
2. render a real entity as the JSON the model is asked to imitate,
3. parse model output back into keyed rows — including what happens to
   out-of-range numbers, unparseable dates, and invalid documents,
4. show how the similarity index weights matches by value rarity.

Run from the repository root:  python3 demos/04_grammar_round_trip.py
"""

import json
import tempfile
from pathlib import Path

from relsynth.analytics import build_analytics_spec, encode_with_spec
from relsynth.dataset import filter_entities, load_dataset, split_holdout
from relsynth.errors import SchemaViolation
from relsynth.llm.parsing import parse_sample
from relsynth.llm.schema import compile_schema, entity_to_json
from relsynth.similarity import build_index, top_n_similar
from relsynth.toyset import generate_toy_dataset

# ---------------------------------------------------------------- setup

workdir = Path(tempfile.mkdtemp(prefix="relsynth-demo-"))
config_path = generate_toy_dataset(workdir / "data", entities=400, seed=7)
dataset = load_dataset(config_path)
split = split_holdout(dataset, fraction=0.2, seed=1)
train = filter_entities(dataset, split.train_entities)
spec = build_analytics_spec(train, json.loads(config_path.read_text())["discretization"])

# ------------------------------------------------- 1. compiled grammar

schema = compile_schema(train, spec)
print("compiled JSON schema (trimmed):")
trimmed = json.dumps(schema, indent=2).splitlines()
print("\n".join("  " + line for line in trimmed[:16]))
print(f"  ... ({len(trimmed)} lines total)")

# ------------------------------------------------- 2. a rendered entity

entity_id = train.entity_ids[0]
doc = entity_to_json(train, spec, entity_id)
print(f"\nentity {entity_id} rendered for prompting:")
print(json.dumps(doc, indent=2))

# ------------------------------------------------- 3. parsing back

rows, stats = parse_sample(json.dumps(doc), schema, spec, train, "syn-00001")
print("\nround trip back to keyed rows:")
for table, table_rows in rows.items():
    for row in table_rows:
        print(f"  {table:<10} {row}")
print(f"  stats: clamped={stats.clamped} substituted={stats.substituted}")

wild = dict(doc, age=500)  # age far outside anything seen in training
wild["admission"] = [dict(a, admit_date="not a date") for a in doc["admission"]]
rows, stats = parse_sample(json.dumps(wild), schema, spec, train, "syn-00002")
print("\nsame document with age=500 and a broken admit_date:")
print(f"  person row: {rows['person'][0]}")
print(f"  stats: clamped={stats.clamped} substituted={stats.substituted}")
print(f"  notes: {stats.notes}")

try:
    parse_sample(json.dumps({"age": True}), schema, spec, train, "syn-00003")
except SchemaViolation as exc:
    print("\nan invalid document is rejected with reasons:")
    for reason in exc.reasons:
        print(f"  - {reason}")

# ------------------------------------------------- 4. similarity weights

encoded = encode_with_spec(train, spec)
index = build_index(encoded, train.entity_ids)
query = encoded.matrix()[0]
print(f"\nentities most similar to {train.entity_ids[0]}'s analytics row:")
print(f"  {top_n_similar(query, index, 5)}")
print("matches on rare values outweigh matches on common ones: each agreeing")
print("column contributes one over that value's training frequency.")
