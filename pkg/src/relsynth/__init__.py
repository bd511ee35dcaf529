"""Differentially private relational data synthesis with an LLM back-end.

The pipeline has three phases:

* **fit** — flatten a relational dataset into one analytics row per entity,
  discretize every column, and fit a differentially private Bayesian
  network over the discretized view;
* **sample** — draw conditioning rows from the network, retrieve the most
  similar real entities, and ask a chat-completion endpoint to write each
  synthetic entity as a schema-constrained JSON document;
* **evaluate** — compare synthetic and real data with aggregated KL and
  χ² statistics and an LLM-judged realism score against a hold-out
  baseline.
"""

from .analytics import (
    AnalyticsColumn,
    AnalyticsSpec,
    EncodedTable,
    build_analytics_spec,
    encode_table_rows,
    encode_with_spec,
)
from .assemble import SampleOutcome, SynthesisResult, synthesize
from .dataset import (
    ColumnSpec,
    HoldoutSplit,
    RelationalDataset,
    Relationship,
    Table,
    TableSchema,
    filter_entities,
    load_dataset,
    save_dataset,
    split_holdout,
)
from .errors import (
    ConfigError,
    DanglingForeignKeyError,
    DataValidationError,
    EndpointError,
    PromptBudgetError,
    RelationshipCycleError,
    RelsynthError,
    SchemaRejectedError,
    SchemaViolation,
    SpecHashMismatchError,
    StructuredOutputViolation,
)
from .evaluate import (
    ColumnPair,
    MetricsReport,
    build_eval_encoding,
    chi2_aggregate,
    chi2_column,
    enumerate_pairs,
    evaluate_statistics,
    kl_aggregate,
    kl_pair,
    kl_to_score,
    realism_evaluate,
)
from .llm import (
    CompletionRequest,
    CompletionResponse,
    EndpointClient,
    EndpointConfig,
    EntityRenderer,
    ParseStats,
    PromptTemplate,
    compile_schema,
    conditioning_lines,
    entity_to_json,
    minimal_instance,
    parse_sample,
    render_eval_prompt,
    render_synthesis_prompt,
    validate_instance,
)
from .pgm import DpBayesNet, NoiseAccount, fit_network, single_column_histograms
from .similarity import SimilarityIndex, build_index, similarity_score, top_n_similar

__version__ = "0.1.0"

__all__ = [
    "AnalyticsColumn",
    "AnalyticsSpec",
    "ColumnPair",
    "ColumnSpec",
    "CompletionRequest",
    "CompletionResponse",
    "ConfigError",
    "DanglingForeignKeyError",
    "DataValidationError",
    "DpBayesNet",
    "EncodedTable",
    "EndpointClient",
    "EndpointConfig",
    "EndpointError",
    "EntityRenderer",
    "HoldoutSplit",
    "MetricsReport",
    "NoiseAccount",
    "ParseStats",
    "PromptBudgetError",
    "PromptTemplate",
    "RelationalDataset",
    "Relationship",
    "RelationshipCycleError",
    "RelsynthError",
    "SampleOutcome",
    "SchemaRejectedError",
    "SchemaViolation",
    "SimilarityIndex",
    "SpecHashMismatchError",
    "StructuredOutputViolation",
    "SynthesisResult",
    "Table",
    "TableSchema",
    "build_analytics_spec",
    "build_eval_encoding",
    "build_index",
    "chi2_aggregate",
    "chi2_column",
    "compile_schema",
    "conditioning_lines",
    "encode_table_rows",
    "encode_with_spec",
    "entity_to_json",
    "enumerate_pairs",
    "evaluate_statistics",
    "filter_entities",
    "fit_network",
    "kl_aggregate",
    "kl_pair",
    "kl_to_score",
    "load_dataset",
    "minimal_instance",
    "parse_sample",
    "realism_evaluate",
    "render_eval_prompt",
    "render_synthesis_prompt",
    "save_dataset",
    "similarity_score",
    "single_column_histograms",
    "split_holdout",
    "synthesize",
    "top_n_similar",
    "validate_instance",
]
