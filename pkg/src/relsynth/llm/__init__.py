"""Structured-output LLM integration: schema compilation, prompt rendering,
an HTTP chat-completion client, response parsing, and a deterministic mock
endpoint for tests."""

from .client import (  # noqa: F401
    CompletionRequest,
    CompletionResponse,
    EndpointClient,
    EndpointConfig,
)
from .parsing import ParseStats, parse_sample, validate_instance  # noqa: F401
from .prompts import (  # noqa: F401
    PromptTemplate,
    conditioning_lines,
    render_eval_prompt,
    render_synthesis_prompt,
)
from .schema import EntityRenderer, compile_schema, entity_to_json, minimal_instance  # noqa: F401
