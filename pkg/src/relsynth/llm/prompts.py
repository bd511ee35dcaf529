"""Prompt templates and rendering.

Templates are plain UTF-8 text with angle-bracket placeholders:

* ``<samples_n>`` — number of reference entities
* ``<samples>``   — JSON array of reference entities
* ``<seed>``      — conditioning values, one ``name: value`` line each
* ``<eval>``      — the candidate entity under evaluation

Synthesis prompts order persona, references, conditioning, instruction, and
guidelines; evaluation prompts order persona, references, task, candidate.
When no references are passed, the paragraph(s) carrying the reference
placeholders are dropped whole. Rendering with any placeholder left behind
is an error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..analytics import AnalyticsSpec
from ..errors import ConfigError, PromptBudgetError

PLACEHOLDERS = ("<samples_n>", "<samples>", "<seed>", "<eval>")
BUNDLED_TEMPLATES = ("hospital_synthesis", "hospital_evaluation")


@dataclass(frozen=True)
class PromptTemplate:
    text: str
    name: str = "<inline>"

    @classmethod
    def from_file(cls, path) -> "PromptTemplate":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"missing prompt template: {path}")
        return cls(text=path.read_text(encoding="utf-8"), name=str(path))

    @classmethod
    def bundled(cls, name: str) -> "PromptTemplate":
        if name not in BUNDLED_TEMPLATES:
            raise ConfigError(f"no bundled template {name!r}; have {BUNDLED_TEMPLATES}")
        text = resources.files("relsynth").joinpath(f"templates/{name}.txt").read_text("utf-8")
        return cls(text=text, name=name)


def _drop_reference_blocks(text: str) -> str:
    blocks = text.split("\n\n")
    kept = [b for b in blocks if "<samples>" not in b and "<samples_n>" not in b]
    return "\n\n".join(kept)


def _check_resolved(text: str) -> str:
    for token in PLACEHOLDERS:
        if token in text:
            raise ConfigError(f"unresolved placeholder {token} in rendered prompt")
    return text


def _substitute_references(text: str, references: Sequence[dict]) -> str:
    if not references:
        return _drop_reference_blocks(text)
    text = text.replace("<samples_n>", str(len(references)))
    return text.replace("<samples>", json.dumps(list(references), indent=2))


def render_synthesis_prompt(
    template: PromptTemplate,
    references: Sequence[dict],
    conditioning: Union[str, Sequence[str]],
) -> str:
    """Persona, references, conditioning values, instruction, guidelines."""
    text = _substitute_references(template.text, references)
    if not isinstance(conditioning, str):
        conditioning = "\n".join(conditioning)
    return _check_resolved(text.replace("<seed>", conditioning))


def render_eval_prompt(
    template: PromptTemplate, references: Sequence[dict], candidate: dict
) -> str:
    """Persona, real references, rating task, candidate last."""
    text = _substitute_references(template.text, references)
    return _check_resolved(text.replace("<eval>", json.dumps(candidate, indent=2)))


def conditioning_lines(spec: AnalyticsSpec, row: Union[Sequence[int], np.ndarray]) -> list[str]:
    """One ``name: value`` line per non-null analytics cell of a sampled row."""
    if len(row) != len(spec.columns):
        raise ConfigError(
            f"conditioning row has {len(row)} cells, expected {len(spec.columns)}"
        )
    lines = []
    for col, code in zip(spec.columns, row):
        code = int(code)
        if col.codec.nullable and code == col.codec.null_code:
            continue
        if code == col.codec.unknown_code:
            continue
        lines.append(f"{col.display}: {col.codec.decode_label(code)}")
    return lines


def _fit_to_budget(render, references: Sequence[dict], char_budget: Optional[int]):
    refs = list(references)
    while True:
        text = render(refs)
        if char_budget is None or len(text) <= char_budget:
            return text, refs
        if not refs:
            raise PromptBudgetError(
                f"prompt is {len(text)} chars with no references left; "
                f"budget is {char_budget}"
            )
        refs.pop()  # least similar reference goes first


def fit_synthesis_prompt(
    template: PromptTemplate,
    references: Sequence[dict],
    conditioning: Union[str, Sequence[str]],
    char_budget: Optional[int] = None,
) -> tuple[str, list[dict]]:
    """Render within a character budget, dropping trailing references first."""
    return _fit_to_budget(
        lambda refs: render_synthesis_prompt(template, refs, conditioning),
        references,
        char_budget,
    )


def fit_eval_prompt(
    template: PromptTemplate,
    references: Sequence[dict],
    candidate: dict,
    char_budget: Optional[int] = None,
) -> tuple[str, list[dict]]:
    return _fit_to_budget(
        lambda refs: render_eval_prompt(template, refs, candidate),
        references,
        char_budget,
    )
