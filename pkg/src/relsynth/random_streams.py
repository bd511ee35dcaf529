"""Named random substreams so each pipeline stage is independently reproducible."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, label: str) -> np.random.Generator:
    """Generator for a named substream of the run seed.

    The same (seed, label) pair always yields the same stream, and distinct
    labels yield independent streams, so e.g. the entity split does not
    perturb network fitting.
    """
    tag = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))
