"""Shared enums for hotbias."""

from __future__ import annotations

from enum import Enum


class HypothesisSource(str, Enum):
    """Which prompt produced a decoded hypothesis.

    - `context_free`: decoded under the prompt with no biasing words.
    - `biased`: decoded under the prompt listing retrieved biasing words.
    """

    CONTEXT_FREE = "context_free"
    BIASED = "biased"


class VariantKind(str, Enum):
    """Perturbation applied when generating a fuzzy hotword variant."""

    SUFFIX = "suffix"
    PREFIX = "prefix"
    PARTIAL = "partial"
    CASE = "case"


class RetrievalArm(str, Enum):
    """Row of the retrieval table.

    Arms are cumulative: `rada` filters the vocabulary, `fuzzy` filters it and
    additionally indexes alias rows.
    """

    BASE = "base"
    RADA = "rada"
    FUZZY = "fuzzy"


class Script(str, Enum):
    """Tokenization regime of a piece of text."""

    SPACED = "spaced"
    UNSEGMENTED = "unsegmented"
