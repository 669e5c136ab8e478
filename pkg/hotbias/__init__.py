"""Retrieval-based contextual biasing for prompt-conditioned ASR.

This package retrieves a small set of candidate hotwords for an utterance from
a large vocabulary, renders them into a bias prompt, decodes jointly with and
without that prompt, and evaluates the result (recall@k, KER, SACC). It also
covers vocabulary filtering against an ASR oracle, fuzzy retrieval variants,
the training-mixture sampler and the GRPO reward and loss math.
"""

from __future__ import annotations

from hotbias.config import FuzzyOptions, RadaOptions, RunConfig
from hotbias.decoder import (
    BeamConfig,
    BiasSensitiveScorer,
    Hypothesis,
    beam_search,
    joint_beam_search,
)
from hotbias.embedder import NgramTextEncoder, embed_audio, embed_text
from hotbias.enums import HypothesisSource, RetrievalArm, Script, VariantKind
from hotbias.exceptions import (
    AuthenticationError,
    ConfigError,
    DecodingError,
    DimensionMismatchError,
    EmbeddingError,
    HotbiasError,
    IndexFormatError,
    NetworkError,
    OracleError,
    RateLimitError,
    ServerError,
    StageError,
    ValidationError,
)
from hotbias.models import Hotword, MixtureSample, SynthSpec, Utterance, Vocabulary
from hotbias.pipeline import Pipeline, run_full
from hotbias.prompt import build_prompt, parse_prompt
from hotbias.remote_oracle import RemoteAsrOracle
from hotbias.retriever import build_index, query_topk

__version__ = "0.1.0"

__all__ = [
    "AuthenticationError",
    "BeamConfig",
    "BiasSensitiveScorer",
    "ConfigError",
    "DecodingError",
    "DimensionMismatchError",
    "EmbeddingError",
    "FuzzyOptions",
    "Hotword",
    "HotbiasError",
    "Hypothesis",
    "HypothesisSource",
    "IndexFormatError",
    "MixtureSample",
    "NetworkError",
    "NgramTextEncoder",
    "OracleError",
    "Pipeline",
    "RadaOptions",
    "RateLimitError",
    "RemoteAsrOracle",
    "RetrievalArm",
    "RunConfig",
    "Script",
    "ServerError",
    "StageError",
    "SynthSpec",
    "Utterance",
    "ValidationError",
    "VariantKind",
    "Vocabulary",
    "__version__",
    "beam_search",
    "build_index",
    "build_prompt",
    "embed_audio",
    "embed_text",
    "joint_beam_search",
    "parse_prompt",
    "query_topk",
    "run_full",
]
