"""Tests for hotbias.prompt."""

from __future__ import annotations

import random

import pytest

from hotbias.exceptions import ValidationError
from hotbias.models import Hotword
from hotbias.prompt import (
    DEFAULT_TEMPLATE,
    PromptTemplate,
    build_prompt,
    context_free_prompt,
    parse_prompt,
)
from hotbias.retriever import RetrievalResult, ScoredHotword


def test_build_prompt_renders_reference_string() -> None:
    """Two hotwords render bit-exactly with the default template."""

    prompt = build_prompt(["qwen", "tongyi"])
    assert prompt.rendered == (
        "Transcribe the audio into text. These biasing words you may use: "
        "⟨qwen⟩ ⟨tongyi⟩"
    )
    assert prompt.hotwords == ("qwen", "tongyi")
    assert not prompt.is_context_free


def test_empty_candidates_give_context_free_prompt() -> None:
    """No hotwords renders the instruction alone."""

    prompt = build_prompt([])
    assert prompt.is_context_free
    assert prompt.rendered == "Transcribe the audio into text."
    assert context_free_prompt() == prompt.rendered
    assert parse_prompt(prompt.rendered) == []


def test_build_prompt_keeps_retrieval_rank_order() -> None:
    """Retrieval results are listed in rank order."""

    result = RetrievalResult(
        candidates=(
            ScoredHotword(Hotword("b", "tongyi"), 0.9),
            ScoredHotword(Hotword("a", "qwen"), 0.4),
        )
    )
    assert build_prompt(result).hotwords == ("tongyi", "qwen")


def test_parse_prompt_round_trips_random_lists() -> None:
    """Parsing recovers the exact list, including spaces and punctuation."""

    rng = random.Random(17)
    alphabet = "abcxyz 通义.-2"
    for _ in range(1000):
        words = [
            "".join(rng.choices(alphabet, k=rng.randint(1, 8)))
            for _ in range(rng.randint(0, 10))
        ]
        words = [w for w in words if w]
        assert parse_prompt(build_prompt(words).rendered) == words


@pytest.mark.parametrize("word", ["", "a⟨b", "c⟩"])
def test_build_prompt_rejects_unplaceable_hotwords(word: str) -> None:
    """Empty hotwords and bracket characters are rejected."""

    with pytest.raises(ValidationError):
        build_prompt(["qwen", word])


def test_custom_template_wording() -> None:
    """A custom template changes the instruction and lead."""

    template = PromptTemplate(instruction="Write it down.", bias_lead="Hints:")
    assert build_prompt(["qwen"], template).rendered == (
        "Write it down. Hints: ⟨qwen⟩"
    )
    assert context_free_prompt(template) == "Write it down."
    assert DEFAULT_TEMPLATE.instruction == "Transcribe the audio into text."


def test_template_rejects_brackets_and_blanks() -> None:
    """Template parts must be non-empty and bracket free."""

    with pytest.raises(ValidationError):
        PromptTemplate(instruction="  ")
    with pytest.raises(ValidationError):
        PromptTemplate(bias_lead="use ⟨these⟩")
