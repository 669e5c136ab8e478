"""Tests for hotbias.models."""

from __future__ import annotations

import pytest

from hotbias.exceptions import ValidationError
from hotbias.models import Hotword, MixtureSample, SynthSpec, Utterance, Vocabulary
from hotbias.textmetrics import KeywordAnnotation


def test_hotword_normalizes_surface() -> None:
    """Surfaces are stored normalized."""

    assert Hotword("h1", "  QWEN ").surface == "qwen"
    with pytest.raises(ValidationError):
        Hotword("h1", "   ")
    with pytest.raises(ValidationError):
        Hotword("", "qwen")


def test_hotword_from_dict_success() -> None:
    """Vocabulary rows parse and serialize back."""

    data = {"id": "m1", "surface": "tongyi", "domain": "media"}
    hotword = Hotword.from_dict(data)
    assert hotword == Hotword("m1", "tongyi", "media")
    assert hotword.to_dict() == data
    assert Hotword.from_dict({"id": "m2", "surface": "qwen"}).domain is None


@pytest.mark.parametrize(
    "data",
    [
        {"surface": "qwen"},
        {"id": 3, "surface": "qwen"},
        {"id": "m1", "surface": "qwen", "domain": 5},
    ],
)
def test_hotword_from_dict_invalid(data: dict) -> None:
    """Missing or mistyped fields are validation errors."""

    with pytest.raises(ValidationError) as exc:
        Hotword.from_dict(data)
    assert exc.value.details == data


def test_vocabulary_lookup_and_order() -> None:
    """Vocabularies keep ingestion order and index by id."""

    vocab = Vocabulary.of([Hotword("b", "tongyi"), Hotword("a", "qwen")])
    assert vocab.surfaces() == ("tongyi", "qwen")
    assert "a" in vocab and "z" not in vocab
    assert vocab.get("a").surface == "qwen"
    assert [e.id for e in vocab] == ["b", "a"]
    with pytest.raises(ValidationError):
        vocab.get("z")


def test_vocabulary_rejects_duplicates() -> None:
    """Ids and normalized surfaces must be unique."""

    with pytest.raises(ValidationError):
        Vocabulary.of([Hotword("a", "qwen"), Hotword("a", "tongyi")])
    with pytest.raises(ValidationError):
        Vocabulary.of([Hotword("a", "qwen"), Hotword("b", "QWEN")])


def test_vocabulary_extended_and_without() -> None:
    """Growing and shrinking return new vocabularies."""

    vocab = Vocabulary.of([Hotword("a", "qwen")])
    grown = vocab.extended([Hotword("b", "tongyi")])
    assert len(grown) == 2 and len(vocab) == 1
    assert grown.without(["a"]).surfaces() == ("tongyi",)
    with pytest.raises(ValidationError):
        grown.without(["missing"])
    with pytest.raises(ValidationError):
        grown.extended([Hotword("c", "qwen")])


def test_utterance_round_trip() -> None:
    """Manifest rows parse and serialize with sorted keywords."""

    row = {
        "id": "u1",
        "text": "both qwen and tongyi were trending",
        "keywords": ["tongyi", "qwen"],
        "audio_seed": 4,
        "noise_level": 0.1,
    }
    utterance = Utterance.from_dict(row)
    assert utterance.is_positive
    assert utterance.keywords.keywords == frozenset({"qwen", "tongyi"})
    assert utterance.to_dict() == {**row, "keywords": ["qwen", "tongyi"]}


def test_utterance_defaults_to_keywordless() -> None:
    """Rows without keywords are general utterances."""

    utterance = Utterance.from_dict({"id": "g1", "text": "hello there"})
    assert not utterance.is_positive
    assert utterance.audio_seed == 0
    assert utterance.noise_level == 0.0


@pytest.mark.parametrize(
    "row",
    [
        {"id": "u1"},
        {"id": "u1", "text": "hi", "keywords": "qwen"},
        {"id": "u1", "text": "hi", "audio_seed": "1"},
        {"id": "u1", "text": "hi", "audio_seed": True},
        {"id": "u1", "text": "hi", "noise_level": "low"},
    ],
)
def test_utterance_from_dict_invalid(row: dict) -> None:
    """Malformed manifest rows are rejected."""

    with pytest.raises(ValidationError):
        Utterance.from_dict(row)


def test_utterance_keywords_must_occur_in_text() -> None:
    """An annotated keyword absent from the transcript is an error."""

    with pytest.raises(ValidationError) as exc:
        Utterance("u1", "open tongyi", KeywordAnnotation("u1", frozenset({"qwen"})))
    assert exc.value.details == {"id": "u1", "missing": ["qwen"]}
    with pytest.raises(ValidationError):
        Utterance("u1", "   ", KeywordAnnotation("u1"))
    with pytest.raises(ValidationError):
        Utterance("u1", "hi", KeywordAnnotation("u1"), noise_level=-0.1)


def test_synth_spec_round_trip() -> None:
    """Spec rows resolve their hotword through the vocabulary."""

    vocab = Vocabulary.of([Hotword("m1", "qwen")])
    row = {"hotword_id": "m1", "carriers": ["please say qwen", "qwen again"], "seed": 3}
    spec = SynthSpec.from_dict(row, vocab)
    assert spec.hotword is vocab.get("m1")
    assert spec.carrier_sentences == ("please say qwen", "qwen again")
    assert spec.to_dict() == row


def test_synth_spec_validation() -> None:
    """Carriers must exist and mention the hotword; ids must be known."""

    hotword = Hotword("m1", "qwen")
    with pytest.raises(ValidationError):
        SynthSpec(hotword, ())
    with pytest.raises(ValidationError):
        SynthSpec(hotword, ("no mention here",))
    vocab = Vocabulary.of([hotword])
    with pytest.raises(ValidationError):
        SynthSpec.from_dict({"hotword_id": "zz", "carriers": ["qwen"]}, vocab)
    with pytest.raises(ValidationError):
        SynthSpec.from_dict({"hotword_id": "m1", "carriers": "qwen"}, vocab)


def test_mixture_sample_contract() -> None:
    """Biased samples list 1-10 hotwords; non-biased ones list none."""

    sample = MixtureSample("u1", True, ("qwen",), True)
    assert sample.to_dict() == {
        "utterance_id": "u1",
        "is_biased": True,
        "prompt_hotwords": ["qwen"],
        "contains_target": True,
    }
    with pytest.raises(ValidationError):
        MixtureSample("u1", True, ())
    with pytest.raises(ValidationError):
        MixtureSample("u1", True, tuple(f"w{i}" for i in range(11)))
    with pytest.raises(ValidationError):
        MixtureSample("g1", False, ("qwen",))
