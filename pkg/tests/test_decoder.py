"""Tests for hotbias.decoder."""

from __future__ import annotations

import itertools
import math
from typing import Dict, FrozenSet, List, Tuple

import numpy as np
import pytest

from hotbias.decoder import (
    EOS,
    BeamConfig,
    BiasSensitiveScorer,
    BigramScorer,
    EchoScorer,
    Hypothesis,
    LogProbs,
    Prefix,
    TableScorer,
    beam_search,
    joint_beam_search,
    rank_hypotheses,
    rank_joint,
    sequence_log_score,
)
from hotbias.enums import HypothesisSource
from hotbias.exceptions import DecodingError, ValidationError
from hotbias.prompt import build_prompt, context_free_prompt

TOKENS = ("a", "b", "c")
FREE = context_free_prompt()


class _FixedScorer:
    """Returns the same distribution at every step."""

    def __init__(self, dist: Dict[str, float], vocab: FrozenSet[str]) -> None:
        self._dist = dist
        self._vocab = vocab

    def vocab(self) -> FrozenSet[str]:
        return self._vocab

    def next_log_probs(self, prompt: str, audio_key: str, prefix: Prefix) -> LogProbs:
        return self._dist


def _brute_force(
    scorer: TableScorer, depth: int, length_penalty: float
) -> List[Hypothesis]:
    """Every complete or depth-capped sequence, scored by direct summation."""

    pool = []
    for length in range(depth + 1):
        for tokens in itertools.product(TOKENS, repeat=length):
            for finished in (True, False):
                if finished == (length == depth):
                    continue
                score = sequence_log_score(
                    scorer, "p", "x", tokens, finished=finished
                )
                if score > -math.inf:
                    pool.append(Hypothesis(tokens, score, finished=finished))
    return rank_hypotheses(pool, length_penalty)


def test_wide_beam_matches_exhaustive_search() -> None:
    """With a beam wider than the search space the result is exhaustive."""

    rng = np.random.default_rng(0)
    cfg = BeamConfig(beam_width=64, max_len=3, length_penalty=0.6)
    for trial in range(50):
        scorer = TableScorer.random(rng, TOKENS, depth=3)
        found = beam_search(scorer, "p", "x", cfg)
        expected = _brute_force(scorer, 3, cfg.length_penalty)
        assert [h.sort_tokens for h in found] == [
            h.sort_tokens for h in expected
        ], trial
        assert [h.log_score for h in found] == pytest.approx(
            [h.log_score for h in expected]
        )


def test_wider_beam_escapes_garden_path() -> None:
    """Greedy search commits to the locally best token; a wider beam does not."""

    scorer = TableScorer(
        ["a", "b", "x", "y"],
        {
            (None, None, ()): {"a": 0.55, "b": 0.45},
            (None, None, ("a",)): {"x": 0.5, "y": 0.5},
            (None, None, ("b",)): {"x": 1.0},
        },
    )
    greedy = beam_search(scorer, "p", "k", BeamConfig(beam_width=1, max_len=4))
    wide = beam_search(scorer, "p", "k", BeamConfig(beam_width=2, max_len=4))
    assert greedy[0].tokens == ("a", "x")
    assert wide[0].tokens == ("b", "x")
    assert wide[0].finished
    assert wide[0].log_score == pytest.approx(math.log(0.45))


def test_beam_search_is_thread_count_invariant() -> None:
    """Expanding with several threads yields identical output."""

    rng = np.random.default_rng(1)
    cfg = BeamConfig(beam_width=3, max_len=4)
    for _ in range(10):
        scorer = TableScorer.random(rng, TOKENS, depth=4)
        assert beam_search(scorer, "p", "x", cfg) == beam_search(
            scorer, "p", "x", cfg, workers=4
        )


def test_beam_search_stops_at_max_len() -> None:
    """Hypotheses still live after max_len steps are returned unfinished."""

    scorer = _FixedScorer({"a": 0.0}, frozenset({"a", EOS}))
    result = beam_search(scorer, "p", "x", BeamConfig(beam_width=2, max_len=5))
    assert len(result) == 1
    assert result[0].tokens == ("a",) * 5
    assert not result[0].finished


def test_echo_scorer_reproduces_transcript() -> None:
    """The echo scorer decodes its transcript exactly."""

    scorer = EchoScorer({"u1": "we use qwen daily"})
    best = beam_search(scorer, FREE, "u1", BeamConfig())[0]
    assert best.text == "we use qwen daily"
    assert best.finished
    assert best.log_score == 0.0


@pytest.mark.parametrize(
    "dist",
    [
        {"a": math.log(0.5), "zzz": math.log(0.5)},
        {"a": math.log(0.5), EOS: math.log(0.4)},
        {"a": 0.5},
        {"a": float("nan")},
    ],
)
def test_invalid_distributions_raise(dist: Dict[str, float]) -> None:
    """Foreign tokens, bad mass, positive and NaN values are decoding errors."""

    scorer = _FixedScorer(dist, frozenset({"a", EOS}))
    with pytest.raises(DecodingError):
        beam_search(scorer, "p", "x", BeamConfig(max_len=2))


def test_beam_config_validation() -> None:
    """Width and length must be positive and the penalty non-negative."""

    with pytest.raises(ValidationError):
        BeamConfig(beam_width=0)
    with pytest.raises(ValidationError):
        BeamConfig(max_len=0)
    with pytest.raises(ValidationError):
        BeamConfig(length_penalty=-0.1)


def test_joint_search_with_equal_prompts_matches_plain_search() -> None:
    """Identical prompts make joint decoding return the plain beam's top."""

    rng = np.random.default_rng(2)
    cfg = BeamConfig(beam_width=3, max_len=4)
    for trial in range(50):
        scorer = TableScorer.random(rng, TOKENS, depth=4)
        plain = beam_search(scorer, "p", "x", cfg)[0]
        joint = joint_beam_search(scorer, "p", "p", "x", cfg)
        assert joint.sort_tokens == plain.sort_tokens, trial
        assert joint.log_score == plain.log_score


def _bias_scorer() -> BiasSensitiveScorer:
    return BiasSensitiveScorer({"u1": "we use qwen daily"}, {"qwen": "qwin"})


def test_bias_scorer_prefers_substitute_without_prompt() -> None:
    """The rare word loses to its confusion under the context-free prompt."""

    best = beam_search(_bias_scorer(), FREE, "u1", BeamConfig())[0]
    assert best.text == "we use qwin daily"


def test_joint_search_recovers_prompted_keyword() -> None:
    """Listing the keyword lets the joint search emit it."""

    biased = build_prompt(["qwen"]).rendered
    best = joint_beam_search(_bias_scorer(), FREE, biased, "u1", BeamConfig())
    assert best.text == "we use qwen daily"
    assert best.finished


def test_joint_search_ignores_irrelevant_prompt() -> None:
    """A distractor-only prompt leaves the context-free answer in place."""

    biased = build_prompt(["tongyi"]).rendered
    ranked = rank_joint(_bias_scorer(), FREE, biased, "u1", BeamConfig())
    assert ranked[0].hypothesis.text == "we use qwin daily"
    assert ranked[0].hypothesis.source is HypothesisSource.CONTEXT_FREE
    texts: List[Tuple[str, bool]] = [
        (c.hypothesis.text, c.hypothesis.finished) for c in ranked
    ]
    assert len(texts) == len(set(texts))


def test_biased_decoding_hallucinates_near_word_that_joint_rejects() -> None:
    """A prompted hotword replaces a similar-sounding word unless decoded jointly."""

    scorer = BiasSensitiveScorer(
        {"g1": "the sign outside said qwin"}, {"qwen": "qwin"}
    )
    biased = build_prompt(["qwen"]).rendered
    cfg = BeamConfig()
    assert beam_search(scorer, FREE, "g1", cfg)[0].text == "the sign outside said qwin"
    hallucinated = beam_search(scorer, biased, "g1", cfg)[0]
    assert hallucinated.text == "the sign outside said qwen"
    best = joint_beam_search(scorer, FREE, biased, "g1", cfg)
    assert best.text == "the sign outside said qwin"
    assert best.source is HypothesisSource.CONTEXT_FREE


def test_bias_scorer_near_word_needs_the_hotword_in_the_prompt() -> None:
    """Without the hotword listed, a near word keeps its plain distribution."""

    scorer = BiasSensitiveScorer({"g1": "said qwin"}, {"qwen": "qwin"})
    other = build_prompt(["tongyi"]).rendered
    dist = scorer.next_log_probs(other, "g1", ("said",))
    assert set(dist) == {"qwin", EOS}
    assert "qwen" in scorer.vocab()


def test_bias_scorer_skips_unusable_confusions(
    caplog: pytest.LogCaptureFixture,
) -> None:
    """Multi-token and duplicate confusion entries are dropped with a warning."""

    with caplog.at_level("WARNING", logger="hotbias.decoder"):
        scorer = BiasSensitiveScorer(
            {"u1": "通义千问 qwen"},
            {"通义千问": "通义千文", "qwen": "qwin", "QWEN": "qwan", "x": "x"},
        )
    assert len(caplog.records) == 3
    assert set(scorer.next_log_probs(FREE, "u1", ())) == {"通", EOS}
    assert set(scorer.next_log_probs(FREE, "u1", tuple("通义千问"))) == {
        "qwen",
        "qwin",
        EOS,
    }


def test_bias_scorer_validates_probabilities() -> None:
    """Confusion pairs must leave room for EOS."""

    with pytest.raises(ValidationError):
        BiasSensitiveScorer({}, {}, boosted=(0.9, 0.2))
    with pytest.raises(ValidationError):
        BiasSensitiveScorer({}, {}, plain=1.0)


def test_bigram_scorer_boosts_prompt_tokens() -> None:
    """Prompt hotwords gain probability after renormalization."""

    scorer = BigramScorer(["we use qwen", "we use tongyi"])
    free = scorer.next_log_probs(FREE, "x", ("we", "use"))
    biased = scorer.next_log_probs(build_prompt(["qwen"]).rendered, "x", ("we", "use"))
    assert biased["qwen"] > free["qwen"]
    assert sum(math.exp(v) for v in biased.values()) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        BigramScorer([])


def test_table_scorer_rejects_unknown_tokens() -> None:
    """Rows may only use declared tokens."""

    with pytest.raises(ValidationError):
        TableScorer(["a"], {(None, None, ()): {"b": 1.0}})
