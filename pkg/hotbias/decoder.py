"""Beam search over pluggable token scorers and joint prompt decoding.

A scorer returns the next-token distribution for `(prompt, audio_key,
prefix)` as a mapping of log-probabilities. Tokens missing from the mapping
have probability zero. Every hypothesis keeps its tokens without the
end-of-sequence marker; `finished` records whether EOS was emitted.

Ordering is total: candidates are ranked by score, then by their token
sequence (EOS included for finished ones), so every search is deterministic.
"""

from __future__ import annotations

import heapq
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Protocol,
    Sequence,
    Tuple,
)

import numpy as np

from hotbias.enums import HypothesisSource
from hotbias.exceptions import DecodingError, ValidationError
from hotbias.prompt import parse_prompt
from hotbias.textmetrics import render_tokens, tokenize

logger = logging.getLogger(__name__)

EOS = "</s>"
NORMALIZATION_TOLERANCE = 1e-6

Prefix = Tuple[str, ...]
LogProbs = Mapping[str, float]


class TokenScorer(Protocol):
    """Next-token distribution provider."""

    def next_log_probs(self, prompt: str, audio_key: str, prefix: Prefix) -> LogProbs:
        """Log-probabilities of the next token; exponentiated they sum to 1."""

    def vocab(self) -> FrozenSet[str]:
        """Every token the scorer can emit, EOS included."""


@dataclass(frozen=True)
class BeamConfig:
    """Beam search settings.

    Raises:
        ValidationError: If `beam_width` or `max_len` is below 1 or
            `length_penalty` is negative.
    """

    beam_width: int = 4
    max_len: int = 32
    length_penalty: float = 0.6

    def __post_init__(self) -> None:
        if self.beam_width < 1 or self.max_len < 1 or self.length_penalty < 0:
            raise ValidationError(
                message="BeamConfig needs beam_width >= 1, max_len >= 1 and "
                "length_penalty >= 0.",
                details={
                    "beam_width": self.beam_width,
                    "max_len": self.max_len,
                    "length_penalty": self.length_penalty,
                },
            )


@dataclass(frozen=True)
class Hypothesis:
    """A decoded token sequence and its accumulated log-probability."""

    tokens: Prefix
    log_score: float
    source: HypothesisSource = HypothesisSource.CONTEXT_FREE
    finished: bool = False

    @property
    def length(self) -> int:
        """Number of scored steps (EOS counts as one)."""

        return len(self.tokens) + (1 if self.finished else 0)

    @property
    def sort_tokens(self) -> Prefix:
        """Token sequence used for tie-breaking."""

        return self.tokens + (EOS,) if self.finished else self.tokens

    @property
    def text(self) -> str:
        """Rendered hypothesis text."""

        return render_tokens(self.tokens)

    def normalized_score(self, length_penalty: float) -> float:
        """`log_score / length ** length_penalty` with length floored at 1."""

        return normalize_score(self.log_score, self.length, length_penalty)


def normalize_score(log_score: float, length: int, length_penalty: float) -> float:
    """Length-normalized score used for final rankings."""

    return log_score / (max(1, length) ** length_penalty)


def checked_log_probs(
    scorer: TokenScorer, prompt: str, audio_key: str, prefix: Prefix
) -> LogProbs:
    """Query `scorer` and validate the distribution.

    Raises:
        DecodingError: If a token is outside `scorer.vocab()`, a value is NaN
            or positive, or the probabilities do not sum to 1 within 1e-6.
    """

    dist = scorer.next_log_probs(prompt, audio_key, prefix)
    vocab = scorer.vocab()
    unknown = [token for token in dist if token not in vocab]
    if unknown:
        raise DecodingError(
            message=f"Scorer emitted tokens outside its vocabulary: {unknown[:5]}.",
            details={"prefix": list(prefix)},
        )
    values = np.fromiter(dist.values(), dtype=np.float64, count=len(dist))
    if np.any(np.isnan(values)) or np.any(values > 0):
        raise DecodingError(
            message="Scorer returned invalid log-probabilities.",
            details={"prefix": list(prefix)},
        )
    total = float(np.exp(values).sum())
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise DecodingError(
            message=f"Scorer distribution sums to {total!r}, expected 1.",
            details={"prefix": list(prefix), "prompt": prompt},
        )
    return dist


def _expand(
    scorer: TokenScorer,
    prompt: str,
    audio_key: str,
    hyp: Hypothesis,
    width: int,
) -> List[Hypothesis]:
    dist = checked_log_probs(scorer, prompt, audio_key, hyp.tokens)
    # A parent contributes at most `width` survivors to the global top-width.
    best = heapq.nsmallest(width, dist.items(), key=lambda kv: (-kv[1], kv[0]))
    children = []
    for token, log_prob in best:
        if log_prob == -math.inf:
            continue
        score = hyp.log_score + log_prob
        if token == EOS:
            children.append(Hypothesis(hyp.tokens, score, hyp.source, finished=True))
        else:
            children.append(Hypothesis(hyp.tokens + (token,), score, hyp.source))
    return children


def _rank_key(hyp: Hypothesis) -> Tuple[float, Prefix]:
    return (-hyp.log_score, hyp.sort_tokens)


def beam_search(
    scorer: TokenScorer,
    prompt: str,
    audio_key: str,
    cfg: BeamConfig,
    *,
    source: HypothesisSource = HypothesisSource.CONTEXT_FREE,
    workers: int = 1,
) -> List[Hypothesis]:
    """Breadth-first beam search.

    Each step expands every live hypothesis, keeps the global top
    `beam_width` by log score and moves EOS-terminated ones to the finished
    pool. The search stops once nothing is live or after `max_len` steps;
    hypotheses still live at that point join the pool unfinished.

    Args:
        scorer: Token scorer.
        prompt: Rendered prompt.
        audio_key: Key of the audio the scorer conditions on.
        cfg: Beam settings.
        source: Tag stored on every hypothesis.
        workers: Threads used to expand live hypotheses; output is identical
            for any value.

    Returns:
        Up to `beam_width` hypotheses sorted by normalized score, ties by
        token sequence.

    Raises:
        DecodingError: If the scorer returns an invalid distribution.
    """

    live = [Hypothesis((), 0.0, source)]
    pool: List[Hypothesis] = []
    width = cfg.beam_width
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for _ in range(cfg.max_len):
            if executor is None:
                expanded = [_expand(scorer, prompt, audio_key, h, width) for h in live]
            else:
                expanded = list(
                    executor.map(
                        lambda h: _expand(scorer, prompt, audio_key, h, width), live
                    )
                )
            candidates = [child for children in expanded for child in children]
            survivors = heapq.nsmallest(width, candidates, key=_rank_key)
            pool.extend(h for h in survivors if h.finished)
            live = [h for h in survivors if not h.finished]
            if not live:
                break
    finally:
        if executor is not None:
            executor.shutdown()
    pool.extend(live)
    return rank_hypotheses(pool, cfg.length_penalty)[:width]


def rank_hypotheses(
    hypotheses: Iterable[Hypothesis], length_penalty: float
) -> List[Hypothesis]:
    """Sort by normalized score (descending), then token sequence."""

    return sorted(
        hypotheses,
        key=lambda h: (-h.normalized_score(length_penalty), h.sort_tokens),
    )


def sequence_log_score(
    scorer: TokenScorer,
    prompt: str,
    audio_key: str,
    tokens: Sequence[str],
    *,
    finished: bool,
) -> float:
    """Re-score a token sequence step by step under `prompt`.

    Returns `-inf` when a step has probability zero.
    """

    total = 0.0
    steps: List[str] = list(tokens) + ([EOS] if finished else [])
    for i, token in enumerate(steps):
        dist = checked_log_probs(scorer, prompt, audio_key, tuple(tokens[:i]))
        log_prob = dist.get(token, -math.inf)
        if log_prob == -math.inf:
            return -math.inf
        total += log_prob
    return total


@dataclass(frozen=True)
class JointCandidate:
    """A pooled hypothesis with its normalized score under both prompts."""

    hypothesis: Hypothesis
    free_score: float
    biased_score: float

    @property
    def best(self) -> float:
        """The larger of the two normalized scores."""

        return max(self.free_score, self.biased_score)


class MergeStrategy(Protocol):
    """Ranks the pooled hypotheses of joint decoding."""

    def rank(self, candidates: Sequence[JointCandidate]) -> List[JointCandidate]:
        """Return the candidates best first."""


_SOURCE_ORDER = {HypothesisSource.CONTEXT_FREE: 0, HypothesisSource.BIASED: 1}


class MaxRescoreMerge:
    """Rank by the better of the two prompt scores.

    Ties go to context-free hypotheses, then to the smaller token sequence. A
    sequence found by both beams is kept once, tagged context-free.
    """

    def rank(self, candidates: Sequence[JointCandidate]) -> List[JointCandidate]:
        """Return the candidates best first, duplicates removed."""

        ordered = sorted(
            candidates,
            key=lambda c: (
                -c.best,
                _SOURCE_ORDER[c.hypothesis.source],
                c.hypothesis.sort_tokens,
            ),
        )
        seen = set()
        ranked = []
        for candidate in ordered:
            key = candidate.hypothesis.sort_tokens
            if key in seen:
                continue
            seen.add(key)
            ranked.append(candidate)
        return ranked


def rank_joint(
    scorer: TokenScorer,
    free_prompt: str,
    biased_prompt: str,
    audio_key: str,
    cfg: BeamConfig,
    *,
    strategy: Optional[MergeStrategy] = None,
    workers: int = 1,
) -> List[JointCandidate]:
    """Decode under both prompts and rank the pooled hypotheses.

    Every pooled hypothesis is re-scored under both prompts before `strategy`
    (default `MaxRescoreMerge`) ranks it.
    """

    def decode(item: Tuple[str, HypothesisSource]) -> List[Hypothesis]:
        prompt, source = item
        return beam_search(scorer, prompt, audio_key, cfg, source=source)

    branches = [
        (free_prompt, HypothesisSource.CONTEXT_FREE),
        (biased_prompt, HypothesisSource.BIASED),
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            results = list(pool.map(decode, branches))
    else:
        results = [decode(branch) for branch in branches]

    alpha = cfg.length_penalty
    pooled = []
    for hyp in results[0] + results[1]:
        scores: Dict[HypothesisSource, float] = {}
        for prompt, source in branches:
            if source is hyp.source:
                log_score = hyp.log_score
            else:
                log_score = sequence_log_score(
                    scorer, prompt, audio_key, hyp.tokens, finished=hyp.finished
                )
            scores[source] = normalize_score(log_score, hyp.length, alpha)
        pooled.append(
            JointCandidate(
                hypothesis=hyp,
                free_score=scores[HypothesisSource.CONTEXT_FREE],
                biased_score=scores[HypothesisSource.BIASED],
            )
        )
    return (strategy or MaxRescoreMerge()).rank(pooled)


def joint_beam_search(
    scorer: TokenScorer,
    free_prompt: str,
    biased_prompt: str,
    audio_key: str,
    cfg: BeamConfig,
    *,
    strategy: Optional[MergeStrategy] = None,
    workers: int = 1,
) -> Hypothesis:
    """Best hypothesis of joint context-free / context-conditioned decoding.

    When both prompts are equal the result is the top hypothesis of plain
    `beam_search`.

    Raises:
        DecodingError: If the scorer returns an invalid distribution.
    """

    ranked = rank_joint(
        scorer,
        free_prompt,
        biased_prompt,
        audio_key,
        cfg,
        strategy=strategy,
        workers=workers,
    )
    return ranked[0].hypothesis


# Scorers


def _log(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


def _normalized_logs(probs: Mapping[str, float]) -> Dict[str, float]:
    total = sum(probs.values())
    if total <= 0:
        raise ValidationError(message="A distribution needs positive total mass.")
    return {token: _log(p / total) for token, p in probs.items() if p > 0}


TableKey = Tuple[Optional[str], Optional[str], Prefix]


class TableScorer:
    """Scorer driven by explicit conditional distributions.

    Rows are keyed by `(prompt, audio_key, prefix)`; `None` in the prompt or
    audio slot matches anything. Lookups try the exact key first, then the
    audio-only, prompt-only and prefix-only wildcards. Unmatched prefixes get
    the `fallback` distribution (EOS with probability 1 by default).

    Args:
        tokens: Emittable tokens; EOS is added.
        rows: Probability tables (normalized on construction).
        fallback: Distribution used when no row matches.

    Raises:
        ValidationError: If a row is empty or names a token outside `tokens`.
    """

    def __init__(
        self,
        tokens: Iterable[str],
        rows: Mapping[TableKey, Mapping[str, float]],
        fallback: Optional[Mapping[str, float]] = None,
    ) -> None:
        self._vocab = frozenset(tokens) | {EOS}
        self._rows: Dict[TableKey, Dict[str, float]] = {}
        for key, probs in rows.items():
            unknown = set(probs) - self._vocab
            if unknown:
                raise ValidationError(
                    message=f"Table row uses unknown tokens: {sorted(unknown)}.",
                    details={"prefix": list(key[2])},
                )
            self._rows[(key[0], key[1], tuple(key[2]))] = _normalized_logs(probs)
        self._fallback = _normalized_logs(fallback or {EOS: 1.0})

    def vocab(self) -> FrozenSet[str]:
        """Every token the scorer can emit, EOS included."""

        return self._vocab

    def next_log_probs(self, prompt: str, audio_key: str, prefix: Prefix) -> LogProbs:
        """Most specific matching row, or the fallback."""

        for key in (
            (prompt, audio_key, prefix),
            (None, audio_key, prefix),
            (prompt, None, prefix),
            (None, None, prefix),
        ):
            row = self._rows.get(key)
            if row is not None:
                return row
        return self._fallback

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        tokens: Sequence[str],
        depth: int,
        *,
        prompts: Sequence[Optional[str]] = (None,),
    ) -> "TableScorer":
        """Random dense tables over every prefix shorter than `depth`.

        Each prompt in `prompts` gets its own tables. At depth `depth` the
        fallback forces EOS.
        """

        vocab = list(tokens) + [EOS]
        rows: Dict[TableKey, Mapping[str, float]] = {}
        for prompt in prompts:
            frontier: List[Prefix] = [()]
            for _ in range(depth):
                next_frontier: List[Prefix] = []
                for prefix in frontier:
                    weights = rng.dirichlet(np.ones(len(vocab)))
                    rows[(prompt, None, prefix)] = {
                        t: float(w) for t, w in zip(vocab, weights)
                    }
                    next_frontier.extend(prefix + (t,) for t in tokens)
                frontier = next_frontier
        return cls(tokens, rows)


class EchoScorer:
    """Emits the transcript of the audio with probability 1, then EOS.

    Args:
        transcripts: Reference text per audio key.
    """

    def __init__(self, transcripts: Mapping[str, str]) -> None:
        self._transcripts = {key: tokenize(text) for key, text in transcripts.items()}
        vocab = {token for tokens in self._transcripts.values() for token in tokens}
        self._vocab = frozenset(vocab) | {EOS}

    def vocab(self) -> FrozenSet[str]:
        """Every token the scorer can emit, EOS included."""

        return self._vocab

    def next_log_probs(self, prompt: str, audio_key: str, prefix: Prefix) -> LogProbs:
        """The transcript token at this position, EOS past the end."""

        target = self._transcripts.get(audio_key, ())
        if len(prefix) < len(target):
            return {target[len(prefix)]: 0.0}
        return {EOS: 0.0}


@lru_cache(maxsize=4096)
def _prompt_tokens(prompt: str) -> FrozenSet[str]:
    return frozenset(token for word in parse_prompt(prompt) for token in tokenize(word))


class BiasSensitiveScorer:
    """Toy acoustic-plus-language scorer that reacts to the bias prompt.

    The scorer follows the transcript of the audio position by position. A
    transcript token listed in `confusions` is a rare word: unless the prompt
    lists it, the scorer prefers its confusable substitute. A transcript token
    listed in `near_words` sounds like a hotword: when the prompt lists that
    hotword, the scorer prefers the hotword over what was said. Every other
    position emits the transcript token with high probability.

    Confusion entries must map one token to one different token. Entries that
    do not, and entries repeating an earlier rare token, are skipped with a
    warning.

    Args:
        transcripts: Reference text per audio key.
        confusions: Rare token -> confusable substitute.
        near_words: Spoken token -> hotword it can be misheard as; defaults to
            the inverse of `confusions`.
        boosted: Probabilities `(target, substitute)` when the prompt lists the
            target.
        unboosted: Probabilities `(target, substitute)` otherwise.
        hallucinated: Probabilities `(spoken, hotword)` when the prompt lists
            the hotword a spoken token sounds like.
        plain: Probability of an ordinary transcript token.
    """

    def __init__(
        self,
        transcripts: Mapping[str, str],
        confusions: Mapping[str, str],
        *,
        near_words: Optional[Mapping[str, str]] = None,
        boosted: Tuple[float, float] = (0.8, 0.15),
        unboosted: Tuple[float, float] = (0.35, 0.6),
        hallucinated: Tuple[float, float] = (0.3, 0.65),
        plain: float = 0.95,
    ) -> None:
        for pair in (boosted, unboosted, hallucinated):
            if min(pair) <= 0 or sum(pair) >= 1:
                raise ValidationError(
                    message="Confusion probabilities must be positive and sum "
                    "below 1.",
                    details={"pair": list(pair)},
                )
        if not 0 < plain < 1:
            raise ValidationError(
                message="plain must be in (0, 1).", details={"plain": plain}
            )
        self._transcripts = {key: tokenize(text) for key, text in transcripts.items()}
        self._confusions = _token_pairs(confusions, "confusion")
        if near_words is None:
            near_words = {v: k for k, v in reversed(list(self._confusions.items()))}
        self._near = _token_pairs(near_words, "near-word")
        tokens = {t for seq in self._transcripts.values() for t in seq}
        tokens.update(self._confusions.values())
        tokens.update(self._near.values())
        self._vocab = frozenset(tokens) | {EOS}
        self._boosted = boosted
        self._unboosted = unboosted
        self._hallucinated = hallucinated
        self._plain = plain

    def vocab(self) -> FrozenSet[str]:
        """Every token the scorer can emit, EOS included."""

        return self._vocab

    def next_log_probs(self, prompt: str, audio_key: str, prefix: Prefix) -> LogProbs:
        """Distribution at position `len(prefix)` of the audio's transcript."""

        target = self._transcripts.get(audio_key, ())
        position = len(prefix)
        if position >= len(target):
            return {EOS: 0.0}
        token = target[position]
        listed = _prompt_tokens(prompt)
        substitute = self._confusions.get(token)
        if substitute is not None:
            p_token, p_substitute = (
                self._boosted if token in listed else self._unboosted
            )
            return {
                token: _log(p_token),
                substitute: _log(p_substitute),
                EOS: _log(1.0 - p_token - p_substitute),
            }
        hotword = self._near.get(token)
        if hotword is not None and hotword in listed:
            p_token, p_hotword = self._hallucinated
            return {
                token: _log(p_token),
                hotword: _log(p_hotword),
                EOS: _log(1.0 - p_token - p_hotword),
            }
        return {token: _log(self._plain), EOS: _log(1.0 - self._plain)}


def _token_pairs(pairs: Mapping[str, str], kind: str) -> Dict[str, str]:
    mapping: Dict[str, str] = {}
    for key, value in pairs.items():
        source, replacement = tokenize(key), tokenize(value)
        if len(source) != 1 or len(replacement) != 1 or source == replacement:
            logger.warning(
                "skipping %s %r -> %r: not a one-token swap", kind, key, value
            )
            continue
        if source[0] in mapping:
            logger.warning("skipping %s %r -> %r: duplicate token", kind, key, value)
            continue
        mapping[source[0]] = replacement[0]
    return mapping


class BigramScorer:
    """Add-k smoothed bigram language model over a text corpus.

    The audio key is ignored. Tokens of hotwords listed in the prompt have
    their probability multiplied by `bias_boost` before renormalization.

    Args:
        corpus: Training sentences.
        smoothing: Add-k constant.
        bias_boost: Multiplier for prompt hotword tokens.

    Raises:
        ValidationError: If the corpus is empty or a constant is not positive.
    """

    _BOS = "<s>"

    def __init__(
        self,
        corpus: Iterable[str],
        *,
        smoothing: float = 0.1,
        bias_boost: float = 4.0,
    ) -> None:
        if smoothing <= 0 or bias_boost <= 0:
            raise ValidationError(
                message="smoothing and bias_boost must be positive.",
                details={"smoothing": smoothing, "bias_boost": bias_boost},
            )
        counts: Dict[str, Dict[str, int]] = {}
        tokens = set()
        for sentence in corpus:
            seq = [self._BOS, *tokenize(sentence), EOS]
            tokens.update(seq[1:])
            for previous, current in zip(seq, seq[1:]):
                row = counts.setdefault(previous, {})
                row[current] = row.get(current, 0) + 1
        if not tokens - {EOS}:
            raise ValidationError(message="BigramScorer needs a non-empty corpus.")
        self._vocab = frozenset(tokens)
        self._ordered = sorted(self._vocab)
        self._counts = counts
        self._smoothing = smoothing
        self._bias_boost = bias_boost

    def vocab(self) -> FrozenSet[str]:
        """Every token the scorer can emit, EOS included."""

        return self._vocab

    def next_log_probs(self, prompt: str, audio_key: str, prefix: Prefix) -> LogProbs:
        """Smoothed bigram distribution after the last prefix token."""

        previous = prefix[-1] if prefix else self._BOS
        row = self._counts.get(previous, {})
        boosted = _prompt_tokens(prompt)
        weights = np.array(
            [
                (row.get(t, 0) + self._smoothing)
                * (self._bias_boost if t in boosted else 1.0)
                for t in self._ordered
            ],
            dtype=np.float64,
        )
        log_probs = np.log(weights) - np.log(weights.sum())
        return dict(zip(self._ordered, (float(v) for v in log_probs)))

