"""Text normalization, edit distance and the evaluation metrics.

All comparisons go through `normalize_text`: NFC normalization, lowercasing of
cased scripts and collapsing of whitespace runs. Tokenization is script
dependent: space-delimited text is compared word by word, CJK text character
by character (mixed strings split CJK characters out of their words).
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Sequence, Tuple, Union

import Levenshtein

from hotbias.enums import Script
from hotbias.exceptions import ValidationError
from hotbias.types import JsonObject

_WHITESPACE_RE = re.compile(r"\s+")
_CJK_CLASS = (
    r"[\u3040-\u30ff\u3400-\u4dbf\u4e00-\u9fff\uf900-\ufaff"
    r"\U00020000-\U0002fa1f]"
)
_CJK_RE = re.compile(_CJK_CLASS)
_CJK_SPLIT_RE = re.compile(f"({_CJK_CLASS})")


@dataclass(frozen=True)
class TokenSeq:
    """An ordered, normalized token sequence.

    Args:
        tokens: Non-empty token strings.

    Raises:
        ValidationError: If any token is empty.
    """

    tokens: Tuple[str, ...]

    def __post_init__(self) -> None:
        if any(not token for token in self.tokens):
            raise ValidationError(
                message="TokenSeq tokens must be non-empty strings.",
                details={"tokens": list(self.tokens)},
            )

    @classmethod
    def from_text(cls, text: str) -> "TokenSeq":
        """Normalize and tokenize `text`."""

        return cls(tokenize(text))

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        """Render the tokens back to a normalized string."""

        return render_tokens(self.tokens)


TextLike = Union[TokenSeq, str]


@dataclass(frozen=True)
class KeywordAnnotation:
    """Ground-truth biasing words of one utterance.

    Args:
        utterance_id: Utterance identifier.
        keywords: Unique, non-empty keyword strings.

    Raises:
        ValidationError: If a keyword is empty.
    """

    utterance_id: str
    keywords: FrozenSet[str] = frozenset()

    def __post_init__(self) -> None:
        if any(not normalize_text(keyword) for keyword in self.keywords):
            raise ValidationError(
                message="Keywords must be non-empty strings.",
                details={"utterance_id": self.utterance_id},
            )


@dataclass(frozen=True)
class EvalCounts:
    """Raw counts behind an `EvalReport`."""

    utterances: int
    keywords: int
    keyword_errors: int
    correct_sentences: int


@dataclass(frozen=True)
class EvalReport:
    """Aggregated ASR metrics of one evaluation set.

    `ker_percent` is `None` (and omitted from JSON) for keywordless sets.
    """

    wer: float
    ker_percent: Optional[float]
    sacc_percent: float
    per_k_recall: Dict[int, float]
    counts: EvalCounts

    def to_dict(self) -> JsonObject:
        """Convert the report to its JSON document."""

        payload: JsonObject = {"wer": self.wer}
        if self.ker_percent is not None:
            payload["ker_percent"] = self.ker_percent
        payload["sacc_percent"] = self.sacc_percent
        payload["per_k_recall"] = {
            str(k): value for k, value in sorted(self.per_k_recall.items())
        }
        payload["counts"] = {
            "utterances": self.counts.utterances,
            "keywords": self.counts.keywords,
            "keyword_errors": self.counts.keyword_errors,
            "correct_sentences": self.counts.correct_sentences,
        }
        return payload


def normalize_text(text: str) -> str:
    """Apply the shared normalization rule.

    Args:
        text: Raw text.

    Returns:
        NFC-normalized, lowercased text with whitespace runs collapsed to one
        space and no leading or trailing whitespace.
    """

    normalized = unicodedata.normalize("NFC", text).lower()
    return _WHITESPACE_RE.sub(" ", normalized).strip()


def detect_script(text: str) -> Script:
    """Return `Script.UNSEGMENTED` when `text` contains CJK characters."""

    return Script.UNSEGMENTED if _CJK_RE.search(text) else Script.SPACED


def tokenize(text: str) -> Tuple[str, ...]:
    """Split normalized text into metric tokens.

    Words are whitespace separated; every CJK character is its own token.
    Tokenizing the rendering of a token sequence yields the same sequence.
    """

    tokens = []
    for word in normalize_text(text).split(" "):
        if not word:
            continue
        if _CJK_RE.search(word) is None:
            tokens.append(word)
            continue
        tokens.extend(piece for piece in _CJK_SPLIT_RE.split(word) if piece)
    return tuple(tokens)


def render_tokens(tokens: Iterable[str]) -> str:
    """Join tokens, gluing adjacent CJK characters without spaces."""

    out = ""
    previous_cjk = False
    for token in tokens:
        current_cjk = _CJK_RE.fullmatch(token) is not None
        if out and not (previous_cjk and current_cjk):
            out += " "
        out += token
        previous_cjk = current_cjk
    return out


def _as_tokens(value: TextLike) -> Tuple[str, ...]:
    if isinstance(value, TokenSeq):
        return value.tokens
    return tokenize(value)


def contains(text: str, needle: str) -> bool:
    """Substring containment on normalized text."""

    return normalize_text(needle) in normalize_text(text)


def edit_distance(ref: TextLike, hyp: TextLike) -> int:
    """Token-level Levenshtein distance.

    Args:
        ref: Reference tokens (or text, tokenized with `tokenize`).
        hyp: Hypothesis tokens (or text).

    Returns:
        Minimum number of insertions, deletions and substitutions turning
        `ref` into `hyp`.
    """

    return int(Levenshtein.distance(list(_as_tokens(ref)), list(_as_tokens(hyp))))


def wer(ref: TextLike, hyp: TextLike) -> float:
    """Word error rate (character error rate for unsegmented text).

    The value is not clamped and exceeds 1.0 when the hypothesis carries more
    insertions than the reference has tokens.

    Raises:
        ValidationError: If the reference is empty.
    """

    ref_tokens = _as_tokens(ref)
    if not ref_tokens:
        raise ValidationError(message="WER is undefined for an empty reference.")
    return edit_distance(TokenSeq(ref_tokens), hyp) / len(ref_tokens)


def keyword_error_count(annotation: KeywordAnnotation, hyp_text: str) -> int:
    """Count annotated keywords missing from the hypothesis.

    Each keyword of the annotation counts at most once; presence is plain
    substring containment on normalized text.
    """

    normalized = normalize_text(hyp_text)
    missing = [k for k in annotation.keywords if normalize_text(k) not in normalized]
    return len(missing)


def sacc(refs: Sequence[TextLike], hyps: Sequence[TextLike]) -> float:
    """Sentence accuracy in percent.

    Raises:
        ValidationError: If the lists are empty or differ in length.
    """

    if not refs or len(refs) != len(hyps):
        raise ValidationError(
            message="sacc() requires equally sized, non-empty reference and "
            "hypothesis lists.",
            details={"refs": len(refs), "hyps": len(hyps)},
        )
    return 100.0 * _correct_sentences(refs, hyps) / len(refs)


def _correct_sentences(refs: Sequence[TextLike], hyps: Sequence[TextLike]) -> int:
    return sum(1 for r, h in zip(refs, hyps) if _as_tokens(r) == _as_tokens(h))


def is_recalled(annotated: str, retrieved: Sequence[str]) -> bool:
    """Substring recall: `annotated` is recalled when any retrieved entry contains it.

    Raises:
        ValidationError: If `annotated` is empty after normalization.
    """

    needle = normalize_text(annotated)
    if not needle:
        raise ValidationError(message="Annotated hotword must be non-empty.")
    return any(needle in normalize_text(entry) for entry in retrieved)


def build_eval_report(
    refs: Sequence[TextLike],
    hyps: Sequence[TextLike],
    annotations: Sequence[KeywordAnnotation],
    per_k_recall: Optional[Mapping[int, float]] = None,
) -> EvalReport:
    """Aggregate WER, KER and SACC over an evaluation set.

    WER is corpus level (total edits over total reference tokens). KER is left
    undefined when the set has no annotated keywords.

    Args:
        refs: Reference transcripts.
        hyps: Decoded hypotheses aligned with `refs`.
        annotations: Keyword annotations aligned with `refs`.
        per_k_recall: Optional retrieval recall percentages keyed by k.

    Returns:
        The aggregated `EvalReport`.

    Raises:
        ValidationError: If the inputs are empty or misaligned.
    """

    if len(annotations) != len(refs):
        raise ValidationError(
            message="annotations must align with references.",
            details={"refs": len(refs), "annotations": len(annotations)},
        )
    sacc(refs, hyps)

    edits = 0
    ref_tokens = 0
    for ref, hyp in zip(refs, hyps):
        tokens = _as_tokens(ref)
        edits += edit_distance(TokenSeq(tokens), hyp)
        ref_tokens += len(tokens)

    keywords = sum(len(a.keywords) for a in annotations)
    keyword_errors = 0
    for annotation, hyp in zip(annotations, hyps):
        hyp_text = hyp.text() if isinstance(hyp, TokenSeq) else hyp
        keyword_errors += keyword_error_count(annotation, hyp_text)

    counts = EvalCounts(
        utterances=len(refs),
        keywords=keywords,
        keyword_errors=keyword_errors,
        correct_sentences=_correct_sentences(refs, hyps),
    )
    return EvalReport(
        wer=edits / ref_tokens if ref_tokens else 0.0,
        ker_percent=100.0 * keyword_errors / keywords if keywords else None,
        sacc_percent=100.0 * counts.correct_sentences / counts.utterances,
        per_k_recall=dict(per_k_recall or {}),
        counts=counts,
    )
