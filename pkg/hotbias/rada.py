"""Robustness-aware data augmentation.

- `filter_vocabulary` drops hotwords an ASR oracle already recognizes in
  every carrier sentence (or in a configurable fraction of them).
- `generate_fuzzy_variants` produces perturbed mentions of a hotword.
- `build_mixture` streams biased / non-biased training samples at 1:8, with
  positive and negative biased samples at 1:1.
"""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import (
    Dict,
    Iterator,
    List,
    Mapping,
    Optional,
    Protocol,
    Sequence,
    Tuple,
)

import numpy as np

from hotbias.enums import VariantKind
from hotbias.exceptions import OracleError, ValidationError
from hotbias.models import MixtureSample, SynthSpec, Utterance, Vocabulary
from hotbias.textmetrics import contains, normalize_text
from hotbias.types import JsonObject

logger = logging.getLogger(__name__)

NON_BIASED_PER_BIASED = 8
MAX_PROMPT_HOTWORDS = 10

JUNK_TOKENS: Tuple[str, ...] = (
    "abc", "xyz", "foo", "bar", "baz", "qux", "zed", "lum",
    "pix", "vok", "tam", "rin", "sol", "dex", "ori", "nao",
    "kel", "mib", "zup", "yaw", "fen", "gor", "hux", "jil",
    "kao", "lep", "mox", "nib", "opa", "pem", "quo", "ris",
    "sut", "tev", "ula", "vex", "wim", "xan", "yor", "zil",
    "ack", "bim", "cor", "dap", "eko", "fiz", "gup", "hob",
    "ivo", "jax", "kip", "lob", "mun", "nex", "ozo", "pud",
    "qin", "rax", "sib", "tuk", "uvo", "vim", "wex", "yip",
)  # fmt: skip


@dataclass(frozen=True)
class OracleRequest:
    """One carrier sentence to synthesize and recognize."""

    hotword_id: str
    text: str
    seed: int = 0


class AsrOracle(Protocol):
    """Synthesizes a carrier sentence and returns the recognizer's hypothesis."""

    def transcribe(self, request: OracleRequest) -> str:
        """Return the hypothesis text; deterministic per request."""


class EchoOracle:
    """Perfect recognizer: returns the carrier sentence unchanged."""

    def transcribe(self, request: OracleRequest) -> str:
        """Return `request.text`."""

        return request.text


class NullOracle:
    """Recognizer that never outputs anything."""

    def transcribe(self, request: OracleRequest) -> str:
        """Return an empty hypothesis."""

        return ""


class CharDropoutOracle:
    """Recognizer that deletes each character with probability `rate`.

    The randomness is seeded by the request seed and text, so repeated
    requests get the same hypothesis.
    """

    def __init__(self, rate: float = 0.1) -> None:
        if not 0 <= rate <= 1:
            raise ValidationError(
                message="Dropout rate must be in [0, 1].", details={"rate": rate}
            )
        self._rate = rate

    def transcribe(self, request: OracleRequest) -> str:
        """Return the text with seeded character deletions."""

        digest = hashlib.sha256(f"{request.seed}\0{request.text}".encode("utf-8"))
        rng = np.random.default_rng(int.from_bytes(digest.digest()[:8], "little"))
        keep = rng.random(len(request.text)) >= self._rate
        return "".join(ch for ch, kept in zip(request.text, keep) if kept)


class LookupOracle:
    """Recognizer backed by a sentence -> hypothesis table.

    Args:
        table: Hypotheses keyed by normalized carrier sentence.
        fallback: Oracle used for sentences missing from the table; when
            `None`, a missing sentence raises `OracleError`.
    """

    def __init__(
        self, table: Mapping[str, str], fallback: Optional[AsrOracle] = None
    ) -> None:
        self._table = {normalize_text(k): v for k, v in table.items()}
        self._fallback = fallback

    def transcribe(self, request: OracleRequest) -> str:
        """Look the sentence up, falling back when configured."""

        hypothesis = self._table.get(normalize_text(request.text))
        if hypothesis is not None:
            return hypothesis
        if self._fallback is not None:
            return self._fallback.transcribe(request)
        raise OracleError(
            message=f"No lookup entry for carrier sentence {request.text!r}.",
            stage="rada",
            details={"hotword_id": request.hotword_id},
        )


@dataclass(frozen=True)
class FilterStats:
    """Counts reported by `rada filter`."""

    total: int
    kept: int
    removed: int

    @property
    def removal_rate(self) -> float:
        """Fraction of the vocabulary removed (0.0 for an empty vocabulary)."""

        return self.removed / self.total if self.total else 0.0

    def to_dict(self) -> JsonObject:
        """Convert to the stats JSON document."""

        return {
            "total": self.total,
            "kept": self.kept,
            "removed": self.removed,
            "removal_rate": self.removal_rate,
        }


@dataclass(frozen=True)
class FilterResult:
    """Partition of a vocabulary into kept and removed hotwords."""

    kept: Vocabulary
    removed: Vocabulary
    stats: FilterStats


def correct_fraction(oracle: AsrOracle, spec: SynthSpec) -> float:
    """Fraction of carrier sentences whose hypothesis contains the hotword."""

    surface = spec.hotword.surface
    hits = 0
    for sentence in spec.carrier_sentences:
        request = OracleRequest(
            hotword_id=spec.hotword.id, text=sentence, seed=spec.seed
        )
        if contains(oracle.transcribe(request), surface):
            hits += 1
    return hits / len(spec.carrier_sentences)


def filter_vocabulary(
    vocab: Vocabulary,
    oracle: AsrOracle,
    specs: Mapping[str, SynthSpec],
    *,
    min_correct_fraction: float = 1.0,
    workers: int = 1,
) -> FilterResult:
    """Remove hotwords the oracle already recognizes reliably.

    A hotword is reliably recognized when at least `min_correct_fraction` of
    its carrier sentences come back containing its surface. Recognized
    hotwords are removed, the others kept; vocabulary order is preserved in
    both parts.

    Args:
        vocab: Vocabulary to filter.
        oracle: ASR oracle run on the carrier sentences.
        specs: Carrier sentences per hotword id.
        min_correct_fraction: Recognition threshold in (0, 1].
        workers: Threads probing hotwords concurrently; the partition does not
            depend on it.

    Returns:
        The `FilterResult`.

    Raises:
        ValidationError: If a hotword has no spec, a spec belongs to another
            hotword, or the threshold is out of range.
        OracleError: If the oracle fails.
    """

    if not 0 < min_correct_fraction <= 1:
        raise ValidationError(
            message="min_correct_fraction must be in (0, 1].",
            details={"min_correct_fraction": min_correct_fraction},
        )
    ordered: List[SynthSpec] = []
    for entry in vocab:
        spec = specs.get(entry.id)
        if spec is None:
            raise ValidationError(
                message=f"No synthesis spec for hotword {entry.id!r}.",
                stage="rada",
                details={"hotword_id": entry.id},
            )
        if spec.hotword.id != entry.id:
            raise ValidationError(
                message=f"Spec keyed {entry.id!r} describes {spec.hotword.id!r}.",
                stage="rada",
                details={"hotword_id": entry.id},
            )
        ordered.append(spec)

    def is_recognized(spec: SynthSpec) -> bool:
        return correct_fraction(oracle, spec) >= min_correct_fraction

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            recognized = list(pool.map(is_recognized, ordered))
    else:
        recognized = [is_recognized(spec) for spec in ordered]

    kept = [e for e, hit in zip(vocab.entries, recognized) if not hit]
    removed = [e for e, hit in zip(vocab.entries, recognized) if hit]
    stats = FilterStats(total=len(vocab), kept=len(kept), removed=len(removed))
    logger.info(
        "rada filter: kept %d of %d hotwords (removal rate %.3f)",
        stats.kept,
        stats.total,
        stats.removal_rate,
    )
    return FilterResult(
        kept=Vocabulary.of(kept), removed=Vocabulary.of(removed), stats=stats
    )


def _is_cased(word: str) -> bool:
    return word.lower() != word.upper()


def _survives_case_toggle(word: str) -> bool:
    # `ß` becomes `SS` and no longer normalizes back to the word.
    return normalize_text(word) in normalize_text(word.swapcase())


def variant_kinds(word: str) -> List[VariantKind]:
    """Perturbations applicable to `word`, in generation order."""

    kinds = [VariantKind.SUFFIX, VariantKind.PREFIX]
    if len(word) >= 4:
        kinds.append(VariantKind.PARTIAL)
    if _is_cased(word) and _survives_case_toggle(word):
        kinds.append(VariantKind.CASE)
    return kinds


def min_partial_length(word: str) -> int:
    """Shortest partial mention still tied to `word`."""

    return math.ceil(len(word) / 2)


def satisfies_variant_contract(word: str, variant: str) -> bool:
    """True when `variant` contains `word` or is a long enough prefix of it.

    Both strings are compared after normalization.
    """

    w = normalize_text(word)
    v = normalize_text(variant)
    if w in v:
        return True
    return w.startswith(v) and len(v) >= min_partial_length(w)


def generate_fuzzy_variants(word: str, count: int, seed: int) -> List[str]:
    """Seeded perturbed mentions of `word`.

    Kinds cycle through suffix junk, prefix junk, partial mention (trailing
    characters dropped, words of length >= 4 only) and case toggling (cased
    scripts only); the first variant is always `word + " " + junk`. Junk
    tokens come from `JUNK_TOKENS`.

    Raises:
        ValidationError: If `word` is blank or `count` < 1.
    """

    word = word.strip()
    if not word or count < 1:
        raise ValidationError(
            message="generate_fuzzy_variants needs a non-empty word and count >= 1.",
            details={"word": word, "count": count},
        )
    rng = np.random.default_rng(seed)
    kinds = variant_kinds(word)
    variants = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        cycle = i // len(kinds)
        junk = JUNK_TOKENS[int(rng.integers(len(JUNK_TOKENS)))]
        if kind is VariantKind.PREFIX:
            variant = f"{junk} {word}"
        elif kind is VariantKind.PARTIAL:
            cut = len(word) - 1 - cycle
            if cut >= min_partial_length(word):
                variant = word[:cut]
            else:
                variant = f"{word} {junk}"
        elif kind is VariantKind.CASE:
            toggled = word.swapcase()
            variant = toggled if cycle == 0 else f"{toggled} {junk}"
        else:
            variant = f"{word} {junk}"
        variants.append(variant)
    return variants


def fuzzy_aliases(
    vocab: Vocabulary,
    variants_per_word: int,
    seed: int,
    *,
    specs: Optional[Mapping[str, SynthSpec]] = None,
) -> Dict[str, List[str]]:
    """Alias strings per hotword id for a fuzzy retrieval index.

    Aliases are the hotword's fuzzy variants plus, when `specs` is given, its
    carrier sentences. Each hotword uses `seed` offset by its position.
    """

    aliases: Dict[str, List[str]] = {}
    for position, entry in enumerate(vocab):
        texts: List[str] = (
            generate_fuzzy_variants(entry.surface, variants_per_word, seed + position)
            if variants_per_word > 0
            else []
        )
        if specs is not None and entry.id in specs:
            texts.extend(specs[entry.id].carrier_sentences)
        aliases[entry.id] = texts
    return aliases


def build_mixture(
    biased_pool: Sequence[Utterance],
    general_pool: Sequence[Utterance],
    seed: int,
    *,
    hotword_pool: Optional[Sequence[str]] = None,
) -> Iterator[MixtureSample]:
    """Endless seeded stream of training-mixture samples.

    Every block of nine samples holds exactly one biased sample at a random
    position, and every pair of consecutive biased samples holds one positive
    (a prompt listing one of the utterance's keywords) and one negative (a
    prompt of distractors only). Biased prompts list 1-10 hotwords, drawn
    uniformly.

    Args:
        biased_pool: Keyword-annotated utterances used for biased samples.
        general_pool: Utterances used for non-biased samples.
        seed: Stream seed.
        hotword_pool: Distractor candidates; defaults to the keywords of
            `biased_pool`.

    Raises:
        ValidationError: If a pool is empty, a biased utterance has no keyword,
            or no distractor is available for some utterance.
    """

    if not biased_pool or not general_pool:
        raise ValidationError(
            message="build_mixture needs non-empty biased and general pools.",
            details={"biased": len(biased_pool), "general": len(general_pool)},
        )
    unannotated = [u.id for u in biased_pool if not u.is_positive]
    if unannotated:
        raise ValidationError(
            message="Biased pool utterances must carry keywords.",
            details={"ids": unannotated[:10]},
        )
    if hotword_pool is None:
        hotword_pool = [k for u in biased_pool for k in u.keywords.keywords]
    candidates = sorted({normalize_text(h) for h in hotword_pool})
    rng = np.random.default_rng(seed)
    block = NON_BIASED_PER_BIASED + 1
    pending_polarity: List[bool] = []
    while True:
        biased_slot = int(rng.integers(block))
        for slot in range(block):
            if slot != biased_slot:
                utterance = general_pool[int(rng.integers(len(general_pool)))]
                yield MixtureSample(utterance_id=utterance.id, is_biased=False)
                continue
            if not pending_polarity:
                pending_polarity = [True, False]
                rng.shuffle(pending_polarity)
            positive = pending_polarity.pop()
            utterance = biased_pool[int(rng.integers(len(biased_pool)))]
            yield _biased_sample(utterance, positive, candidates, rng)


def _biased_sample(
    utterance: Utterance,
    positive: bool,
    candidates: Sequence[str],
    rng: np.random.Generator,
) -> MixtureSample:
    keywords = sorted(normalize_text(k) for k in utterance.keywords.keywords)
    distractors = [h for h in candidates if not contains(utterance.text, h)]
    size = int(rng.integers(1, MAX_PROMPT_HOTWORDS + 1))
    if positive:
        target = keywords[int(rng.integers(len(keywords)))]
        n_distractors = min(size - 1, len(distractors))
        chosen = [target]
    else:
        if not distractors:
            raise ValidationError(
                message=f"No distractor hotword available for {utterance.id!r}.",
                details={"utterance_id": utterance.id},
            )
        n_distractors = min(size, len(distractors))
        chosen = []
    if n_distractors:
        picks = rng.choice(len(distractors), size=n_distractors, replace=False)
        chosen.extend(distractors[int(i)] for i in picks)
    order = rng.permutation(len(chosen))
    return MixtureSample(
        utterance_id=utterance.id,
        is_biased=True,
        prompt_hotwords=tuple(chosen[int(i)] for i in order),
        contains_target=positive,
    )

