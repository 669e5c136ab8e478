"""Domain records shared across hotbias modules.

Records are frozen dataclasses. Records that travel as JSON / JSONL rows offer
`from_dict` / `to_dict` with the same validation style: a `ValidationError`
whose `details` carries the offending row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Mapping, Optional, Sequence, Tuple

from hotbias.exceptions import ValidationError
from hotbias.textmetrics import KeywordAnnotation, contains, normalize_text
from hotbias.types import JsonObject, JsonValue


@dataclass(frozen=True)
class Hotword:
    """A biasing word of the candidate vocabulary.

    The surface form is normalized on construction.

    Args:
        id: Unique identifier.
        surface: Written form of the hotword.
        domain: Optional domain tag, e.g. `medical` or `media`.

    Raises:
        ValidationError: If `id` or the normalized surface is empty.
    """

    id: str
    surface: str
    domain: Optional[str] = None

    def __post_init__(self) -> None:
        surface = normalize_text(self.surface)
        if not self.id or not surface:
            raise ValidationError(
                message="Hotword requires a non-empty id and surface.",
                details={"id": self.id, "surface": self.surface},
            )
        object.__setattr__(self, "surface", surface)

    @classmethod
    def from_dict(cls, data: Mapping[str, JsonValue]) -> "Hotword":
        """Parse a JSONL vocabulary row `{"id", "surface", "domain"}`.

        Raises:
            ValidationError: If required keys are missing or mistyped.
        """

        hotword_id = data.get("id")
        surface = data.get("surface")
        domain = data.get("domain")
        if not isinstance(hotword_id, str) or not isinstance(surface, str):
            raise ValidationError(
                message="Expected string 'id' and 'surface' in vocabulary row.",
                details=dict(data),
            )
        if domain is not None and not isinstance(domain, str):
            raise ValidationError(
                message="Expected 'domain' to be a string or null.",
                details=dict(data),
            )
        return cls(id=hotword_id, surface=surface, domain=domain or None)

    def to_dict(self) -> JsonObject:
        """Convert to a JSONL vocabulary row."""

        return {"id": self.id, "surface": self.surface, "domain": self.domain}


@dataclass(frozen=True)
class Vocabulary:
    """The candidate hotword set, in ingestion order.

    Args:
        entries: Hotwords with unique ids and unique (normalized) surfaces.

    Raises:
        ValidationError: If an id or surface repeats.
    """

    entries: Tuple[Hotword, ...] = ()
    _by_id: Dict[str, Hotword] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        by_id: Dict[str, Hotword] = {}
        surfaces = set()
        for entry in self.entries:
            if entry.id in by_id:
                raise ValidationError(
                    message=f"Duplicate hotword id {entry.id!r}.",
                    details=entry.to_dict(),
                )
            if entry.surface in surfaces:
                raise ValidationError(
                    message=f"Duplicate hotword surface {entry.surface!r}.",
                    details=entry.to_dict(),
                )
            by_id[entry.id] = entry
            surfaces.add(entry.surface)
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "_by_id", by_id)

    @classmethod
    def of(cls, entries: Iterable[Hotword]) -> "Vocabulary":
        """Build a vocabulary from any iterable of hotwords."""

        return cls(tuple(entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Hotword]:
        return iter(self.entries)

    def __contains__(self, hotword_id: object) -> bool:
        return hotword_id in self._by_id

    def get(self, hotword_id: str) -> Hotword:
        """Look up a hotword by id.

        Raises:
            ValidationError: If the id is unknown.
        """

        try:
            return self._by_id[hotword_id]
        except KeyError:
            raise ValidationError(
                message=f"Unknown hotword id {hotword_id!r}.",
                details={"id": hotword_id},
            ) from None

    def surfaces(self) -> Tuple[str, ...]:
        """Return hotword surfaces in vocabulary order."""

        return tuple(entry.surface for entry in self.entries)

    def extended(self, new: Sequence[Hotword]) -> "Vocabulary":
        """Return a vocabulary with `new` appended (uniqueness is re-checked)."""

        return Vocabulary(self.entries + tuple(new))

    def without(self, ids: Iterable[str]) -> "Vocabulary":
        """Return a vocabulary without the given ids.

        Raises:
            ValidationError: If any id is unknown.
        """

        drop = set(ids)
        unknown = sorted(drop - set(self._by_id))
        if unknown:
            raise ValidationError(
                message=f"Unknown hotword id(s): {', '.join(unknown)}.",
                details={"ids": list(unknown)},
            )
        return Vocabulary(tuple(e for e in self.entries if e.id not in drop))


@dataclass(frozen=True)
class Utterance:
    """An evaluation utterance with its keyword annotation.

    Args:
        id: Utterance identifier.
        text: Reference transcript.
        keywords: Ground-truth biasing words; each must occur in `text`.
        audio_seed: Seed of the synthetic audio proxy.
        noise_level: Expected L2 norm of the per-frame proxy noise.

    Raises:
        ValidationError: If the text is empty, the noise level is negative, or a
            keyword does not occur in the text.
    """

    id: str
    text: str
    keywords: KeywordAnnotation
    audio_seed: int = 0
    noise_level: float = 0.0

    def __post_init__(self) -> None:
        if not normalize_text(self.text):
            raise ValidationError(
                message="Utterance text must be non-empty.", details={"id": self.id}
            )
        if self.noise_level < 0:
            raise ValidationError(
                message="noise_level must be >= 0.",
                details={"id": self.id, "noise_level": self.noise_level},
            )
        keywords = self.keywords.keywords
        missing = sorted(k for k in keywords if not contains(self.text, k))
        if missing:
            raise ValidationError(
                message=f"Keywords not found in utterance {self.id!r}: "
                f"{', '.join(missing)}.",
                details={"id": self.id, "missing": list(missing)},
            )

    @property
    def is_positive(self) -> bool:
        """True when the utterance carries at least one annotated keyword."""

        return bool(self.keywords.keywords)

    @classmethod
    def from_dict(cls, data: Mapping[str, JsonValue]) -> "Utterance":
        """Parse a manifest row (`id`, `text`, `keywords`, `audio_seed`, `noise_level`).

        Raises:
            ValidationError: If required keys are missing or mistyped.
        """

        utterance_id = data.get("id")
        text = data.get("text")
        keywords = data.get("keywords", [])
        audio_seed = data.get("audio_seed", 0)
        noise_level = data.get("noise_level", 0.0)
        if not isinstance(utterance_id, str) or not isinstance(text, str):
            raise ValidationError(
                message="Expected string 'id' and 'text' in manifest row.",
                details=dict(data),
            )
        if not isinstance(keywords, list) or not all(
            isinstance(k, str) for k in keywords
        ):
            raise ValidationError(
                message="Expected 'keywords' to be a list of strings.",
                details=dict(data),
            )
        if not isinstance(audio_seed, int) or isinstance(audio_seed, bool):
            raise ValidationError(
                message="Expected integer 'audio_seed'.", details=dict(data)
            )
        if not isinstance(noise_level, (int, float)) or isinstance(noise_level, bool):
            raise ValidationError(
                message="Expected numeric 'noise_level'.", details=dict(data)
            )
        return cls(
            id=utterance_id,
            text=text,
            keywords=KeywordAnnotation(
                utterance_id=utterance_id,
                keywords=frozenset(str(k) for k in keywords),
            ),
            audio_seed=audio_seed,
            noise_level=float(noise_level),
        )

    def to_dict(self) -> JsonObject:
        """Convert to a manifest row (keywords sorted for stable output)."""

        return {
            "id": self.id,
            "text": self.text,
            "keywords": list(sorted(self.keywords.keywords)),
            "audio_seed": self.audio_seed,
            "noise_level": self.noise_level,
        }


@dataclass(frozen=True)
class SynthSpec:
    """Carrier sentences used to check whether a hotword is already recognized.

    Args:
        hotword: The hotword under test.
        carrier_sentences: Sentences that each contain the hotword surface.
        seed: Seed handed to the oracle.

    Raises:
        ValidationError: If there is no carrier or a carrier lacks the surface.
    """

    hotword: Hotword
    carrier_sentences: Tuple[str, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "carrier_sentences", tuple(self.carrier_sentences))
        if not self.carrier_sentences:
            raise ValidationError(
                message=f"SynthSpec for {self.hotword.id!r} has no carrier sentences.",
                details={"hotword_id": self.hotword.id},
            )
        for sentence in self.carrier_sentences:
            if not contains(sentence, self.hotword.surface):
                raise ValidationError(
                    message=f"Carrier sentence does not contain "
                    f"{self.hotword.surface!r}: {sentence!r}.",
                    details={"hotword_id": self.hotword.id, "carrier": sentence},
                )

    @classmethod
    def from_dict(
        cls, data: Mapping[str, JsonValue], vocab: Vocabulary
    ) -> "SynthSpec":
        """Parse a spec row `{"hotword_id", "carriers", "seed"}` against `vocab`.

        Raises:
            ValidationError: If keys are missing/mistyped or the id is unknown.
        """

        hotword_id = data.get("hotword_id")
        carriers = data.get("carriers")
        seed = data.get("seed", 0)
        if not isinstance(hotword_id, str):
            raise ValidationError(
                message="Expected string 'hotword_id' in spec row.", details=dict(data)
            )
        if not isinstance(carriers, list) or not all(
            isinstance(c, str) for c in carriers
        ):
            raise ValidationError(
                message="Expected 'carriers' to be a list of strings.",
                details=dict(data),
            )
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ValidationError(
                message="Expected integer 'seed' in spec row.", details=dict(data)
            )
        return cls(
            hotword=vocab.get(hotword_id),
            carrier_sentences=tuple(str(c) for c in carriers),
            seed=seed,
        )

    def to_dict(self) -> JsonObject:
        """Convert to a spec row."""

        return {
            "hotword_id": self.hotword.id,
            "carriers": list(self.carrier_sentences),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class MixtureSample:
    """One sample of the biased / non-biased training mixture.

    Raises:
        ValidationError: If the prompt hotword count violates the bias flag.
    """

    utterance_id: str
    is_biased: bool
    prompt_hotwords: Tuple[str, ...] = ()
    contains_target: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompt_hotwords", tuple(self.prompt_hotwords))
        count = len(self.prompt_hotwords)
        if self.is_biased and not 1 <= count <= 10:
            raise ValidationError(
                message="Biased samples carry 1-10 prompt hotwords.",
                details={"utterance_id": self.utterance_id, "count": count},
            )
        if not self.is_biased and (count or self.contains_target):
            raise ValidationError(
                message="Non-biased samples carry no prompt hotwords.",
                details={"utterance_id": self.utterance_id, "count": count},
            )

    def to_dict(self) -> JsonObject:
        """Convert to a JSONL row."""

        return {
            "utterance_id": self.utterance_id,
            "is_biased": self.is_biased,
            "prompt_hotwords": list(self.prompt_hotwords),
            "contains_target": self.contains_target,
        }
