"""Exact top-k hotword retrieval over a flat embedding matrix.

An index is an immutable value: `add_entries` / `remove_entries` return new
indexes, so concurrent queries never need a lock. Queries are a single
matrix-vector product followed by a partial selection; equal scores are
ordered by ascending hotword id.

Persisted layout (little-endian):

- header: magic `HBIX`, u16 version, u32 dimension, u32 row count,
  16 ASCII bytes of encoder fingerprint
- id table: per row, u32-length-prefixed UTF-8 id, surface and domain
  (empty domain means none)
- rows: `N x D` float32
"""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from hotbias.embedder import EmbeddingVector, TextEncoder
from hotbias.exceptions import (
    DimensionMismatchError,
    EmbeddingError,
    IndexFormatError,
    ValidationError,
)
from hotbias.models import Hotword, Vocabulary

logger = logging.getLogger(__name__)

_MAGIC = b"HBIX"
_VERSION = 1
_HEADER = struct.Struct("<4sHII16s")
_LENGTH = struct.Struct("<I")


@dataclass(frozen=True)
class ScoredHotword:
    """A retrieved hotword and its similarity score."""

    hotword: Hotword
    score: float


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked top-k candidates (the biasing subset handed to the prompt)."""

    candidates: Tuple[ScoredHotword, ...] = ()

    def __len__(self) -> int:
        return len(self.candidates)

    def surfaces(self) -> List[str]:
        """Candidate surfaces in rank order."""

        return [c.hotword.surface for c in self.candidates]

    def ids(self) -> List[str]:
        """Candidate ids in rank order."""

        return [c.hotword.id for c in self.candidates]


def _id_ranks(entries: Sequence[Hotword]) -> npt.NDArray[np.int64]:
    order = sorted(range(len(entries)), key=lambda i: entries[i].id)
    ranks = np.empty(len(entries), dtype=np.int64)
    ranks[order] = np.arange(len(entries), dtype=np.int64)
    return ranks


def _select_topk(
    scores: npt.NDArray[np.float32], id_ranks: npt.NDArray[np.int64], k: int
) -> npt.NDArray[np.int64]:
    """Row indices of the k best scores, ties broken by id rank."""

    n = scores.shape[0]
    if k < n:
        threshold = np.partition(scores, n - k)[n - k]
        candidates = np.flatnonzero(scores >= threshold)
    else:
        candidates = np.arange(n)
    order = np.lexsort((id_ranks[candidates], -scores[candidates]))
    return candidates[order[:k]]


def _check_k(k: int) -> None:
    if k < 1:
        raise ValidationError(message="k must be >= 1.", details={"k": k})


@dataclass(frozen=True, eq=False)
class HotwordIndex:
    """Flat matrix of unit-norm hotword embeddings aligned with a vocabulary.

    Attributes:
        vocabulary: Indexed hotwords; row `i` embeds `vocabulary.entries[i]`.
        vectors: Read-only `N x D` float32 matrix.
        fingerprint: Fingerprint of the text encoder that produced the rows.
    """

    vocabulary: Vocabulary
    vectors: npt.NDArray[np.float32]
    fingerprint: str
    _id_ranks: npt.NDArray[np.int64] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(self.vocabulary):
            raise ValidationError(
                message="Index rows must align with vocabulary entries.",
                details={"rows": list(vectors.shape), "entries": len(self.vocabulary)},
            )
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_id_ranks", _id_ranks(self.vocabulary.entries))

    def __len__(self) -> int:
        return len(self.vocabulary)

    @property
    def dimension(self) -> int:
        """Embedding dimension D."""

        return int(self.vectors.shape[1])

    def similarities(self, h_audio: EmbeddingVector) -> npt.NDArray[np.float32]:
        """Cosine score of every row against `h_audio`.

        Raises:
            DimensionMismatchError: If `h_audio` is not D-dimensional.
        """

        if h_audio.shape != (self.dimension,):
            raise DimensionMismatchError(
                message=f"Query has shape {h_audio.shape}, index dimension is "
                f"{self.dimension}.",
            )
        scores: npt.NDArray[np.float32] = self.vectors @ h_audio.astype(np.float32)
        return scores

    def query(self, h_audio: EmbeddingVector, k: int) -> RetrievalResult:
        """Shorthand for `query_topk(self, h_audio, k)`."""

        return query_topk(self, h_audio, k)


def build_index(vocab: Vocabulary, encoder: TextEncoder) -> HotwordIndex:
    """Embed every hotword of `vocab`.

    Args:
        vocab: Non-empty vocabulary.
        encoder: Text encoder producing the rows.

    Returns:
        The index, rows in vocabulary order.

    Raises:
        ValidationError: If the vocabulary is empty.
        EmbeddingError: If an entry cannot be embedded; `details` names its id.
    """

    if not len(vocab):
        raise ValidationError(message="Cannot build an index over an empty vocabulary.")
    rows = _embed_entries(vocab.entries, encoder)
    logger.info("built index: %d rows, dimension %d", len(vocab), encoder.dimension())
    return HotwordIndex(
        vocabulary=vocab, vectors=rows, fingerprint=encoder.fingerprint()
    )


def empty_index(encoder: TextEncoder) -> HotwordIndex:
    """Index with no rows; every query returns an empty result."""

    return HotwordIndex(
        vocabulary=Vocabulary(),
        vectors=np.zeros((0, encoder.dimension()), dtype=np.float32),
        fingerprint=encoder.fingerprint(),
    )


def _embed_entries(
    entries: Sequence[Hotword], encoder: TextEncoder
) -> npt.NDArray[np.float32]:
    rows = np.empty((len(entries), encoder.dimension()), dtype=np.float32)
    for i, entry in enumerate(entries):
        try:
            rows[i] = encoder.embed(entry.surface)
        except EmbeddingError as exc:
            raise EmbeddingError(
                message=f"Failed to embed hotword {entry.id!r}: {exc.message}",
                details={"id": entry.id},
            ) from exc
    return rows


def query_topk(
    index: HotwordIndex, h_audio: EmbeddingVector, k: int
) -> RetrievalResult:
    """Exact top-k search by cosine similarity.

    Args:
        index: Hotword index.
        h_audio: Unit-norm query embedding.
        k: Number of candidates; values above N return all N entries.

    Returns:
        Candidates sorted by descending score, ties by ascending id.

    Raises:
        ValidationError: If `k` < 1.
        DimensionMismatchError: If the query dimension differs from the index.
    """

    _check_k(k)
    scores = index.similarities(h_audio)
    if not len(index):
        return RetrievalResult()
    rows = _select_topk(scores, index._id_ranks, k)
    entries = index.vocabulary.entries
    return RetrievalResult(
        tuple(ScoredHotword(entries[i], float(scores[i])) for i in rows)
    )


def query_batch(
    index: Union[HotwordIndex, "FuzzyHotwordIndex"],
    queries: Sequence[EmbeddingVector],
    k: int,
    *,
    workers: int = 1,
) -> List[RetrievalResult]:
    """Answer many queries, optionally on a thread pool; output order follows input."""

    if workers <= 1:
        return [index.query(q, k) for q in queries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda q: index.query(q, k), queries))


def add_entries(
    index: HotwordIndex, new: Sequence[Hotword], encoder: TextEncoder
) -> HotwordIndex:
    """Return an index with `new` hotwords appended.

    Raises:
        ValidationError: If an id or surface already exists.
        DimensionMismatchError: If `encoder` is not the one that built `index`.
    """

    _check_fingerprint(index.fingerprint, encoder)
    vocabulary = index.vocabulary.extended(new)
    rows = _embed_entries(new, encoder)
    return HotwordIndex(
        vocabulary=vocabulary,
        vectors=np.vstack([index.vectors, rows]),
        fingerprint=index.fingerprint,
    )


def remove_entries(index: HotwordIndex, ids: Iterable[str]) -> HotwordIndex:
    """Return an index without the given hotword ids.

    Raises:
        ValidationError: If an id is unknown.
    """

    drop = set(ids)
    vocabulary = index.vocabulary.without(drop)
    keep = [i for i, e in enumerate(index.vocabulary.entries) if e.id not in drop]
    return HotwordIndex(
        vocabulary=vocabulary,
        vectors=index.vectors[keep].reshape(len(keep), index.dimension),
        fingerprint=index.fingerprint,
    )


def _check_fingerprint(fingerprint: str, encoder: TextEncoder) -> None:
    if encoder.fingerprint() != fingerprint:
        raise DimensionMismatchError(
            message="Encoder fingerprint does not match the index.",
            details={"index": fingerprint, "encoder": encoder.fingerprint()},
        )


def index_to_bytes(index: HotwordIndex) -> bytes:
    """Serialize `index` to the persisted layout."""

    parts = [
        _HEADER.pack(
            _MAGIC,
            _VERSION,
            index.dimension,
            len(index),
            index.fingerprint.encode("ascii")[:16].ljust(16, b"\0"),
        )
    ]
    for entry in index.vocabulary.entries:
        for text in (entry.id, entry.surface, entry.domain or ""):
            raw = text.encode("utf-8")
            parts.append(_LENGTH.pack(len(raw)))
            parts.append(raw)
    parts.append(index.vectors.astype("<f4").tobytes())
    return b"".join(parts)


def index_from_bytes(
    data: bytes, *, encoder: Optional[TextEncoder] = None
) -> HotwordIndex:
    """Decode a persisted index.

    Args:
        data: Serialized index.
        encoder: When given, its fingerprint must match the stored one.

    Raises:
        IndexFormatError: If the payload is malformed.
        DimensionMismatchError: If `encoder` does not match.
    """

    if len(data) < _HEADER.size:
        raise IndexFormatError(message="Index payload is shorter than its header.")
    magic, version, dimension, count, raw_fingerprint = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _VERSION:
        raise IndexFormatError(
            message="Not a hotbias index (bad magic or version).",
            details={"version": version},
        )
    offset = _HEADER.size
    entries = []
    try:
        for _ in range(count):
            fields = []
            for _ in range(3):
                (length,) = _LENGTH.unpack_from(data, offset)
                offset += _LENGTH.size
                fields.append(data[offset : offset + length].decode("utf-8"))
                offset += length
            hotword_id, surface, domain = fields
            entries.append(
                Hotword(id=hotword_id, surface=surface, domain=domain or None)
            )
    except (struct.error, UnicodeDecodeError) as exc:
        raise IndexFormatError(message=f"Corrupt index id table: {exc!s}") from exc

    expected = count * dimension * 4
    if len(data) - offset != expected:
        raise IndexFormatError(
            message="Index row payload has the wrong size.",
            details={"expected": expected, "actual": len(data) - offset},
        )
    vectors = np.frombuffer(data, dtype="<f4", offset=offset).reshape(count, dimension)
    fingerprint = raw_fingerprint.rstrip(b"\0").decode("ascii")
    if encoder is not None:
        _check_fingerprint(fingerprint, encoder)
    return HotwordIndex(
        vocabulary=Vocabulary.of(entries),
        vectors=vectors.astype(np.float32),
        fingerprint=fingerprint,
    )


def save_index(index: HotwordIndex, path: Union[str, Path]) -> None:
    """Write `index` to `path`."""

    Path(path).write_bytes(index_to_bytes(index))


def load_index(
    path: Union[str, Path], *, encoder: Optional[TextEncoder] = None
) -> HotwordIndex:
    """Read an index written by `save_index`."""

    return index_from_bytes(Path(path).read_bytes(), encoder=encoder)


@dataclass(frozen=True, eq=False)
class FuzzyHotwordIndex:
    """Index whose rows are aliases (variants, carrier sentences) of hotwords.

    A hotword scores the maximum over its alias rows; selection and tie rules
    match `query_topk`.

    Attributes:
        vocabulary: Parent hotwords.
        aliases: Alias index; its ids are private to this structure.
        parents: For each alias row, the position of its parent hotword.
    """

    vocabulary: Vocabulary
    aliases: HotwordIndex
    parents: npt.NDArray[np.int64]
    _id_ranks: npt.NDArray[np.int64] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_id_ranks", _id_ranks(self.vocabulary.entries))

    @property
    def fingerprint(self) -> str:
        """Fingerprint of the encoder behind the alias rows."""

        return self.aliases.fingerprint

    @property
    def dimension(self) -> int:
        """Embedding dimension D."""

        return self.aliases.dimension

    def __len__(self) -> int:
        return len(self.vocabulary)

    def query(self, h_audio: EmbeddingVector, k: int) -> RetrievalResult:
        """Top-k parent hotwords by best alias score."""

        _check_k(k)
        alias_scores = self.aliases.similarities(h_audio)
        if not len(self.vocabulary):
            return RetrievalResult()
        scores = np.full(len(self.vocabulary), -np.inf, dtype=np.float32)
        np.maximum.at(scores, self.parents, alias_scores)
        rows = _select_topk(scores, self._id_ranks, k)
        entries = self.vocabulary.entries
        return RetrievalResult(
            tuple(ScoredHotword(entries[i], float(scores[i])) for i in rows)
        )


def _alias_id(row: int) -> str:
    return f"#{row:09d}"


def build_fuzzy_index(
    vocab: Vocabulary,
    aliases: Mapping[str, Sequence[str]],
    encoder: TextEncoder,
) -> FuzzyHotwordIndex:
    """Build a `FuzzyHotwordIndex`.

    Every hotword is indexed under its own surface plus the alias strings
    listed for its id. Alias strings that repeat an earlier alias are skipped.

    Raises:
        ValidationError: If the vocabulary is empty.
    """

    if not len(vocab):
        raise ValidationError(message="Cannot build an index over an empty vocabulary.")
    seen = set(vocab.surfaces())
    # Alias rows get positional ids so no hotword id can collide with them.
    alias_entries = [
        Hotword(id=_alias_id(row), surface=entry.surface, domain=entry.domain)
        for row, entry in enumerate(vocab.entries)
    ]
    parents: List[int] = list(range(len(vocab)))
    for position, entry in enumerate(vocab.entries):
        for text in aliases.get(entry.id, ()):
            alias = Hotword(
                id=_alias_id(len(alias_entries)), surface=text, domain=entry.domain
            )
            if alias.surface in seen:
                continue
            seen.add(alias.surface)
            alias_entries.append(alias)
            parents.append(position)
    alias_index = build_index(Vocabulary.of(alias_entries), encoder)
    logger.info(
        "built fuzzy index: %d hotwords, %d alias rows", len(vocab), len(alias_entries)
    )
    return FuzzyHotwordIndex(
        vocabulary=vocab,
        aliases=alias_index,
        parents=np.asarray(parents, dtype=np.int64),
    )
