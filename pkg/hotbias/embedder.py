"""Deterministic text and audio encoders plus vector helpers.

The text encoder hashes character n-grams (n = 1, 2, 3) of the normalized text
into a fixed number of buckets with a signed contribution, then L2-normalizes
the result. The audio encoder mean-pools a frame matrix. Both are pure and
immutable, so they can be shared between threads.

Hashing uses 64-bit FNV-1a over the UTF-8 bytes of each n-gram, started from
the FNV offset basis XOR a fixed seed. The bucket is `hash % dimension` and the
sign is taken from the top bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from hotbias.exceptions import DimensionMismatchError, EmbeddingError, ValidationError
from hotbias.textmetrics import normalize_text

EmbeddingVector = npt.NDArray[np.float32]

DEFAULT_DIMENSION = 256
DEFAULT_FRAME_RATE_HZ = 25.0
NGRAM_ORDERS: Tuple[int, ...] = (1, 2, 3)

_FNV_OFFSET_BASIS = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_HASH_SEED = 0x9E3779B97F4A7C15
_MASK_64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes, seed: int = _HASH_SEED) -> int:
    """Seeded 64-bit FNV-1a hash."""

    value = _FNV_OFFSET_BASIS ^ seed
    for byte in data:
        value ^= byte
        value = (value * _FNV_PRIME) & _MASK_64
    return value


@lru_cache(maxsize=1 << 18)
def _bucket(gram: str, dimension: int) -> Tuple[int, float]:
    value = fnv1a_64(gram.encode("utf-8"))
    sign = -1.0 if value >> 63 else 1.0
    return value % dimension, sign


class TextEncoder(Protocol):
    """Encodes a hotword or sentence into an `EmbeddingVector`."""

    def embed(self, text: str) -> EmbeddingVector:
        """Return the unit-norm embedding of `text`."""

    def dimension(self) -> int:
        """Return the embedding dimension."""

    def fingerprint(self) -> str:
        """Return a stable hash of the encoder configuration."""


@dataclass(frozen=True, eq=False)
class FrameMatrix:
    """A sequence of D-dimensional feature frames.

    Args:
        frames: Array of shape `(n_frames, dimension)` with at least one frame.
        frame_rate_hz: Frames per second.

    Raises:
        ValidationError: If the array is not 2-D, is empty, or the rate is not
            positive.
    """

    frames: npt.NDArray[np.float64]
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValidationError(
                message="FrameMatrix needs a 2-D array with at least one frame.",
                details={"shape": list(frames.shape)},
            )
        if not self.frame_rate_hz > 0:
            raise ValidationError(
                message="frame_rate_hz must be positive.",
                details={"frame_rate_hz": self.frame_rate_hz},
            )
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dimension(self) -> int:
        """Frame dimension D."""

        return int(self.frames.shape[1])


class NgramTextEncoder:
    """Character n-gram hashing text encoder.

    Args:
        dimension: Embedding dimension D.
        orders: n-gram orders to hash.

    Raises:
        ValidationError: If `dimension` < 1 or `orders` is empty.
    """

    def __init__(
        self,
        dimension: int = DEFAULT_DIMENSION,
        orders: Sequence[int] = NGRAM_ORDERS,
    ) -> None:
        if dimension < 1 or not orders or min(orders) < 1:
            raise ValidationError(
                message="NgramTextEncoder needs dimension >= 1 and positive orders.",
                details={"dimension": dimension, "orders": list(orders)},
            )
        self._dimension = dimension
        self._orders = tuple(sorted(set(orders)))

    def dimension(self) -> int:
        """Return the embedding dimension."""

        return self._dimension

    def fingerprint(self) -> str:
        """Return a stable hash of the encoder configuration."""

        config = (
            f"ngram-fnv1a64;dim={self._dimension};"
            f"orders={','.join(map(str, self._orders))};seed={_HASH_SEED:x}"
        )
        return hashlib.sha256(config.encode("utf-8")).hexdigest()[:16]

    def embed(self, text: str) -> EmbeddingVector:
        """Embed `text`.

        Raises:
            EmbeddingError: If `text` is empty after normalization or hashes to the
                zero vector.
        """

        normalized = normalize_text(text)
        if not normalized:
            raise EmbeddingError(
                message="Cannot embed empty text.", details={"text": text}
            )
        values = np.zeros(self._dimension, dtype=np.float64)
        for order in self._orders:
            for start in range(len(normalized) - order + 1):
                gram = normalized[start : start + order]
                bucket, sign = _bucket(gram, self._dimension)
                values[bucket] += sign
        return _normalize(values, what=f"text {text!r}")


class MeanPoolAudioEncoder:
    """Audio encoder that mean-pools frames and L2-normalizes the result."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION) -> None:
        self._dimension = dimension

    def dimension(self) -> int:
        """Return the embedding dimension."""

        return self._dimension

    def embed(self, frames: FrameMatrix) -> EmbeddingVector:
        """Pool `frames` into a single embedding.

        Raises:
            DimensionMismatchError: If the frames are not `dimension`-wide.
            EmbeddingError: If the pooled vector is all zeros.
        """

        if frames.dimension != self._dimension:
            raise DimensionMismatchError(
                message=f"Frames have dimension {frames.dimension}, encoder "
                f"expects {self._dimension}.",
            )
        return _normalize(frames.frames.mean(axis=0), what="audio frames")


def _normalize(values: npt.NDArray[np.float64], *, what: str) -> EmbeddingVector:
    norm = float(np.linalg.norm(values))
    if norm == 0.0 or not np.isfinite(norm):
        raise EmbeddingError(message=f"Embedding of {what} is degenerate (zero norm).")
    return (values / norm).astype(np.float32)


_DEFAULT_TEXT_ENCODER = NgramTextEncoder()


def embed_text(
    text: str, encoder: TextEncoder = _DEFAULT_TEXT_ENCODER
) -> EmbeddingVector:
    """Embed `text` with `encoder` (the default n-gram encoder when omitted)."""

    return encoder.embed(text)


def embed_audio(frames: FrameMatrix) -> EmbeddingVector:
    """Mean-pool and L2-normalize `frames`."""

    return MeanPoolAudioEncoder(frames.dimension).embed(frames)


def subsample_frames(frames: FrameMatrix, factor: int) -> FrameMatrix:
    """Keep every `factor`-th frame starting at index 0.

    Args:
        frames: Input frames.
        factor: Positive subsampling factor.

    Returns:
        Frames at indices 0, factor, 2*factor, ... at `frame_rate_hz / factor`.

    Raises:
        ValidationError: If `factor` < 1.
    """

    if factor < 1:
        raise ValidationError(
            message="Subsampling factor must be >= 1.", details={"factor": factor}
        )
    if factor == 1:
        return frames
    return FrameMatrix(
        frames=frames.frames[::factor], frame_rate_hz=frames.frame_rate_hz / factor
    )


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity of two unit-norm vectors, clamped to [-1, 1].

    Raises:
        DimensionMismatchError: If the vectors differ in dimension.
    """

    if a.shape != b.shape:
        raise DimensionMismatchError(
            message=f"Cannot compare vectors of shape {a.shape} and {b.shape}.",
        )
    value = float(np.dot(a.astype(np.float64), b.astype(np.float64)))
    return min(1.0, max(-1.0, value))
