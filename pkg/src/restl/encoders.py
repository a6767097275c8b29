"""Text encoders used for templated-NL similarity.

The default is a deterministic hashed TF-IDF encoder over word unigrams,
character trigrams and a small cue-word lexicon. ``HttpEncoder`` forwards to an external embedding service
so a neural encoder can be swapped in without touching the metric code.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from functools import lru_cache
from typing import Iterable, Optional, Protocol, Sequence, Tuple

import httpx
import numpy as np

DEFAULT_DIM = 4096
_WORD_RE = re.compile(r"[a-z0-9_.]+|[^\sa-z0-9_.]")


class TextEncoder(Protocol):
    dimension: int

    def encode(self, text: str) -> np.ndarray: ...


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


# Cue words for temporal operators and comparators. Sharing one feature per
# concept lets "remains below" and "at every time ... less than" overlap
# even though they share no surface tokens.
_CONCEPTS = {
    "always": ("always", "every", "during", "remain", "remains", "stay", "stays", "consistently", "throughout",
               "continuously", "persist", "persists", "maintain", "maintained", "keep", "keeps", "globally"),
    "eventually": ("eventually", "some", "sometime", "within", "finally", "ultimately", "occasionally"),
    "until": ("until", "till"),
    "implies": ("if", "then", "whenever", "implies"),
    "not": ("not", "never", "no"),
    "greater": ("greater", "above", "exceed", "exceeds", "over", "higher", "more", "larger"),
    "less": ("less", "below", "under", "lower", "smaller", "beneath", "fewer"),
    "equal": ("equal", "equals"),
}
_CONCEPT_OF = {w: c for c, words in _CONCEPTS.items() for w in words}
# a concept hit weighs about as much as a whole word with its trigrams
_CONCEPT_WEIGHT = 3


def text_features(text: str) -> Counter:
    """Word unigrams, padded per-word character trigrams and cue-word concepts."""
    feats: Counter = Counter()
    for word in _WORD_RE.findall(text.lower()):
        feats["w:" + word] += 1
        if word in _CONCEPT_OF:
            feats["k:" + _CONCEPT_OF[word]] += _CONCEPT_WEIGHT
        padded = f"#{word}#"
        for i in range(len(padded) - 2):
            feats["c:" + padded[i:i + 3]] += 1
    return feats


def _bucket(feature: str, dim: int) -> Tuple[int, float]:
    h = int.from_bytes(hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest(), "little")
    return (h >> 1) % dim, (1.0 if h & 1 else -1.0)


@lru_cache(maxsize=65536)
def _hashed(text: str, dim: int) -> Tuple[Tuple[int, float], ...]:
    out = {}
    for feat, count in text_features(text).items():
        b, sign = _bucket(feat, dim)
        out[b] = out.get(b, 0.0) + sign * count
    return tuple(sorted(out.items()))


class HashedTfidfEncoder:
    """L2-normalized signed-hash TF-IDF vectors; immutable once constructed."""

    def __init__(self, dimension: int = DEFAULT_DIM, idf: Optional[np.ndarray] = None):
        self.dimension = dimension
        if idf is None:
            idf = np.ones(dimension)
        idf = np.asarray(idf, dtype=float)
        if idf.shape != (dimension,):
            raise ValueError(f"idf table has shape {idf.shape}, expected ({dimension},)")
        idf.setflags(write=False)
        self.idf = idf

    @classmethod
    def fit(cls, corpus: Iterable[str], dimension: int = DEFAULT_DIM) -> "HashedTfidfEncoder":
        df = np.zeros(dimension)
        n = 0
        for text in corpus:
            n += 1
            buckets = {b for b, _ in (_bucket(f, dimension) for f in text_features(text))}
            for b in buckets:
                df[b] += 1
        idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
        return cls(dimension, idf)

    def encode(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for b, value in _hashed(text, self.dimension):
            vec[b] = value * self.idf[b]
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def similarity(self, a: str, b: str) -> float:
        return cosine(self.encode(a), self.encode(b))


class EncoderConfigError(ValueError):
    pass


class HttpEncoder:
    """Client for an embedding service: POST ``{"text": ...}`` → ``{"vector": [...]}``.

    The vector dimension is fixed by the first response (or by ``dimension``)
    and a mismatch later is a configuration error. ``httpx.Client`` is
    thread-safe, so concurrent ``encode`` calls may share one instance.
    """

    def __init__(self, url: str, dimension: Optional[int] = None, timeout: float = 10.0,
                 client: Optional[httpx.Client] = None):
        self.url = url
        self.dimension = dimension
        self._client = client or httpx.Client(timeout=timeout)

    def encode(self, text: str) -> np.ndarray:
        resp = self._client.post(self.url, json={"text": text})
        resp.raise_for_status()
        try:
            vector = np.asarray(resp.json()["vector"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise EncoderConfigError(f"malformed encoder response: {exc}") from None
        if vector.ndim != 1:
            raise EncoderConfigError("encoder returned a non-flat vector")
        if self.dimension is None:
            self.dimension = len(vector)
        elif len(vector) != self.dimension:
            raise EncoderConfigError(f"encoder returned dimension {len(vector)}, expected {self.dimension}")
        return vector

    def close(self):
        self._client.close()


def mean_cosine(encoder: TextEncoder, text: str, others: Sequence[str]) -> float:
    base = encoder.encode(text)
    return sum(cosine(base, encoder.encode(o)) for o in others) / len(others)

