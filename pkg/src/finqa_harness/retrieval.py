"""Context search: sliding-window chunking and exact cosine ranking of chunks against a question."""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

_TOKEN_RE = re.compile(r"\S+")
_TERM_RE = re.compile(r"[a-z0-9]+")

# cosine scores are rounded before ranking so that BLAS summation order
# cannot reorder near-ties across machines
SCORE_DECIMALS = 12


class EmptyText(ValueError):
    pass


class EmbedderFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Chunk:
    id: int
    text: str
    start_token: int
    end_token: int


def chunk_text(text: str, max_tokens: int = 128, overlap_tokens: int = 32) -> list[Chunk]:
    """Split whitespace tokens into windows of ``max_tokens`` advancing by ``max_tokens - overlap_tokens``.

    A window is opened at every stride position ``s`` with ``s + overlap_tokens <= n``,
    so each chunk after the first begins with exactly the ``overlap_tokens`` tokens it
    shares with its predecessor. Chunk text is the original substring, whitespace kept.
    """
    if not 0 <= overlap_tokens < max_tokens:
        raise ValueError("need max_tokens > overlap_tokens >= 0")
    spans = [m.span() for m in _TOKEN_RE.finditer(text)]
    n = len(spans)
    if n == 0:
        raise EmptyText("text has no tokens")
    stride = max_tokens - overlap_tokens
    chunks = []
    for start in range(0, n, stride):
        if start and start + overlap_tokens > n:
            break
        end = min(start + max_tokens, n)
        chunks.append(Chunk(len(chunks), text[spans[start][0]:spans[end - 1][1]], start, end))
    return chunks


def tokens_of(chunk: Chunk) -> list[str]:
    return _TOKEN_RE.findall(chunk.text)


def reconstruct_tokens(chunks: Sequence[Chunk], overlap_tokens: int) -> list[str]:
    """Inverse of chunk_text on the token stream: drop each later chunk's shared prefix."""
    out: list[str] = []
    for c in chunks:
        toks = tokens_of(c)
        out.extend(toks if c.id == 0 else toks[overlap_tokens:])
    return out


def terms(text: str) -> list[str]:
    return _TERM_RE.findall(text.lower())


class Embedder(Protocol):
    id: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class TfidfEmbedder:
    """Lexical embedder fitted on one corpus.

    Weights are raw term counts times ``ln((1 + N) / (1 + df)) + 1``; terms
    outside the fitted vocabulary are ignored, so an empty or unseen query maps
    to the zero vector.
    """

    def __init__(self, vocabulary: Sequence[str], idf: Sequence[float]):
        self.vocabulary = list(vocabulary)
        self.index = {t: i for i, t in enumerate(self.vocabulary)}
        self.idf = np.asarray(idf, dtype=float)
        h = hashlib.sha256("\n".join(f"{t}\t{w!r}" for t, w in zip(self.vocabulary, self.idf)).encode())
        self.id = f"tfidf:{h.hexdigest()[:16]}"

    @classmethod
    def fit(cls, corpus: Sequence[str]) -> "TfidfEmbedder":
        df: Counter[str] = Counter()
        for doc in corpus:
            df.update(set(terms(doc)))
        vocab = sorted(df)
        n = len(corpus)
        return cls(vocab, [math.log((1 + n) / (1 + df[t])) + 1.0 for t in vocab])

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), len(self.vocabulary)))
        for row, text in enumerate(texts):
            for term, count in Counter(terms(text)).items():
                j = self.index.get(term)
                if j is not None:
                    out[row, j] = count * self.idf[j]
        return out


@dataclass(frozen=True, eq=False)
class ChunkIndex:
    chunks: tuple[Chunk, ...]
    vectors: np.ndarray
    embedder: Embedder

    @property
    def embedder_id(self) -> str:
        return self.embedder.id


def build_index(chunks: Sequence[Chunk], embedder: Embedder | None = None) -> ChunkIndex:
    if not chunks:
        raise ValueError("cannot index zero chunks")
    if embedder is None:
        embedder = TfidfEmbedder.fit([c.text for c in chunks])
    try:
        vectors = np.asarray(embedder.embed([c.text for c in chunks]), dtype=float)
    except Exception as e:
        raise EmbedderFailure(f"{embedder.id}: {e}") from e
    if vectors.ndim != 2 or vectors.shape[0] != len(chunks):
        raise EmbedderFailure(f"{embedder.id}: expected {len(chunks)} vectors, got shape {vectors.shape}")
    vectors.setflags(write=False)
    return ChunkIndex(tuple(chunks), vectors, embedder)


def cosine_scores(vectors: np.ndarray, query: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1) * np.linalg.norm(query)
    dots = vectors @ query
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(norms > 0, dots / np.where(norms > 0, norms, 1.0), 0.0)
    return np.clip(scores, -1.0, 1.0)


def top_k(index: ChunkIndex, query: str, k: int = 1) -> list[tuple[Chunk, float]]:
    """Best ``min(k, len(chunks))`` chunks by cosine score, ties to the lower chunk id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(index.embedder.embed([query]), dtype=float)[0]
    scores = [round(float(s), SCORE_DECIMALS) for s in cosine_scores(index.vectors, q)]
    order = sorted(range(len(index.chunks)), key=lambda i: (-scores[i], index.chunks[i].id))
    return [(index.chunks[i], scores[i]) for i in order[:k]]
