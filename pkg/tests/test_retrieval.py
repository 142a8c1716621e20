from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finqa_harness.retrieval import (Chunk, EmbedderFailure, EmptyText, TfidfEmbedder, build_index,
                                     chunk_text, reconstruct_tokens, top_k)


def chunks_of(*texts):
    return [Chunk(i, t, 0, len(t.split())) for i, t in enumerate(texts)]


def test_chunk_starts_follow_the_stride():
    text = " ".join(f"t{i}" for i in range(10))
    chunks = chunk_text(text, max_tokens=4, overlap_tokens=2)
    assert [(c.start_token, c.end_token) for c in chunks] == [(0, 4), (2, 6), (4, 8), (6, 10), (8, 10)]
    assert chunks[1].text == "t2 t3 t4 t5"


def test_short_text_is_one_chunk():
    (c,) = chunk_text("a b c", max_tokens=128, overlap_tokens=32)
    assert (c.id, c.text, c.start_token, c.end_token) == (0, "a b c", 0, 3)


def test_chunk_text_keeps_inner_whitespace():
    (c,) = chunk_text("  a\n b\t c  ", max_tokens=5, overlap_tokens=0)
    assert c.text == "a\n b\t c"


def test_chunk_text_errors():
    with pytest.raises(EmptyText):
        chunk_text("   \n ")
    with pytest.raises(ValueError):
        chunk_text("a b", max_tokens=2, overlap_tokens=2)


@given(st.lists(st.sampled_from(["a", "bb", "c1", "$5", "%"]), min_size=1, max_size=80),
       st.integers(1, 20), st.data())
def test_reconstruction(words, max_tokens, data):
    overlap = data.draw(st.integers(0, max_tokens - 1))
    chunks = chunk_text(" ".join(words), max_tokens, overlap)
    assert reconstruct_tokens(chunks, overlap) == words
    assert [c.id for c in chunks] == list(range(len(chunks)))
    assert chunks[-1].end_token == len(words)


def test_hand_computed_tfidf_scores():
    index = build_index(chunks_of("net revenue rose", "employee headcount", "cash dividends paid"))
    # every term occurs in one of three chunks: idf = ln(4/2) + 1 for all of them, so chunk 0
    # is three equal weights and the query one of them: cosine 1/sqrt(3)
    assert index.embedder.idf == pytest.approx([math.log(2) + 1] * 8)
    hits = top_k(index, "revenue", k=3)
    assert [c.id for c, _ in hits] == [0, 1, 2]
    assert hits[0][1] == pytest.approx(1 / math.sqrt(3), abs=1e-12)
    assert [s for _, s in hits[1:]] == [0.0, 0.0]


def test_ties_go_to_lower_id_and_k_is_clamped():
    index = build_index(chunks_of("alpha beta", "beta alpha", "gamma"))
    hits = top_k(index, "alpha", k=10)
    assert [c.id for c, _ in hits] == [0, 1, 2]
    assert hits[0][1] == hits[1][1]
    with pytest.raises(ValueError):
        top_k(index, "alpha", k=0)


def test_unseen_query_scores_zero():
    index = build_index(chunks_of("alpha", "beta"))
    assert [s for _, s in top_k(index, "zeta !!", k=2)] == [0.0, 0.0]


def test_index_is_read_only_and_identified():
    index = build_index(chunks_of("alpha", "beta"))
    with pytest.raises(ValueError):
        index.vectors[0, 0] = 1.0
    assert index.embedder_id.startswith("tfidf:")
    assert index.embedder_id == TfidfEmbedder.fit(["alpha", "beta"]).id


class BrokenEmbedder:
    id = "broken"

    def embed(self, texts):
        return np.zeros((len(texts) + 1, 3))


def test_embedder_failures_are_wrapped():
    with pytest.raises(EmbedderFailure):
        build_index(chunks_of("a"), BrokenEmbedder())
    with pytest.raises(ValueError):
        build_index([])
