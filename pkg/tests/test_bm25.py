"""Tokenizer freeze cases and an independent scoring oracle for the index."""

import math
import string
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimmatch.bm25 import InvertedIndex, tokenize


def oracle_scores(docs: dict[str, list[str]], query_terms: list[str],
                  k1: float = 1.2, b: float = 0.75) -> dict[str, float]:
    """Direct BM25 computation from token lists, independent of the index.

    Sum over query terms of idf * tf / (tf + k1 * (1 - b + b * len/avglen)),
    idf = ln(1 + (N - df + 0.5) / (df + 0.5)).
    """
    n = len(docs)
    avg_len = sum(len(t) for t in docs.values()) / n if n else 0.0
    counts = {d: Counter(toks) for d, toks in docs.items()}
    scores: dict[str, float] = {}
    for term in query_terms:
        df = sum(1 for c in counts.values() if term in c)
        if df == 0:
            continue
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        for doc_id, c in counts.items():
            tf = c[term]
            if tf == 0:
                continue
            norm = tf + k1 * (1.0 - b + b * len(docs[doc_id]) / avg_len)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf / norm
    return scores


class TestTokenize:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("Hello, WORLD! 42", ["hello", "world", "42"]),
            ("covid-19 vaccine_2 shots", ["covid", "19", "vaccine_2", "shots"]),
            ("Frühstück HEUTE", ["frühstück", "heute"]),
            ("a.b@c.d e--f", ["a", "b", "c", "d", "e", "f"]),
            ("", []),
            ("   ", []),
        ],
    )
    def test_frozen_cases(self, text, expected):
        assert tokenize(text) == expected

    def test_devanagari_combining_marks_stay_attached(self):
        # \w-based splitting would cut these words at the vowel signs.
        assert tokenize("टीका सुरक्षित है") == ["टीका", "सुरक्षित", "है"]

    def test_bengali(self):
        assert tokenize("ভ্যাকসিন নিরাপদ") == ["ভ্যাকসিন", "নিরাপদ"]

    @given(st.text(max_size=100))
    def test_tokens_never_empty_and_casefolded(self, text):
        for tok in tokenize(text):
            assert tok and tok == tok.casefold()


@st.composite
def doc_collections(draw):
    words = st.text(alphabet=string.ascii_lowercase, min_size=1, max_size=6)
    n_docs = draw(st.integers(min_value=1, max_value=12))
    docs = {}
    for i in range(n_docs):
        toks = draw(st.lists(words, min_size=1, max_size=20))
        docs[f"d{i}"] = " ".join(toks)
    return docs


class TestScoring:
    def test_matches_oracle_on_fixed_corpus(self, corpus):
        docs = {m.id: m.text for m in corpus}
        index = InvertedIndex().fit(docs)
        query = "the vaccine post"
        expected = oracle_scores({d: tokenize(t) for d, t in docs.items()}, tokenize(query))
        hits = index.search(query, k=len(docs))
        got = {h.doc_id: h.score for h in hits}
        assert set(got) == set(expected)
        for doc_id, score in expected.items():
            assert got[doc_id] == pytest.approx(score, abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(doc_collections(), st.integers(min_value=0, max_value=1000))
    def test_matches_oracle_everywhere(self, docs, query_pick):
        index = InvertedIndex().fit(docs)
        vocab = sorted({t for text in docs.values() for t in tokenize(text)})
        if not vocab:
            return
        query = " ".join(vocab[query_pick % len(vocab):][:3])
        expected = oracle_scores({d: tokenize(t) for d, t in docs.items()}, tokenize(query))
        got = {h.doc_id: h.score for h in index.search(query, k=len(docs))}
        assert set(got) == set(expected)
        for doc_id, score in expected.items():
            assert got[doc_id] == pytest.approx(score, abs=1e-9)

    def test_rare_term_outscores_common(self):
        docs = {
            "a": "apple banana banana banana",
            "b": "banana banana banana banana",
            "c": "banana cherry banana banana",
        }
        index = InvertedIndex().fit(docs)
        (top,) = index.search("apple", k=1)
        assert top.doc_id == "a"
        # the term every document shares carries almost no weight
        assert index.idf("banana") < index.idf("apple")

    def test_k_truncates_and_orders(self):
        docs = {f"d{i}": "x " * (i + 1) for i in range(5)}
        index = InvertedIndex().fit(docs)
        hits = index.search("x", k=3)
        assert len(hits) == 3
        assert [h.score for h in hits] == sorted((h.score for h in hits), reverse=True)

    def test_tie_breaks_by_doc_id(self):
        docs = {"b": "same text", "a": "same text"}
        index = InvertedIndex().fit(docs)
        hits = index.search("same", k=2)
        assert [h.doc_id for h in hits] == ["a", "b"]

    def test_unknown_terms_score_nothing(self):
        index = InvertedIndex().fit({"a": "hello"})
        assert index.search("zzz", k=5) == []

    def test_search_before_fit_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            InvertedIndex().search("x", k=5)

    def test_bad_k_rejected(self):
        index = InvertedIndex().fit({"a": "hello"})
        with pytest.raises(ValueError, match="k"):
            index.search("hello", k=0)


class TestPersistence:
    def test_save_load_preserves_scores(self, tmp_path, corpus):
        docs = {m.id: m.text for m in corpus}
        index = InvertedIndex().fit(docs)
        path = tmp_path / "index.jsonl"
        index.save(path)
        loaded = InvertedIndex.load(path)
        assert loaded.k1 == index.k1 and loaded.b == index.b
        for query in ("vaccine viral", "banks friday", "grocery"):
            assert [(h.doc_id, h.score) for h in loaded.search(query, k=12)] == [
                (h.doc_id, h.score) for h in index.search(query, k=12)
            ]

    def test_corrupt_header_detected(self, tmp_path, corpus):
        docs = {m.id: m.text for m in corpus}
        index = InvertedIndex().fit(docs)
        path = tmp_path / "index.jsonl"
        index.save(path)
        lines = path.read_text().splitlines()
        header = lines[0].replace('"doc_count": 12', '"doc_count": 99')
        path.write_text("\n".join([header] + lines[1:]) + "\n")
        with pytest.raises(ValueError, match="corrupt"):
            InvertedIndex.load(path)

    def test_incremental_add_matches_fit(self, corpus):
        docs = {m.id: m.text for m in corpus}
        a = InvertedIndex().fit(docs)
        b = InvertedIndex()
        for doc_id, text in docs.items():
            b.add(doc_id, text)
        q = "vaccine microchips viral"
        assert [(h.doc_id, h.score) for h in a.search(q, k=12)] == [
            (h.doc_id, h.score) for h in b.search(q, k=12)
        ]
