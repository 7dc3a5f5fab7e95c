"""From-scratch tokenizer, inverted index, and BM25 ranking.

Candidate generation for the matcher: score(q, d) sums, over query tokens,
IDF(t) * tf / (tf + k1 * (1 - b + b * len_d / avg_len)) with
IDF(t) = ln(1 + (N - df + 0.5) / (df + 0.5)).  Query tokens count with
multiplicity.  k1=1.2, b=0.75 by default.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional


def _is_word_char(ch: str) -> bool:
    # Letters, digits, and combining marks form words; marks matter for
    # Indic scripts where matras must stay attached to their base letter.
    return ch == "_" or unicodedata.category(ch)[0] in "LMN"


def tokenize(text: str) -> list[str]:
    """Unicode word segmentation, casefolded. No stemming, no stopwords."""
    tokens = []
    start = None
    for i, ch in enumerate(text):
        if _is_word_char(ch):
            if start is None:
                start = i
        elif start is not None:
            tokens.append(text[start:i].casefold())
            start = None
    if start is not None:
        tokens.append(text[start:].casefold())
    return tokens


@dataclass(frozen=True)
class ScoredHit:
    doc_id: str
    score: float


@dataclass
class InvertedIndex:
    """Term -> postings map with BM25 scoring.

    Mutation requires exclusive access; searches against a published index
    are read-only and safe to run concurrently.
    """

    k1: float = 1.2
    b: float = 0.75
    postings: dict[str, list[tuple[str, int]]] = field(default_factory=dict)
    doc_lengths: dict[str, int] = field(default_factory=dict)

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    @property
    def avg_doc_len(self) -> float:
        if not self.doc_lengths:
            return 0.0
        return sum(self.doc_lengths.values()) / len(self.doc_lengths)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.doc_lengths

    def add(self, doc_id: str, text: str) -> None:
        if doc_id in self.doc_lengths:
            raise ValueError(f"duplicate doc id: {doc_id!r}")
        tokens = tokenize(text)
        self.doc_lengths[doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            plist = self.postings.setdefault(term, [])
            plist.append((doc_id, tf))
            # Keep postings sorted by doc id; appends are usually in order.
            if len(plist) > 1 and plist[-2][0] > doc_id:
                plist.sort(key=lambda p: p[0])

    def fit(self, docs: Mapping[str, str]) -> "InvertedIndex":
        """Index a whole corpus of {doc_id: text}."""
        for doc_id, text in docs.items():
            self.add(doc_id, text)
        return self

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        n = self.doc_count
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def search(self, query: str, k: int) -> list[ScoredHit]:
        """Exact top-k by BM25; ties broken by ascending doc id.

        Only documents matching at least one query term are returned (every
        match has a strictly positive score under the ln(1 + .) IDF).
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.doc_lengths:
            raise ValueError("search on an empty index")
        k1, b = self.k1, self.b
        avg_len = self.avg_doc_len
        scores: dict[str, float] = {}
        for term in tokenize(query):
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for doc_id, tf in plist:
                norm = k1 * (1.0 - b + b * self.doc_lengths[doc_id] / avg_len)
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf / (tf + norm)
        ranked = sorted(scores.items(), key=lambda t: (-t[1], t[0]))
        return [ScoredHit(doc_id, score) for doc_id, score in ranked[:k]]

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            header = {
                "format": "bm25-index",
                "version": 1,
                "k1": self.k1,
                "b": self.b,
                "doc_count": self.doc_count,
            }
            fh.write(json.dumps(header) + "\n")
            for doc_id, length in self.doc_lengths.items():
                fh.write(json.dumps({"doc": doc_id, "len": length}, ensure_ascii=False) + "\n")
            for term in sorted(self.postings):
                rec = {"term": term, "postings": [[d, tf] for d, tf in self.postings[term]]}
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path) -> "InvertedIndex":
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("format") != "bm25-index" or header.get("version") != 1:
                raise ValueError(f"unsupported index file header: {header}")
            index = cls(k1=header["k1"], b=header["b"])
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "doc" in rec:
                    index.doc_lengths[rec["doc"]] = rec["len"]
                else:
                    index.postings[rec["term"]] = [(d, tf) for d, tf in rec["postings"]]
        if index.doc_count != header["doc_count"]:
            raise ValueError(
                f"index file corrupt: header says {header['doc_count']} docs, "
                f"found {index.doc_count}"
            )
        return index
