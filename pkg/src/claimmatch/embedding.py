"""Embedding providers, the hashed n-gram encoder, and vector math.

Every similarity in the system is a cosine between fixed-dimension float32
vectors.  Embeddings enter through one of three providers: a file of
precomputed vectors keyed by id, a remote HTTP encoder, or the built-in
trainable hashed n-gram encoder.
"""

from __future__ import annotations

import hashlib
import math
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence, runtime_checkable

import numpy as np
import requests
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_nonzero, check_same_dim, check_vector


class ProviderError(RuntimeError):
    """Embedding lookup or remote call failed; carries the failing index."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


@runtime_checkable
class EmbeddingProvider(Protocol):
    name: str

    @property
    def dim(self) -> int: ...

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


def normalize(v: np.ndarray) -> np.ndarray:
    """L2-normalize; rejects zero vectors. Idempotent up to rounding."""
    arr = check_vector(v)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return arr / norm


def cosine(a, b) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding."""
    va = check_vector(a, "a")
    vb = check_vector(b, "b")
    check_same_dim(va, vb)
    check_nonzero(va, "a")
    check_nonzero(vb, "b")
    sim = float(np.dot(va, vb) / (np.linalg.norm(va) * np.linalg.norm(vb)))
    return max(-1.0, min(1.0, sim))


def _format_floats(values: Iterable[float], precision: int = 9) -> str:
    return " ".join(f"{float(v):.{precision}g}" for v in values)


class StaticProvider:
    """Vectors keyed by exact input string (message text or id, caller's choice)."""

    def __init__(self, vectors: dict[str, np.ndarray], name: str = "static"):
        if not vectors:
            raise ValueError("static provider needs at least one vector")
        self.name = name
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent vector dimensions: {sorted(dims)}")
        self._dim = dims.pop()
        self._vectors = {k: np.asarray(v, dtype=np.float32) for k, v in vectors.items()}

    @property
    def dim(self) -> int:
        return self._dim

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self._dim), dtype=np.float32)
        for i, text in enumerate(texts):
            if text not in self._vectors:
                raise ProviderError(f"no vector for input at index {i}: {text!r}", index=i)
            out[i] = self._vectors[text]
        return out


class FileEmbeddingProvider(StaticProvider):
    """Provider backed by an embedding file (see read_embedding_file)."""

    def __init__(self, path):
        ids, matrix = read_embedding_file(path)
        super().__init__(dict(zip(ids, matrix)), name=f"file:{path}")


class RemoteEmbeddingProvider:
    """HTTP encoder: POST {"texts": [...]} returning {"vectors": [[...], ...]}."""

    def __init__(self, url: str, dim: Optional[int] = None, timeout: float = 30.0,
                 name: Optional[str] = None):
        self.url = url
        self.name = name or f"remote:{url}"
        self.timeout = timeout
        self._dim = dim

    @property
    def dim(self) -> int:
        if self._dim is None:
            # Probe with an empty string; the server declares dim implicitly.
            self._dim = self.embed_batch([""]).shape[1]
        return self._dim

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        try:
            resp = requests.post(self.url, json={"texts": list(texts)}, timeout=self.timeout)
            resp.raise_for_status()
            payload = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise ProviderError(f"remote provider {self.url} unreachable: {exc}") from exc
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError(
                f"remote provider returned {len(vectors) if isinstance(vectors, list) else 'no'}"
                f" vectors for {len(texts)} texts"
            )
        out = np.asarray(vectors, dtype=np.float32)
        if out.ndim != 2:
            raise ProviderError("remote provider returned ragged vectors")
        if self._dim is not None and out.shape[1] != self._dim:
            raise ProviderError(
                f"remote provider dim {out.shape[1]} != declared {self._dim}"
            )
        if self._dim is None:
            self._dim = out.shape[1]
        return out


class HashedNGramEncoder(TransformerMixin, BaseEstimator):
    """Linear encoder over hashed character n-gram counts.

    A text is casefolded, its character n-grams are hashed into
    ``n_buckets`` counting bins, the count vector is L2-normalized, pushed
    through a trainable ``n_buckets x dim`` projection, and (outside of
    training) L2-normalized again.  Deterministic given ``hash_seed`` and
    ``init_seed``.
    """

    def __init__(self, dim: int = 32, n_buckets: int = 16384,
                 ngram_sizes: tuple[int, ...] = (3, 4, 5),
                 hash_seed: int = 13, init_seed: int = 0,
                 normalize_output: bool = True, name: str = "toy"):
        self.dim = dim
        self.n_buckets = n_buckets
        self.ngram_sizes = ngram_sizes
        self.hash_seed = hash_seed
        self.init_seed = init_seed
        self.normalize_output = normalize_output
        self.name = name

    # -- projection state ---------------------------------------------------

    @property
    def projection(self) -> np.ndarray:
        if not hasattr(self, "projection_"):
            rng = np.random.default_rng(self.init_seed)
            self.projection_ = rng.standard_normal((self.n_buckets, self.dim)) / math.sqrt(
                self.n_buckets
            )
        return self.projection_

    @projection.setter
    def projection(self, matrix: np.ndarray) -> None:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (self.n_buckets, self.dim):
            raise ValueError(
                f"projection shape {matrix.shape} != ({self.n_buckets}, {self.dim})"
            )
        self.projection_ = matrix

    # -- feature hashing ----------------------------------------------------

    def _bucket(self, gram: str) -> int:
        digest = hashlib.blake2b(
            gram.encode("utf-8"),
            digest_size=8,
            key=self.hash_seed.to_bytes(8, "little"),
        ).digest()
        return int.from_bytes(digest, "little") % self.n_buckets

    def features(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        """Hashed n-gram counts as (bucket indices, L2-normalized values)."""
        text = text.casefold()
        counts: dict[int, int] = {}
        for n in self.ngram_sizes:
            if len(text) < n:
                grams = [text] if text else []
            else:
                grams = [text[i : i + n] for i in range(len(text) - n + 1)]
            for gram in grams:
                bucket = self._bucket(gram)
                counts[bucket] = counts.get(bucket, 0) + 1
        if not counts:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
        idx = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
        val = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
        order = np.argsort(idx)
        idx, val = idx[order], val[order]
        return idx, val / np.linalg.norm(val)

    # -- encoding -----------------------------------------------------------

    def encode_raw(self, texts: Sequence[str]) -> np.ndarray:
        """Projection output without the final normalization (float64)."""
        proj = self.projection
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            idx, val = self.features(text)
            if idx.size:
                out[i] = val @ proj[idx]
        return out

    def fit(self, X=None, y=None):
        self.projection  # materialize
        return self

    def transform(self, X: Sequence[str]) -> np.ndarray:
        raw = self.encode_raw(X)
        if self.normalize_output:
            norms = np.linalg.norm(raw, axis=1, keepdims=True)
            raw = np.divide(raw, norms, out=np.zeros_like(raw), where=norms > 0)
        return raw.astype(np.float32)

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        return self.transform(texts)

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("hashed-ngram-encoder v1\n")
            fh.write(f"dim={self.dim}\n")
            fh.write(f"buckets={self.n_buckets}\n")
            fh.write(f"ngram_sizes={','.join(str(n) for n in self.ngram_sizes)}\n")
            fh.write(f"hash_seed={self.hash_seed}\n")
            fh.write(f"normalize={int(self.normalize_output)}\n")
            for row in self.projection:
                fh.write(_format_floats(row, precision=17) + "\n")

    @classmethod
    def load(cls, path) -> "HashedNGramEncoder":
        with open(path, encoding="utf-8") as fh:
            magic = fh.readline().strip()
            if magic != "hashed-ngram-encoder v1":
                raise ValueError(f"not an encoder snapshot: {magic!r}")
            header = {}
            for _ in range(5):
                key, _, value = fh.readline().strip().partition("=")
                header[key] = value
            enc = cls(
                dim=int(header["dim"]),
                n_buckets=int(header["buckets"]),
                ngram_sizes=tuple(int(n) for n in header["ngram_sizes"].split(",")),
                hash_seed=int(header["hash_seed"]),
                normalize_output=bool(int(header["normalize"])),
            )
            rows = [
                np.array(line.split(), dtype=np.float64)
                for line in fh
                if line.strip()
            ]
        matrix = np.vstack(rows)
        enc.projection = matrix
        return enc


# -- embedding files ----------------------------------------------------------


def write_embedding_file(path, ids: Sequence[str], matrix: np.ndarray) -> None:
    """Write 'dim=<d>' then one 'id v1 v2 ...' line per vector (float32)."""
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValueError("matrix must be (len(ids), dim)")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={matrix.shape[1]}\n")
        for id_, row in zip(ids, matrix):
            if any(ch.isspace() for ch in id_):
                raise ValueError(f"embedding file ids may not contain whitespace: {id_!r}")
            fh.write(f"{id_} {_format_floats(row)}\n")


def read_embedding_file(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise ValueError(f"embedding file must start with 'dim=<d>', got {header!r}")
        dim = int(header[4:])
        ids, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            id_, _, rest = line.partition(" ")
            values = np.array(rest.split(), dtype=np.float32)
            if values.shape[0] != dim:
                raise ValueError(f"line {lineno}: expected {dim} floats, got {values.shape[0]}")
            ids.append(id_)
            rows.append(values)
    matrix = np.vstack(rows) if rows else np.empty((0, dim), dtype=np.float32)
    return ids, matrix


class VectorStore:
    """id -> float32 vector map with exact top-k cosine search."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float32)
        if len(ids) != matrix.shape[0]:
            raise ValueError("ids and matrix row count differ")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids in vector store")
        self._ids = list(ids)
        self._matrix = matrix
        self._index = {id_: i for i, id_ in enumerate(self._ids)}

    @classmethod
    def empty(cls, dim: int) -> "VectorStore":
        if dim < 1:
            raise ValueError("dim must be >= 1")
        return cls([], np.empty((0, dim), dtype=np.float32))

    @classmethod
    def load(cls, path) -> "VectorStore":
        return cls(*read_embedding_file(path))

    def add(self, id_: str, vector) -> None:
        if id_ in self._index:
            raise ValueError(f"duplicate id {id_!r} in vector store")
        vec = np.asarray(vector, dtype=np.float32).reshape(-1)
        if vec.shape[0] != self.dim:
            raise ValueError(f"expected {self.dim}-d vector, got {vec.shape[0]}")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"vector for {id_!r} has non-finite entries")
        self._index[id_] = len(self._ids)
        self._ids.append(id_)
        self._matrix = np.vstack([self._matrix, vec[None, :]])

    @classmethod
    def from_provider(cls, provider: EmbeddingProvider, keyed: dict[str, str]) -> "VectorStore":
        """Embed {id: text} with the provider, keeping id order."""
        ids = list(keyed)
        matrix = (
            provider.embed_batch([keyed[i] for i in ids])
            if ids
            else np.empty((0, provider.dim), dtype=np.float32)
        )
        return cls(ids, matrix)

    def save(self, path) -> None:
        write_embedding_file(path, self._ids, self._matrix)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, id_: str) -> bool:
        return id_ in self._index

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    def ids(self) -> list[str]:
        return list(self._ids)

    def get(self, id_: str) -> np.ndarray:
        return self._matrix[self._index[id_]]

    def items(self) -> Iterable[tuple[str, np.ndarray]]:
        return zip(self._ids, self._matrix)


def nearest_neighbors(query, store, k: int) -> list[tuple[str, float]]:
    """Exact exhaustive top-k by descending cosine; ties by ascending id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(store, VectorStore):
        pairs = list(store.items())
    else:
        pairs = list(store)
    if not pairs:
        raise ValueError("store is empty")
    scored = [(id_, cosine(query, vec)) for id_, vec in pairs]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]
