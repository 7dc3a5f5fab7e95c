"""Shared fixtures: a small paraphrase corpus and deterministic providers."""

import json

import numpy as np
import pytest

from claimmatch.corpus import Corpus, Message, Source
from claimmatch.embedding import HashedNGramEncoder, StaticProvider, VectorStore

PARAPHRASES = [
    "the vaccine contains microchips says viral post",
    "viral post says the vaccine contains microchips",
    "5g towers cause illness claim spreads online",
    "claim spreads online that 5g towers cause illness",
    "drinking hot water cures the virus message",
    "lemon juice prevents infection forwarded message",
    "banks will close friday warns chain letter",
    "chain letter warns banks will close friday",
    "new tax on mobile payments rumor circulates",
    "rumor circulates about new tax on mobile payments",
    "free grocery coupons offered by supermarket scam",
    "scam offers free grocery coupons from supermarket",
]


@pytest.fixture
def messages() -> list[Message]:
    return [
        Message(id=f"m{i:02d}", text=t, source=Source.TIPLINE, language="en")
        for i, t in enumerate(PARAPHRASES)
    ]


@pytest.fixture
def corpus(messages) -> Corpus:
    return Corpus(messages)


@pytest.fixture
def encoder() -> HashedNGramEncoder:
    return HashedNGramEncoder(dim=32, init_seed=7)


@pytest.fixture
def store(corpus, encoder) -> VectorStore:
    return VectorStore.from_provider(encoder, {m.id: m.text for m in corpus})


@pytest.fixture
def raw_jsonl(tmp_path, messages):
    path = tmp_path / "raw.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for m in messages:
            fh.write(json.dumps({"id": m.id, "text": m.text, "language": m.language}) + "\n")
    return path


def unit_vectors(points) -> dict[str, np.ndarray]:
    """Build 2D unit vectors at the given angles (radians), keyed by id."""
    return {
        key: np.array([np.cos(theta), np.sin(theta)], dtype=np.float32)
        for key, theta in points.items()
    }
