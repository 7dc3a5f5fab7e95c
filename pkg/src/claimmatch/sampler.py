"""Annotation-pair sampling.

Candidate pairs for human similarity annotation are drawn stratified over
cosine similarity: the quota is split across fixed-width bins of [-1, 1]
in proportion to a Gaussian density at the bin centers, concentrating
annotation effort near the interesting decision region while keeping tails
represented.  A separate helper draws uniform random pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._validation import check_seed
from .corpus import Message
from .embedding import EmbeddingProvider, cosine


@dataclass(frozen=True)
class SamplingPlan:
    mean: float = 0.825
    std: float = 0.1
    pairs_per_model: int = 100
    random_pairs: int = 100
    bin_width: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.std <= 0:
            raise ValueError("std must be positive")
        if not 0.0 < self.bin_width <= 2.0:
            raise ValueError("bin_width must be in (0, 2]")
        if abs(2.0 / self.bin_width - round(2.0 / self.bin_width)) > 1e-9:
            raise ValueError("bin_width must divide [-1, 1] evenly")
        if self.pairs_per_model < 0 or self.random_pairs < 0:
            raise ValueError("pair counts must be non-negative")
        check_seed(self.seed)

    @property
    def n_bins(self) -> int:
        return round(2.0 / self.bin_width)

    def bin_of(self, value: float) -> int:
        """Bin index of a cosine; the +1.0 edge folds into the last bin."""
        if not -1.0 <= value <= 1.0:
            raise ValueError(f"cosine out of range: {value}")
        return min(int((value + 1.0) / self.bin_width), self.n_bins - 1)

    def bin_label(self, index: int) -> str:
        lo = -1.0 + index * self.bin_width
        hi = lo + self.bin_width
        closer = "]" if index == self.n_bins - 1 else ")"
        return f"[{lo:.3f},{hi:.3f}{closer}"


@dataclass(frozen=True)
class SampledPair:
    id_a: str
    id_b: str
    cosine: float
    stratum: str
    provider: str


def _gaussian_quotas(plan: SamplingPlan) -> list[int]:
    """Largest-remainder allocation proportional to density at bin centers."""
    centers = [-1.0 + (j + 0.5) * plan.bin_width for j in range(plan.n_bins)]
    weights = [math.exp(-((c - plan.mean) ** 2) / (2.0 * plan.std**2)) for c in centers]
    total = math.fsum(weights)
    shares = [plan.pairs_per_model * w / total for w in weights]
    quotas = [int(math.floor(s)) for s in shares]
    leftover = plan.pairs_per_model - sum(quotas)
    remainders = sorted(range(plan.n_bins), key=lambda j: (-(shares[j] - quotas[j]), j))
    for j in remainders[:leftover]:
        quotas[j] += 1
    return quotas


def _spill_overflow(quotas: list[int], capacities: Sequence[int]) -> list[int]:
    """Move quota out of over-full bins to the nearest bins with spare room.

    Bins are drained in ascending index order; each unit of excess lands in
    the closest bin that still has spare capacity, preferring the lower
    index on distance ties.  Requires total capacity >= total quota.
    """
    quotas = list(quotas)
    n = len(quotas)
    for j in range(n):
        excess = quotas[j] - capacities[j]
        if excess <= 0:
            continue
        quotas[j] = capacities[j]
        while excess > 0:
            target = None
            for dist in range(1, n):
                for k in (j - dist, j + dist):
                    if 0 <= k < n and quotas[k] < capacities[k]:
                        target = k
                        break
                if target is not None:
                    break
            assert target is not None, "total capacity below total quota"
            room = capacities[target] - quotas[target]
            moved = min(excess, room)
            quotas[target] += moved
            excess -= moved
    return quotas


def _all_pairs(items: Sequence[Message]) -> list[tuple[str, str]]:
    ids = [m.id for m in items]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate message ids in sampling input")
    if len(ids) < 2:
        raise ValueError("need at least two messages to form pairs")
    ids.sort()
    return [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i + 1, len(ids))]


def sample_pairs(
    items: Sequence[Message], provider: EmbeddingProvider, plan: SamplingPlan
) -> list[SampledPair]:
    """Gaussian-stratified sample of distinct unordered message pairs.

    All pairwise cosines are computed up front, binned, and drawn without
    replacement within each bin according to the plan's quota allocation.
    Deterministic for a fixed plan (including its seed).
    """
    pairs = _all_pairs(items)
    if plan.pairs_per_model > len(pairs):
        raise ValueError(
            f"quota {plan.pairs_per_model} exceeds the {len(pairs)} available pairs"
        )
    texts = {m.id: m.text for m in items}
    ids = sorted(texts)
    vectors = dict(zip(ids, provider.embed_batch([texts[i] for i in ids])))

    binned: dict[int, list[tuple[str, str, float]]] = {j: [] for j in range(plan.n_bins)}
    for id_a, id_b in pairs:
        sim = cosine(vectors[id_a], vectors[id_b])
        binned[plan.bin_of(sim)].append((id_a, id_b, sim))

    quotas = _spill_overflow(
        _gaussian_quotas(plan), [len(binned[j]) for j in range(plan.n_bins)]
    )
    rng = np.random.default_rng(plan.seed)
    out: list[SampledPair] = []
    for j in range(plan.n_bins):
        take = quotas[j]
        if take == 0:
            continue
        bucket = binned[j]
        chosen = sorted(rng.choice(len(bucket), size=take, replace=False).tolist())
        label = plan.bin_label(j)
        out.extend(
            SampledPair(bucket[i][0], bucket[i][1], bucket[i][2], label, provider.name)
            for i in chosen
        )
    return out


def sample_random_pairs(
    items: Sequence[Message], n: int, seed: int = 0
) -> list[tuple[str, str]]:
    """Uniform sample without replacement over distinct unordered pairs."""
    check_seed(seed)
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return []
    pairs = _all_pairs(items)
    if n > len(pairs):
        raise ValueError(f"requested {n} pairs but only {len(pairs)} exist")
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(pairs), size=n, replace=False).tolist())
    return [pairs[i] for i in chosen]


def write_sample_file(path, samples: Sequence[SampledPair]) -> None:
    """TSV lines: id_a, id_b, cosine, stratum, provider."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(f"{s.id_a}\t{s.id_b}\t{s.cosine:.9g}\t{s.stratum}\t{s.provider}\n")
