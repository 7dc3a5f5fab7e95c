"""Online single-link clustering of embedded messages.

Each insertion links the new item to every cluster holding at least one
item within the similarity threshold, merging them if there are several.
The resulting partition equals the connected components of the graph with
an edge wherever cosine >= threshold, for any insertion order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ._validation import check_seed, check_vector
from .embedding import cosine


@dataclass(frozen=True)
class Representatives:
    """Three members summarizing a cluster for human review."""

    medoid: str
    anti_medoid: str
    random: str


class OnlineSingleLinkClusterer:
    """Mutable single-link cluster state over embedding vectors.

    add_item applies the automatic linking rule.  new_cluster,
    add_to_cluster, and merge_clusters bypass the similarity scan; they
    exist so human review decisions (and their replay) can override the
    automatic rule, and may leave the state outside the single-link
    closure on purpose.
    """

    def __init__(self, threshold: float = 0.90):
        if not 0.0 <= threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {threshold}")
        self.threshold = threshold
        self._vectors: dict[str, np.ndarray] = {}
        self._norms: dict[str, float] = {}
        self._assignment: dict[str, int] = {}
        self._members: dict[int, set[str]] = {}
        self._next_cluster = 1
        self._dim: Optional[int] = None

    # -- introspection ---------------------------------------------------

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._vectors

    @property
    def dim(self) -> Optional[int]:
        return self._dim

    @property
    def next_cluster_id(self) -> int:
        return self._next_cluster

    def item_ids(self) -> list[str]:
        return sorted(self._vectors)

    def vector(self, item_id: str) -> np.ndarray:
        return self._vectors[item_id].copy()

    def cluster_of(self, item_id: str) -> int:
        if item_id not in self._assignment:
            raise KeyError(f"unknown item {item_id!r}")
        return self._assignment[item_id]

    def members(self, cluster_id: int) -> frozenset[str]:
        if cluster_id not in self._members:
            raise KeyError(f"unknown cluster {cluster_id}")
        return frozenset(self._members[cluster_id])

    def cluster_ids(self) -> list[int]:
        return sorted(self._members)

    def clusters_of_size(self, min_size: int = 1) -> list[tuple[int, frozenset[str]]]:
        """Clusters with at least min_size members, largest first."""
        if min_size < 1:
            raise ValueError("min_size must be >= 1")
        rows = [
            (cid, frozenset(members))
            for cid, members in self._members.items()
            if len(members) >= min_size
        ]
        rows.sort(key=lambda r: (-len(r[1]), r[0]))
        return rows

    # -- internal helpers --------------------------------------------------

    def _admit(self, item_id: str, vector) -> np.ndarray:
        if item_id in self._vectors:
            raise ValueError(f"duplicate item id {item_id!r}")
        vec = check_vector(vector, "vector")
        if self._dim is None:
            self._dim = vec.shape[0]
        elif vec.shape[0] != self._dim:
            raise ValueError(
                f"dimension mismatch: state holds {self._dim}-d vectors, "
                f"got {vec.shape[0]}"
            )
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ValueError("zero vector cannot be clustered")
        return vec

    def _store(self, item_id: str, vec: np.ndarray, cluster_id: int) -> None:
        self._vectors[item_id] = vec
        self._norms[item_id] = float(np.linalg.norm(vec))
        self._assignment[item_id] = cluster_id
        self._members.setdefault(cluster_id, set()).add(item_id)

    def _similarity(self, vec: np.ndarray, norm: float, other_id: str) -> float:
        sim = float(
            np.dot(self._vectors[other_id], vec) / (self._norms[other_id] * norm)
        )
        return max(-1.0, min(1.0, sim))

    def _merge_into(self, target: int, sources: Iterable[int]) -> None:
        for cid in sources:
            if cid == target:
                continue
            for item_id in self._members.pop(cid):
                self._assignment[item_id] = target
                self._members[target].add(item_id)

    # -- mutation ----------------------------------------------------------

    def add_item(self, item_id: str, vector) -> int:
        """Insert under the single-link rule; returns the final cluster id.

        Every cluster containing an item within the threshold is linked;
        multiple linked clusters collapse into the lowest-numbered one.
        """
        vec = self._admit(item_id, vector)
        norm = float(np.linalg.norm(vec))
        linked = {
            self._assignment[other]
            for other in self._vectors
            if self._similarity(vec, norm, other) >= self.threshold
        }
        if not linked:
            cluster_id = self._next_cluster
            self._next_cluster += 1
            self._members[cluster_id] = set()
        else:
            cluster_id = min(linked)
            self._merge_into(cluster_id, sorted(linked))
        self._store(item_id, vec, cluster_id)
        return cluster_id

    def new_cluster(self, item_id: str, vector) -> int:
        """Force a fresh singleton cluster regardless of similarity."""
        vec = self._admit(item_id, vector)
        cluster_id = self._next_cluster
        self._next_cluster += 1
        self._members[cluster_id] = set()
        self._store(item_id, vec, cluster_id)
        return cluster_id

    def add_to_cluster(self, item_id: str, vector, cluster_id: int) -> int:
        """Force-join an existing cluster (review override)."""
        if cluster_id not in self._members:
            raise KeyError(f"unknown cluster {cluster_id}")
        vec = self._admit(item_id, vector)
        self._store(item_id, vec, cluster_id)
        return cluster_id

    def merge_clusters(self, cluster_ids: Iterable[int]) -> int:
        """Merge clusters into the lowest id; returns the surviving id."""
        ids = sorted(set(cluster_ids))
        unknown = [cid for cid in ids if cid not in self._members]
        if unknown:
            raise KeyError(f"unknown clusters {unknown}")
        if not ids:
            raise ValueError("nothing to merge")
        target = ids[0]
        self._merge_into(target, ids[1:])
        return target

    def restore_cluster(self, cluster_id: int, items: dict[str, np.ndarray]) -> None:
        """Recreate a persisted cluster under its original id."""
        if cluster_id < 1:
            raise ValueError(f"cluster ids start at 1, got {cluster_id}")
        if cluster_id in self._members:
            raise ValueError(f"cluster {cluster_id} already exists")
        if not items:
            raise ValueError("a cluster needs at least one member")
        self._members[cluster_id] = set()
        for item_id, vector in items.items():
            vec = self._admit(item_id, vector)
            self._store(item_id, vec, cluster_id)
        self._next_cluster = max(self._next_cluster, cluster_id + 1)

    def advance_cluster_counter(self, value: int) -> None:
        """Fast-forward the id counter when restoring persisted state."""
        if value < self._next_cluster:
            raise ValueError(
                f"counter can only move forward: {value} < {self._next_cluster}"
            )
        self._next_cluster = value

    # -- reporting -----------------------------------------------------------

    def representatives(self, cluster_id: int, seed: int = 0) -> Representatives:
        """Medoid, anti-medoid, and a seeded random member.

        Mean distance uses 1 - cosine to the other members; ties resolve
        to the ascending item id.  A singleton yields the same member for
        all three slots.
        """
        check_seed(seed)
        members = sorted(self.members(cluster_id))
        if len(members) == 1:
            only = members[0]
            return Representatives(only, only, only)
        means = []
        for item_id in members:
            vec = self._vectors[item_id]
            dists = [
                1.0 - cosine(vec, self._vectors[other])
                for other in members
                if other != item_id
            ]
            means.append(sum(dists) / len(dists))
        medoid = min(zip(means, members))[1]
        anti = min(zip([-m for m in means], members))[1]
        pick = members[int(np.random.default_rng(seed).integers(len(members)))]
        return Representatives(medoid, anti, pick)

    def assignments(self) -> dict[str, int]:
        """Copy of the item id -> cluster id map."""
        return dict(self._assignment)

    def export_assignments(self, path) -> None:
        """One line per item: item_id TAB cluster_id, sorted by item id."""
        with open(path, "w", encoding="utf-8") as fh:
            for item_id in sorted(self._assignment):
                fh.write(f"{item_id}\t{self._assignment[item_id]}\n")
