"""Online single-link clustering against a connected-components oracle."""

import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimmatch.cluster import OnlineSingleLinkClusterer
from claimmatch.embedding import cosine

from conftest import unit_vectors


def oracle_partition(vectors: dict[str, np.ndarray], threshold: float) -> set[frozenset]:
    """Connected components of the >= threshold similarity graph."""
    graph = nx.Graph()
    graph.add_nodes_from(vectors)
    for a, b in itertools.combinations(vectors, 2):
        if cosine(vectors[a], vectors[b]) >= threshold:
            graph.add_edge(a, b)
    return {frozenset(c) for c in nx.connected_components(graph)}


def online_partition(vectors: dict[str, np.ndarray], threshold: float,
                     order=None) -> set[frozenset]:
    clusterer = OnlineSingleLinkClusterer(threshold)
    for key in order or vectors:
        clusterer.add_item(key, vectors[key])
    groups: dict[int, set] = {}
    for item, cid in clusterer.assignments().items():
        groups.setdefault(cid, set()).add(item)
    return {frozenset(g) for g in groups.values()}


def random_vectors(n: int, dim: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {f"i{k:03d}": rng.normal(size=dim).astype(np.float32) for k in range(n)}


class TestAgainstOracle:
    @pytest.mark.parametrize("seed", range(8))
    def test_random_sets_match_components(self, seed):
        vectors = random_vectors(40, 4, seed)
        threshold = 0.55
        assert online_partition(vectors, threshold) == oracle_partition(vectors, threshold)

    @pytest.mark.parametrize("seed", range(5))
    def test_order_invariant(self, seed):
        vectors = random_vectors(30, 3, seed + 100)
        rng = np.random.default_rng(seed)
        expected = oracle_partition(vectors, 0.6)
        keys = list(vectors)
        for _ in range(6):
            rng.shuffle(keys)
            assert online_partition(vectors, 0.6, order=keys) == expected


class TestChaining:
    def test_transitive_merge_through_middle_item(self):
        # a~b and b~c but a!~c: all three must share a cluster once b arrives
        vectors = unit_vectors({"a": 0.0, "b": 0.5, "c": 1.0})
        threshold = 0.9  # cos(0.5) ~ 0.878 < 0.9? no: cos(0.5 rad) = 0.8776
        threshold = 0.87
        assert cosine(vectors["a"], vectors["b"]) >= threshold
        assert cosine(vectors["b"], vectors["c"]) >= threshold
        assert cosine(vectors["a"], vectors["c"]) < threshold
        clusterer = OnlineSingleLinkClusterer(threshold)
        clusterer.add_item("a", vectors["a"])
        clusterer.add_item("c", vectors["c"])
        assert clusterer.assignments()["a"] != clusterer.assignments()["c"]
        clusterer.add_item("b", vectors["b"])
        assignments = clusterer.assignments()
        assert assignments["a"] == assignments["b"] == assignments["c"]

    def test_merge_keeps_lowest_cluster_id(self):
        vectors = unit_vectors({"a": 0.0, "b": 0.5, "c": 1.0})
        clusterer = OnlineSingleLinkClusterer(0.87)
        clusterer.add_item("a", vectors["a"])   # cluster 1
        clusterer.add_item("c", vectors["c"])   # cluster 2
        clusterer.add_item("b", vectors["b"])   # links both
        assert set(clusterer.assignments().values()) == {1}


class TestOverrides:
    def test_new_cluster_and_add_to_cluster(self):
        clusterer = OnlineSingleLinkClusterer(0.9)
        cid = clusterer.new_cluster("a", np.array([1.0, 0.0], dtype=np.float32))
        clusterer.add_to_cluster("b", np.array([-1.0, 0.0], dtype=np.float32), cid)
        assert clusterer.assignments() == {"a": cid, "b": cid}

    def test_add_to_missing_cluster_rejected(self):
        clusterer = OnlineSingleLinkClusterer(0.9)
        with pytest.raises(KeyError):
            clusterer.add_to_cluster("a", np.array([1.0, 0.0], dtype=np.float32), 7)

    def test_forced_new_cluster_skips_linking(self):
        v = np.array([1.0, 0.0], dtype=np.float32)
        clusterer = OnlineSingleLinkClusterer(0.9)
        clusterer.add_item("a", v)
        cid = clusterer.new_cluster("b", v)  # identical vector, kept separate
        assert clusterer.assignments()["a"] != cid

    def test_manual_merge(self):
        va = np.array([1.0, 0.0], dtype=np.float32)
        vb = np.array([0.0, 1.0], dtype=np.float32)
        clusterer = OnlineSingleLinkClusterer(0.9)
        clusterer.add_item("a", va)
        clusterer.add_item("b", vb)
        kept = clusterer.merge_clusters(
            [clusterer.assignments()["a"], clusterer.assignments()["b"]]
        )
        assert kept == 1
        assert set(clusterer.assignments().values()) == {1}

    def test_duplicate_item_rejected(self):
        clusterer = OnlineSingleLinkClusterer(0.9)
        v = np.array([1.0, 0.0], dtype=np.float32)
        clusterer.add_item("a", v)
        with pytest.raises(ValueError, match="duplicate"):
            clusterer.add_item("a", v)

    def test_dim_pinned_by_first_item(self):
        clusterer = OnlineSingleLinkClusterer(0.9)
        clusterer.add_item("a", np.array([1.0, 0.0], dtype=np.float32))
        with pytest.raises(ValueError):
            clusterer.add_item("b", np.array([1.0, 0.0, 0.0], dtype=np.float32))


class TestInspection:
    def test_clusters_of_size_sorted_by_size_then_id(self):
        clusterer = OnlineSingleLinkClusterer(0.99)
        v = lambda theta: np.array([np.cos(theta), np.sin(theta)], dtype=np.float32)
        c1 = clusterer.new_cluster("a", v(0.0))
        clusterer.add_to_cluster("b", v(0.0), c1)
        c2 = clusterer.new_cluster("c", v(1.0))
        clusterer.add_to_cluster("d", v(1.0), c2)
        clusterer.add_to_cluster("e", v(1.0), c2)
        c3 = clusterer.new_cluster("f", v(2.0))
        sizes = clusterer.clusters_of_size(1)
        assert [cid for cid, _ in sizes] == [c2, c1, c3]
        assert [len(m) for _, m in sizes] == [3, 2, 1]
        assert clusterer.clusters_of_size(2) == sizes[:2]

    def test_representatives_medoid_and_antimedoid(self):
        # b sits between a and c: lowest mean distance -> medoid;
        # a and c tie as anti-medoid and the tie goes to the lower id.
        vectors = unit_vectors({"a": 0.0, "b": 0.5, "c": 1.0})
        clusterer = OnlineSingleLinkClusterer(0.85)
        for key, vec in vectors.items():
            clusterer.add_item(key, vec)
        (cid,) = set(clusterer.assignments().values())
        reps = clusterer.representatives(cid, seed=0)
        assert reps.medoid == "b"
        assert reps.anti_medoid == "a"
        assert reps.random in {"a", "b", "c"}

    def test_random_representative_deterministic_per_seed(self):
        vectors = random_vectors(10, 3, 0)
        clusterer = OnlineSingleLinkClusterer(0.9)
        clusterer.restore_cluster(1, vectors)  # force one cluster
        picks = {clusterer.representatives(1, seed=5).random for _ in range(5)}
        assert len(picks) == 1

    def test_representatives_unknown_cluster(self):
        with pytest.raises(KeyError):
            OnlineSingleLinkClusterer(0.9).representatives(1, seed=0)

    def test_export_assignments(self, tmp_path):
        clusterer = OnlineSingleLinkClusterer(0.9)
        clusterer.add_item("b", np.array([1.0, 0.0], dtype=np.float32))
        clusterer.add_item("a", np.array([0.99, 0.1], dtype=np.float32))
        path = tmp_path / "assign.tsv"
        clusterer.export_assignments(path)
        lines = path.read_text().splitlines()
        assert lines == ["a\t1", "b\t1"]


class TestSnapshotSupport:
    def test_restore_round_trip(self):
        vectors = random_vectors(20, 3, 4)
        a = OnlineSingleLinkClusterer(0.6)
        for key, vec in vectors.items():
            a.add_item(key, vec)

        b = OnlineSingleLinkClusterer(0.6)
        groups: dict[int, dict[str, np.ndarray]] = {}
        for item, cid in a.assignments().items():
            groups.setdefault(cid, {})[item] = vectors[item]
        for cid, items in groups.items():
            b.restore_cluster(cid, items)
        b.advance_cluster_counter(a.next_cluster_id)

        probe = np.random.default_rng(9).normal(size=3).astype(np.float32)
        a.add_item("probe", probe)
        b.add_item("probe", probe)
        assert a.assignments() == b.assignments()


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.3, max_value=0.9))
def test_property_matches_oracle(seed, threshold):
    vectors = random_vectors(15, 3, seed)
    assert online_partition(vectors, threshold) == oracle_partition(vectors, threshold)
