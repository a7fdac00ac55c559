"""Relationship graph construction against a brute-force oracle."""

from __future__ import annotations

import numpy as np
import pytest

from retsimd.errors import ContractError
from retsimd.graph import (
    CENTRAL,
    DEPENDENCY,
    TEMPORAL,
    DependencyEdges,
    assemble_graph,
    build_central,
    build_dependency,
    build_temporal,
    fallback_dependency_edges,
    normalize_adjacency,
)
from retsimd.segmentation import segment_fixed_number


def oracle_adjacency(k: int, dep_edges, boundaries):
    """Independent edge enumeration: central star, temporal chain, merged parse.

    ``boundaries[j]`` is the end (exclusive) of segment j in token space.
    Returns the (k+1)x(k+1) 0/1 adjacency and the per-edge tag sets.
    """
    def seg_of(tok: int) -> int:
        for j, end in enumerate(boundaries):
            if tok < end:
                return j + 1
        raise AssertionError("token outside segments")

    tags: dict[tuple[int, int], set[str]] = {}
    for j in range(1, k + 1):
        tags.setdefault((0, j), set()).add(CENTRAL)
    for j in range(1, k):
        tags.setdefault((j, j + 1), set()).add(TEMPORAL)
    for h, d in dep_edges:
        a, b = seg_of(h), seg_of(d)
        if a != b:
            tags.setdefault((min(a, b), max(a, b)), set()).add(DEPENDENCY)

    adj = np.zeros((k + 1, k + 1))
    for (a, b) in tags:
        adj[a, b] = adj[b, a] = 1.0
    return adj, tags


class TestEdgeBuilders:
    def test_central_star(self):
        assert build_central(3) == {(0, 1), (0, 2), (0, 3)}
        assert build_central(1) == {(0, 1)}

    def test_temporal_chain(self):
        assert build_temporal(4) == {(1, 2), (2, 3), (3, 4)}
        assert build_temporal(1) == set()

    def test_k_zero_rejected(self):
        with pytest.raises(ContractError):
            build_central(0)
        with pytest.raises(ContractError):
            build_temporal(0)


class TestDependencyMerge:
    def test_hand_fixture(self):
        # tokens 0-2 -> segment 1, 3-5 -> 2, 6-7 -> 3
        text = [f"w{i}" for i in range(8)]
        segs = segment_fixed_number(text, 3)
        dep = DependencyEdges(((0, 3), (1, 2), (4, 7), (3, 0), (5, 6)))
        got = build_dependency(dep, segs)
        # (0,3): cross 1-2; (1,2): intra, vanishes; (4,7): cross 2-3;
        # (3,0): duplicate of 1-2 reversed; (5,6): cross 2-3 duplicate
        assert got == {(1, 2), (2, 3)}

    def test_single_segment_all_intra(self):
        segs = segment_fixed_number(["a", "b", "c"], 1)
        dep = DependencyEdges(((0, 1), (1, 2)))
        assert build_dependency(dep, segs) == set()

    def test_out_of_range_token_rejected(self):
        segs = segment_fixed_number(["a", "b"], 2)
        with pytest.raises(ContractError):
            build_dependency(DependencyEdges(((0, 5),)), segs)

    def test_self_edge_rejected(self):
        with pytest.raises(ContractError):
            DependencyEdges(((2, 2),))

    def test_negative_index_rejected(self):
        with pytest.raises(ContractError):
            DependencyEdges(((-1, 0),))


class TestAssembleAgainstOracle:
    def test_random_dependency_sets(self):
        """All K in 1..6, 50 random parse-edge sets each, vs the oracle."""
        rng = np.random.default_rng(42)
        d = 4
        for k in range(1, 7):
            n_tokens = 2 * k + 3
            text = [f"w{i}" for i in range(n_tokens)]
            segs = segment_fixed_number(text, k)
            assert segs.k == k
            boundaries = np.cumsum([len(s) for s in segs.segments]).tolist()
            for _ in range(50):
                n_edges = int(rng.integers(0, 9))
                edges = []
                while len(edges) < n_edges:
                    h, dep = rng.integers(0, n_tokens, size=2)
                    if h != dep:
                        edges.append((int(h), int(dep)))
                dep_set = DependencyEdges(tuple(edges))
                h_v = rng.standard_normal(d)
                h_g = [rng.standard_normal(d) for _ in range(k)]
                graph = assemble_graph(h_v, h_g, dep_set, segs)

                want_adj, want_tags = oracle_adjacency(k, edges, boundaries)
                np.testing.assert_array_equal(graph.adjacency, want_adj)
                assert {e: set(t) for e, t in graph.provenance.items()} == want_tags
                np.testing.assert_array_equal(graph.features[0], h_v)
                for j, g in enumerate(h_g):
                    np.testing.assert_array_equal(graph.features[j + 1], g)

    def test_no_parse_drops_dependency_edges(self):
        segs = segment_fixed_number(["a", "b", "c", "d"], 2)
        graph = assemble_graph(np.zeros(3), [np.ones(3)] * 2, None, segs)
        want, _ = oracle_adjacency(2, [], [2, 4])
        np.testing.assert_array_equal(graph.adjacency, want)

    def test_feature_count_mismatch_rejected(self):
        segs = segment_fixed_number(["a", "b"], 2)
        with pytest.raises(ContractError):
            assemble_graph(np.zeros(3), [np.zeros(3)], None, segs)

    def test_feature_dim_mismatch_rejected(self):
        segs = segment_fixed_number(["a", "b"], 2)
        with pytest.raises(ContractError):
            assemble_graph(np.zeros(3), [np.zeros(3), np.zeros(4)], None, segs)


class TestNormalization:
    def test_symmetric_normalization_oracle(self):
        rng = np.random.default_rng(45)
        for _ in range(20):
            n = int(rng.integers(1, 7))
            adj = (rng.random((n, n)) < 0.4).astype(float)
            adj = np.triu(adj, 1)
            adj = adj + adj.T
            got = normalize_adjacency(adj)
            lam = adj + np.eye(n)
            deg = lam.sum(axis=1)
            want = np.diag(deg**-0.5) @ lam @ np.diag(deg**-0.5)
            np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_rows_scaled_by_degree(self):
        adj = np.array([[0.0, 1.0], [1.0, 0.0]])
        got = normalize_adjacency(adj)
        np.testing.assert_allclose(got, np.full((2, 2), 0.5))


class TestFallbackParser:
    def test_adjacent_edges_skip_punctuation(self):
        edges = fallback_dependency_edges(("a", "b", ".", "c", "d"))
        assert edges.edges == ((0, 1), (3, 4))

    def test_single_token_no_edges(self):
        assert fallback_dependency_edges(("a",)).edges == ()
