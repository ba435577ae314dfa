"""Graph data model and structural operators."""

import math
from collections import deque

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gpl_lab.encoders import LinearGinParams, linear_gin_encode
from gpl_lab.errors import DimensionMismatch, GraphFormatError, IndexRangeError
from gpl_lab.graph import (
    AnchorChoice,
    Graph,
    PromptGraph,
    TriggerGraph,
    attach_prompt_crosslinked,
    attach_prompt_isolated,
    attach_trigger,
    augment_links,
    choose_anchor,
    cosine_sim,
    induced_subgraph,
    read_graph_text,
    write_graph_text,
)

from conftest import random_graph


def path_graph(n: int, d: int = 2) -> Graph:
    return Graph(np.arange(n * d, dtype=float).reshape(n, d), [(i, i + 1) for i in range(n - 1)])


def triangle() -> Graph:
    return Graph(np.eye(3), [(0, 1), (1, 2), (0, 2)])


def trigger3(d: int = 2) -> TriggerGraph:
    return TriggerGraph(np.ones((3, d)), attach_node_index=0)


class TestGraphInvariants:
    def test_rejects_self_loop(self):
        with pytest.raises(GraphFormatError):
            Graph(np.zeros((2, 1)), [(0, 0)])

    def test_rejects_out_of_range_edge(self):
        with pytest.raises(IndexRangeError):
            Graph(np.zeros((2, 1)), [(0, 5)])

    def test_rejects_empty(self):
        with pytest.raises(GraphFormatError):
            Graph(np.zeros((0, 3)), [])

    def test_edges_deduplicated_and_normalized(self):
        g = Graph(np.zeros((3, 1)), [(2, 1), (1, 2), (0, 1)])
        assert g.edges == ((0, 1), (1, 2))

    def test_degrees_and_adjacency(self):
        g = triangle()
        assert g.degrees().tolist() == [2.0, 2.0, 2.0]
        assert torch.equal(g.adjacency(), g.adjacency().T)
        assert g.total_degree() == 6.0


class TestCosine:
    def test_aligned(self):
        assert cosine_sim([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_sim([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)

    def test_opposed(self):
        assert cosine_sim([1.0, 1.0], [-1.0, -1.0]) == pytest.approx(-1.0)

    def test_zero_norm_is_zero(self):
        assert cosine_sim([0.0, 0.0], [1.0, 2.0]) == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_sim([1.0], [1.0, 2.0])

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=6))
    @settings(max_examples=50, deadline=None)
    def test_range(self, values):
        u = values
        v = values[::-1]
        assert -1.0 - 1e-9 <= cosine_sim(u, v) <= 1.0 + 1e-9


class TestAttachTrigger:
    def test_two_node_path(self):
        g = path_graph(2)
        out = attach_trigger(g, trigger3(), AnchorChoice(0))
        assert out.num_nodes == 5
        assert len(out.edges) == 1 + 3 + 1

    def test_single_node_host(self):
        g = Graph(np.zeros((1, 2)), [])
        out = attach_trigger(g, trigger3(), AnchorChoice(0))
        assert out.num_nodes == 4
        assert len(out.edges) == 0 + 3 + 1

    def test_double_attachment(self):
        g = path_graph(2)
        once = attach_trigger(g, trigger3(), AnchorChoice(0))
        twice = attach_trigger(once, trigger3(), AnchorChoice(1))
        assert twice.num_nodes == 2 + 3 + 3
        cross = [e for e in twice.edges if (e[0] < 2 <= e[1]) or (e[0] < 5 <= e[1])]
        assert (0, 2) in twice.edges and (1, 5) in twice.edges
        assert len(cross) == 2

    def test_edge_count_formula(self, rng):
        for _ in range(10):
            g = random_graph(rng, int(rng.integers(1, 9)), 3)
            t = TriggerGraph(rng.standard_normal((4, 3)))
            anchor = choose_anchor(g, 7)
            out = attach_trigger(g, t, anchor)
            assert len(out.edges) == len(g.edges) + 4 * 3 // 2 + 1

    def test_inputs_unmodified(self):
        g = path_graph(2)
        t = trigger3()
        edges_before, feats_before = g.edges, g.node_features.clone()
        attach_trigger(g, t, AnchorChoice(1))
        assert g.edges == edges_before
        assert torch.equal(g.node_features, feats_before)

    def test_anchor_out_of_range(self):
        with pytest.raises(IndexRangeError):
            attach_trigger(path_graph(2), trigger3(), AnchorChoice(9))

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            attach_trigger(path_graph(2, d=2), trigger3(d=5), AnchorChoice(0))


class TestAttachPromptIsolated:
    def test_triangle_plus_two_tokens(self):
        p = PromptGraph(np.zeros((2, 3)), [(0, 1)])
        out = attach_prompt_isolated(triangle(), p)
        assert out.num_nodes == 5
        assert len(out.edges) == 4
        # two components: the triangle and the token pair
        assert (3, 4) in out.edges
        assert not any(e[0] < 3 <= e[1] for e in out.edges)

    def test_edgeless_prompt_adds_components(self):
        p = PromptGraph(np.zeros((4, 3)))
        out = attach_prompt_isolated(triangle(), p)
        assert out.num_nodes == 7
        assert len(out.edges) == 3

    def test_linear_gin_sum_splits_over_components(self, rng):
        # readout-sum of the analytic encoder = sum of per-component sums
        g = random_graph(rng, 5, 3)
        p = PromptGraph(rng.standard_normal((3, 3)), [(0, 2)])
        gin = LinearGinParams(0.3, rng.standard_normal((3, 4)))
        _, joint = linear_gin_encode(gin, attach_prompt_isolated(g, p))
        _, part_g = linear_gin_encode(gin, g)
        _, part_p = linear_gin_encode(gin, p.as_graph())
        assert torch.allclose(joint, part_g + part_p, atol=1e-12)


class TestAttachPromptCrosslinked:
    def test_full_edge_count(self):
        g = path_graph(2)
        p = PromptGraph(np.zeros((3, 2)))
        out = attach_prompt_crosslinked(g, p, "full")
        assert out.num_nodes == 5
        assert len(out.edges) == 1 + 0 + 6

    def test_similarity_one_matches_identical_node(self):
        feats = np.array([[1.0, 0.0], [0.0, 1.0]])
        g = Graph(feats, [(0, 1)])
        p = PromptGraph(np.array([[1.0, 0.0]]))
        out = attach_prompt_crosslinked(g, p, "similarity", k=1)
        assert (0, 2) in out.edges
        assert (1, 2) not in out.edges

    def test_similarity_k_equals_n_is_full(self, rng):
        g = random_graph(rng, 4, 3)
        p = PromptGraph(rng.standard_normal((2, 3)))
        full = attach_prompt_crosslinked(g, p, "full")
        sim = attach_prompt_crosslinked(g, p, "similarity", k=4)
        assert full.edges == sim.edges

    def test_k_too_large(self):
        with pytest.raises(IndexRangeError):
            attach_prompt_crosslinked(
                path_graph(2), PromptGraph(np.zeros((1, 2))), "similarity", k=3
            )


class TestAugmentLinks:
    def test_identity_at_zero(self, rng):
        g = random_graph(rng, 6, 2)
        out = augment_links(g, 0.0, seed=1)
        assert out.edges == g.edges

    def test_full_flip_is_complement(self):
        out = augment_links(triangle(), 1.0, seed=3)
        assert out.edges == ()
        empty = Graph(np.eye(3), [])
        assert len(augment_links(empty, 1.0, seed=3).edges) == 3

    def test_deterministic(self, rng):
        g = random_graph(rng, 8, 2)
        a = augment_links(g, 0.4, seed=17)
        b = augment_links(g, 0.4, seed=17)
        assert a.edges == b.edges

    def test_features_shared(self, rng):
        g = random_graph(rng, 5, 2)
        assert augment_links(g, 0.3, seed=5).node_features is g.node_features

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_pure_function_of_seed(self, seed):
        g = triangle()
        assert augment_links(g, 0.5, seed).edges == augment_links(g, 0.5, seed).edges


def bfs_oracle(g: Graph, center: int, k: int) -> set[int]:
    """Independent BFS over an adjacency-set representation."""
    adj = {i: set() for i in range(g.num_nodes)}
    for u, v in g.edges:
        adj[u].add(v)
        adj[v].add(u)
    dist = {center: 0}
    q = deque([center])
    while q:
        u = q.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                if dist[w] < k:
                    q.append(w)
                elif dist[w] == k:
                    q.append(w)  # still record, no expansion needed beyond k
    return {v for v, dv in dist.items() if dv <= k}


class TestInducedSubgraph:
    def test_zero_hops(self):
        out = induced_subgraph(path_graph(3), 1, 0)
        assert out.num_nodes == 1 and out.edges == ()

    def test_path_center(self):
        out = induced_subgraph(path_graph(3), 1, 1)
        assert out.num_nodes == 3 and len(out.edges) == 2

    def test_center_is_node_zero(self):
        g = path_graph(4)
        out = induced_subgraph(g, 2, 1)
        assert torch.equal(out.node_features[0], g.node_features[2])

    def test_matches_bfs_oracle(self, rng):
        for trial in range(8):
            g = random_graph(rng, 20, 2, p=0.12)
            center = int(rng.integers(0, 20))
            k = int(rng.integers(0, 4))
            expect = bfs_oracle(g, center, k)
            got = induced_subgraph(g, center, k)
            assert got.num_nodes == len(expect)
            # recover the original id of each output node via its features
            # (random features are distinct with probability 1)
            back = {}
            for new in range(got.num_nodes):
                matches = [
                    old
                    for old in expect
                    if torch.equal(got.node_features[new], g.node_features[old])
                ]
                assert len(matches) == 1
                back[new] = matches[0]
            assert set(back.values()) == expect
            assert back[0] == center
            expected_edges = {
                tuple(sorted((u, v)))
                for u, v in g.edges
                if u in expect and v in expect
            }
            got_edges = {
                tuple(sorted((back[u], back[v]))) for u, v in got.edges
            }
            assert got_edges == expected_edges

    def test_center_out_of_range(self):
        with pytest.raises(IndexRangeError):
            induced_subgraph(triangle(), 7, 1)


class TestTextFormat:
    def test_round_trip_bit_exact(self, rng):
        g = random_graph(rng, 7, 3, p=0.5)
        back = read_graph_text(write_graph_text(g))
        assert back.edges == g.edges
        assert torch.equal(back.node_features, g.node_features)

    def test_awkward_floats_survive(self):
        feats = np.array([[0.1 + 0.2, 1e-17], [math.pi, -0.0]])
        g = Graph(feats, [(0, 1)])
        back = read_graph_text(write_graph_text(g))
        assert back.node_features.numpy().tobytes() == g.node_features.numpy().tobytes()

    def test_parse_errors_carry_line_numbers(self):
        with pytest.raises(GraphFormatError, match="line 1"):
            read_graph_text("")
        with pytest.raises(GraphFormatError, match="line 2"):
            read_graph_text("2 2\n1.0\n0.0 0.0\n")
        with pytest.raises(GraphFormatError, match="line 4"):
            read_graph_text("2 1\n1.0\n2.0\n0 1 2\n")
