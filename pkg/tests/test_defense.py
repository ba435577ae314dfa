"""Edge pruning defense and the similarity profile."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gpl_lab.defense import (
    PruneConfig,
    edge_similarity_profile,
    prune_g,
    trigger_edge_set,
)
from gpl_lab.graph import Graph, TriggerGraph, AnchorChoice, attach_trigger, cosine_sim

from conftest import random_graph


def prune_oracle(g: Graph, threshold: float) -> tuple[set[int], set[tuple[int, int]]]:
    """Independent re-implementation: cut-then-component-scan with the same
    declared ordering and tie rules."""
    sims = {}
    for u, v in g.edges:
        sims[(u, v)] = cosine_sim(g.node_features[u], g.node_features[v])
    order = sorted((e for e in g.edges if sims[e] < threshold), key=lambda e: (sims[e], e))
    alive = set(range(g.num_nodes))
    edges = set(g.edges)

    def comp(start, banned_edge=None):
        seen = {start}
        stack = [start]
        while stack:
            x = stack.pop()
            for a, b in edges:
                if (a, b) == banned_edge:
                    continue
                other = None
                if a == x:
                    other = b
                elif b == x:
                    other = a
                if other is not None and other not in seen:
                    seen.add(other)
                    stack.append(other)
        return seen

    for u, v in order:
        if u not in alive or v not in alive or (u, v) not in edges:
            continue
        edges.discard((u, v))
        cu = comp(u)
        if v in cu:
            continue
        cv = comp(v)
        if len(cu) < len(cv):
            dead = cu
        elif len(cv) < len(cu):
            dead = cv
        elif 0 in cu:
            dead = cv
        elif 0 in cv:
            dead = cu
        else:
            dead = max(cu, cv, key=lambda c: tuple(sorted(c)))
        alive -= dead
        edges = {e for e in edges if e[0] in alive and e[1] in alive}
    return alive, edges


class TestPruneG:
    def test_identical_features_untouched(self):
        g = Graph(np.ones((5, 3)), [(0, 1), (1, 2), (2, 3), (3, 4)])
        res = prune_g(g, PruneConfig(threshold=1.0))
        assert res.kept_nodes == (0, 1, 2, 3, 4)
        assert res.graph.edges == g.edges

    def test_dissimilar_tail_removed(self):
        feats = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        g = Graph(feats, [(0, 1), (1, 2)])
        res = prune_g(g, PruneConfig(threshold=0.5))
        assert res.kept_nodes == (0, 1)
        assert res.graph.num_nodes == 2
        assert res.graph.edges == ((0, 1),)
        assert res.cut_edges == ((1, 2),)

    def test_matches_bruteforce_oracle_many_seeds(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            g = random_graph(rng, int(rng.integers(4, 12)), 3, p=0.35)
            threshold = float(rng.uniform(-0.2, 0.6))
            res = prune_g(g, PruneConfig(threshold=threshold))
            alive, edges = prune_oracle(g, threshold)
            assert set(res.kept_nodes) == alive
            back = {new: old for new, old in enumerate(res.kept_nodes)}
            got_edges = {
                tuple(sorted((back[u], back[v]))) for u, v in res.graph.edges
            }
            assert got_edges == edges

    def test_idempotent(self):
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            g = random_graph(rng, 8, 3, p=0.4)
            cfg = PruneConfig(threshold=0.3)
            once = prune_g(g, cfg)
            twice = prune_g(once.graph, cfg)
            assert twice.kept_nodes == tuple(range(once.graph.num_nodes))
            assert twice.graph.edges == once.graph.edges

    def test_never_adds_anything(self, rng):
        g = random_graph(rng, 9, 3, p=0.5)
        res = prune_g(g, PruneConfig(threshold=0.4))
        assert set(res.kept_nodes) <= set(range(g.num_nodes))
        back = {new: old for new, old in enumerate(res.kept_nodes)}
        for u, v in res.graph.edges:
            assert (min(back[u], back[v]), max(back[u], back[v])) in g.edge_set

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_threshold_minus_one_is_identity(self, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, 6, 2, p=0.5)
        res = prune_g(g, PruneConfig(threshold=-1.0))
        assert res.kept_nodes == tuple(range(6))
        assert res.graph.edges == g.edges


class TestSimilarityProfile:
    def test_clean_only_all_untagged(self, rng):
        g = random_graph(rng, 5, 3, p=0.6)
        rows = edge_similarity_profile([g])
        assert len(rows) == len(g.edges)
        assert not any(tag for _, tag in rows)

    def test_anchor_matched_trigger_edges_sim_one(self):
        host = Graph(np.ones((3, 2)), [(0, 1), (1, 2)])
        trig = TriggerGraph(np.ones((3, 2)))
        anchor = AnchorChoice(1)
        bd = attach_trigger(host, trig, anchor)
        marked = trigger_edge_set(3, 3, 0, 1)
        rows = edge_similarity_profile([bd], [marked])
        trig_sims = [s for s, tag in rows if tag]
        assert len(trig_sims) == 4  # 3 internal + 1 cross
        assert all(s == pytest.approx(1.0) for s in trig_sims)

    def test_marker_count_validated(self, rng):
        g = random_graph(rng, 4, 2)
        with pytest.raises(ValueError):
            edge_similarity_profile([g], [frozenset(), frozenset()])
