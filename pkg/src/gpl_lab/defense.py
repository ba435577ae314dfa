"""Edge-pruning preprocessing defense and feature-similarity diagnostics.

The defense cuts every edge whose endpoint features are less cosine-similar
than a threshold, then drops the smaller of the two components the cut
separates. Edges are processed in ascending (similarity, endpoint) order so
the component removals are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .graph import Edge, Graph, cosine_sim

REMOVE_SMALLER = "remove_smaller"


@dataclass
class PruneConfig:
    threshold: float = 0.2
    policy: str = REMOVE_SMALLER

    def __post_init__(self):
        if not -1.0 <= self.threshold <= 1.0:
            raise ValueError("prune threshold must lie in [-1, 1]")
        if self.policy != REMOVE_SMALLER:
            raise ValueError(f"unknown component policy {self.policy!r}")


@dataclass
class PruneResult:
    graph: Graph | None  # None only if every node was removed (flagged)
    kept_nodes: tuple[int, ...]  # original ids, sorted; position = new id
    removed_nodes: tuple[int, ...]
    cut_edges: tuple[Edge, ...]

    @property
    def emptied(self) -> bool:
        return self.graph is None

    def new_id(self, original: int) -> int | None:
        try:
            return self.kept_nodes.index(original)
        except ValueError:
            return None


def _component(start: int, alive: set[int], edges: set[Edge]) -> set[int]:
    adj: dict[int, list[int]] = {v: [] for v in alive}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def prune_g(g: Graph, cfg: PruneConfig) -> PruneResult:
    """Cut feature-dissimilar edges and drop the smaller detached component.

    For each edge below the threshold (ascending similarity, then
    lexicographic): delete the edge; if that splits its endpoints into two
    components, delete the smaller one. Size ties keep the component holding
    original node 0, else the lexicographically smaller node set. The result
    is re-indexed; kept_nodes maps new ids back to the original ones.
    """
    sims = {e: cosine_sim(g.node_features[e[0]], g.node_features[e[1]]) for e in g.edges}
    candidates = sorted(
        (e for e in g.edges if sims[e] < cfg.threshold), key=lambda e: (sims[e], e)
    )
    alive: set[int] = set(range(g.num_nodes))
    edges: set[Edge] = set(g.edges)
    cut: list[Edge] = []
    for u, v in candidates:
        if u not in alive or v not in alive or (u, v) not in edges:
            continue
        edges.discard((u, v))
        cut.append((u, v))
        comp_u = _component(u, alive, edges)
        if v in comp_u:
            continue
        comp_v = _component(v, alive, edges)
        if len(comp_u) < len(comp_v):
            doomed = comp_u
        elif len(comp_v) < len(comp_u):
            doomed = comp_v
        elif 0 in comp_u:
            doomed = comp_v
        elif 0 in comp_v:
            doomed = comp_u
        else:
            doomed = max(comp_u, comp_v, key=lambda c: tuple(sorted(c)))
        alive -= doomed
        edges = {e for e in edges if e[0] in alive and e[1] in alive}
    kept = tuple(sorted(alive))
    removed = tuple(sorted(set(range(g.num_nodes)) - alive))
    if not kept:
        return PruneResult(None, kept, removed, tuple(cut))
    index = {old: new for new, old in enumerate(kept)}
    pruned = Graph(
        g.node_features[list(kept)],
        [(index[u], index[v]) for u, v in sorted(edges)],
    )
    return PruneResult(pruned, kept, removed, tuple(cut))


def trigger_edge_set(n_host: int, trigger_nodes: int, attach_index: int, anchor: int) -> frozenset[Edge]:
    """Edges introduced by a trigger attachment on an n_host-node graph."""
    edges = {
        (n_host + i, n_host + j)
        for i in range(trigger_nodes)
        for j in range(i + 1, trigger_nodes)
    }
    a, b = anchor, n_host + attach_index
    edges.add((min(a, b), max(a, b)))
    return frozenset(edges)


def edge_similarity_profile(
    graphs: Sequence[Graph],
    trigger_edges: Sequence[frozenset[Edge] | set[Edge]] | None = None,
) -> list[tuple[float, bool]]:
    """(cosine similarity, is-trigger-edge) for every edge of every graph."""
    markers = trigger_edges or [frozenset()] * len(graphs)
    if len(markers) != len(graphs):
        raise ValueError("one trigger-edge set per graph required")
    rows = []
    for g, marked in zip(graphs, markers):
        for e in g.edges:
            rows.append(
                (cosine_sim(g.node_features[e[0]], g.node_features[e[1]]), e in marked)
            )
    return rows


def write_profile_csv(path, rows: Sequence[tuple[float, bool]]) -> None:
    lines = ["similarity,is_trigger"]
    lines += [f"{s!r},{int(t)}" for s, t in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
