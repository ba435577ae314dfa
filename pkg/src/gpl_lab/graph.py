"""Graph data model and structural operators.

Graphs are undirected, simple (no self-loops, no multi-edges) and immutable:
node features live in a float64 torch tensor, edges in a sorted tuple of
(u, v) pairs with u < v. Operators never mutate their inputs; they build new
Graph values, concatenating feature tensors so that autograd paths through
e.g. learnable trigger features stay intact.
"""

from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import torch

from .errors import DimensionMismatch, GraphFormatError, IndexRangeError

Edge = tuple[int, int]

_ZERO_NORM_EPS = 1e-12


def _as_features(features) -> torch.Tensor:
    t = torch.as_tensor(features, dtype=torch.float64)
    if t.ndim != 2:
        raise DimensionMismatch(f"node features must be 2-D, got shape {tuple(t.shape)}")
    return t


def _normalize_edges(edges: Iterable[Edge], n: int) -> tuple[Edge, ...]:
    out = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise GraphFormatError(f"self-loop ({u},{v}) rejected")
        if not (0 <= u < n and 0 <= v < n):
            raise IndexRangeError(f"edge ({u},{v}) endpoint out of range for {n} nodes")
        out.add((min(u, v), max(u, v)))
    return tuple(sorted(out))


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with real-valued node features."""

    node_features: torch.Tensor
    edges: tuple[Edge, ...]

    def __init__(self, node_features, edges: Iterable[Edge] = ()):
        feats = _as_features(node_features)
        if feats.shape[0] < 1:
            raise GraphFormatError("a graph needs at least one node")
        object.__setattr__(self, "node_features", feats)
        object.__setattr__(self, "edges", _normalize_edges(edges, feats.shape[0]))

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edge_set

    def degrees(self) -> torch.Tensor:
        deg = torch.zeros(self.num_nodes, dtype=torch.float64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def total_degree(self) -> float:
        return 2.0 * len(self.edges)

    def adjacency(self) -> torch.Tensor:
        a = torch.zeros((self.num_nodes, self.num_nodes), dtype=torch.float64)
        for u, v in self.edges:
            a[u, v] = 1.0
            a[v, u] = 1.0
        return a

    def neighbors(self, v: int) -> list[int]:
        if not 0 <= v < self.num_nodes:
            raise IndexRangeError(f"node {v} out of range for {self.num_nodes} nodes")
        out = []
        for a, b in self.edges:
            if a == v:
                out.append(b)
            elif b == v:
                out.append(a)
        return sorted(out)

    def replace_features(self, features) -> "Graph":
        feats = _as_features(features)
        if feats.shape[0] != self.num_nodes:
            raise DimensionMismatch(
                f"replacement features have {feats.shape[0]} rows, graph has {self.num_nodes} nodes"
            )
        return Graph(feats, self.edges)


@dataclass(frozen=True, eq=False)
class TriggerGraph:
    """Small fully connected graph with learnable node features.

    The topology is fixed: a complete graph over ``num_nodes`` trigger nodes.
    ``attach_node_index`` names the trigger-side endpoint of the cross edge
    created when the trigger is attached to a host graph.
    """

    node_features: torch.Tensor
    attach_node_index: int = 0

    def __init__(self, node_features, attach_node_index: int = 0):
        feats = _as_features(node_features)
        if feats.shape[0] < 1:
            raise GraphFormatError("trigger needs at least one node")
        if not 0 <= attach_node_index < feats.shape[0]:
            raise IndexRangeError(
                f"attach index {attach_node_index} out of range for {feats.shape[0]} trigger nodes"
            )
        object.__setattr__(self, "node_features", feats)
        object.__setattr__(self, "attach_node_index", int(attach_node_index))

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def dim(self) -> int:
        return self.node_features.shape[1]

    def topology(self) -> tuple[Edge, ...]:
        c = self.num_nodes
        return tuple((i, j) for i in range(c) for j in range(i + 1, c))

    def as_graph(self) -> Graph:
        return Graph(self.node_features, self.topology())

    def with_features(self, features) -> "TriggerGraph":
        return TriggerGraph(features, self.attach_node_index)


@dataclass(frozen=True, eq=False)
class PromptGraph:
    """Learnable prompt tokens plus an internal topology over them."""

    token_vectors: torch.Tensor
    internal_edges: tuple[Edge, ...] = ()

    def __init__(self, token_vectors, internal_edges: Iterable[Edge] = ()):
        toks = _as_features(token_vectors)
        if toks.shape[0] < 1:
            raise GraphFormatError("prompt graph needs at least one token")
        object.__setattr__(self, "token_vectors", toks)
        object.__setattr__(
            self, "internal_edges", _normalize_edges(internal_edges, toks.shape[0])
        )

    @property
    def num_tokens(self) -> int:
        return self.token_vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.token_vectors.shape[1]

    def as_graph(self) -> Graph:
        return Graph(self.token_vectors, self.internal_edges)

    def with_tokens(self, token_vectors) -> "PromptGraph":
        return PromptGraph(token_vectors, self.internal_edges)


def complete_prompt_graph(token_vectors) -> PromptGraph:
    toks = _as_features(token_vectors)
    p = toks.shape[0]
    edges = tuple((i, j) for i in range(p) for j in range(i + 1, p))
    return PromptGraph(toks, edges)


@dataclass(frozen=True)
class AnchorChoice:
    """Record of a sampled anchor node in a host graph."""

    anchor_node: int
    rng_seed: int = 0


def choose_anchor(g: Graph, seed: int) -> AnchorChoice:
    rng = np.random.default_rng(seed)
    return AnchorChoice(int(rng.integers(0, g.num_nodes)), seed)


# ---------------------------------------------------------------------------
# similarity
# ---------------------------------------------------------------------------


def cosine(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Differentiable cosine similarity; 0 when either norm is ~0.

    Degenerate (near-zero-norm) inputs map to exactly 0 so downstream losses
    stay finite; the guard keeps gradients NaN-free on both branches.
    """
    if u.shape != v.shape:
        raise DimensionMismatch(f"cosine of shapes {tuple(u.shape)} vs {tuple(v.shape)}")
    nu = torch.linalg.vector_norm(u, dim=-1)
    nv = torch.linalg.vector_norm(v, dim=-1)
    dot = (u * v).sum(dim=-1)
    safe = (nu > _ZERO_NORM_EPS) & (nv > _ZERO_NORM_EPS)
    denom = torch.where(safe, nu * nv, torch.ones_like(nu))
    return torch.where(safe, dot / denom, torch.zeros_like(dot))


def cosine_sim(u, v) -> float:
    """Scalar cosine similarity in [-1, 1] of two feature/embedding vectors."""
    ut = torch.as_tensor(u, dtype=torch.float64).reshape(-1)
    vt = torch.as_tensor(v, dtype=torch.float64).reshape(-1)
    if ut.shape != vt.shape:
        raise DimensionMismatch(f"cosine_sim of lengths {ut.shape[0]} vs {vt.shape[0]}")
    return float(cosine(ut, vt))


# ---------------------------------------------------------------------------
# structural operators
# ---------------------------------------------------------------------------


def attach_trigger(g: Graph, t: TriggerGraph, anchor: AnchorChoice) -> Graph:
    """Attach a trigger graph to a host graph at the chosen anchor node.

    The result has the host's nodes first, then the trigger's nodes, the
    trigger's complete internal topology, and exactly one cross edge from the
    anchor to the trigger's attach node.
    """
    if g.dim != t.dim:
        raise DimensionMismatch(f"host dim {g.dim} != trigger dim {t.dim}")
    if not 0 <= anchor.anchor_node < g.num_nodes:
        raise IndexRangeError(
            f"anchor {anchor.anchor_node} out of range for {g.num_nodes} nodes"
        )
    n = g.num_nodes
    feats = torch.cat([g.node_features, t.node_features], dim=0)
    edges = list(g.edges)
    edges.extend((n + i, n + j) for i, j in t.topology())
    edges.append((anchor.anchor_node, n + t.attach_node_index))
    return Graph(feats, edges)


def attach_prompt_isolated(g: Graph, p: PromptGraph) -> Graph:
    """Disjoint union of a graph and a prompt graph (no cross edges)."""
    if g.dim != p.dim:
        raise DimensionMismatch(f"graph dim {g.dim} != prompt dim {p.dim}")
    n = g.num_nodes
    feats = torch.cat([g.node_features, p.token_vectors], dim=0)
    edges = list(g.edges)
    edges.extend((n + i, n + j) for i, j in p.internal_edges)
    return Graph(feats, edges)


def attach_prompt_crosslinked(
    g: Graph, p: PromptGraph, mode: str = "full", k: int = 1
) -> Graph:
    """Insert a prompt graph with cross edges to the host graph.

    mode "full": every prompt node links to every graph node.
    mode "similarity": each prompt node links to its top-k most cosine-similar
    graph nodes (ties broken by lowest node index).
    """
    if g.dim != p.dim:
        raise DimensionMismatch(f"graph dim {g.dim} != prompt dim {p.dim}")
    base = attach_prompt_isolated(g, p)
    n = g.num_nodes
    edges = list(base.edges)
    if mode == "full":
        edges.extend((i, n + j) for j in range(p.num_tokens) for i in range(n))
    elif mode == "similarity":
        if k > n:
            raise IndexRangeError(f"similarity k={k} exceeds {n} graph nodes")
        sims = cosine(
            p.token_vectors.unsqueeze(1).expand(-1, n, -1),
            g.node_features.unsqueeze(0).expand(p.num_tokens, -1, -1),
        ).detach().numpy()
        for j in range(p.num_tokens):
            # stable argsort on -sim breaks ties by lowest node index
            top = np.argsort(-sims[j], kind="stable")[:k]
            edges.extend((int(i), n + j) for i in top)
    else:
        raise ValueError(f"unknown cross-link mode {mode!r}")
    return Graph(base.node_features, edges)


def augment_links(g: Graph, flip_prob: float, seed: int) -> Graph:
    """Toggle each node pair independently with probability flip_prob.

    Node features are shared with the input (same tensor), so gradient paths
    through them survive augmentation. Pure function of (g, flip_prob, seed).
    """
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError(f"flip_prob {flip_prob} outside [0, 1]")
    n = g.num_nodes
    rng = np.random.default_rng(seed)
    iu, iv = np.triu_indices(n, k=1)
    flips = rng.random(len(iu)) < flip_prob
    present = np.zeros(len(iu), dtype=bool)
    if g.edges:
        arr = np.asarray(g.edges)
        # pair (u, v), u < v, sits at flat index u*n - u(u+1)/2 + (v - u - 1)
        flat = arr[:, 0] * n - arr[:, 0] * (arr[:, 0] + 1) // 2 + (arr[:, 1] - arr[:, 0] - 1)
        present[flat] = True
    keep = np.logical_xor(present, flips)
    edges = [(int(u), int(v)) for u, v in zip(iu[keep], iv[keep])]
    return Graph(g.node_features, edges)


def induced_subgraph(g: Graph, center: int, k_hops: int) -> Graph:
    """Vertex-induced subgraph on the BFS ball of radius k_hops around center.

    The center becomes node 0 of the result; remaining nodes follow BFS
    discovery order (hop distance, then original index).
    """
    if not 0 <= center < g.num_nodes:
        raise IndexRangeError(f"center {center} out of range for {g.num_nodes} nodes")
    if k_hops < 0:
        raise ValueError("k_hops must be >= 0")
    order = bfs_order(g, center, k_hops)
    return subgraph_on(g, order)


def bfs_order(g: Graph, center: int, k_hops: int) -> list[int]:
    """Nodes within k_hops of center, in (hop, node-index) order; center first."""
    adj: dict[int, list[int]] = {i: [] for i in range(g.num_nodes)}
    for u, v in g.edges:
        adj[u].append(v)
        adj[v].append(u)
    dist = {center: 0}
    frontier = deque([center])
    while frontier:
        u = frontier.popleft()
        if dist[u] == k_hops:
            continue
        for w in sorted(adj[u]):
            if w not in dist:
                dist[w] = dist[u] + 1
                frontier.append(w)
    return sorted(dist, key=lambda v: (dist[v], v))


def subgraph_on(g: Graph, nodes: Sequence[int]) -> Graph:
    """Vertex-induced subgraph on the given nodes, re-indexed in list order."""
    index = {old: new for new, old in enumerate(nodes)}
    if len(index) != len(nodes):
        raise ValueError("duplicate nodes in subgraph selection")
    feats = g.node_features[list(nodes)]
    edges = [
        (index[u], index[v]) for u, v in g.edges if u in index and v in index
    ]
    return Graph(feats, edges)


# ---------------------------------------------------------------------------
# text serialization: header "N d", N feature rows, one "u v" edge per line
# ---------------------------------------------------------------------------


def write_graph_text(g: Graph) -> str:
    buf = io.StringIO()
    buf.write(f"{g.num_nodes} {g.dim}\n")
    feats = g.node_features.detach()
    for i in range(g.num_nodes):
        buf.write(" ".join(repr(float(x)) for x in feats[i]) + "\n")
    for u, v in g.edges:
        buf.write(f"{u} {v}\n")
    return buf.getvalue()


def read_graph_text(text: str) -> Graph:
    lines = text.splitlines()
    if not lines:
        raise GraphFormatError("line 1: empty graph file")
    head = lines[0].split()
    if len(head) != 2:
        raise GraphFormatError(f"line 1: expected 'N d', got {lines[0]!r}")
    try:
        n, d = int(head[0]), int(head[1])
    except ValueError as exc:
        raise GraphFormatError(f"line 1: non-integer header: {lines[0]!r}") from exc
    if len(lines) < 1 + n:
        raise GraphFormatError(f"line {len(lines)}: expected {n} feature rows")
    feats = torch.empty((n, d), dtype=torch.float64)
    for i in range(n):
        parts = lines[1 + i].split()
        if len(parts) != d:
            raise GraphFormatError(
                f"line {2 + i}: expected {d} values, got {len(parts)}"
            )
        try:
            feats[i] = torch.tensor([float(x) for x in parts], dtype=torch.float64)
        except ValueError as exc:
            raise GraphFormatError(f"line {2 + i}: bad float") from exc
    edges = []
    for ln, line in enumerate(lines[1 + n :], start=2 + n):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"line {ln}: expected 'u v', got {line!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise GraphFormatError(f"line {ln}: non-integer endpoint") from exc
    try:
        return Graph(feats, edges)
    except (IndexRangeError, GraphFormatError) as exc:
        raise GraphFormatError(f"invalid graph body: {exc}") from exc
