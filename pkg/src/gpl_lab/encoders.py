"""Message-passing encoders.

Two trainable architectures share one masked dense-attention core:

* ``attn``  - single-head additive attention over 1-hop neighbors + self,
* ``trans`` - scaled dot-product attention over neighbors + self, followed by
  a feed-forward sublayer with a residual connection.

Forward passes run on padded batches so whole corpora are encoded with a
handful of tensor ops; a single graph is just a batch of one. Everything is
float64 and differentiable w.r.t. parameters and node features. A third,
analytic encoder (``linear_gin_encode``) computes (A + (1+eps)I) X theta
exactly and backs the closed-form checks elsewhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import torch

from .errors import DimensionMismatch, DivergenceError
from .graph import Graph

ATTN = "attn"
TRANS = "trans"
LEAKY_SLOPE = 0.2
_MASK_FILL = -1e30

GraphEmbedder = Callable[[Sequence[Graph]], torch.Tensor]


@dataclass
class EncoderConfig:
    arch: str = ATTN
    hidden_dim: int = 100
    num_layers: int = 2

    def __post_init__(self):
        if self.arch not in (ATTN, TRANS):
            raise ValueError(f"unknown encoder arch {self.arch!r}")
        if self.hidden_dim <= 0 or self.num_layers <= 0:
            raise ValueError("hidden_dim and num_layers must be positive")


@dataclass
class EncoderParams:
    """Parameter bundle for a trainable encoder.

    Tensors are keyed by canonical names ("layers.{i}.{part}") so checkpoints,
    bitwise comparisons, and optimizer loops all iterate in one stable order.
    """

    arch: str
    in_dim: int
    hidden_dim: int
    num_layers: int
    tensors: dict[str, torch.Tensor]

    def named_tensors(self) -> list[tuple[str, torch.Tensor]]:
        return sorted(self.tensors.items())

    def parameters(self) -> list[torch.Tensor]:
        return [t for _, t in self.named_tensors()]

    def clone(self) -> "EncoderParams":
        return replace(
            self, tensors={k: v.detach().clone() for k, v in self.tensors.items()}
        )

    def requires_grad_(self, flag: bool = True) -> "EncoderParams":
        for t in self.tensors.values():
            t.requires_grad_(flag)
        return self

    def equal_bits(self, other: "EncoderParams") -> bool:
        if sorted(self.tensors) != sorted(other.tensors):
            return False
        return all(torch.equal(self.tensors[k], other.tensors[k]) for k in self.tensors)

    def validate_finite(self) -> None:
        for name, t in self.tensors.items():
            if not torch.isfinite(t).all():
                raise DivergenceError(f"non-finite values in encoder tensor {name}")


def _uniform(gen: torch.Generator, shape: tuple[int, ...], fan_in: int) -> torch.Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return (torch.rand(shape, generator=gen, dtype=torch.float64) * 2 - 1) * bound


def init_encoder(cfg: EncoderConfig, in_dim: int, seed: int) -> EncoderParams:
    """Seeded uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] initialization."""
    gen = torch.Generator().manual_seed(seed)
    h = cfg.hidden_dim
    tensors: dict[str, torch.Tensor] = {}
    for i in range(cfg.num_layers):
        d_in = in_dim if i == 0 else h
        pre = f"layers.{i}."
        if cfg.arch == ATTN:
            tensors[pre + "weight"] = _uniform(gen, (d_in, h), d_in)
            tensors[pre + "att_src"] = _uniform(gen, (h,), h)
            tensors[pre + "att_dst"] = _uniform(gen, (h,), h)
        else:
            tensors[pre + "w_query"] = _uniform(gen, (d_in, h), d_in)
            tensors[pre + "w_key"] = _uniform(gen, (d_in, h), d_in)
            tensors[pre + "w_value"] = _uniform(gen, (d_in, h), d_in)
            tensors[pre + "ff1"] = _uniform(gen, (h, h), h)
            tensors[pre + "ff2"] = _uniform(gen, (h, h), h)
    return EncoderParams(cfg.arch, in_dim, h, cfg.num_layers, tensors)


# ---------------------------------------------------------------------------
# batched forward
# ---------------------------------------------------------------------------


def _pad_batch(graphs: Sequence[Graph]):
    """Stack graphs into padded features, a node mask, and an attention mask.

    The attention mask allows each valid node to see its neighbors plus
    itself; padded rows are left fully masked and their softmax output is
    discarded by the node mask downstream.
    """
    b = len(graphs)
    n_max = max(g.num_nodes for g in graphs)
    d = graphs[0].dim
    rows = []
    node_mask = torch.zeros((b, n_max), dtype=torch.bool)
    attn_mask = torch.zeros((b, n_max, n_max), dtype=torch.bool)
    for bi, g in enumerate(graphs):
        if g.dim != d:
            raise DimensionMismatch(f"graph {bi} has dim {g.dim}, expected {d}")
        n = g.num_nodes
        if n < n_max:
            pad = torch.zeros((n_max - n, d), dtype=torch.float64)
            rows.append(torch.cat([g.node_features, pad], dim=0))
        else:
            rows.append(g.node_features)
        node_mask[bi, :n] = True
        idx = torch.arange(n)
        attn_mask[bi, idx, idx] = True
        if g.edges:
            e = torch.tensor(g.edges, dtype=torch.long)
            attn_mask[bi, e[:, 0], e[:, 1]] = True
            attn_mask[bi, e[:, 1], e[:, 0]] = True
    return torch.stack(rows), node_mask, attn_mask


def _masked_softmax(scores: torch.Tensor, attn_mask: torch.Tensor) -> torch.Tensor:
    return torch.softmax(scores.masked_fill(~attn_mask, _MASK_FILL), dim=-1)


def _forward_batch(params: EncoderParams, x, node_mask, attn_mask) -> torch.Tensor:
    h = x
    for i in range(params.num_layers):
        pre = f"layers.{i}."
        if params.arch == ATTN:
            z = h @ params.tensors[pre + "weight"]
            s_src = z @ params.tensors[pre + "att_src"]
            s_dst = z @ params.tensors[pre + "att_dst"]
            scores = torch.nn.functional.leaky_relu(
                s_src.unsqueeze(-1) + s_dst.unsqueeze(-2), LEAKY_SLOPE
            )
            h = _masked_softmax(scores, attn_mask) @ z
        else:
            q = h @ params.tensors[pre + "w_query"]
            k = h @ params.tensors[pre + "w_key"]
            v = h @ params.tensors[pre + "w_value"]
            scores = q @ k.transpose(-1, -2) / math.sqrt(params.hidden_dim)
            m = _masked_softmax(scores, attn_mask) @ v
            ff = torch.nn.functional.leaky_relu(m @ params.tensors[pre + "ff1"], LEAKY_SLOPE)
            h = m + ff @ params.tensors[pre + "ff2"]
        if i + 1 < params.num_layers:
            h = torch.nn.functional.leaky_relu(h, LEAKY_SLOPE)
    return h * node_mask.unsqueeze(-1)


def encode_nodes(params: EncoderParams, g: Graph) -> torch.Tensor:
    """Node embeddings [N x h] of one graph."""
    if params.arch not in (ATTN, TRANS):
        raise ValueError(f"encode_nodes requires a trainable arch, got {params.arch!r}")
    if g.dim != params.in_dim:
        raise DimensionMismatch(f"graph dim {g.dim} != encoder in_dim {params.in_dim}")
    params.validate_finite()
    x, node_mask, attn_mask = _pad_batch([g])
    return _forward_batch(params, x, node_mask, attn_mask)[0]


def readout(node_embs: torch.Tensor, mode: str = "sum") -> torch.Tensor:
    """Column-wise sum or mean of a nonempty node-embedding matrix."""
    if node_embs.ndim != 2 or node_embs.shape[0] == 0:
        raise ValueError("readout needs a nonempty [N x h] matrix")
    if mode == "sum":
        return node_embs.sum(dim=0)
    if mode == "mean":
        return node_embs.mean(dim=0)
    raise ValueError(f"unknown readout mode {mode!r}")


def encode_graph(params: EncoderParams, g: Graph, mode: str = "sum") -> torch.Tensor:
    return readout(encode_nodes(params, g), mode)


def encode_graphs(
    params: EncoderParams, graphs: Sequence[Graph], mode: str = "sum"
) -> torch.Tensor:
    """Graph embeddings [B x h] for a list of graphs, via one padded batch."""
    if len(graphs) == 0:
        raise ValueError("encode_graphs needs at least one graph")
    for g in graphs:
        if g.dim != params.in_dim:
            raise DimensionMismatch(
                f"graph dim {g.dim} != encoder in_dim {params.in_dim}"
            )
    params.validate_finite()
    x, node_mask, attn_mask = _pad_batch(graphs)
    h = _forward_batch(params, x, node_mask, attn_mask)
    if mode == "sum":
        return h.sum(dim=1)
    if mode == "mean":
        return h.sum(dim=1) / node_mask.sum(dim=1, keepdim=True).to(torch.float64)
    raise ValueError(f"unknown readout mode {mode!r}")


def encode_nodes_many(
    params: EncoderParams, graphs: Sequence[Graph]
) -> list[torch.Tensor]:
    """Per-graph node embeddings for a list of graphs, via one padded batch."""
    if len(graphs) == 0:
        return []
    params.validate_finite()
    x, node_mask, attn_mask = _pad_batch(graphs)
    h = _forward_batch(params, x, node_mask, attn_mask)
    return [h[i, : g.num_nodes] for i, g in enumerate(graphs)]


def graph_embedder(params: EncoderParams, mode: str = "sum") -> GraphEmbedder:
    """Closure mapping a list of graphs to their [B x h] embeddings."""

    def embed(graphs: Sequence[Graph]) -> torch.Tensor:
        return encode_graphs(params, graphs, mode)

    return embed


def node_embedder(params: EncoderParams) -> Callable[[Graph], torch.Tensor]:
    def embed(g: Graph) -> torch.Tensor:
        return encode_nodes(params, g)

    return embed


# ---------------------------------------------------------------------------
# analytic linear GIN
# ---------------------------------------------------------------------------


@dataclass
class LinearGinParams:
    """Single linear layer GIN: node embeddings (A + (1+eps) I) X theta."""

    epsilon: float
    theta: torch.Tensor

    def __post_init__(self):
        self.theta = torch.as_tensor(self.theta, dtype=torch.float64)
        if self.theta.ndim != 2:
            raise DimensionMismatch("theta must be a [d x h] matrix")
        if not torch.isfinite(self.theta).all() or not math.isfinite(self.epsilon):
            raise DivergenceError("non-finite linear-GIN parameters")


def linear_gin_encode(
    params: LinearGinParams, g: Graph
) -> tuple[torch.Tensor, torch.Tensor]:
    """Exact node embeddings and their SUM readout under the linear GIN."""
    if g.dim != params.theta.shape[0]:
        raise DimensionMismatch(
            f"graph dim {g.dim} != theta rows {params.theta.shape[0]}"
        )
    prop = g.adjacency() + (1.0 + params.epsilon) * torch.eye(
        g.num_nodes, dtype=torch.float64
    )
    h = prop @ g.node_features @ params.theta
    return h, h.sum(dim=0)
