"""Self-supervised pretraining of the clean encoder.

Two objectives: a GraphCL-style contrastive loss over link-augmented graph
views, and a link-prediction triplet loss. Training is full batch (desk-scale
corpora), seeded, and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .encoders import (
    EncoderConfig,
    EncoderParams,
    GraphEmbedder,
    encode_graphs,
    encode_nodes,
    encode_nodes_many,
    init_encoder,
)
from .errors import DivergenceError
from .graph import Graph, augment_links, cosine
from .seeding import split_seed

GRAPHCL = "graphcl"
LINKPRED = "linkpred"


@dataclass
class PretrainConfig:
    tau: float = 0.5
    flip_prob: float = 0.1
    epochs: int = 100
    lr: float = 0.001
    optimizer: str = "adam"  # "gd" = plain gradient descent fallback
    batch_rule: str = "full"
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("temperature tau must be positive")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_rule != "full":
            raise ValueError("only full-batch composition is supported")


def contrastive_loss_embeddings(
    h: torch.Tensor, h_pos: torch.Tensor, tau: float
) -> torch.Tensor:
    """InfoNCE over a batch: positives are paired rows, negatives the rest."""
    b = h.shape[0]
    if b < 2:
        raise ValueError("contrastive loss needs a batch of >= 2 graphs")
    s_pos = cosine(h, h_pos) / tau  # [B]
    s_all = cosine(h.unsqueeze(1).expand(b, b, -1), h.unsqueeze(0).expand(b, b, -1)) / tau
    off_diag = ~torch.eye(b, dtype=torch.bool)
    losses = []
    for i in range(b):
        cand = torch.cat([s_pos[i].reshape(1), s_all[i][off_diag[i]]])
        losses.append(torch.logsumexp(cand, dim=0) - s_pos[i])
    return torch.stack(losses).mean()


def contrastive_loss(
    enc: GraphEmbedder, batch: Sequence[Graph], cfg: PretrainConfig, seed: int
) -> torch.Tensor:
    """GraphCL loss of a batch under the given graph embedder.

    Positive views are seeded link augmentations of each batch member;
    negatives are the embeddings of the other (clean) batch members.
    """
    if len(batch) < 2:
        raise ValueError("contrastive loss needs a batch of >= 2 graphs")
    views = [
        augment_links(g, cfg.flip_prob, split_seed(seed, "aug", i))
        for i, g in enumerate(batch)
    ]
    embs = enc(list(batch) + views)
    b = len(batch)
    return contrastive_loss_embeddings(embs[:b], embs[b:], cfg.tau)


def link_prediction_loss_embeddings(
    h_v: torch.Tensor, h_a: torch.Tensor, h_b: torch.Tensor, tau: float
) -> torch.Tensor:
    s_a = cosine(h_v, h_a) / tau
    s_b = cosine(h_v, h_b) / tau
    return torch.nn.functional.softplus(s_b - s_a)


def link_prediction_loss(
    params: EncoderParams, g: Graph, triplet: tuple[int, int, int], tau: float
) -> torch.Tensor:
    """Triplet loss: pull a neighbor of v closer than a non-neighbor."""
    v, a, b = triplet
    if not g.has_edge(v, a):
        raise ValueError(f"triplet invalid: {a} is not a neighbor of {v}")
    if b == v or g.has_edge(v, b):
        raise ValueError(f"triplet invalid: {b} is not a non-neighbor of {v}")
    h = encode_nodes(params, g)
    return link_prediction_loss_embeddings(h[v], h[a], h[b], tau)


def sample_triplet(g: Graph, seed: int) -> tuple[int, int, int] | None:
    """Seeded (node, neighbor, non-neighbor) draw; None if the graph has none."""
    rng = np.random.default_rng(seed)
    n = g.num_nodes
    candidates = []
    for v in range(n):
        nbrs = g.neighbors(v)
        if 0 < len(nbrs) < n - 1:
            candidates.append((v, nbrs))
    if not candidates:
        return None
    v, nbrs = candidates[int(rng.integers(0, len(candidates)))]
    a = nbrs[int(rng.integers(0, len(nbrs)))]
    non = [u for u in range(n) if u != v and u not in nbrs]
    b = non[int(rng.integers(0, len(non)))]
    return v, a, b


@dataclass
class PretrainResult:
    params: EncoderParams
    losses: list[float] = field(default_factory=list)  # training loss per epoch
    eval_start: float = float("nan")  # fixed-batch loss before training
    eval_end: float = float("nan")  # fixed-batch loss after training


def _epoch_loss(
    params: EncoderParams,
    corpus: Sequence[Graph],
    cfg: PretrainConfig,
    objective: str,
    seed: int,
) -> torch.Tensor:
    if objective == GRAPHCL:
        def enc(graphs):
            return encode_graphs(params, graphs, "sum")

        return contrastive_loss(enc, corpus, cfg, seed)
    if objective == LINKPRED:
        triplets = []
        kept = []
        for i, g in enumerate(corpus):
            t = sample_triplet(g, split_seed(seed, "triplet", i))
            if t is not None:
                triplets.append(t)
                kept.append(g)
        if not kept:
            raise ValueError("no graph in the corpus admits a link-prediction triplet")
        node_embs = encode_nodes_many(params, kept)
        losses = [
            link_prediction_loss_embeddings(h[v], h[a], h[b], cfg.tau)
            for h, (v, a, b) in zip(node_embs, triplets)
        ]
        return torch.stack(losses).mean()
    raise ValueError(f"unknown pretraining objective {objective!r}")


def train_clean_encoder(
    corpus: Sequence[Graph],
    cfg: PretrainConfig,
    objective: str = GRAPHCL,
    encoder: EncoderConfig | None = None,
) -> PretrainResult:
    """Train an encoder from scratch on an unlabeled corpus.

    Deterministic given cfg.seed; raises DivergenceError on a non-finite
    loss. epochs=0 returns the seeded initialization untouched.
    """
    if len(corpus) == 0:
        raise ValueError("pretraining corpus is empty")
    enc_cfg = encoder or EncoderConfig()
    params = init_encoder(enc_cfg, corpus[0].dim, split_seed(cfg.seed, "init"))
    eval_seed = split_seed(cfg.seed, "eval")
    with torch.no_grad():
        eval_start = float(_epoch_loss(params, corpus, cfg, objective, eval_seed))
    params.requires_grad_(True)
    if cfg.optimizer == "adam":
        opt = torch.optim.Adam(params.parameters(), lr=cfg.lr)
    else:
        opt = torch.optim.SGD(params.parameters(), lr=cfg.lr)
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        opt.zero_grad()
        loss = _epoch_loss(
            params, corpus, cfg, objective, split_seed(cfg.seed, "epoch", epoch)
        )
        if not torch.isfinite(loss):
            raise DivergenceError(f"pretraining loss diverged at epoch {epoch}")
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
    params.requires_grad_(False)
    out = params.clone()
    with torch.no_grad():
        eval_end = float(_epoch_loss(out, corpus, cfg, objective, eval_seed))
    return PretrainResult(out, losses, eval_start, eval_end)


def write_loss_csv(path, losses: Sequence[float]) -> None:
    """Per-epoch loss CSV: (epoch, loss)."""
    from pathlib import Path

    lines = ["epoch,loss"]
    lines += [f"{e},{repr(float(v))}" for e, v in enumerate(losses)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_train_cache: dict[str, PretrainResult] = {}


def cached_train_clean_encoder(
    corpus: Sequence[Graph],
    cfg: PretrainConfig,
    objective: str = GRAPHCL,
    encoder: EncoderConfig | None = None,
) -> PretrainResult:
    """Process-local memo over the pure training function.

    Keyed by corpus content, config, and objective; returns cloned parameters
    so cached results can never alias a caller's mutations.
    """
    import hashlib
    import json
    from dataclasses import asdict

    from .graph import write_graph_text

    h = hashlib.sha256()
    for g in corpus:
        h.update(write_graph_text(g).encode("utf-8"))
    enc_cfg = encoder or EncoderConfig()
    h.update(
        json.dumps([asdict(cfg), objective, asdict(enc_cfg)], sort_keys=True).encode()
    )
    key = h.hexdigest()
    if key not in _train_cache:
        _train_cache[key] = train_clean_encoder(corpus, cfg, objective, encoder)
    hit = _train_cache[key]
    return PretrainResult(hit.params.clone(), list(hit.losses), hit.eval_start, hit.eval_end)


def clear_train_cache() -> None:
    _train_cache.clear()
