"""Downstream adaptation with learnable prompts over a frozen encoder.

Variant "prog": a learnable prompt graph is cross-linked into each input
graph and a linear answering head maps the prompted embedding to class
scores. Variant "graphprompt": a learnable vector reweights the readout and
classes are represented by prototype embeddings (the per-class mean of
prompted shot embeddings, recomputed every epoch).

The encoder is frozen throughout: tuning only ever differentiates w.r.t.
prompt parameters and the answering head.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import torch

from .encoders import EncoderParams, encode_graphs, encode_nodes
from .errors import DimensionMismatch, DivergenceError
from .graph import Graph, PromptGraph, attach_prompt_crosslinked, complete_prompt_graph, cosine
from .seeding import split_seed

PROG = "prog"
GRAPHPROMPT = "graphprompt"


@dataclass
class FewShotSet:
    """Labeled few-shot examples; every class in 0..num_classes-1 appears."""

    examples: tuple[tuple[Graph, int], ...]
    num_classes: int
    shots_per_class: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("few-shot learning needs >= 2 classes")
        seen = set()
        for _, y in self.examples:
            if not 0 <= y < self.num_classes:
                raise ValueError(f"label {y} outside 0..{self.num_classes - 1}")
            seen.add(y)
        missing = set(range(self.num_classes)) - seen
        if missing:
            raise ValueError(f"classes with no shot example: {sorted(missing)}")

    def graphs(self) -> list[Graph]:
        return [g for g, _ in self.examples]

    def labels(self) -> torch.Tensor:
        return torch.tensor([y for _, y in self.examples], dtype=torch.long)


@dataclass
class PromptState:
    variant: str
    num_classes: int
    # prompt-as-graph
    prompt_graph: PromptGraph | None = None
    head_weight: torch.Tensor | None = None  # [h x num_classes]
    head_bias: torch.Tensor | None = None  # [num_classes]
    link_mode: str = "similarity"
    link_k: int = 1
    # prompt-as-readout-vector
    prompt_vec: torch.Tensor | None = None  # [h]
    prototypes: torch.Tensor | None = None  # [num_classes x h]
    tau: float = 0.5
    loss_history: list[float] = field(default_factory=list)


def graphprompt_readout(prompt_vec: torch.Tensor, node_embs: torch.Tensor) -> torch.Tensor:
    """Sum readout of element-wise prompt-reweighted node embeddings."""
    if node_embs.ndim != 2 or node_embs.shape[0] == 0:
        raise ValueError("readout needs a nonempty [N x h] matrix")
    if prompt_vec.shape != (node_embs.shape[1],):
        raise DimensionMismatch(
            f"prompt vector length {tuple(prompt_vec.shape)} != hidden dim {node_embs.shape[1]}"
        )
    return (node_embs * prompt_vec).sum(dim=0)


def _prompted_graphs(graphs: Sequence[Graph], ps: PromptState) -> list[Graph]:
    return [
        attach_prompt_crosslinked(g, ps.prompt_graph, ps.link_mode, ps.link_k)
        for g in graphs
    ]


def prog_scores_many(
    params: EncoderParams, graphs: Sequence[Graph], ps: PromptState
) -> torch.Tensor:
    if ps.variant != PROG:
        raise ValueError(f"prog scores need a prog prompt state, got {ps.variant!r}")
    embs = encode_graphs(params, _prompted_graphs(graphs, ps), "sum")
    return embs @ ps.head_weight + ps.head_bias


def prog_forward(params: EncoderParams, g: Graph, ps: PromptState) -> torch.Tensor:
    """Class scores of one graph under the prompted frozen encoder."""
    return prog_scores_many(params, [g], ps)[0]


def graphprompt_embed_many(
    params: EncoderParams, graphs: Sequence[Graph], ps: PromptState
) -> torch.Tensor:
    # sum_v (p * h_v) = p * sum_v h_v, so the batched sum readout suffices
    return encode_graphs(params, list(graphs), "sum") * ps.prompt_vec


def graphprompt_embed(params: EncoderParams, g: Graph, ps: PromptState) -> torch.Tensor:
    return graphprompt_readout(ps.prompt_vec, encode_nodes(params, g))


def _class_prototypes(
    embs: torch.Tensor, labels: torch.Tensor, num_classes: int
) -> torch.Tensor:
    protos = []
    for c in range(num_classes):
        member = labels == c
        protos.append(embs[member].mean(dim=0))
    return torch.stack(protos)


def _prototype_loss(
    embs: torch.Tensor, labels: torch.Tensor, protos: torch.Tensor, tau: float
) -> torch.Tensor:
    b, c = embs.shape[0], protos.shape[0]
    sims = cosine(
        embs.unsqueeze(1).expand(b, c, -1), protos.unsqueeze(0).expand(b, c, -1)
    ) / tau
    return torch.nn.functional.cross_entropy(sims, labels)


def init_prompt_state(
    variant: str,
    shots: FewShotSet,
    hidden_dim: int,
    seed: int,
    tokens: int = 15,
    link_mode: str = "similarity",
    link_k: int = 1,
    tau: float = 0.5,
) -> PromptState:
    """Seeded initial prompt state (before any tuning)."""
    if variant == PROG:
        d = shots.examples[0][0].dim
        rng = np.random.default_rng(seed)
        feat_mean = torch.cat([g.node_features for g in shots.graphs()]).mean(dim=0)
        tok = feat_mean.unsqueeze(0) + 0.1 * torch.as_tensor(
            rng.standard_normal((tokens, d)), dtype=torch.float64
        )
        bound = 1.0 / np.sqrt(hidden_dim)
        head_w = torch.as_tensor(
            rng.uniform(-bound, bound, (hidden_dim, shots.num_classes)),
            dtype=torch.float64,
        )
        return PromptState(
            variant=PROG,
            num_classes=shots.num_classes,
            prompt_graph=complete_prompt_graph(tok),
            head_weight=head_w,
            head_bias=torch.zeros(shots.num_classes, dtype=torch.float64),
            link_mode=link_mode,
            link_k=link_k,
            tau=tau,
        )
    if variant == GRAPHPROMPT:
        return PromptState(
            variant=GRAPHPROMPT,
            num_classes=shots.num_classes,
            prompt_vec=torch.ones(hidden_dim, dtype=torch.float64),
            tau=tau,
        )
    raise ValueError(f"unknown prompt variant {variant!r}")


def few_shot_tune(
    params: EncoderParams,
    shots: FewShotSet,
    variant: str,
    epochs: int,
    lr: float,
    seed: int,
    tokens: int = 15,
    link_mode: str = "similarity",
    link_k: int = 1,
    tau: float = 0.5,
) -> PromptState:
    """Tune prompt parameters on the shots; the encoder is never updated."""
    ps = init_prompt_state(
        variant, shots, params.hidden_dim, split_seed(seed, "prompt-init"),
        tokens, link_mode, link_k, tau,
    )
    labels = shots.labels()
    graphs = shots.graphs()
    history: list[float] = []

    if variant == PROG:
        tok = ps.prompt_graph.token_vectors.clone().requires_grad_(True)
        head_w = ps.head_weight.clone().requires_grad_(True)
        head_b = ps.head_bias.clone().requires_grad_(True)
        opt = torch.optim.Adam([tok, head_w, head_b], lr=lr)
        for epoch in range(epochs):
            opt.zero_grad()
            cur = replace(
                ps,
                prompt_graph=ps.prompt_graph.with_tokens(tok),
                head_weight=head_w,
                head_bias=head_b,
            )
            scores = prog_scores_many(params, graphs, cur)
            loss = torch.nn.functional.cross_entropy(scores, labels)
            if not torch.isfinite(loss):
                raise DivergenceError(f"prompt tuning diverged at epoch {epoch}")
            loss.backward()
            opt.step()
            history.append(float(loss.detach()))
        return replace(
            ps,
            prompt_graph=ps.prompt_graph.with_tokens(tok.detach()),
            head_weight=head_w.detach(),
            head_bias=head_b.detach(),
            loss_history=history,
        )

    # graphprompt: tune the readout vector against per-epoch prototypes
    vec = ps.prompt_vec.clone().requires_grad_(True)
    opt = torch.optim.Adam([vec], lr=lr)
    for epoch in range(epochs):
        opt.zero_grad()
        embs = encode_graphs(params, graphs, "sum") * vec
        protos = _class_prototypes(embs, labels, shots.num_classes)
        loss = _prototype_loss(embs, labels, protos, tau)
        if not torch.isfinite(loss):
            raise DivergenceError(f"prompt tuning diverged at epoch {epoch}")
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
    final_vec = vec.detach()
    with torch.no_grad():
        embs = encode_graphs(params, graphs, "sum") * final_vec
        protos = _class_prototypes(embs, labels, shots.num_classes)
    return replace(ps, prompt_vec=final_vec, prototypes=protos, loss_history=history)


def predict_many(
    params: EncoderParams, graphs: Sequence[Graph], ps: PromptState
) -> list[int]:
    """Predicted class per graph; ties break to the lowest class index."""
    with torch.no_grad():
        if ps.variant == PROG:
            scores = prog_scores_many(params, graphs, ps)
        else:
            if ps.prototypes is None:
                raise ValueError("graphprompt state has no prototypes; tune it first")
            embs = graphprompt_embed_many(params, graphs, ps)
            b, c = embs.shape[0], ps.num_classes
            scores = cosine(
                embs.unsqueeze(1).expand(b, c, -1),
                ps.prototypes.unsqueeze(0).expand(b, c, -1),
            )
    return [int(torch.argmax(row)) for row in scores]


def predict(params: EncoderParams, g: Graph, ps: PromptState) -> int:
    return predict_many(params, [g], ps)[0]
