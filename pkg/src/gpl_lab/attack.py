"""Backdoor injection during pretraining.

The main attack alternates, for T rounds, a trigger-feature gradient step
(collide backdoored-graph embeddings with the trigger's own embedding, keep
trigger features close to anchor features) with an encoder gradient step
(reinforce the collision while pinning clean-graph embeddings to a frozen
clean reference encoder). Both steps are literal single gradient-descent
updates; a multiplicity flag repeats them within a round.

The cluster-target baselines (gcba_r / gcba_m) instead fix a target embedding
chosen from k-means cluster centers of the clean embedding space and pull
backdoored graphs toward it, with free trigger features and no affinity term.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import torch

from .cluster import kmeans_fit
from .encoders import EncoderConfig, EncoderParams, GraphEmbedder, encode_graphs
from .errors import DivergenceError
from .graph import AnchorChoice, Graph, TriggerGraph, attach_trigger, choose_anchor, cosine
from .pretraining import PretrainConfig, cached_train_clean_encoder, contrastive_loss
from .seeding import split_seed

CROSSBA = "crossba"
GCBA_R = "gcba_r"
GCBA_M = "gcba_m"


@dataclass
class AttackConfig:
    alpha: float = 0.5
    beta: float = 0.05
    lam: float = 0.05
    tau: float = 0.5
    gamma_t: float = 0.01
    gamma_g: float = 0.0001
    rounds: int = 50
    trigger_nodes: int = 3
    seed: int = 0
    inner_steps: int = 1  # Eq-level updates per round, per side
    include_clr_in_encoder_step: bool = False
    trigger_init_noise: float = 0.01
    trigger_init_scale: float = 1.0  # scales the anchor-mean init magnitude
    detach_target_in_encoder_step: bool = False  # stop-gradient on the trigger side
    gcba_gamma_t: float = 0.0015
    gcba_gamma_g: float = 0.001
    gcba_clusters: int = 4

    def __post_init__(self):
        if min(self.gamma_t, self.gamma_g, self.gcba_gamma_t, self.gcba_gamma_g) <= 0:
            raise ValueError("learning rates must be positive")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if min(self.alpha, self.beta, self.lam) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.trigger_nodes < 1 or self.inner_steps < 1:
            raise ValueError("trigger_nodes and inner_steps must be >= 1")


@dataclass
class LossTraceRow:
    round: int
    l_bdk: float
    l_clr: float
    l_sim_c: float
    l_sim_a: float
    total: float


@dataclass
class AttackState:
    trigger: TriggerGraph
    backdoored_params: EncoderParams
    clean_params: EncoderParams  # frozen reference, never modified
    anchors: tuple[AnchorChoice, ...]
    loss_trace: list[LossTraceRow] = field(default_factory=list)
    target_embedding: torch.Tensor | None = None  # set by the gcba variants
    attack_name: str = CROSSBA


# ---------------------------------------------------------------------------
# loss terms
# ---------------------------------------------------------------------------


def backdoor_loss(
    enc_b: GraphEmbedder,
    corpus: Sequence[Graph],
    trigger: TriggerGraph,
    anchors: Sequence[AnchorChoice],
    lam: float,
) -> torch.Tensor:
    """Collision objective: backdoored graphs toward the trigger embedding,
    optionally (lam > 0) away from their clean counterparts."""
    if len(corpus) == 0:
        raise ValueError("backdoor loss needs a nonempty corpus")
    backdoored = [attach_trigger(g, trigger, a) for g, a in zip(corpus, anchors)]
    embs = enc_b(backdoored + list(corpus) + [trigger.as_graph()])
    b = len(corpus)
    e_bd, e_clean, e_trig = embs[:b], embs[b : 2 * b], embs[2 * b]
    loss = -cosine(e_bd, e_trig.unsqueeze(0).expand(b, -1)).mean()
    if lam != 0.0:
        loss = loss + lam * cosine(e_bd, e_clean).mean()
    return loss


def align_loss(
    enc_b: GraphEmbedder, enc_c: GraphEmbedder, corpus: Sequence[Graph]
) -> torch.Tensor:
    """Negative mean cosine between backdoored-encoder and clean-encoder
    embeddings of the same clean graphs."""
    if len(corpus) == 0:
        raise ValueError("align loss needs a nonempty corpus")
    with torch.no_grad():
        e_ref = enc_c(list(corpus))
    return align_loss_to(enc_b(list(corpus)), e_ref)


def align_loss_to(embs_b: torch.Tensor, embs_ref: torch.Tensor) -> torch.Tensor:
    return -cosine(embs_b, embs_ref.detach()).mean()


def affinity_loss(
    trigger: TriggerGraph, anchor_features: Sequence[torch.Tensor] | torch.Tensor
) -> torch.Tensor:
    """Negative mean cosine over all (anchor, trigger-node) feature pairs."""
    if isinstance(anchor_features, torch.Tensor):
        anchors = anchor_features
    else:
        if len(anchor_features) == 0:
            raise ValueError("affinity loss needs at least one anchor")
        anchors = torch.stack([torch.as_tensor(a, dtype=torch.float64) for a in anchor_features])
    if anchors.numel() == 0:
        raise ValueError("affinity loss needs at least one anchor")
    t = trigger.node_features  # [C, d]
    c, m = t.shape[0], anchors.shape[0]
    sims = cosine(
        t.unsqueeze(1).expand(c, m, -1), anchors.unsqueeze(0).expand(c, m, -1)
    )
    return -sims.mean()


def anchor_feature_matrix(
    corpus: Sequence[Graph], anchors: Sequence[AnchorChoice]
) -> torch.Tensor:
    rows = [g.node_features[a.anchor_node].detach() for g, a in zip(corpus, anchors)]
    return torch.stack(rows)


# ---------------------------------------------------------------------------
# alternating steps
# ---------------------------------------------------------------------------


def _grad_or_raise(loss: torch.Tensor, leaves: Sequence[torch.Tensor], what: str):
    grads = torch.autograd.grad(loss, list(leaves))
    for g in grads:
        if not torch.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient in {what}")
    return grads


def tune_trigger_step(
    state: AttackState, corpus: Sequence[Graph], cfg: AttackConfig
) -> TriggerGraph:
    """One gradient-descent update of the trigger node features at rate
    gamma_t on (backdoor loss + beta * affinity loss); encoder frozen."""
    feats = state.trigger.node_features.detach().clone().requires_grad_(True)
    trig = state.trigger.with_features(feats)

    def embed(graphs):
        return encode_graphs(state.backdoored_params, graphs, "sum")

    loss = backdoor_loss(embed, corpus, trig, state.anchors, cfg.lam)
    if cfg.beta != 0.0:
        loss = loss + cfg.beta * affinity_loss(
            trig, anchor_feature_matrix(corpus, state.anchors)
        )
    (grad,) = _grad_or_raise(loss, [feats], "trigger step")
    new_feats = feats.detach() - cfg.gamma_t * grad
    return state.trigger.with_features(new_feats)


def _encoder_objective(
    params: EncoderParams,
    state: AttackState,
    corpus: Sequence[Graph],
    cfg: AttackConfig,
    clean_embs: torch.Tensor,
    clr_seed: int = 0,
    pretrain_cfg: PretrainConfig | None = None,
) -> torch.Tensor:
    backdoored = [
        attach_trigger(g, state.trigger, a) for g, a in zip(corpus, state.anchors)
    ]
    embs = encode_graphs(params, backdoored + list(corpus) + [state.trigger.as_graph()], "sum")
    b = len(corpus)
    e_bd, e_clean = embs[:b], embs[b : 2 * b]
    if state.target_embedding is not None:
        target = state.target_embedding
    elif cfg.detach_target_in_encoder_step:
        target = embs[2 * b].detach()
    else:
        target = embs[2 * b]
    obj = -cosine(e_bd, target.unsqueeze(0).expand(b, -1)).mean()
    obj = obj - cfg.alpha * cosine(e_clean, clean_embs.detach()).mean()
    if cfg.include_clr_in_encoder_step:
        pcfg = pretrain_cfg or PretrainConfig(tau=cfg.tau)

        def enc(graphs):
            return encode_graphs(params, graphs, "sum")

        obj = obj + contrastive_loss(enc, corpus, pcfg, clr_seed)
    return obj


def tune_encoder_step(
    state: AttackState,
    corpus: Sequence[Graph],
    cfg: AttackConfig,
    clean_embs: torch.Tensor | None = None,
    clr_seed: int = 0,
    pretrain_cfg: PretrainConfig | None = None,
) -> EncoderParams:
    """One gradient-descent update of the backdoored encoder at rate gamma_g;
    trigger and clean reference frozen. The gcba variants pass a fixed target
    through state.target_embedding and their own rate via cfg."""
    if clean_embs is None:
        with torch.no_grad():
            clean_embs = encode_graphs(state.clean_params, list(corpus), "sum")
    params = state.backdoored_params.clone().requires_grad_(True)
    rate = cfg.gamma_g if state.attack_name == CROSSBA else cfg.gcba_gamma_g
    obj = _encoder_objective(
        params, replace(state, backdoored_params=params), corpus, cfg, clean_embs,
        clr_seed, pretrain_cfg,
    )
    grads = _grad_or_raise(obj, params.parameters(), "encoder step")
    new_tensors = {
        name: t.detach() - rate * g
        for (name, t), g in zip(params.named_tensors(), grads)
    }
    return replace(params, tensors=new_tensors)


# ---------------------------------------------------------------------------
# trigger initialization
# ---------------------------------------------------------------------------


def initial_trigger(
    corpus: Sequence[Graph],
    anchors: Sequence[AnchorChoice],
    cfg: AttackConfig,
    seed: int,
    style: str = "anchor_mean",
) -> TriggerGraph:
    """Seeded trigger init: anchor-feature mean plus small noise, or plain
    standard-normal features ("random", used by the gcba baselines)."""
    d = corpus[0].dim
    rng = np.random.default_rng(seed)
    noise = torch.as_tensor(
        rng.standard_normal((cfg.trigger_nodes, d)), dtype=torch.float64
    )
    if style == "anchor_mean":
        mean = anchor_feature_matrix(corpus, anchors).mean(dim=0)
        feats = cfg.trigger_init_scale * mean.unsqueeze(0) + cfg.trigger_init_noise * noise
    elif style == "random":
        feats = noise
    else:
        raise ValueError(f"unknown trigger init style {style!r}")
    return TriggerGraph(feats, attach_node_index=0)


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------


def evaluate_losses(
    state: AttackState,
    corpus: Sequence[Graph],
    cfg: AttackConfig,
    pretrain_cfg: PretrainConfig,
    round_index: int,
    clean_embs: torch.Tensor,
    trace_seed: int,
) -> LossTraceRow:
    """Snapshot of all objective terms under the current state."""
    with torch.no_grad():
        def embed(graphs):
            return encode_graphs(state.backdoored_params, graphs, "sum")

        if state.target_embedding is None:
            l_bdk = float(
                backdoor_loss(embed, corpus, state.trigger, state.anchors, cfg.lam)
            )
        else:
            backdoored = [
                attach_trigger(g, state.trigger, a)
                for g, a in zip(corpus, state.anchors)
            ]
            e_bd = embed(backdoored)
            l_bdk = float(
                -cosine(
                    e_bd, state.target_embedding.unsqueeze(0).expand(len(corpus), -1)
                ).mean()
            )
        l_clr = float(contrastive_loss(embed, corpus, pretrain_cfg, trace_seed))
        l_sim_c = float(align_loss_to(embed(list(corpus)), clean_embs))
        l_sim_a = float(
            affinity_loss(state.trigger, anchor_feature_matrix(corpus, state.anchors))
        )
    total = l_bdk + l_clr + cfg.alpha * l_sim_c + cfg.beta * l_sim_a
    return LossTraceRow(round_index, l_bdk, l_clr, l_sim_c, l_sim_a, total)


def _prepare(
    corpus: Sequence[Graph],
    pretrain_cfg: PretrainConfig,
    attack_cfg: AttackConfig,
    encoder: EncoderConfig | None,
    objective: str,
):
    if len(corpus) == 0:
        raise ValueError("attack needs a nonempty pretraining corpus")
    anchors = tuple(
        choose_anchor(g, split_seed(attack_cfg.seed, "anchor", i))
        for i, g in enumerate(corpus)
    )
    pre = cached_train_clean_encoder(corpus, pretrain_cfg, objective, encoder)
    with torch.no_grad():
        clean_embs = encode_graphs(pre.params, list(corpus), "sum")
    return anchors, pre.params, clean_embs


def run_crossba(
    corpus: Sequence[Graph],
    pretrain_cfg: PretrainConfig,
    attack_cfg: AttackConfig,
    encoder: EncoderConfig | None = None,
    objective: str = "graphcl",
) -> AttackState:
    """Full alternating attack: pretrain clean, copy to backdoored, then for
    each round tune the trigger (encoder frozen) and the encoder (trigger
    frozen). Deterministic given seeds."""
    anchors, clean, clean_embs = _prepare(
        corpus, pretrain_cfg, attack_cfg, encoder, objective
    )
    trigger = initial_trigger(
        corpus, anchors, attack_cfg, split_seed(attack_cfg.seed, "trigger-init"),
        style="anchor_mean",
    )
    state = AttackState(
        trigger=trigger,
        backdoored_params=clean.clone(),
        clean_params=clean,
        anchors=anchors,
        attack_name=CROSSBA,
    )
    trace_seed = split_seed(attack_cfg.seed, "trace-clr")
    state.loss_trace.append(
        evaluate_losses(state, corpus, attack_cfg, pretrain_cfg, 0, clean_embs, trace_seed)
    )
    for t in range(1, attack_cfg.rounds + 1):
        for _ in range(attack_cfg.inner_steps):
            state = replace(state, trigger=tune_trigger_step(state, corpus, attack_cfg))
        for _ in range(attack_cfg.inner_steps):
            state = replace(
                state,
                backdoored_params=tune_encoder_step(
                    state, corpus, attack_cfg, clean_embs,
                    clr_seed=split_seed(attack_cfg.seed, "clr", t),
                    pretrain_cfg=pretrain_cfg,
                ),
            )
        state.loss_trace.append(
            evaluate_losses(
                state, corpus, attack_cfg, pretrain_cfg, t, clean_embs, trace_seed
            )
        )
    return state


def gcba_select_target(
    clean_embs: torch.Tensor | Sequence[torch.Tensor],
    k_clusters: int,
    mode: str,
    seed: int,
) -> torch.Tensor:
    """Pick a fixed target embedding from k-means cluster centers.

    mode "r": seeded-random center. mode "m": the center with the largest
    mean distance to the other centers (ties -> lowest cluster index).
    """
    if k_clusters < 2:
        raise ValueError("k_clusters must be >= 2")
    if not isinstance(clean_embs, torch.Tensor):
        clean_embs = torch.stack(list(clean_embs))
    pts = clean_embs.detach().numpy()
    if pts.shape[0] < k_clusters:
        raise ValueError(f"{pts.shape[0]} embeddings cannot form {k_clusters} clusters")
    centers, _ = kmeans_fit(pts, k_clusters, seed)
    if mode == "r":
        rng = np.random.default_rng(split_seed(seed, "pick"))
        idx = int(rng.integers(0, k_clusters))
    elif mode == "m":
        dists = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2) ** 0.5
        mean_dist = dists.sum(axis=1) / (k_clusters - 1)
        idx = int(mean_dist.argmax())  # argmax returns the lowest index on ties
    else:
        raise ValueError(f"unknown gcba mode {mode!r}")
    return torch.as_tensor(centers[idx], dtype=torch.float64)


def run_gcba(
    corpus: Sequence[Graph],
    pretrain_cfg: PretrainConfig,
    attack_cfg: AttackConfig,
    mode: str,
    encoder: EncoderConfig | None = None,
    objective: str = "graphcl",
) -> AttackState:
    """Cluster-target baseline: fixed target embedding, free trigger features,
    no affinity term, no target tuning."""
    anchors, clean, clean_embs = _prepare(
        corpus, pretrain_cfg, attack_cfg, encoder, objective
    )
    target = gcba_select_target(
        clean_embs, attack_cfg.gcba_clusters, mode,
        split_seed(attack_cfg.seed, "gcba-target"),
    )
    trigger = initial_trigger(
        corpus, anchors, attack_cfg, split_seed(attack_cfg.seed, "trigger-init"),
        style="random",
    )
    state = AttackState(
        trigger=trigger,
        backdoored_params=clean.clone(),
        clean_params=clean,
        anchors=anchors,
        target_embedding=target,
        attack_name=GCBA_R if mode == "r" else GCBA_M,
    )
    trace_seed = split_seed(attack_cfg.seed, "trace-clr")
    state.loss_trace.append(
        evaluate_losses(state, corpus, attack_cfg, pretrain_cfg, 0, clean_embs, trace_seed)
    )
    for t in range(1, attack_cfg.rounds + 1):
        for _ in range(attack_cfg.inner_steps):
            state = replace(state, trigger=_gcba_trigger_step(state, corpus, attack_cfg))
        for _ in range(attack_cfg.inner_steps):
            state = replace(
                state,
                backdoored_params=tune_encoder_step(state, corpus, attack_cfg, clean_embs),
            )
        state.loss_trace.append(
            evaluate_losses(
                state, corpus, attack_cfg, pretrain_cfg, t, clean_embs, trace_seed
            )
        )
    return state


def _gcba_trigger_step(
    state: AttackState, corpus: Sequence[Graph], cfg: AttackConfig
) -> TriggerGraph:
    feats = state.trigger.node_features.detach().clone().requires_grad_(True)
    trig = state.trigger.with_features(feats)
    backdoored = [attach_trigger(g, trig, a) for g, a in zip(corpus, state.anchors)]
    e_bd = encode_graphs(state.backdoored_params, backdoored, "sum")
    b = len(corpus)
    loss = -cosine(e_bd, state.target_embedding.unsqueeze(0).expand(b, -1)).mean()
    (grad,) = _grad_or_raise(loss, [feats], "gcba trigger step")
    return state.trigger.with_features(feats.detach() - cfg.gcba_gamma_t * grad)


def write_trace_csv(path, trace: Sequence[LossTraceRow]) -> None:
    """Loss-trace CSV: (round, L_bdk, L_clr, L_sim_c, L_sim_a, total)."""
    from pathlib import Path

    lines = ["round,l_bdk,l_clr,l_sim_c,l_sim_a,total"]
    for row in trace:
        lines.append(
            f"{row.round},{row.l_bdk!r},{row.l_clr!r},{row.l_sim_c!r},"
            f"{row.l_sim_a!r},{row.total!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
