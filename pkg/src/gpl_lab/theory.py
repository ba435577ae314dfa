"""Numerical verification of the closed-form analysis.

Everything here works in the analytic world of the linear GIN encoder
h(G) = (A + (1+eps) I) X theta with SUM readout, where prompt attachment and
trigger attachment admit exact or near-exact feature-perturbation
equivalents. The module provides:

* an anchored RBF classifier over graph embeddings,
* the kernel two-sample distance exactly as the bound chain writes it
  (single cross term, not the doubled one of standard MMD^2), plus the
  bounded form that replaces both self terms with the norm bound,
* the norm-bound check on pairwise kernel values,
* the shared feature shift that turns an isolated prompt attachment into a
  node-feature perturbation, with its exactness check,
* least-squares oracles for the optimal prompt / trigger features, and
* a before/after behavior check that ties the oracles back to the bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .encoders import LinearGinParams, linear_gin_encode
from .errors import DimensionMismatch
from .graph import (
    AnchorChoice,
    Graph,
    PromptGraph,
    TriggerGraph,
    attach_prompt_isolated,
    attach_trigger,
    augment_links,
    cosine,
)
from .seeding import split_seed

PROMPT = "prompt"
TRIGGER = "trigger"

RBF = "rbf"
COSINE = "cosine"


@dataclass
class TheoryConfig:
    kernel: str = RBF
    gamma: float = 0.5
    lipschitz: float = 1.0  # L of the encoder, spectral norm of theta for linear GIN
    mu: float = 1.0  # bound on feature Frobenius norms
    node_budget: int = 3  # k_G
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kernel not in (RBF, COSINE):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if min(self.gamma, self.lipschitz, self.mu) <= 0 or self.node_budget <= 0:
            raise ValueError("gamma, lipschitz, mu, node_budget must be positive")


def kernel_fn(cfg: TheoryConfig) -> Callable[[torch.Tensor, torch.Tensor], torch.Tensor]:
    if cfg.kernel == RBF:
        def s(x, y):
            return torch.exp(-cfg.gamma * ((x - y) ** 2).sum(dim=-1))
    else:
        def s(x, y):
            return cosine(x, y)
    return s


def norm_bound_value(cfg: TheoryConfig) -> float:
    """sqrt(k_G) (k_G - 1) L mu."""
    k = cfg.node_budget
    return math.sqrt(k) * (k - 1) * cfg.lipschitz * cfg.mu


def anchored_classifier(
    embed_fn: Callable[[Graph], torch.Tensor], anchor: Graph, gamma: float
) -> Callable[[Graph], float]:
    """Soft classifier f(G) = exp(-gamma ||E(G) - E(anchor)||^2) in (0, 1]."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    e_anchor = embed_fn(anchor).detach()

    def f(g: Graph) -> float:
        diff = embed_fn(g).detach() - e_anchor
        return float(torch.exp(-gamma * (diff ** 2).sum()))

    return f


@dataclass
class KernelDistanceBreakdown:
    self_a: float
    self_b: float
    cross: float
    d: float  # self_a + self_b - cross, as the bound chain writes it
    d_bounded: float  # 2 sqrt(k)(k-1) L mu - cross


def _as_matrix(embs) -> torch.Tensor:
    if isinstance(embs, torch.Tensor):
        m = embs
    else:
        m = torch.stack([torch.as_tensor(e, dtype=torch.float64) for e in embs])
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError("embedding set must be a nonempty [n x h] matrix")
    return m.to(torch.float64)


def kernel_distance(set_a, set_b, cfg: TheoryConfig) -> KernelDistanceBreakdown:
    """Two-sample kernel distance with a single (un-doubled) cross term.

    d = mean_ik s(a_i, a_k) + mean_jl s(b_j, b_l) - mean_ij s(a_i, b_j).
    ``standard_mmd2`` computes the conventional form for comparison.
    """
    a, b = _as_matrix(set_a), _as_matrix(set_b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch("embedding dims differ between the two sets")
    s = kernel_fn(cfg)
    n, m = a.shape[0], b.shape[0]
    self_a = float(s(a.unsqueeze(1).expand(n, n, -1), a.unsqueeze(0).expand(n, n, -1)).mean())
    self_b = float(s(b.unsqueeze(1).expand(m, m, -1), b.unsqueeze(0).expand(m, m, -1)).mean())
    cross = float(s(a.unsqueeze(1).expand(n, m, -1), b.unsqueeze(0).expand(n, m, -1)).mean())
    d = self_a + self_b - cross
    return KernelDistanceBreakdown(
        self_a, self_b, cross, d, 2.0 * norm_bound_value(cfg) - cross
    )


def standard_mmd2(set_a, set_b, cfg: TheoryConfig) -> float:
    br = kernel_distance(set_a, set_b, cfg)
    return br.self_a + br.self_b - 2.0 * br.cross


@dataclass
class NormBoundReport:
    bound: float
    max_kernel: float
    max_ratio: float
    violations: int
    pairs: int


def norm_bound_check(
    params: LinearGinParams, corpus: Sequence[Graph], cfg: TheoryConfig | None = None
) -> NormBoundReport:
    """Check s(h(G_i), h(G_k)) <= sqrt(k_G)(k_G-1) L mu over all pairs.

    L is taken as the true spectral norm of theta and mu as the true maximum
    feature Frobenius norm; k_G is the largest node count in the corpus. The
    default kernel here is cosine: it vanishes on zero embeddings (so a
    degenerate corpus gives 0 <= 0) and stays below the norm product.
    """
    if len(corpus) == 0:
        raise ValueError("norm bound check needs a nonempty corpus")
    lip = float(torch.linalg.matrix_norm(params.theta, 2))
    mu = max(float(torch.linalg.matrix_norm(g.node_features, "fro")) for g in corpus)
    k_g = max(g.num_nodes for g in corpus)
    base = cfg or TheoryConfig(kernel=COSINE)
    eff = TheoryConfig(
        kernel=base.kernel,
        gamma=base.gamma,
        lipschitz=max(lip, 1e-300),
        mu=max(mu, 1e-300),
        node_budget=k_g,
        epsilon=params.epsilon,
    )
    embs = torch.stack([linear_gin_encode(params, g)[1] for g in corpus])
    s = kernel_fn(eff)
    n = embs.shape[0]
    vals = s(embs.unsqueeze(1).expand(n, n, -1), embs.unsqueeze(0).expand(n, n, -1))
    bound = norm_bound_value(eff)
    max_kernel = float(vals.max())
    violations = int((vals > bound).sum())
    return NormBoundReport(
        bound=bound,
        max_kernel=max_kernel,
        max_ratio=max_kernel / bound if bound > 0 else math.inf,
        violations=violations,
        pairs=n * n,
    )


# ---------------------------------------------------------------------------
# prompt attachment as a feature perturbation
# ---------------------------------------------------------------------------


def delta_feat_prompt(g: Graph, p: PromptGraph, epsilon: float) -> torch.Tensor:
    """Shared node-feature shift equivalent to an isolated prompt attachment.

    delta = colsum((A_pro + (1+eps) I) feat(V_pro)) / (Deg + N (1+eps)); the
    same d-vector is added to every node of g.
    """
    if g.dim != p.dim:
        raise DimensionMismatch(f"graph dim {g.dim} != prompt dim {p.dim}")
    denom = g.total_degree() + g.num_nodes * (1.0 + epsilon)
    if abs(denom) < 1e-300:
        raise ValueError("degenerate normalization: Deg + N (1+eps) = 0")
    prop = p.as_graph().adjacency() + (1.0 + epsilon) * torch.eye(
        p.num_tokens, dtype=torch.float64
    )
    return (prop @ p.token_vectors).sum(dim=0) / denom


def prompt_equivalence_check(
    g: Graph, p: PromptGraph, params: LinearGinParams
) -> float:
    """Max abs deviation between SUM h(g (+) p) and SUM h(g shifted by delta)."""
    _, lhs = linear_gin_encode(params, attach_prompt_isolated(g, p))
    delta = delta_feat_prompt(g, p, params.epsilon)
    shifted = g.replace_features(g.node_features + delta.unsqueeze(0))
    _, rhs = linear_gin_encode(params, shifted)
    return float((lhs - rhs).abs().max())


# ---------------------------------------------------------------------------
# least-squares oracles
# ---------------------------------------------------------------------------


def _sum_embedding(params: LinearGinParams, g: Graph) -> torch.Tensor:
    return linear_gin_encode(params, g)[1]


def _attach_weights(edges: Sequence, n: int, epsilon: float) -> torch.Tensor:
    """Row-sum vector of (A + (1+eps) I) for a topology over n nodes."""
    w = torch.full((n,), 1.0 + epsilon, dtype=torch.float64)
    for u, v in edges:
        w[u] += 1.0
        w[v] += 1.0
    return w


@dataclass
class LsqProblem:
    """min over X [k x d] of ||M vec(X) - y||^2, row-major vec."""

    design: torch.Tensor  # [rows x (k d)]
    rhs: torch.Tensor  # [rows]
    unknown_shape: tuple[int, int]

    def objective(self, features: torch.Tensor) -> float:
        x = torch.as_tensor(features, dtype=torch.float64).reshape(-1)
        r = self.design @ x - self.rhs
        return float((r ** 2).sum())


@dataclass
class LsqSolution:
    features: torch.Tensor
    residual: float  # objective value at the minimizer
    normal_residual_inf: float  # ||M^T (M x - y)||_inf
    ridge_used: bool
    problem: LsqProblem


def _weighted_design(
    weights: torch.Tensor, theta: torch.Tensor
) -> torch.Tensor:
    """Design block of the map X -> (w^T X) theta, rows indexed by output coord."""
    # [(w^T X) theta]_q = sum_{a,b} w_a theta_{b,q} X_{a,b}
    return torch.einsum("a,bq->qab", weights, theta).reshape(
        theta.shape[1], weights.shape[0] * theta.shape[0]
    )


def build_prompt_lsq(
    sources: Sequence[Graph],
    targets: Sequence[Graph],
    params: LinearGinParams,
    prompt_nodes: int,
    prompt_edges: Sequence | None = None,
) -> LsqProblem:
    """Optimal-prompt regression: match every source total embedding with every
    prompted target total embedding, the prompt realized as its shared
    feature-shift equivalent (which makes the unknown enter linearly)."""
    d = params.theta.shape[0]
    if prompt_edges is None:
        prompt_edges = [
            (i, j) for i in range(prompt_nodes) for j in range(i + 1, prompt_nodes)
        ]
    c = _attach_weights(prompt_edges, prompt_nodes, params.epsilon)
    block = _weighted_design(c, params.theta)  # [h x (k d)]
    rows, rhs = [], []
    for gs in sources:
        t_s = _sum_embedding(params, gs)
        for gt in targets:
            t_t = _sum_embedding(params, gt)
            rows.append(block)
            rhs.append(t_s - t_t)
    return LsqProblem(torch.cat(rows), torch.cat(rhs), (prompt_nodes, d))


def build_trigger_lsq(
    sources: Sequence[Graph],
    targets: Sequence[Graph],
    params: LinearGinParams,
) -> LsqProblem:
    """Optimal-trigger regression: match every augmented-trigger total
    embedding (targets carry the augmented topologies) with every backdoored
    source total embedding, both expressed through the trigger features."""
    if len(targets) == 0:
        raise ValueError("trigger regression needs at least one augmented variant")
    c_nodes = targets[0].num_nodes
    d = params.theta.shape[0]
    base_edges = [(i, j) for i in range(c_nodes) for j in range(i + 1, c_nodes)]
    c = _attach_weights(base_edges, c_nodes, params.epsilon)
    attach_block = _weighted_design(c, params.theta)
    rows, rhs = [], []
    for var in targets:
        if var.num_nodes != c_nodes:
            raise DimensionMismatch("augmented trigger variants differ in node count")
        w = _attach_weights(var.edges, c_nodes, params.epsilon)
        var_block = _weighted_design(w, params.theta)
        for gs in sources:
            t_s = _sum_embedding(params, gs)
            rows.append(var_block - attach_block)
            rhs.append(t_s)
    return LsqProblem(torch.cat(rows), torch.cat(rhs), (c_nodes, d))


def least_squares_oracle(
    problem: str,
    sources: Sequence[Graph],
    targets: Sequence[Graph],
    params: LinearGinParams,
    prompt_nodes: int = 15,
    prompt_edges: Sequence | None = None,
) -> LsqSolution:
    """Solve the optimal prompt-/trigger-feature regression.

    The normal equations are solved by SVD least squares (minimum-norm
    solution); an explicit 1e-8 ridge is the flagged fallback if that fails.
    """
    if problem == PROMPT:
        lsq = build_prompt_lsq(sources, targets, params, prompt_nodes, prompt_edges)
    elif problem == TRIGGER:
        lsq = build_trigger_lsq(sources, targets, params)
    else:
        raise ValueError(f"unknown least-squares problem {problem!r}")
    m, y = lsq.design, lsq.rhs
    ridge_used = False
    try:
        x = torch.linalg.lstsq(m, y.unsqueeze(1), driver="gelsd").solution.squeeze(1)
    except Exception:
        ridge_used = True
        gram = m.T @ m + 1e-8 * torch.eye(m.shape[1], dtype=torch.float64)
        x = torch.linalg.solve(gram, m.T @ y)
    resid = m @ x - y
    return LsqSolution(
        features=x.reshape(lsq.unknown_shape),
        residual=float((resid ** 2).sum()),
        normal_residual_inf=float((m.T @ resid).abs().max()),
        ridge_used=ridge_used,
        problem=lsq,
    )


def gradient_descent_lsq(
    problem: LsqProblem, seed: int, iters: int = 2000, tol: float = 1e-14
) -> tuple[torch.Tensor, float]:
    """Steepest descent with exact line search on the quadratic objective."""
    rng = np.random.default_rng(seed)
    x = torch.as_tensor(
        rng.standard_normal(problem.design.shape[1]), dtype=torch.float64
    )
    m, y = problem.design, problem.rhs
    prev = float("inf")
    for _ in range(iters):
        r = m @ x - y
        g = 2.0 * (m.T @ r)
        gn = float((g ** 2).sum())
        if gn < tol:
            break
        mg = m @ g
        denom = 2.0 * float((mg ** 2).sum())
        if denom <= 0:
            break
        step = gn / denom
        x = x - step * g
        cur = float(((m @ x - y) ** 2).sum())
        if abs(prev - cur) < tol:
            break
        prev = cur
    return x.reshape(problem.unknown_shape), float(((m @ x - y) ** 2).sum())


# ---------------------------------------------------------------------------
# proposition behavior check
# ---------------------------------------------------------------------------


@dataclass
class PropositionArtifacts:
    gin: LinearGinParams
    pretrain_graphs: list[Graph]
    downstream_graphs: list[Graph]
    anchors: list[AnchorChoice]
    aug_variants: list[Graph]  # augmented trigger topologies (features = before)
    trigger_before: TriggerGraph
    trigger_after: TriggerGraph
    prompt_before: PromptGraph
    prompt_after: PromptGraph
    kernel: TheoryConfig
    steps: int = 1


@dataclass
class PropositionReport:
    trigger_sim_before: float
    trigger_sim_after: float
    delta_trigger: float
    prompt_sim_before: float
    prompt_sim_after: float
    delta_prompt: float
    bound_part_before: float
    bound_part_after: float
    delta_bound: float
    true_attach_sim_before: float
    true_attach_sim_after: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _mean_kernel(
    cfg: TheoryConfig, set_a: torch.Tensor, set_b: torch.Tensor
) -> float:
    s = kernel_fn(cfg)
    n, m = set_a.shape[0], set_b.shape[0]
    return float(
        s(set_a.unsqueeze(1).expand(n, m, -1), set_b.unsqueeze(0).expand(n, m, -1)).mean()
    )


def _trigger_side_embeddings(
    art: PropositionArtifacts, trigger: TriggerGraph
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(augmented-trigger, closed-form backdoored, true backdoored) totals."""
    gin = art.gin
    aug = torch.stack(
        [
            _sum_embedding(gin, Graph(trigger.node_features, var.edges))
            for var in art.aug_variants
        ]
    )
    c_nodes = trigger.num_nodes
    base_edges = [(i, j) for i in range(c_nodes) for j in range(i + 1, c_nodes)]
    c = _attach_weights(base_edges, c_nodes, gin.epsilon)
    shift = (c @ trigger.node_features) @ gin.theta
    closed = torch.stack(
        [_sum_embedding(gin, g) + shift for g in art.pretrain_graphs]
    )
    true = torch.stack(
        [
            _sum_embedding(gin, attach_trigger(g, trigger, a))
            for g, a in zip(art.pretrain_graphs, art.anchors)
        ]
    )
    return aug, closed, true


def _prompt_side_embeddings(
    art: PropositionArtifacts, prompt: PromptGraph
) -> tuple[torch.Tensor, torch.Tensor]:
    gin = art.gin
    src = torch.stack([_sum_embedding(gin, g) for g in art.pretrain_graphs])
    prompted = torch.stack(
        [
            _sum_embedding(gin, attach_prompt_isolated(g, prompt))
            for g in art.downstream_graphs
        ]
    )
    return src, prompted


def _downstream_backdoor_sim(
    art: PropositionArtifacts, trigger: TriggerGraph, prompt: PromptGraph
) -> float:
    gin = art.gin
    bd_src = torch.stack(
        [
            _sum_embedding(gin, attach_trigger(g, trigger, a))
            for g, a in zip(art.pretrain_graphs, art.anchors)
        ]
    )
    m = len(art.downstream_graphs)
    bd_tgt = []
    for j, g in enumerate(art.downstream_graphs):
        anchor = AnchorChoice(anchor_node=0)
        bd = attach_trigger(g, trigger, anchor)
        bd_tgt.append(_sum_embedding(gin, attach_prompt_isolated(bd, prompt)))
    return _mean_kernel(art.kernel, bd_src, torch.stack(bd_tgt))


def proposition_behavior_check(art: PropositionArtifacts) -> PropositionReport:
    """Before/after deltas for the trigger-tuning and prompt-tuning claims.

    (a) trigger tuning raises the mean kernel similarity between augmented
    triggers and backdoored pretraining graphs; (b) prompt tuning raises the
    mean similarity between pretraining graphs and prompted downstream
    graphs; (c) both raise the cross terms, so the computable part of the
    downstream bound drops. True-attachment similarities are recorded
    alongside the closed-form ones.
    """
    aug_b, closed_b, true_b = _trigger_side_embeddings(art, art.trigger_before)
    aug_a, closed_a, true_a = _trigger_side_embeddings(art, art.trigger_after)
    t_before = _mean_kernel(art.kernel, aug_b, closed_b)
    t_after = _mean_kernel(art.kernel, aug_a, closed_a)
    true_before = _mean_kernel(art.kernel, aug_b, true_b)
    true_after = _mean_kernel(art.kernel, aug_a, true_a)

    src_b, prompted_b = _prompt_side_embeddings(art, art.prompt_before)
    src_a, prompted_a = _prompt_side_embeddings(art, art.prompt_after)
    p_before = _mean_kernel(art.kernel, src_b, prompted_b)
    p_after = _mean_kernel(art.kernel, src_a, prompted_a)

    down_before = _downstream_backdoor_sim(art, art.trigger_before, art.prompt_before)
    down_after = _downstream_backdoor_sim(art, art.trigger_after, art.prompt_after)

    cap = 8.0 * norm_bound_value(art.kernel)

    def bound_part(term1: float, term2: float) -> float:
        return math.sqrt(max(0.0, cap - 4.0 * term1)) + math.sqrt(
            max(0.0, cap - 4.0 * term2)
        )

    b_before = bound_part(t_before, down_before)
    b_after = bound_part(t_after, down_after)
    return PropositionReport(
        trigger_sim_before=t_before,
        trigger_sim_after=t_after,
        delta_trigger=t_after - t_before,
        prompt_sim_before=p_before,
        prompt_sim_after=p_after,
        delta_prompt=p_after - p_before,
        bound_part_before=b_before,
        bound_part_after=b_after,
        delta_bound=b_after - b_before,
        true_attach_sim_before=true_before,
        true_attach_sim_after=true_after,
    )


def _random_graph(rng: np.random.Generator, n: int, d: int, p: float) -> Graph:
    feats = rng.standard_normal((n, d))
    edges = [
        (i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p
    ]
    return Graph(feats, edges)


def run_proposition_experiment(
    seed: int,
    steps: int = 1,
    n_pretrain: int = 6,
    n_downstream: int = 6,
    graph_nodes: int = 6,
    feature_dim: int = 5,
    hidden_dim: int = 4,
    trigger_nodes: int = 3,
    prompt_nodes: int = 4,
    n_augments: int = 5,
    flip_prob: float = 0.3,
    kernel: TheoryConfig | None = None,
) -> tuple[PropositionArtifacts, PropositionReport]:
    """Seeded end-to-end artifact builder: random corpora and linear GIN, a
    random initial trigger/prompt, and oracle-optimal replacements (identity
    when steps = 0). Returns the artifacts and their behavior report."""
    rng = np.random.default_rng(seed)
    gin = LinearGinParams(
        epsilon=float(rng.uniform(-0.5, 0.5)),
        theta=rng.standard_normal((feature_dim, hidden_dim)) / math.sqrt(feature_dim),
    )
    pre = [_random_graph(rng, graph_nodes, feature_dim, 0.4) for _ in range(n_pretrain)]
    down = [
        _random_graph(rng, graph_nodes, feature_dim, 0.4) for _ in range(n_downstream)
    ]
    anchors = [
        AnchorChoice(int(rng.integers(0, g.num_nodes)), seed) for g in pre
    ]
    trig_feats = rng.standard_normal((trigger_nodes, feature_dim))
    trigger_before = TriggerGraph(trig_feats, 0)
    base = trigger_before.as_graph()
    aug_variants = [
        augment_links(base, flip_prob, split_seed(seed, "aug", i))
        for i in range(n_augments)
    ]
    prompt_feats = rng.standard_normal((prompt_nodes, feature_dim))
    p_edges = [(i, j) for i in range(prompt_nodes) for j in range(i + 1, prompt_nodes)]
    prompt_before = PromptGraph(prompt_feats, p_edges)

    if steps == 0:
        trigger_after = trigger_before
        prompt_after = prompt_before
    else:
        sol_t = least_squares_oracle(TRIGGER, pre, aug_variants, gin)
        trigger_after = TriggerGraph(sol_t.features, 0)
        sol_p = least_squares_oracle(
            PROMPT, pre, down, gin, prompt_nodes=prompt_nodes, prompt_edges=p_edges
        )
        prompt_after = PromptGraph(sol_p.features, p_edges)

    if kernel is not None:
        cfg = kernel
    else:
        lip = float(torch.linalg.matrix_norm(gin.theta, 2))
        mu = max(
            float(torch.linalg.matrix_norm(g.node_features, "fro"))
            for g in pre + down
        )
        # scale the RBF into its near-linear regime at the initial distances,
        # where a drop in mean squared distance raises mean similarity
        probe = PropositionArtifacts(
            gin=gin, pretrain_graphs=pre, downstream_graphs=down, anchors=anchors,
            aug_variants=aug_variants, trigger_before=trigger_before,
            trigger_after=trigger_before, prompt_before=prompt_before,
            prompt_after=prompt_before,
            kernel=TheoryConfig(kernel=RBF, gamma=1.0, lipschitz=lip, mu=mu,
                                node_budget=graph_nodes + trigger_nodes + prompt_nodes),
        )
        aug0, closed0, _ = _trigger_side_embeddings(probe, trigger_before)
        src0, prompted0 = _prompt_side_embeddings(probe, prompt_before)
        d2 = []
        for a_set, b_set in ((aug0, closed0), (src0, prompted0)):
            diff = a_set.unsqueeze(1) - b_set.unsqueeze(0)
            d2.append(float((diff ** 2).sum(dim=-1).mean()))
        gamma = 0.05 / max(1e-12, max(d2))
        cfg = TheoryConfig(
            kernel=RBF,
            gamma=gamma,
            lipschitz=lip,
            mu=mu,
            node_budget=graph_nodes + trigger_nodes + prompt_nodes,
        )
    art = PropositionArtifacts(
        gin=gin,
        pretrain_graphs=pre,
        downstream_graphs=down,
        anchors=anchors,
        aug_variants=aug_variants,
        trigger_before=trigger_before,
        trigger_after=trigger_after,
        prompt_before=prompt_before,
        prompt_after=prompt_after,
        kernel=cfg,
        steps=steps,
    )
    return art, proposition_behavior_check(art)
