"""Corpus generation, ingestion, and cross-context pretrain/downstream splits.

A "master" is one node-labeled graph (synthetic stochastic-block-model or
loaded from files). Splits carve pretraining corpora (plain graphs, labels
stripped) and labeled downstream datasets out of one or two masters,
according to the five disparity regimes:

  cross_distribution - cluster-partition one master; disjoint part subsets
  cross_class        - disjoint label subsets, disjoint vertex sets
  cross_dataset      - pretrain on master A, downstream on master B
  cross_domain       - same mechanism as cross_dataset, different provenance
  cross_task         - graph-task induced corpus vs node-task induced corpus
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .cluster import kmeans_fit
from .errors import ConfigError, DimensionMismatch, GraphFormatError
from .graph import Graph, bfs_order, subgraph_on
from .seeding import split_seed

CROSS_TASK = "cross_task"
CROSS_DOMAIN = "cross_domain"
CROSS_DATASET = "cross_dataset"
CROSS_CLASS = "cross_class"
CROSS_DISTRIBUTION = "cross_distribution"
SCENARIOS = (CROSS_TASK, CROSS_DOMAIN, CROSS_DATASET, CROSS_CLASS, CROSS_DISTRIBUTION)


@dataclass
class SynthConfig:
    num_blocks: int = 4
    nodes_per_block: int = 60
    intra_prob: float = 0.15
    inter_prob: float = 0.01
    feature_dim: int = 12
    separation: float = 1.0
    noise: float = 0.3
    mean_overlap: float = 0.0  # shared fraction of every block mean, in [0, 1)
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.intra_prob <= 1 and 0 <= self.inter_prob <= 1):
            raise ConfigError("edge probabilities must lie in [0, 1]")
        if not 0.0 <= self.mean_overlap < 1.0:
            raise ConfigError("mean_overlap must lie in [0, 1)")
        if self.separation < 0 or self.noise < 0:
            raise ConfigError("separation and noise must be >= 0")
        if self.num_blocks < 1 or self.nodes_per_block < 1 or self.feature_dim < 1:
            raise ConfigError("block counts and feature_dim must be >= 1")


@dataclass
class MasterGraph:
    graph: Graph
    labels: tuple[int, ...]
    name: str = "synthetic"

    def __post_init__(self):
        if len(self.labels) != self.graph.num_nodes:
            raise ConfigError("labels do not cover all master nodes")

    @property
    def num_classes(self) -> int:
        return max(self.labels) + 1


@dataclass
class ScenarioSplit:
    scenario: str
    pretrain: list[Graph]
    downstream: list[tuple[Graph, int]]
    task: str  # "node" | "graph"
    num_classes: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if not self.pretrain or not self.downstream:
            raise ConfigError("both corpora of a split must be nonempty")


def gen_synthetic_corpus(cfg: SynthConfig) -> MasterGraph:
    """Stochastic-block-model master with Gaussian block-mean features.

    Block means are `separation`-scaled orthonormal directions; labels are
    block ids. Deterministic given cfg.seed.
    """
    rng = np.random.default_rng(cfg.seed)
    b, m, d = cfg.num_blocks, cfg.nodes_per_block, cfg.feature_dim
    n = b * m
    labels = np.repeat(np.arange(b), m)
    q, _ = np.linalg.qr(rng.standard_normal((d, max(d, b + 1))))
    rho = cfg.mean_overlap
    shared = np.sqrt(rho) * q[:, 0]
    means = cfg.separation * (shared[None, :] + np.sqrt(1.0 - rho) * q[:, 1 : b + 1].T)
    feats = means[labels] + cfg.noise * rng.standard_normal((n, d))
    u = rng.random((n, n))
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, cfg.intra_prob, cfg.inter_prob)
    upper = np.triu(u < prob, k=1)
    edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(upper))]
    return MasterGraph(Graph(feats, edges), tuple(int(x) for x in labels))


def build_induced_dataset(
    master: MasterGraph,
    k_hops: int,
    max_nodes: int,
    centers: Sequence[int] | None = None,
) -> list[tuple[Graph, int]]:
    """One induced graph per center node (all nodes by default), truncated to
    max_nodes in nearest-first BFS order; labeled by the center's class."""
    if k_hops < 1:
        raise ConfigError("induced datasets need k_hops >= 1")
    g = master.graph
    out = []
    for c in centers if centers is not None else range(g.num_nodes):
        order = bfs_order(g, int(c), k_hops)[:max_nodes]
        out.append((subgraph_on(g, order), master.labels[int(c)]))
    return out


def partition_with_ids(
    master: MasterGraph, num_parts: int, seed: int
) -> list[tuple[Graph, list[int]]]:
    """k-means node partition; returns each part's induced subgraph plus the
    original node ids it covers (sorted)."""
    g = master.graph
    if num_parts < 2:
        raise ConfigError("partitioning needs num_parts >= 2")
    if num_parts > g.num_nodes:
        raise ConfigError(f"cannot split {g.num_nodes} nodes into {num_parts} parts")
    _, labels = kmeans_fit(g.node_features.numpy(), num_parts, seed)
    parts = []
    for c in range(num_parts):
        ids = sorted(int(i) for i in np.nonzero(labels == c)[0])
        parts.append((subgraph_on(g, ids), ids))
    return parts


def partition_by_clustering(master: MasterGraph, num_parts: int, seed: int) -> list[Graph]:
    return [g for g, _ in partition_with_ids(master, num_parts, seed)]


def svd_reduce(
    corpus: Sequence[Graph], k: int
) -> tuple[list[Graph], torch.Tensor]:
    """Rank-k feature projection fit on the given corpus.

    Returns the projected corpus and the [d x k] projection (orthonormal
    columns) for reuse on downstream graphs via apply_projection.
    """
    if not corpus:
        raise ConfigError("svd_reduce needs a nonempty corpus")
    d = corpus[0].dim
    if k > d:
        raise DimensionMismatch(f"target rank {k} exceeds feature dim {d}")
    x = torch.cat([g.node_features for g in corpus], dim=0)
    _, _, vh = torch.linalg.svd(x, full_matrices=False)
    proj = vh[:k].T.contiguous()
    return apply_projection(corpus, proj), proj


def apply_projection(graphs: Sequence[Graph], proj: torch.Tensor) -> list[Graph]:
    return [g.replace_features(g.node_features @ proj) for g in graphs]


def _cap(items: list, cap: int, seed: int) -> list:
    if cap <= 0 or len(items) <= cap:
        return list(items)
    rng = np.random.default_rng(seed)
    idx = sorted(rng.choice(len(items), size=cap, replace=False))
    return [items[int(i)] for i in idx]


def _relabel(pairs: list[tuple[Graph, int]]) -> tuple[list[tuple[Graph, int]], dict[int, int]]:
    classes = sorted({y for _, y in pairs})
    mapping = {c: i for i, c in enumerate(classes)}
    return [(g, mapping[y]) for g, y in pairs], mapping


def make_split(
    sources: Sequence[MasterGraph],
    scenario: str,
    seed: int,
    num_parts: int = 12,
    k_hops: int = 2,
    max_nodes: int = 30,
    pretrain_cap: int = 48,
    downstream_cap: int = 200,
    task: str = "node",
) -> ScenarioSplit:
    """Build the pretrain/downstream corpora for one cross-context scenario."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    need = 2 if scenario in (CROSS_DOMAIN, CROSS_DATASET) else 1
    if len(sources) < need:
        raise ConfigError(f"{scenario} needs {need} master graph(s), got {len(sources)}")
    meta: dict = {"seed": seed, "sources": [m.name for m in sources[:need]]}

    if scenario == CROSS_DISTRIBUTION:
        master = sources[0]
        parts = partition_with_ids(master, num_parts, split_seed(seed, "parts"))
        order = np.random.default_rng(split_seed(seed, "assign")).permutation(len(parts))
        half = len(parts) // 2
        pre_ids = sorted(int(i) for i in order[:half])
        down_ids = sorted(int(i) for i in order[half:])
        pretrain = [parts[i][0] for i in pre_ids]
        down_nodes = sorted(n for i in down_ids for n in parts[i][1])
        sub = MasterGraph(
            subgraph_on(master.graph, down_nodes),
            tuple(master.labels[n] for n in down_nodes),
            master.name,
        )
        downstream = build_induced_dataset(sub, k_hops, max_nodes)
        meta["pretrain_node_ids"] = sorted(n for i in pre_ids for n in parts[i][1])
        meta["downstream_node_ids"] = down_nodes

    elif scenario == CROSS_CLASS:
        master = sources[0]
        classes = np.random.default_rng(split_seed(seed, "classes")).permutation(
            master.num_classes
        )
        if len(classes) < 4:
            raise ConfigError("cross_class needs >= 4 classes (2 per side)")
        pre_classes = sorted(int(c) for c in classes[: len(classes) // 2])
        down_classes = sorted(int(c) for c in classes[len(classes) // 2 :])
        if len(down_classes) < 2:
            raise ConfigError("cross_class downstream side needs >= 2 classes")
        pre_nodes = [i for i, y in enumerate(master.labels) if y in pre_classes]
        down_nodes = [i for i, y in enumerate(master.labels) if y in down_classes]
        pre_sub = MasterGraph(
            subgraph_on(master.graph, pre_nodes),
            tuple(master.labels[n] for n in pre_nodes),
            master.name,
        )
        down_sub = MasterGraph(
            subgraph_on(master.graph, down_nodes),
            tuple(master.labels[n] for n in down_nodes),
            master.name,
        )
        pretrain = [
            g
            for g, _ in _cap(
                build_induced_dataset(pre_sub, k_hops, max_nodes),
                pretrain_cap,
                split_seed(seed, "pre-cap"),
            )
        ]
        downstream = build_induced_dataset(down_sub, k_hops, max_nodes)
        meta["pretrain_classes"] = pre_classes
        meta["downstream_classes"] = down_classes

    elif scenario in (CROSS_DATASET, CROSS_DOMAIN):
        m_pre, m_down = sources[0], sources[1]
        meta["shared_source"] = m_pre is m_down or (
            m_pre.labels == m_down.labels
            and m_pre.graph.edges == m_down.graph.edges
            and bool(torch.equal(m_pre.graph.node_features, m_down.graph.node_features))
        )
        pretrain = partition_by_clustering(m_pre, num_parts, split_seed(seed, "parts"))
        downstream = build_induced_dataset(m_down, k_hops, max_nodes)

    else:  # CROSS_TASK
        master = sources[0]
        graph_level = build_induced_dataset(master, 1, max_nodes)
        pretrain = [
            g
            for g, _ in _cap(graph_level, pretrain_cap, split_seed(seed, "pre-cap"))
        ]
        downstream = build_induced_dataset(master, k_hops, max_nodes)
        meta["pretrain_task"] = "graph"

    downstream = _cap(downstream, downstream_cap, split_seed(seed, "down-cap"))
    downstream, label_map = _relabel(downstream)
    if len(label_map) < 2:
        raise ConfigError("downstream side has fewer than 2 classes")
    meta["label_map"] = {str(k): v for k, v in sorted(label_map.items())}
    pretrain = _cap(pretrain, pretrain_cap, split_seed(seed, "pre-cap-final"))
    return ScenarioSplit(
        scenario=scenario,
        pretrain=pretrain,
        downstream=downstream,
        task="node" if scenario == CROSS_TASK else task,
        num_classes=len(label_map),
        metadata=meta,
    )


# ---------------------------------------------------------------------------
# file ingestion: features CSV, "u v" edge lines, one integer label per line
# ---------------------------------------------------------------------------


def load_dataset(
    feature_file: str | Path, edge_file: str | Path, label_file: str | Path,
    name: str | None = None,
) -> MasterGraph:
    feats = []
    f_path, e_path, l_path = Path(feature_file), Path(edge_file), Path(label_file)
    width = None
    for ln, line in enumerate(f_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            row = [float(x) for x in parts]
        except ValueError as exc:
            raise GraphFormatError(f"{f_path.name} line {ln}: bad float") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise GraphFormatError(
                f"{f_path.name} line {ln}: expected {width} values, got {len(row)}"
            )
        feats.append(row)
    if not feats:
        raise GraphFormatError(f"{f_path.name} line 1: no feature rows")
    n = len(feats)

    edges = []
    seen = set()
    for ln, line in enumerate(e_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{e_path.name} line {ln}: expected 'u v'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise GraphFormatError(f"{e_path.name} line {ln}: non-integer endpoint") from exc
        if u == v:
            raise GraphFormatError(f"{e_path.name} line {ln}: self-loop {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"{e_path.name} line {ln}: endpoint out of range")
        key = (min(u, v), max(u, v))
        if key in seen:
            warnings.warn(f"{e_path.name} line {ln}: duplicate edge {key} dropped")
            continue
        seen.add(key)
        edges.append(key)

    labels = []
    for ln, line in enumerate(l_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            labels.append(int(line.strip()))
        except ValueError as exc:
            raise GraphFormatError(f"{l_path.name} line {ln}: non-integer label") from exc
    if len(labels) != n:
        raise GraphFormatError(
            f"{l_path.name} line {len(labels)}: {len(labels)} labels for {n} nodes"
        )
    if min(labels) < 0:
        raise GraphFormatError(f"{l_path.name}: negative label")
    return MasterGraph(Graph(feats, edges), tuple(labels), name or f_path.stem)


def save_dataset(
    master: MasterGraph,
    feature_file: str | Path,
    edge_file: str | Path,
    label_file: str | Path,
) -> None:
    feats = master.graph.node_features
    rows = [
        ",".join(repr(float(x)) for x in feats[i]) for i in range(master.graph.num_nodes)
    ]
    Path(feature_file).write_text("\n".join(rows) + "\n", encoding="utf-8")
    Path(edge_file).write_text(
        "".join(f"{u} {v}\n" for u, v in master.graph.edges), encoding="utf-8"
    )
    Path(label_file).write_text(
        "".join(f"{y}\n" for y in master.labels), encoding="utf-8"
    )
