"""Metrics and the end-to-end experiment pipeline.

One pipeline run: attack (or plain pretraining) on the split's pretrain
corpus, optional edge-pruning defense on every downstream input, few-shot
prompt tuning on clean shots, then exact-count metrics - clean accuracy of
the backdoored model, attack success rate against the class the bare trigger
graph resolves to, and the accuracy drop against a clean-encoder twin that
shares the seed, shots, and prompt hyperparameters.

ASR/ACC are Fractions (exact rational counts); AD is their difference.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .attack import (
    CROSSBA,
    GCBA_M,
    GCBA_R,
    AttackConfig,
    AttackState,
    run_crossba,
    run_gcba,
)
from .defense import PruneConfig, prune_g
from .encoders import EncoderConfig, EncoderParams
from .errors import ConfigError
from .graph import Graph, TriggerGraph, attach_trigger, choose_anchor, write_graph_text
from .pretraining import GRAPHCL, LINKPRED, PretrainConfig
from .prompting import (
    GRAPHPROMPT,
    PROG,
    FewShotSet,
    PromptState,
    few_shot_tune,
    predict,
    predict_many,
)
from .scenarios import ScenarioSplit
from .seeding import split_seed

NONE_ATTACK = "none"
ATTACKS = (CROSSBA, GCBA_R, GCBA_M, NONE_ATTACK)


@dataclass
class PromptTuneConfig:
    epochs: int = 80
    lr: float = 0.01
    tokens: int = 15
    shots_per_class: int = 20
    link_mode: str = "similarity"
    link_k: int = 1
    tau: float = 0.5


@dataclass
class PipelineConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    prompt: PromptTuneConfig = field(default_factory=PromptTuneConfig)
    defense: PruneConfig = field(default_factory=PruneConfig)
    objective: str = "auto"  # graphcl | linkpred | auto (by prompt variant)
    max_test: int = 0  # 0 = use the full held-out set

    def resolve_objective(self, gpl_variant: str) -> str:
        if self.objective != "auto":
            return self.objective
        return GRAPHCL if gpl_variant == PROG else LINKPRED


@dataclass
class DownstreamModel:
    params: EncoderParams
    prompt: PromptState


@dataclass
class MetricsReport:
    scenario: str
    gpl: str
    attack: str
    defense: bool
    seed: int
    acc: float
    asr: float
    ad: float
    target_class: int
    clean_test_size: int
    backdoored_test_size: int
    config_hash: str
    task: str = "node"
    status: str = "ok"
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def select_shots(
    pairs: Sequence[tuple[Graph, int]],
    shots_per_class: int,
    seed: int,
    num_classes: int,
) -> tuple[FewShotSet, list[tuple[Graph, int]]]:
    """Seeded per-class shot selection; the remainder is the held-out test."""
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = {c: [] for c in range(num_classes)}
    for i, (_, y) in enumerate(pairs):
        by_class[y].append(i)
    shot_idx: set[int] = set()
    for c in range(num_classes):
        idx = by_class[c]
        if not idx:
            raise ConfigError(f"downstream class {c} has no examples")
        take = min(shots_per_class, len(idx))
        order = rng.permutation(len(idx))
        shot_idx.update(idx[int(o)] for o in order[:take])
    shots = tuple(pairs[i] for i in sorted(shot_idx))
    rest = [pairs[i] for i in range(len(pairs)) if i not in shot_idx]
    return FewShotSet(shots, num_classes, shots_per_class), rest


def compute_asr(
    model: DownstreamModel, backdoored_test: Sequence[Graph], target_class: int
) -> Fraction:
    """Fraction of backdoored inputs classified as the target class."""
    if not backdoored_test:
        raise ValueError("asr needs a nonempty backdoored test set")
    preds = predict_many(model.params, list(backdoored_test), model.prompt)
    return Fraction(sum(p == target_class for p in preds), len(preds))


def accuracy(model: DownstreamModel, test: Sequence[tuple[Graph, int]]) -> Fraction:
    if not test:
        raise ValueError("accuracy needs a nonempty test set")
    preds = predict_many(model.params, [g for g, _ in test], model.prompt)
    return Fraction(sum(p == y for p, (_, y) in zip(preds, test)), len(test))


def compute_acc_ad(
    backdoored_model: DownstreamModel,
    clean_reference_model: DownstreamModel,
    clean_test: Sequence[tuple[Graph, int]],
) -> tuple[Fraction, Fraction]:
    """(backdoored-model accuracy, clean-twin accuracy minus it)."""
    acc_b = accuracy(backdoored_model, clean_test)
    acc_c = accuracy(clean_reference_model, clean_test)
    return acc_b, acc_c - acc_b


def resolve_target_class(model: DownstreamModel, trigger: TriggerGraph) -> int:
    """The class the downstream model assigns to the bare trigger graph."""
    return predict(model.params, trigger.as_graph(), model.prompt)


# ---------------------------------------------------------------------------
# process-local caches for the heavy, pure stages
# ---------------------------------------------------------------------------

_attack_cache: dict[str, AttackState] = {}


def _corpus_fingerprint(graphs: Sequence[Graph]) -> str:
    h = hashlib.sha256()
    for g in graphs:
        h.update(write_graph_text(g).encode("utf-8"))
    return h.hexdigest()


def _attack_key(
    name: str,
    corpus: Sequence[Graph],
    pcfg: PretrainConfig,
    acfg: AttackConfig,
    enc: EncoderConfig,
    objective: str,
) -> str:
    payload = json.dumps(
        [name, asdict(pcfg), asdict(acfg), asdict(enc), objective], sort_keys=True
    )
    return _corpus_fingerprint(corpus) + hashlib.sha256(payload.encode()).hexdigest()


def _copy_state(state: AttackState) -> AttackState:
    return replace(
        state,
        trigger=TriggerGraph(
            state.trigger.node_features.detach().clone(), state.trigger.attach_node_index
        ),
        backdoored_params=state.backdoored_params.clone(),
        clean_params=state.clean_params.clone(),
        loss_trace=list(state.loss_trace),
    )


def run_attack(
    name: str,
    corpus: Sequence[Graph],
    pcfg: PretrainConfig,
    acfg: AttackConfig,
    enc: EncoderConfig,
    objective: str,
    use_cache: bool = True,
) -> AttackState:
    """Dispatch one attack (or the no-attack baseline, which is the main
    attack with zero rounds: backdoored params stay bitwise clean)."""
    if name not in ATTACKS:
        raise ConfigError(f"unknown attack {name!r}")
    key = _attack_key(name, corpus, pcfg, acfg, enc, objective)
    if use_cache and key in _attack_cache:
        return _copy_state(_attack_cache[key])
    if name == CROSSBA:
        state = run_crossba(corpus, pcfg, acfg, enc, objective)
    elif name in (GCBA_R, GCBA_M):
        state = run_gcba(corpus, pcfg, acfg, name[-1], enc, objective)
    else:
        state = run_crossba(corpus, pcfg, replace(acfg, rounds=0), enc, objective)
    if use_cache:
        _attack_cache[key] = _copy_state(state)
    return state


def clear_caches() -> None:
    from .pretraining import clear_train_cache

    _attack_cache.clear()
    clear_train_cache()


# ---------------------------------------------------------------------------
# the pipeline
# ---------------------------------------------------------------------------


def _config_hash(split: ScenarioSplit, cfgs: PipelineConfig, gpl: str, attack: str,
                 defense: bool, seed: int) -> str:
    payload = json.dumps(
        {
            "scenario": split.scenario,
            "task": split.task,
            "gpl": gpl,
            "attack": attack,
            "defense": defense,
            "seed": seed,
            "cfg": asdict(cfgs),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _maybe_prune(graphs: list[Graph], on: bool, cfg: PruneConfig) -> list[Graph]:
    if not on:
        return graphs
    out = []
    for g in graphs:
        res = prune_g(g, cfg)
        out.append(g if res.emptied else res.graph)
    return out


def run_pipeline(
    split: ScenarioSplit,
    attack: str,
    gpl: str,
    defense: bool,
    cfgs: PipelineConfig,
    seed: int,
) -> MetricsReport:
    """Attack, prompt-tune, evaluate; deterministic given (configs, seed)."""
    if gpl not in (PROG, GRAPHPROMPT):
        raise ConfigError(f"unknown gpl variant {gpl!r}")
    objective = cfgs.resolve_objective(gpl)
    pcfg = replace(cfgs.pretrain, seed=split_seed(seed, "pretrain"))
    acfg = replace(cfgs.attack, seed=split_seed(seed, "attack"))
    state = run_attack(attack, split.pretrain, pcfg, acfg, cfgs.encoder, objective)

    shots, rest = select_shots(
        split.downstream, cfgs.prompt.shots_per_class, split_seed(seed, "shots"),
        split.num_classes,
    )
    if cfgs.max_test > 0 and len(rest) > cfgs.max_test:
        rng = np.random.default_rng(split_seed(seed, "test-cap"))
        idx = sorted(rng.choice(len(rest), size=cfgs.max_test, replace=False))
        rest = [rest[int(i)] for i in idx]
    if not rest:
        raise ConfigError("no held-out downstream graphs left after shot selection")

    test_graphs = [g for g, _ in rest]
    backdoored = [
        attach_trigger(g, state.trigger, choose_anchor(g, split_seed(seed, "eval-anchor", i)))
        for i, g in enumerate(test_graphs)
    ]

    shot_graphs = _maybe_prune([g for g, _ in shots.examples], defense, cfgs.defense)
    shots_used = FewShotSet(
        tuple(zip(shot_graphs, [y for _, y in shots.examples])),
        split.num_classes,
        shots.shots_per_class,
    )
    test_used = list(
        zip(_maybe_prune(test_graphs, defense, cfgs.defense), [y for _, y in rest])
    )
    backdoored_used = _maybe_prune(backdoored, defense, cfgs.defense)

    prompt_seed = split_seed(seed, "prompt")
    tune = lambda params: few_shot_tune(
        params, shots_used, gpl, cfgs.prompt.epochs, cfgs.prompt.lr, prompt_seed,
        tokens=cfgs.prompt.tokens, link_mode=cfgs.prompt.link_mode,
        link_k=cfgs.prompt.link_k, tau=cfgs.prompt.tau,
    )
    model_b = DownstreamModel(state.backdoored_params, tune(state.backdoored_params))
    model_c = DownstreamModel(state.clean_params, tune(state.clean_params))

    acc_b, ad = compute_acc_ad(model_b, model_c, test_used)
    target = resolve_target_class(model_b, state.trigger)
    asr = compute_asr(model_b, backdoored_used, target)

    return MetricsReport(
        scenario=split.scenario,
        gpl=gpl,
        attack=attack,
        defense=defense,
        seed=seed,
        acc=float(acc_b),
        asr=float(asr),
        ad=float(ad),
        target_class=target,
        clean_test_size=len(test_used),
        backdoored_test_size=len(backdoored_used),
        config_hash=_config_hash(split, cfgs, gpl, attack, defense, seed),
        task=split.task,
        extras={
            "encoder": cfgs.encoder.arch,
            "objective": objective,
            "acc_fraction": f"{acc_b.numerator}/{acc_b.denominator}",
            "asr_fraction": f"{asr.numerator}/{asr.denominator}",
        },
    )


CSV_HEADER = "gpl,model,attack,scenario,defense,seed,acc,ad,asr,config_hash"


def report_csv_row(r: MetricsReport) -> str:
    return (
        f"{r.gpl},{r.extras.get('encoder', '')},{r.attack},{r.scenario},"
        f"{int(r.defense)},{r.seed},{r.acc!r},{r.ad!r},{r.asr!r},{r.config_hash}"
    )


def append_report_csv(path, reports: Sequence[MetricsReport]) -> None:
    p = Path(path)
    lines = [] if p.exists() else [CSV_HEADER]
    lines += [report_csv_row(r) for r in reports]
    with p.open("a", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
