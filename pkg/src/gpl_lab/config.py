"""Flat key=value run configuration with [section] headers.

The format is diff-friendly and parsed with no dependencies: blank lines and
# comments are ignored, sections group keys, values are plain strings until
a typed getter converts them. The config hash is a SHA-256 digest of the
canonicalized text (sections and keys sorted), embedded in every artifact.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .attack import AttackConfig
from .defense import PruneConfig
from .encoders import EncoderConfig
from .errors import ConfigError
from .evaluation import PipelineConfig, PromptTuneConfig
from .pretraining import PretrainConfig
from .scenarios import (
    CROSS_DATASET,
    CROSS_DOMAIN,
    SCENARIOS,
    MasterGraph,
    ScenarioSplit,
    SynthConfig,
    gen_synthetic_corpus,
    load_dataset,
    make_split,
)
from .seeding import split_seed

Sections = dict[str, dict[str, str]]

_KNOWN_KEYS: dict[str, set[str]] = {
    "run": {"seed", "out"},
    "data": {
        "source", "scenario", "task", "blocks", "nodes_per_block", "intra_prob",
        "inter_prob", "feature_dim", "separation", "noise", "mean_overlap", "data_seed",
        "num_parts", "k_hops", "max_nodes", "pretrain_cap", "downstream_cap",
        "svd_rank", "feature_file", "edge_file", "label_file",
        "feature_file_b", "edge_file_b", "label_file_b",
    },
    "encoder": {"arch", "hidden", "layers"},
    "pretrain": {"epochs", "lr", "tau", "flip_prob", "optimizer", "objective"},
    "attack": {
        "name", "alpha", "beta", "lambda", "tau", "gamma_t", "gamma_g", "rounds",
        "trigger_nodes", "inner_steps", "include_clr_in_encoder_step",
        "trigger_init_noise", "trigger_init_scale", "detach_target_in_encoder_step",
        "gcba_gamma_t", "gcba_gamma_g", "gcba_clusters",
    },
    "prompt": {"variant", "tokens", "shots", "epochs", "lr", "link_mode", "link_k", "tau"},
    "defense": {"enabled", "threshold"},
    "eval": {"max_test"},
}


def parse_config_text(text: str) -> Sections:
    sections: Sections = {}
    current = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _KNOWN_KEYS:
                raise ConfigError(f"line {ln}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value, got {raw!r}")
        if current is None:
            raise ConfigError(f"line {ln}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN_KEYS[current]:
            raise ConfigError(
                f"line {ln}: unknown key {key!r} in [{current}] "
                f"(known: {', '.join(sorted(_KNOWN_KEYS[current]))})"
            )
        sections[current][key] = value
    return sections


def load_config(path: str | Path) -> Sections:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def merge_overrides(sections: Sections, overrides: list[str]) -> Sections:
    """Apply repeatable --set section.key=value overrides."""
    out = {sec: dict(kv) for sec, kv in sections.items()}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        target, value = item.split("=", 1)
        sec, key = target.split(".", 1)
        sec, key, value = sec.strip(), key.strip(), value.strip()
        if sec not in _KNOWN_KEYS or key not in _KNOWN_KEYS[sec]:
            raise ConfigError(f"unknown override target {sec}.{key}")
        out.setdefault(sec, {})[key] = value
    return out


def canonical_text(sections: Sections) -> str:
    lines = []
    for sec in sorted(sections):
        lines.append(f"[{sec}]")
        for key in sorted(sections[sec]):
            lines.append(f"{key} = {sections[sec][key]}")
    return "\n".join(lines) + "\n"


def config_hash(sections: Sections) -> str:
    return hashlib.sha256(canonical_text(sections).encode("utf-8")).hexdigest()[:16]


def _get(sections: Sections, sec: str, key: str, default, cast):
    raw = sections.get(sec, {}).get(key)
    if raw is None:
        return default
    try:
        if cast is bool:
            if raw.lower() in ("1", "true", "on", "yes"):
                return True
            if raw.lower() in ("0", "false", "off", "no"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {sec}.{key}: {raw!r}") from exc


@dataclass
class RunConfig:
    sections: Sections
    seed: int
    out_dir: Path
    hash: str

    @property
    def scenario(self) -> str:
        return _get(self.sections, "data", "scenario", "cross_distribution", str)

    @property
    def gpl_variant(self) -> str:
        return _get(self.sections, "prompt", "variant", "prog", str)

    @property
    def attack_name(self) -> str:
        return _get(self.sections, "attack", "name", "crossba", str)

    @property
    def defense_enabled(self) -> bool:
        return _get(self.sections, "defense", "enabled", False, bool)


def build_run_config(
    sections: Sections, seed_override: int | None = None, out_override: str | None = None
) -> RunConfig:
    import os

    seed = seed_override if seed_override is not None else _get(sections, "run", "seed", 0, int)
    out = out_override or os.environ.get("GPL_LAB_OUT") or _get(
        sections, "run", "out", "runs", str
    )
    sec = {s: dict(kv) for s, kv in sections.items()}
    sec.setdefault("run", {})["seed"] = str(seed)
    sec["run"]["out"] = str(out)
    return RunConfig(sec, seed, Path(out), config_hash(sec))


def synth_config(sections: Sections, seed: int, which: str = "a") -> SynthConfig:
    bump = 0 if which == "a" else 1
    base_seed = _get(sections, "data", "data_seed", None, int)
    if base_seed is None:
        base_seed = split_seed(seed, "data")
    return SynthConfig(
        num_blocks=_get(sections, "data", "blocks", 4, int),
        nodes_per_block=_get(sections, "data", "nodes_per_block", 60, int),
        intra_prob=_get(sections, "data", "intra_prob", 0.15, float),
        inter_prob=_get(sections, "data", "inter_prob", 0.01, float),
        feature_dim=_get(sections, "data", "feature_dim", 12, int),
        separation=_get(sections, "data", "separation", 1.0, float),
        noise=_get(sections, "data", "noise", 0.3, float),
        mean_overlap=_get(sections, "data", "mean_overlap", 0.0, float),
        seed=split_seed(base_seed, "master", which) + bump,
    )


def masters_from_config(sections: Sections, seed: int) -> list[MasterGraph]:
    source = _get(sections, "data", "source", "synthetic", str)
    scenario = _get(sections, "data", "scenario", "cross_distribution", str)
    need_two = scenario in (CROSS_DATASET, CROSS_DOMAIN)
    if source == "synthetic":
        masters = [gen_synthetic_corpus(synth_config(sections, seed, "a"))]
        if need_two:
            masters.append(gen_synthetic_corpus(synth_config(sections, seed, "b")))
        return masters
    if source == "files":
        def load(suffix: str, name: str) -> MasterGraph:
            trio = [
                _get(sections, "data", f"{k}{suffix}", None, str)
                for k in ("feature_file", "edge_file", "label_file")
            ]
            if any(v is None for v in trio):
                raise ConfigError(
                    f"data.source=files needs feature_file/edge_file/label_file{suffix}"
                )
            return load_dataset(*trio, name=name)

        masters = [load("", "dataset_a")]
        if need_two:
            masters.append(load("_b", "dataset_b"))
        return masters
    raise ConfigError(f"unknown data source {source!r}")


def split_from_config(sections: Sections, seed: int) -> ScenarioSplit:
    scenario = _get(sections, "data", "scenario", "cross_distribution", str)
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    masters = masters_from_config(sections, seed)
    return make_split(
        masters,
        scenario,
        split_seed(seed, "split"),
        num_parts=_get(sections, "data", "num_parts", 12, int),
        k_hops=_get(sections, "data", "k_hops", 2, int),
        max_nodes=_get(sections, "data", "max_nodes", 30, int),
        pretrain_cap=_get(sections, "data", "pretrain_cap", 48, int),
        downstream_cap=_get(sections, "data", "downstream_cap", 200, int),
        task=_get(sections, "data", "task", "node", str),
    )


def pipeline_from_config(sections: Sections) -> PipelineConfig:
    return PipelineConfig(
        encoder=EncoderConfig(
            arch=_get(sections, "encoder", "arch", "attn", str),
            hidden_dim=_get(sections, "encoder", "hidden", 16, int),
            num_layers=_get(sections, "encoder", "layers", 2, int),
        ),
        pretrain=PretrainConfig(
            tau=_get(sections, "pretrain", "tau", 0.5, float),
            flip_prob=_get(sections, "pretrain", "flip_prob", 0.1, float),
            epochs=_get(sections, "pretrain", "epochs", 60, int),
            lr=_get(sections, "pretrain", "lr", 0.01, float),
            optimizer=_get(sections, "pretrain", "optimizer", "adam", str),
        ),
        attack=AttackConfig(
            alpha=_get(sections, "attack", "alpha", 0.5, float),
            beta=_get(sections, "attack", "beta", 0.05, float),
            lam=_get(sections, "attack", "lambda", 0.05, float),
            tau=_get(sections, "attack", "tau", 0.5, float),
            gamma_t=_get(sections, "attack", "gamma_t", 0.01, float),
            gamma_g=_get(sections, "attack", "gamma_g", 0.0001, float),
            rounds=_get(sections, "attack", "rounds", 50, int),
            trigger_nodes=_get(sections, "attack", "trigger_nodes", 3, int),
            inner_steps=_get(sections, "attack", "inner_steps", 1, int),
            include_clr_in_encoder_step=_get(
                sections, "attack", "include_clr_in_encoder_step", False, bool
            ),
            trigger_init_noise=_get(sections, "attack", "trigger_init_noise", 0.01, float),
            trigger_init_scale=_get(sections, "attack", "trigger_init_scale", 1.0, float),
            detach_target_in_encoder_step=_get(
                sections, "attack", "detach_target_in_encoder_step", False, bool
            ),
            gcba_gamma_t=_get(sections, "attack", "gcba_gamma_t", 0.0015, float),
            gcba_gamma_g=_get(sections, "attack", "gcba_gamma_g", 0.001, float),
            gcba_clusters=_get(sections, "attack", "gcba_clusters", 4, int),
        ),
        prompt=PromptTuneConfig(
            epochs=_get(sections, "prompt", "epochs", 80, int),
            lr=_get(sections, "prompt", "lr", 0.01, float),
            tokens=_get(sections, "prompt", "tokens", 15, int),
            shots_per_class=_get(sections, "prompt", "shots", 20, int),
            link_mode=_get(sections, "prompt", "link_mode", "similarity", str),
            link_k=_get(sections, "prompt", "link_k", 1, int),
            tau=_get(sections, "prompt", "tau", 0.5, float),
        ),
        defense=PruneConfig(
            threshold=_get(sections, "defense", "threshold", 0.2, float)
        ),
        objective=_get(sections, "pretrain", "objective", "auto", str),
        max_test=_get(sections, "eval", "max_test", 120, int),
    )


def desk_defaults() -> Sections:
    """Calibrated desk-scale defaults used by the CLI when no config is given."""
    return parse_config_text(DESK_DEFAULT_TEXT)


# Per-variant prompt-tuning depth, mirroring the different shot budgets the
# two methods get at full scale; the vector-readout variant needs the longer
# schedule for stable prototypes.
DESK_PROMPT_OVERRIDES = {
    "prog": ["prompt.shots=10", "prompt.epochs=80"],
    "graphprompt": ["prompt.shots=25", "prompt.epochs=150"],
}


def desk_sections_for(variant: str) -> Sections:
    return merge_overrides(
        desk_defaults(),
        DESK_PROMPT_OVERRIDES.get(variant, []) + [f"prompt.variant={variant}"],
    )


# Calibrated for the synthetic desk corpora: the attack learning rates,
# round count, and lambda are scaled up from the full-size defaults because
# plain gradient steps on a ~12-graph corpus need larger moves, and the
# contrastive term stays in the encoder step to keep embeddings spread out.
DESK_DEFAULT_TEXT = """\
[run]
seed = 0
out = runs

[data]
source = synthetic
scenario = cross_distribution
blocks = 4
nodes_per_block = 60
intra_prob = 0.20
inter_prob = 0.015
feature_dim = 12
separation = 1.8
noise = 0.30
mean_overlap = 0.7
num_parts = 12
k_hops = 2
max_nodes = 24
pretrain_cap = 40
downstream_cap = 160

[encoder]
arch = attn
hidden = 16
layers = 2

[pretrain]
epochs = 150
lr = 0.02
tau = 0.5
flip_prob = 0.1
optimizer = adam
objective = graphcl

[attack]
name = crossba
alpha = 0.7
beta = 0.5
lambda = 0.5
gamma_t = 0.3
gamma_g = 0.05
rounds = 150
trigger_nodes = 3
inner_steps = 2
include_clr_in_encoder_step = true
detach_target_in_encoder_step = true

[prompt]
variant = prog
tokens = 15
shots = 10
epochs = 80
lr = 0.01
link_mode = full
link_k = 1
tau = 0.5

[defense]
enabled = false
threshold = 0.2

[eval]
max_test = 120
"""
