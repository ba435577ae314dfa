"""Versioned text checkpoint format.

Layout: a header line, `field <key> <value>` metadata lines, then one block
per tensor: `tensor <name> <d0> <d1> ...` followed by the row-major values
(one line per leading row). Floats are written with repr() so a write/read
round-trip is bit-exact.
"""

from __future__ import annotations

import io
from pathlib import Path

import torch

from .errors import GraphFormatError
from .encoders import EncoderConfig, EncoderParams

HEADER = "gpl-lab-checkpoint v1"


def dump_blocks(fields: dict[str, str], tensors: dict[str, torch.Tensor]) -> str:
    buf = io.StringIO()
    buf.write(HEADER + "\n")
    for key in sorted(fields):
        value = str(fields[key])
        if any(c.isspace() for c in key) or "\n" in value:
            raise ValueError(f"field {key!r} not representable in checkpoint text")
        buf.write(f"field {key} {value}\n")
    for name in sorted(tensors):
        t = tensors[name].detach().to(torch.float64)
        if t.ndim > 2:
            raise ValueError(f"tensor {name!r} has rank {t.ndim} > 2")
        dims = " ".join(str(s) for s in t.shape)
        buf.write(f"tensor {name} {dims}\n".rstrip() + "\n")
        if t.ndim == 0:
            buf.write(repr(float(t)) + "\n")
        elif t.ndim == 1:
            buf.write(" ".join(repr(float(x)) for x in t) + "\n")
        else:
            for row in t:
                buf.write(" ".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def parse_blocks(text: str) -> tuple[dict[str, str], dict[str, torch.Tensor]]:
    lines = text.splitlines()
    if not lines or lines[0] != HEADER:
        raise GraphFormatError(f"line 1: expected header {HEADER!r}")
    fields: dict[str, str] = {}
    tensors: dict[str, torch.Tensor] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        parts = line.split()
        if parts[0] == "field":
            if len(parts) < 3:
                raise GraphFormatError(f"line {i + 1}: malformed field line {line!r}")
            fields[parts[1]] = " ".join(parts[2:])
            i += 1
        elif parts[0] == "tensor":
            if len(parts) < 2:
                raise GraphFormatError(f"line {i + 1}: malformed tensor line {line!r}")
            name = parts[1]
            try:
                dims = [int(x) for x in parts[2:]]
            except ValueError as exc:
                raise GraphFormatError(f"line {i + 1}: non-integer dims") from exc
            n_rows = 1 if len(dims) < 2 else dims[0]
            values = []
            for r in range(n_rows):
                if i + 1 + r >= len(lines):
                    raise GraphFormatError(f"line {i + 1}: truncated tensor {name!r}")
                try:
                    values.append(
                        [float(x) for x in lines[i + 1 + r].split()]
                    )
                except ValueError as exc:
                    raise GraphFormatError(f"line {i + 2 + r}: bad float") from exc
            flat = torch.tensor(
                [x for row in values for x in row], dtype=torch.float64
            )
            expected = 1
            for s in dims:
                expected *= s
            if flat.numel() != expected:
                raise GraphFormatError(f"line {i + 1}: wrong value count for {name!r}")
            tensors[name] = flat.reshape(dims) if dims else flat.reshape(())
            i += 1 + n_rows
        else:
            raise GraphFormatError(f"line {i + 1}: unexpected {line!r}")
    return fields, tensors


def save_checkpoint(
    path: str | Path, fields: dict[str, str], tensors: dict[str, torch.Tensor]
) -> None:
    Path(path).write_text(dump_blocks(fields, tensors), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[dict[str, str], dict[str, torch.Tensor]]:
    return parse_blocks(Path(path).read_text(encoding="utf-8"))


def encoder_to_text(params: EncoderParams, extra: dict[str, str] | None = None) -> str:
    fields = {
        "kind": "encoder",
        "arch": params.arch,
        "in_dim": str(params.in_dim),
        "hidden_dim": str(params.hidden_dim),
        "num_layers": str(params.num_layers),
    }
    fields.update(extra or {})
    return dump_blocks(fields, params.tensors)


def encoder_from_text(text: str) -> tuple[EncoderParams, dict[str, str]]:
    fields, tensors = parse_blocks(text)
    if fields.get("kind") != "encoder":
        raise GraphFormatError("checkpoint is not an encoder dump")
    cfg = EncoderConfig(
        arch=fields["arch"],
        hidden_dim=int(fields["hidden_dim"]),
        num_layers=int(fields["num_layers"]),
    )
    params = EncoderParams(
        cfg.arch, int(fields["in_dim"]), cfg.hidden_dim, cfg.num_layers, tensors
    )
    return params, fields


def save_encoder(path: str | Path, params: EncoderParams, extra: dict[str, str] | None = None) -> None:
    Path(path).write_text(encoder_to_text(params, extra), encoding="utf-8")


def load_encoder(path: str | Path) -> tuple[EncoderParams, dict[str, str]]:
    return encoder_from_text(Path(path).read_text(encoding="utf-8"))


def attack_state_to_text(state) -> str:
    """Encoder checkpoint blocks for both encoders plus a trigger block."""
    fields = {
        "kind": "attack-state",
        "attack": state.attack_name,
        "arch": state.backdoored_params.arch,
        "in_dim": str(state.backdoored_params.in_dim),
        "hidden_dim": str(state.backdoored_params.hidden_dim),
        "num_layers": str(state.backdoored_params.num_layers),
        "trigger_attach_index": str(state.trigger.attach_node_index),
        "anchors": " ".join(str(a.anchor_node) for a in state.anchors),
    }
    tensors = {}
    for name, t in state.backdoored_params.tensors.items():
        tensors[f"backdoored.{name}"] = t
    for name, t in state.clean_params.tensors.items():
        tensors[f"clean.{name}"] = t
    tensors["trigger.features"] = state.trigger.node_features
    if state.target_embedding is not None:
        tensors["target_embedding"] = state.target_embedding
    return dump_blocks(fields, tensors)


def attack_state_from_text(text: str):
    from .attack import AttackState
    from .graph import AnchorChoice, TriggerGraph

    fields, tensors = parse_blocks(text)
    if fields.get("kind") != "attack-state":
        raise GraphFormatError("checkpoint is not an attack-state dump")

    def pick(prefix: str) -> EncoderParams:
        sub = {
            name[len(prefix) :]: t
            for name, t in tensors.items()
            if name.startswith(prefix)
        }
        return EncoderParams(
            fields["arch"], int(fields["in_dim"]), int(fields["hidden_dim"]),
            int(fields["num_layers"]), sub,
        )

    trigger = TriggerGraph(
        tensors["trigger.features"], int(fields["trigger_attach_index"])
    )
    anchors = tuple(
        AnchorChoice(int(x)) for x in fields.get("anchors", "").split()
    )
    return AttackState(
        trigger=trigger,
        backdoored_params=pick("backdoored."),
        clean_params=pick("clean."),
        anchors=anchors,
        target_embedding=tensors.get("target_embedding"),
        attack_name=fields.get("attack", "crossba"),
    )


def prompt_state_to_text(ps) -> str:
    fields = {
        "kind": "prompt-state",
        "variant": ps.variant,
        "num_classes": str(ps.num_classes),
        "link_mode": ps.link_mode,
        "link_k": str(ps.link_k),
        "tau": repr(ps.tau),
    }
    tensors = {}
    if ps.variant == "prog":
        tensors["tokens"] = ps.prompt_graph.token_vectors
        tensors["head_weight"] = ps.head_weight
        tensors["head_bias"] = ps.head_bias
        fields["internal_edges"] = ";".join(
            f"{u},{v}" for u, v in ps.prompt_graph.internal_edges
        )
    else:
        tensors["prompt_vec"] = ps.prompt_vec
        if ps.prototypes is not None:
            tensors["prototypes"] = ps.prototypes
    return dump_blocks(fields, tensors)


def prompt_state_from_text(text: str):
    from .graph import PromptGraph
    from .prompting import PromptState

    fields, tensors = parse_blocks(text)
    if fields.get("kind") != "prompt-state":
        raise GraphFormatError("checkpoint is not a prompt-state dump")
    common = dict(
        num_classes=int(fields["num_classes"]),
        link_mode=fields.get("link_mode", "similarity"),
        link_k=int(fields.get("link_k", "1")),
        tau=float(fields.get("tau", "0.5")),
    )
    if fields["variant"] == "prog":
        edges = [
            tuple(int(x) for x in e.split(","))
            for e in fields.get("internal_edges", "").split(";")
            if e
        ]
        return PromptState(
            variant="prog",
            prompt_graph=PromptGraph(tensors["tokens"], edges),
            head_weight=tensors["head_weight"],
            head_bias=tensors["head_bias"],
            **common,
        )
    return PromptState(
        variant="graphprompt",
        prompt_vec=tensors["prompt_vec"],
        prototypes=tensors.get("prototypes"),
        **common,
    )
