"""Command-line front end.

Subcommands: gen-data, pretrain, attack, prompt-tune, evaluate, defend,
theory-check, sweep, plot. Every artifact embeds the config hash; all
randomness flows from one root seed. Exit codes: 0 success, 2 validation
error, 3 runtime failure. GPL_LAB_OUT overrides the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import torch

from . import checkpoint
from .attack import AttackState, write_trace_csv
from .config import (
    RunConfig,
    build_run_config,
    desk_defaults,
    load_config,
    merge_overrides,
    pipeline_from_config,
    split_from_config,
)
from .defense import edge_similarity_profile, prune_g, trigger_edge_set, write_profile_csv
from .encoders import LinearGinParams
from .errors import ConfigError, GplLabError, GraphFormatError
from .evaluation import append_report_csv, run_attack, run_pipeline
from .graph import Graph, attach_trigger, choose_anchor, write_graph_text
from .pretraining import train_clean_encoder, write_loss_csv
from .prompting import few_shot_tune
from .evaluation import select_shots
from .scenarios import save_dataset
from .seeding import split_seed
from . import theory


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (flat key=value with [sections])")
    parser.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                        help="override one config value (repeatable)")
    parser.add_argument("--seed", type=int, help="root seed override")
    parser.add_argument("--out", help="output directory (also via GPL_LAB_OUT)")


def _run_config(args) -> RunConfig:
    sections = load_config(args.config) if args.config else desk_defaults()
    sections = merge_overrides(sections, args.set)
    return build_run_config(sections, args.seed, args.out)


def _outdir(rc: RunConfig) -> Path:
    rc.out_dir.mkdir(parents=True, exist_ok=True)
    return rc.out_dir


def cmd_gen_data(args) -> int:
    rc = _run_config(args)
    out = _outdir(rc) / "dataset"
    (out / "pretrain").mkdir(parents=True, exist_ok=True)
    (out / "downstream").mkdir(parents=True, exist_ok=True)
    split = split_from_config(rc.sections, rc.seed)
    pre_files, down_files = [], []
    for i, g in enumerate(split.pretrain):
        name = f"pretrain/g{i:04d}.graph"
        (out / name).write_text(write_graph_text(g), encoding="utf-8")
        pre_files.append(name)
    labels = []
    for i, (g, y) in enumerate(split.downstream):
        name = f"downstream/g{i:04d}.graph"
        (out / name).write_text(write_graph_text(g), encoding="utf-8")
        down_files.append(name)
        labels.append(y)
    (out / "downstream/labels.txt").write_text(
        "".join(f"{y}\n" for y in labels), encoding="utf-8"
    )
    manifest = {
        "scenario": split.scenario,
        "task": split.task,
        "num_classes": split.num_classes,
        "seed": rc.seed,
        "config_hash": rc.hash,
        "pretrain_files": pre_files,
        "downstream_files": down_files,
        "downstream_labels": "downstream/labels.txt",
        "metadata": split.metadata,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(pre_files)} pretrain + {len(down_files)} downstream graphs to {out}")
    return 0


def cmd_pretrain(args) -> int:
    rc = _run_config(args)
    out = _outdir(rc)
    split = split_from_config(rc.sections, rc.seed)
    cfgs = pipeline_from_config(rc.sections)
    objective = cfgs.resolve_objective(rc.gpl_variant)
    pcfg = replace(cfgs.pretrain, seed=split_seed(rc.seed, "pretrain"))
    result = train_clean_encoder(split.pretrain, pcfg, objective, cfgs.encoder)
    checkpoint.save_encoder(
        out / "encoder.ckpt", result.params,
        {"config_hash": rc.hash, "objective": objective},
    )
    write_loss_csv(out / "pretrain_loss.csv", result.losses)
    print(
        f"pretrained {cfgs.encoder.arch} on {len(split.pretrain)} graphs: "
        f"eval loss {result.eval_start:.4f} -> {result.eval_end:.4f}"
    )
    return 0


def cmd_attack(args) -> int:
    rc = _run_config(args)
    out = _outdir(rc)
    split = split_from_config(rc.sections, rc.seed)
    cfgs = pipeline_from_config(rc.sections)
    objective = cfgs.resolve_objective(rc.gpl_variant)
    pcfg = replace(cfgs.pretrain, seed=split_seed(rc.seed, "pretrain"))
    acfg = replace(cfgs.attack, seed=split_seed(rc.seed, "attack"))
    state = run_attack(rc.attack_name, split.pretrain, pcfg, acfg, cfgs.encoder, objective)
    text = checkpoint.attack_state_to_text(state)
    (out / "attack.ckpt").write_text(
        text.replace(
            "field kind attack-state", f"field config_hash {rc.hash}\nfield kind attack-state", 1
        ),
        encoding="utf-8",
    )
    write_trace_csv(out / "attack_trace.csv", state.loss_trace)
    first = state.loss_trace[min(1, len(state.loss_trace) - 1)]
    last = state.loss_trace[-1]
    print(
        f"{rc.attack_name}: {acfg.rounds} rounds, "
        f"L_bdk {first.l_bdk:.4f} -> {last.l_bdk:.4f}"
    )
    return 0


def cmd_prompt_tune(args) -> int:
    rc = _run_config(args)
    out = _outdir(rc)
    if not args.encoder:
        raise ConfigError("prompt-tune needs --encoder (encoder or attack checkpoint)")
    text = Path(args.encoder).read_text(encoding="utf-8")
    if "field kind attack-state" in text:
        params = checkpoint.attack_state_from_text(text).backdoored_params
    else:
        params, _ = checkpoint.encoder_from_text(text)
    split = split_from_config(rc.sections, rc.seed)
    cfgs = pipeline_from_config(rc.sections)
    shots, _ = select_shots(
        split.downstream, cfgs.prompt.shots_per_class,
        split_seed(rc.seed, "shots"), split.num_classes,
    )
    ps = few_shot_tune(
        params, shots, rc.gpl_variant, cfgs.prompt.epochs, cfgs.prompt.lr,
        split_seed(rc.seed, "prompt"), tokens=cfgs.prompt.tokens,
        link_mode=cfgs.prompt.link_mode, link_k=cfgs.prompt.link_k,
        tau=cfgs.prompt.tau,
    )
    (out / "prompt.ckpt").write_text(checkpoint.prompt_state_to_text(ps), encoding="utf-8")
    final = ps.loss_history[-1] if ps.loss_history else float("nan")
    print(f"tuned {rc.gpl_variant} prompt on {len(shots.examples)} shots, final loss {final:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    rc = _run_config(args)
    out = _outdir(rc)
    split = split_from_config(rc.sections, rc.seed)
    cfgs = pipeline_from_config(rc.sections)
    report = run_pipeline(
        split, rc.attack_name, rc.gpl_variant, rc.defense_enabled, cfgs, rc.seed
    )
    report.config_hash = rc.hash
    (out / "metrics.json").write_text(report.to_json(), encoding="utf-8")
    append_report_csv(out / "reports.csv", [report])
    print(
        f"{report.scenario}/{report.gpl}/{report.attack} defense={int(report.defense)} "
        f"seed={report.seed}: ACC={report.acc:.3f} AD={report.ad:+.3f} ASR={report.asr:.3f}"
    )
    return 0


def cmd_defend(args) -> int:
    rc = _run_config(args)
    out = _outdir(rc)
    split = split_from_config(rc.sections, rc.seed)
    cfgs = pipeline_from_config(rc.sections)
    graphs = [g for g, _ in split.downstream]
    markers = [frozenset()] * len(graphs)
    if args.attack_ckpt:
        state = checkpoint.attack_state_from_text(
            Path(args.attack_ckpt).read_text(encoding="utf-8")
        )
        attached = []
        marks = []
        for i, g in enumerate(graphs):
            anchor = choose_anchor(g, split_seed(rc.seed, "eval-anchor", i))
            attached.append(attach_trigger(g, state.trigger, anchor))
            marks.append(
                trigger_edge_set(
                    g.num_nodes, state.trigger.num_nodes,
                    state.trigger.attach_node_index, anchor.anchor_node,
                )
            )
        graphs, markers = attached, marks
    rows = edge_similarity_profile(graphs, markers)
    write_profile_csv(out / "similarity_profile.csv", rows)
    pruned = [prune_g(g, cfgs.defense) for g in graphs]
    kept_edges = sum(len(r.graph.edges) for r in pruned if r.graph is not None)
    total_edges = sum(len(g.edges) for g in graphs)
    cut_trigger = 0
    marked_total = sum(len(m) for m in markers)
    for r, m in zip(pruned, markers):
        cut_trigger += sum(1 for e in m if e in set(r.cut_edges))
    summary = {
        "config_hash": rc.hash,
        "threshold": cfgs.defense.threshold,
        "graphs": len(graphs),
        "edges_before": total_edges,
        "edges_after": kept_edges,
        "trigger_edges": marked_total,
        "trigger_edges_cut": cut_trigger,
    }
    (out / "defense_summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(
        f"pruned {total_edges - kept_edges}/{total_edges} edges "
        f"({cut_trigger}/{marked_total} trigger edges) at threshold {cfgs.defense.threshold}"
    )
    return 0


def _theory_report(seed: int) -> dict:
    rng = np.random.default_rng(split_seed(seed, "theory"))
    # closed-form prompt equivalence over random linear-GIN instances
    from .graph import PromptGraph

    max_dev = 0.0
    for i in range(100):
        d = int(rng.integers(2, 6))
        g = theory._random_graph(rng, int(rng.integers(2, 7)), d, 0.5)
        p_n = int(rng.integers(1, 5))
        edges = [
            (a, b) for a in range(p_n) for b in range(a + 1, p_n) if rng.random() < 0.5
        ]
        p = PromptGraph(rng.standard_normal((p_n, d)), edges)
        gin = LinearGinParams(
            float(rng.uniform(-0.5, 0.5)), rng.standard_normal((d, int(rng.integers(2, 5))))
        )
        max_dev = max(max_dev, theory.prompt_equivalence_check(g, p, gin))

    # norm bound over random corpora
    violations = 0
    for i in range(100):
        d = int(rng.integers(2, 5))
        gin = LinearGinParams(
            float(rng.uniform(-0.5, 0.5)), rng.standard_normal((d, 3))
        )
        corpus = [
            theory._random_graph(rng, int(rng.integers(2, 6)), d, 0.5)
            for _ in range(4)
        ]
        violations += theory.norm_bound_check(gin, corpus).violations

    # least-squares oracles and the gradient-descent comparison
    art, prop = theory.run_proposition_experiment(split_seed(seed, "prop"))
    sol = theory.least_squares_oracle(
        theory.TRIGGER, art.pretrain_graphs, art.aug_variants, art.gin
    )
    _, gd_obj = theory.gradient_descent_lsq(sol.problem, split_seed(seed, "gd"))
    return {
        "seed": seed,
        "prompt_equivalence_max_deviation": max_dev,
        "norm_bound_violations": violations,
        "lsq_trigger_residual": sol.residual,
        "lsq_normal_residual_inf": sol.normal_residual_inf,
        "lsq_ridge_used": sol.ridge_used,
        "gd_objective_gap": gd_obj - sol.residual,
        "proposition": prop.as_dict(),
    }


def cmd_theory_check(args) -> int:
    rc = _run_config(args)
    out = _outdir(rc)
    report = _theory_report(rc.seed)
    report["config_hash"] = rc.hash
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    (out / "theory_report.json").write_text(text, encoding="utf-8")
    ok = (
        report["prompt_equivalence_max_deviation"] < 1e-9
        and report["norm_bound_violations"] == 0
        and report["lsq_normal_residual_inf"] < 1e-8
        and abs(report["gd_objective_gap"]) < 1e-4
        and report["proposition"]["delta_trigger"] > 0
        and report["proposition"]["delta_prompt"] > 0
        and report["proposition"]["delta_bound"] < 0
    )
    print(f"theory checks {'pass' if ok else 'FAIL'}; report at {out / 'theory_report.json'}")
    return 0 if ok else 3


def _parse_list(text: str, cast):
    return [cast(x) for x in text.split(",") if x.strip()]


def cmd_sweep(args) -> int:
    rc = _run_config(args)
    out = _outdir(rc)
    cfgs = pipeline_from_config(rc.sections)
    scenarios = _parse_list(args.scenarios, str) if args.scenarios else [rc.scenario]
    attacks = _parse_list(args.attacks, str) if args.attacks else ["crossba", "gcba_r", "gcba_m"]
    gpls = _parse_list(args.gpls, str) if args.gpls else [rc.gpl_variant]
    seeds = _parse_list(args.seeds, int) if args.seeds else [rc.seed]
    trig_sizes = _parse_list(args.trigger_nodes, int) if args.trigger_nodes else [cfgs.attack.trigger_nodes]
    token_counts = _parse_list(args.prompt_tokens, int) if args.prompt_tokens else [cfgs.prompt.tokens]
    defense = {"on": True, "off": False}.get(args.defense, rc.defense_enabled)

    rows = []
    header = "scenario,attack,gpl,seed,trigger_nodes,prompt_tokens,defense,acc,ad,asr"
    for scenario in scenarios:
        for seed in seeds:
            sections = merge_overrides(rc.sections, [f"data.scenario={scenario}"])
            split = split_from_config(sections, seed)
            for c in trig_sizes:
                for toks in token_counts:
                    cell = replace(
                        cfgs,
                        attack=replace(cfgs.attack, trigger_nodes=c),
                        prompt=replace(cfgs.prompt, tokens=toks),
                    )
                    for attack in attacks:
                        for gpl in gpls:
                            rep = run_pipeline(split, attack, gpl, defense, cell, seed)
                            rows.append(
                                f"{scenario},{attack},{gpl},{seed},{c},{toks},"
                                f"{int(defense)},{rep.acc!r},{rep.ad!r},{rep.asr!r}"
                            )
                            name = f"cell_{scenario}_{attack}_{gpl}_s{seed}_c{c}_p{toks}_d{int(defense)}.json"
                            (out / name).write_text(rep.to_json(), encoding="utf-8")
                            print(rows[-1])
    (out / "sweep.csv").write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    print(f"{len(rows)} sweep cells -> {out / 'sweep.csv'}")
    return 0


def cmd_plot(args) -> int:
    from . import plotting

    out = Path(args.out or "plot.png")
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "similarity":
        rows = plotting.read_profile_csv(args.input)
        plotting.plot_similarity_density(rows, out)
    elif args.kind == "sweep":
        rows = plotting.read_sweep_csv(args.input)
        plotting.plot_sweep(rows, args.x, out)
    else:
        raise ConfigError(f"unknown plot kind {args.kind!r}")
    csv_copy = out.with_suffix(".csv")
    csv_copy.write_text(Path(args.input).read_text(encoding="utf-8"), encoding="utf-8")
    print(f"wrote {out} (+ {csv_copy})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpl-lab",
        description="desk-scale graph-prompt-learning backdoor laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, extra in [
        ("gen-data", cmd_gen_data, None),
        ("pretrain", cmd_pretrain, None),
        ("attack", cmd_attack, None),
        ("prompt-tune", cmd_prompt_tune, "encoder"),
        ("evaluate", cmd_evaluate, None),
        ("defend", cmd_defend, "attack_ckpt"),
        ("theory-check", cmd_theory_check, None),
        ("sweep", cmd_sweep, "sweep"),
    ]:
        p = sub.add_parser(name)
        _common(p)
        if extra == "encoder":
            p.add_argument("--encoder", help="encoder or attack checkpoint to tune against")
        elif extra == "attack_ckpt":
            p.add_argument("--attack-ckpt", dest="attack_ckpt",
                           help="attach this attack's trigger before pruning")
        elif extra == "sweep":
            p.add_argument("--scenarios")
            p.add_argument("--attacks")
            p.add_argument("--gpls")
            p.add_argument("--seeds")
            p.add_argument("--trigger-nodes", dest="trigger_nodes")
            p.add_argument("--prompt-tokens", dest="prompt_tokens")
            p.add_argument("--defense", choices=["on", "off"])
        p.set_defaults(fn=fn)

    p = sub.add_parser("plot")
    p.add_argument("--kind", required=True, choices=["similarity", "sweep"])
    p.add_argument("--input", required=True)
    p.add_argument("--x", default="trigger_nodes")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None) -> int:
    torch.set_num_threads(max(1, torch.get_num_threads()))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, GraphFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GplLabError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
