"""Command-line entry points.

Subcommands cover the pipeline end to end: synthesize a dataset, pre-train
an encoder, tune-and-evaluate prompts on a frozen encoder, run the switch
ablation, and sweep support sizes. Every artifact is deterministic for a
fixed config: no timestamps, no host state, byte-identical reruns.

Exit codes: 0 success, 1 domain error (bad values, impossible requests),
2 malformed input files or configs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import TASK_KINDS, RunConfig, load_config, save_config
from .encoder import BACKBONES, load_encoder, save_encoder
from .errors import DataFormatError, HgmpError
from .experiments import (
    build_tasks,
    check_ablation_ordering,
    pretrain_encoder,
    plot_ablation,
    plot_sweep,
    run_ablation,
    seed_grid,
    shot_sweep,
    summarize,
    write_results_csv,
    write_summary_json,
)
from .hetgraph import load_graph, save_graph
from .prompt import init_head, init_prompts, predict_many, save_prompt_state, tune
from .synthetic import SyntheticSpec, generate_synthetic
from .taskbuilder import sample_k_shot

OUT_ENV = "HGMP_OUT"


def _out_dir(args, cfg=None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.out:
        return Path(cfg.out)
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return Path("hgmp_out")


def _data_path(args, cfg):
    path = args.data or cfg.data
    if not path:
        raise DataFormatError("no dataset given: pass --data or set \"data\" in the config")
    return path


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for key in ("task", "tau", "shots", "backbone", "tune_steps", "tune_lr",
                "epochs", "batch_size", "ratio_mode", "prompt_mode"):
        value = getattr(args, key, None)
        if value is None:
            continue
        if key == "shots" and not isinstance(value, int):
            continue  # sweep takes a comma list, handled by its own command
        overrides[key] = value
    cfg = cfg.with_overrides(**overrides)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(
            encoder_seed=args.seed, pretrain_seed=args.seed, augment_seed=args.seed,
            seeds=seed_grid(args.seed, len(cfg.seeds)),
        )
    if getattr(args, "seeds", None):
        cfg = cfg.with_overrides(seeds=tuple(int(s) for s in args.seeds.split(",")))
    return cfg


def cmd_synth(args) -> int:
    if args.spec:
        path = Path(args.spec)
        if not path.exists():
            raise DataFormatError(f"missing file: {path}")
        try:
            with open(path, encoding="utf-8") as fh:
                spec_dict = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
        spec = SyntheticSpec.from_dict(spec_dict)
    else:
        spec = SyntheticSpec(
            node_counts={"target": 300, "aux_a": 120, "aux_b": 40},
            feature_dims={"target": 16, "aux_a": 12, "aux_b": 8},
            target_type="target",
            num_classes=3,
            signal=0.9,
            edges_per_target={"aux_a": 4, "aux_b": 2},
        )
    if args.signal is not None:
        spec = spec.replace(signal=args.signal)
    if args.seed is not None:
        spec = spec.replace(seed=args.seed)
    if spec.signal == 0.0:
        _warn("null signal (s=0): labels carry no information; scores should sit at chance")
    g = generate_synthetic(spec)
    out = _out_dir(args)
    manifest = save_graph(g, out)
    with open(out / "synthetic_spec.json", "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(manifest)
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_run_config(args)
    g = load_graph(_data_path(args, cfg))
    encoder, trace = pretrain_encoder(g, cfg)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "encoder.ckpt"
    save_encoder(encoder, ckpt)
    lines = ["epoch,mean_loss"]
    lines += [f"{i},{repr(float(v))}" for i, v in enumerate(trace)]
    (out / "pretrain_trace.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    save_config(cfg, out / "config.json")
    print(ckpt)
    return 0


def cmd_tune_eval(args) -> int:
    cfg = _load_run_config(args)
    g = load_graph(_data_path(args, cfg))
    encoder = load_encoder(args.encoder, g.schema)
    if not encoder.frozen:
        raise HgmpError(
            "encoder checkpoint is not frozen; refusing to tune prompts against it"
        )
    tasks = build_tasks(g, cfg.task, cfg)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    schema = g.schema
    import numpy as np

    from .experiments import RunResult, macro_f1, micro_f1

    micro, macro = [], []
    for seed in cfg.seeds:
        episode = sample_k_shot(tasks, cfg.shots, query_fraction=cfg.query_fraction,
                                seed=seed, task_kind=cfg.task)
        bank = init_prompts(schema, mode=cfg.prompt_mode, seed=seed,
                            combine=cfg.prompt_combine)
        head = init_head(cfg.hidden_dim, schema.num_classes, seed=seed)
        tune(episode, encoder, bank, head, steps=cfg.tune_steps, lr=cfg.tune_lr,
             seed=seed, optimizer=cfg.tune_optimizer)
        save_prompt_state(bank, head, out / f"prompt_{seed}.ckpt")
        preds = predict_many(episode.query, encoder, bank, head)
        golds = np.asarray([sg.label for sg in episode.query], dtype=np.int64)
        micro.append(micro_f1(preds, golds, schema.num_classes))
        macro.append(macro_f1(preds, golds, schema.num_classes))
    result = RunResult(variant="HGMP", task_kind=cfg.task, shots=cfg.shots,
                       seeds=cfg.seeds, micro=tuple(micro), macro=tuple(macro),
                       config_fingerprint=cfg.fingerprint())
    write_results_csv([result], out / "results.csv")
    write_summary_json([result], out / "summary.json", extra={"config": cfg.to_dict()})
    print(f"micro-F1 {result.mean_micro:.4f} +/- {result.std_micro:.4f} "
          f"macro-F1 {result.mean_macro:.4f} +/- {result.std_macro:.4f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_run_config(args)
    g = load_graph(_data_path(args, cfg))
    results = run_ablation(g, cfg.task, cfg, cache_dir=args.checkpoint_dir)
    out = _out_dir(args, cfg)
    ordered = [results[name] for name in ("VARIANT 1", "VARIANT 2", "VARIANT 3", "HGMP")]
    write_results_csv(ordered, out / "results.csv")
    write_summary_json(ordered, out / "summary.json", extra={"config": cfg.to_dict()})
    if args.plot:
        plot_ablation(results, out / "ablation.png")
    print(summarize(results))
    for problem in check_ablation_ordering(results):
        _warn(problem)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_run_config(args)
    g = load_graph(_data_path(args, cfg))
    try:
        shots_list = [int(s) for s in args.shots.split(",")]
    except ValueError as exc:
        raise DataFormatError(f"bad --shots list {args.shots!r}: {exc}") from exc
    results = shot_sweep(g, cfg.task, cfg, shots_list)
    out = _out_dir(args, cfg)
    write_results_csv(results, out / "results.csv")
    write_summary_json(results, out / "summary.json", extra={"config": cfg.to_dict()})
    if args.plot:
        plot_sweep(results, out / "sweep.png")
    for r in results:
        print(f"shots {r.shots:>3}: micro-F1 {r.mean_micro:.4f} +/- {r.std_micro:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hgmp",
        description="Few-shot learning on heterogeneous graphs via graph-level "
                    "task reformulation, type-weighted augmentation and feature prompts.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--data", help="dataset directory or manifest path "
                                       "(or the \"data\" config key)")
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--seed", type=int, help="base seed override")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./hgmp_out)")

    sp = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    sp.add_argument("--spec", help="JSON generator spec")
    sp.add_argument("--signal", type=float, help="same-class wiring probability in [0, 1]")
    sp.add_argument("--seed", type=int, help="generator seed override")
    sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./hgmp_out)")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("pretrain", help="contrastively pre-train an encoder")
    common(sp)
    sp.add_argument("--backbone", choices=BACKBONES)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--ratio-mode", dest="ratio_mode",
                    choices=("squared", "proportional"))
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("tune-eval", help="tune prompts on a frozen encoder and score")
    common(sp)
    sp.add_argument("--encoder", required=True, help="encoder checkpoint path")
    sp.add_argument("--task", choices=TASK_KINDS)
    sp.add_argument("--shots", type=int)
    sp.add_argument("--seeds", help="comma-separated evaluation seeds")
    sp.add_argument("--tune-steps", dest="tune_steps", type=int)
    sp.add_argument("--tune-lr", dest="tune_lr", type=float)
    sp.add_argument("--prompt-mode", dest="prompt_mode", choices=("ones", "random"))
    sp.set_defaults(func=cmd_tune_eval)

    sp = sub.add_parser("ablate", help="run the 2x2 augmentation/prompt switch grid")
    common(sp)
    sp.add_argument("--task", choices=TASK_KINDS)
    sp.add_argument("--shots", type=int)
    sp.add_argument("--seeds", help="comma-separated evaluation seeds")
    sp.add_argument("--checkpoint-dir", dest="checkpoint_dir",
                    help="cache directory for the two pre-trained encoders")
    sp.add_argument("--plot", action="store_true")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("sweep", help="evaluate across several support sizes")
    common(sp)
    sp.add_argument("--task", choices=TASK_KINDS)
    sp.add_argument("--shots", required=True, help="comma-separated list, e.g. 1,3,5,10")
    sp.add_argument("--seeds", help="comma-separated evaluation seeds")
    sp.add_argument("--plot", action="store_true")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HgmpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
