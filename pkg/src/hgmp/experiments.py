"""Few-shot experiment harness: metrics, runs, ablations, shot sweeps.

A run pre-trains one encoder on the unlabeled ego-subgraph corpus, freezes
it, then for every evaluation seed draws a fresh k-shot episode, tunes a
prompt bank plus linear head on its support set, and scores the query set.
The ablation grid varies two switches: type-weighted vs type-blind
augmentation during pre-training, and trainable vs identity-pinned prompts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .encoder import HetEncoder, init_encoder, load_encoder, save_encoder
from .errors import HgmpError
from .hetgraph import HetGraph
from .pretrain import pretrain
from .prompt import init_head, init_prompts, predict_many, tune
from .taskbuilder import (
    FewShotTask,
    InducedSubgraph,
    build_edge_tasks,
    build_node_tasks,
    build_pretrain_corpus,
    sample_k_shot,
)

# (name, augmentation ratio mode, whether the prompt bank is trainable):
# VARIANT 1 = neither switch, VARIANT 2 = trainable prompts only,
# VARIANT 3 = type-weighted augmentation only, HGMP = both.
VARIANTS = (
    ("VARIANT 1", "proportional", False),
    ("VARIANT 2", "proportional", True),
    ("VARIANT 3", "squared", False),
    ("HGMP", "squared", True),
)


def _counts(golds, preds, num_classes: int):
    tp = np.zeros(num_classes, dtype=np.int64)
    fp = np.zeros(num_classes, dtype=np.int64)
    fn = np.zeros(num_classes, dtype=np.int64)
    for g, p in zip(golds, preds):
        if g == p:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    return tp, fp, fn


def _check_labels(preds, golds, num_classes):
    preds = np.asarray(preds, dtype=np.int64).ravel()
    golds = np.asarray(golds, dtype=np.int64).ravel()
    if preds.shape != golds.shape:
        raise HgmpError("preds and golds must have equal length")
    if preds.size == 0:
        raise HgmpError("cannot score an empty label set")
    if num_classes is None:
        num_classes = int(max(preds.max(), golds.max())) + 1
    if preds.min() < 0 or golds.min() < 0 or max(preds.max(), golds.max()) >= num_classes:
        raise HgmpError("labels must lie in [0, num_classes)")
    return preds, golds, num_classes


def micro_f1(preds, golds, num_classes: int | None = None) -> float:
    """Micro-averaged F1; equals accuracy for single-label predictions."""
    preds, golds, num_classes = _check_labels(preds, golds, num_classes)
    tp, fp, fn = _counts(golds, preds, num_classes)
    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    return 2.0 * tp.sum() / denom if denom else 0.0


def macro_f1(preds, golds, num_classes: int | None = None) -> float:
    """Mean of per-class F1 over all ``num_classes`` classes.

    A class absent from both predictions and golds has F1 0 and still counts
    toward the mean.
    """
    preds, golds, num_classes = _check_labels(preds, golds, num_classes)
    tp, fp, fn = _counts(golds, preds, num_classes)
    f1 = np.zeros(num_classes)
    for c in range(num_classes):
        denom = 2 * tp[c] + fp[c] + fn[c]
        if denom:
            f1[c] = 2.0 * tp[c] / denom
    return float(f1.mean())


@dataclass
class RunResult:
    """Per-seed scores for one (variant, task kind, shots) cell."""

    variant: str
    task_kind: str
    shots: int
    seeds: tuple
    micro: tuple
    macro: tuple
    config_fingerprint: str = ""

    def _std(self, values) -> float:
        return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0

    @property
    def mean_micro(self) -> float:
        return float(np.mean(self.micro))

    @property
    def std_micro(self) -> float:
        return self._std(self.micro)

    @property
    def mean_macro(self) -> float:
        return float(np.mean(self.macro))

    @property
    def std_macro(self) -> float:
        return self._std(self.macro)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "task_kind": self.task_kind,
            "shots": self.shots,
            "seeds": list(self.seeds),
            "micro": list(self.micro),
            "macro": list(self.macro),
            "mean_micro": self.mean_micro,
            "std_micro": self.std_micro,
            "mean_macro": self.mean_macro,
            "std_macro": self.std_macro,
            "config_fingerprint": self.config_fingerprint,
        }


def build_tasks(g: HetGraph, kind: str, cfg: RunConfig) -> list[InducedSubgraph]:
    """Labeled subgraph corpus for a task kind.

    The graph kind scores the reformulated subgraphs as native graph
    classification, so it shares the node corpus.
    """
    if kind in ("node", "graph"):
        return build_node_tasks(g, cfg.tau)
    if kind == "edge":
        return build_edge_tasks(g, cfg.tau, tie_rule=cfg.edge_tie_rule)
    raise HgmpError(f"unknown task kind {kind!r}")


def pretrain_encoder(g: HetGraph, cfg: RunConfig,
                     ratio_mode: str | None = None) -> tuple[HetEncoder, list[float]]:
    """Pre-train a fresh encoder on all target-node ego subgraphs; frozen on return."""
    corpus = build_pretrain_corpus(g, cfg.tau)
    encoder = init_encoder(g.schema, hidden_dim=cfg.hidden_dim, proj_dim=cfg.proj_dim,
                           num_layers=cfg.num_layers, backbone=cfg.backbone,
                           seed=cfg.encoder_seed)
    return pretrain(corpus, encoder, cfg.pretrain_config(ratio_mode))


def evaluate_encoder(encoder: HetEncoder, tasks: list[InducedSubgraph], kind: str,
                     cfg: RunConfig, seeds=None, tune_bank: bool = True,
                     variant: str = "HGMP", shots: int | None = None) -> RunResult:
    """Episode loop: per seed, sample a k-shot split, tune, score the queries."""
    seeds = tuple(seeds) if seeds is not None else cfg.seeds
    shots = shots if shots is not None else cfg.shots
    schema = tasks[0].graph.schema
    micro, macro = [], []
    for seed in seeds:
        episode: FewShotTask = sample_k_shot(
            tasks, shots, query_fraction=cfg.query_fraction, seed=seed, task_kind=kind
        )
        bank = init_prompts(schema, mode=cfg.prompt_mode, seed=seed,
                            combine=cfg.prompt_combine)
        head = init_head(cfg.hidden_dim, schema.num_classes, seed=seed)
        tune(episode, encoder, bank, head, steps=cfg.tune_steps, lr=cfg.tune_lr,
             seed=seed, tune_bank=tune_bank, optimizer=cfg.tune_optimizer)
        preds = predict_many(episode.query, encoder, bank, head)
        golds = np.asarray([sg.label for sg in episode.query], dtype=np.int64)
        micro.append(micro_f1(preds, golds, schema.num_classes))
        macro.append(macro_f1(preds, golds, schema.num_classes))
    return RunResult(variant=variant, task_kind=kind, shots=shots, seeds=seeds,
                     micro=tuple(micro), macro=tuple(macro),
                     config_fingerprint=cfg.fingerprint())


def run_task(g: HetGraph, kind: str, cfg: RunConfig, seeds=None) -> RunResult:
    """Full pipeline for one task kind: pre-train once, evaluate per seed."""
    tasks = build_tasks(g, kind, cfg)
    encoder, _ = pretrain_encoder(g, cfg)
    return evaluate_encoder(encoder, tasks, kind, cfg, seeds=seeds)


def _cached_encoder(g, cfg, ratio_mode, cache_dir) -> HetEncoder:
    if cache_dir is None:
        return pretrain_encoder(g, cfg, ratio_mode)[0]
    path = Path(cache_dir) / f"encoder_{ratio_mode}.ckpt"
    if path.exists():
        return load_encoder(path, g.schema)
    encoder, _ = pretrain_encoder(g, cfg, ratio_mode)
    save_encoder(encoder, path)
    return encoder


def run_ablation(g: HetGraph, kind: str, cfg: RunConfig | None = None, seeds=None,
                 cache_dir=None) -> dict[str, RunResult]:
    """Score the 2x2 switch grid; the two ratio modes share pre-trained encoders."""
    cfg = cfg or RunConfig()
    tasks = build_tasks(g, kind, cfg)
    encoders = {
        mode: _cached_encoder(g, cfg, mode, cache_dir)
        for mode in sorted({mode for _, mode, _ in VARIANTS})
    }
    results = {}
    for name, mode, trainable in VARIANTS:
        results[name] = evaluate_encoder(
            encoders[mode], tasks, kind, cfg, seeds=seeds,
            tune_bank=trainable, variant=name,
        )
    return results


def shot_sweep(g: HetGraph, kind: str, cfg: RunConfig, shots_list,
               seeds=None) -> list[RunResult]:
    """Evaluate the full method at several support sizes with one encoder."""
    shots_list = [int(k) for k in shots_list]
    if not shots_list or any(k < 1 for k in shots_list):
        raise HgmpError("shots_list must contain positive integers")
    tasks = build_tasks(g, kind, cfg)
    encoder, _ = pretrain_encoder(g, cfg)
    return [
        evaluate_encoder(encoder, tasks, kind, cfg, seeds=seeds, shots=k)
        for k in shots_list
    ]


# ---------------------------------------------------------------------------
# Result files
# ---------------------------------------------------------------------------


def write_results_csv(results: list[RunResult], path) -> Path:
    """One row per (result, seed); floats use repr so round trips are exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["variant,task,shots,seed,micro_f1,macro_f1"]
    for r in results:
        for seed, mi, ma in zip(r.seeds, r.micro, r.macro):
            lines.append(
                f"{r.variant},{r.task_kind},{r.shots},{seed},{repr(float(mi))},{repr(float(ma))}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_summary_json(results: list[RunResult], path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"results": [r.to_dict() for r in results]}
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def plot_sweep(results: list[RunResult], path) -> Path:
    """Mean micro-F1 against support size, with sample-std error bars."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    xs = [r.shots for r in results]
    ys = [r.mean_micro for r in results]
    es = [r.std_micro for r in results]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3)
    ax.set_xlabel("shots per class")
    ax.set_ylabel("micro-F1")
    ax.set_title(f"{results[0].task_kind} task")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_ablation(results: dict[str, RunResult], path) -> Path:
    """Bar chart of the switch grid with sample-std whiskers."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [name for name, _, _ in VARIANTS if name in results]
    ys = [results[n].mean_micro for n in names]
    es = [results[n].std_micro for n in names]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(range(len(names)), ys, yerr=es, capsize=3, tick_label=names)
    ax.set_ylabel("micro-F1")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def seed_grid(base_seed: int, n: int) -> tuple[int, ...]:
    """n distinct evaluation seeds derived from one base seed."""
    if n < 1:
        raise HgmpError("need at least one seed")
    return tuple(int(base_seed) + i for i in range(n))


def summarize(results: dict[str, RunResult]) -> str:
    """Human-readable block, one line per variant."""
    lines = []
    for name, _, _ in VARIANTS:
        if name not in results:
            continue
        r = results[name]
        lines.append(
            f"{name:<9} micro-F1 {r.mean_micro:.4f} +/- {r.std_micro:.4f}  "
            f"macro-F1 {r.mean_macro:.4f} +/- {r.std_macro:.4f}"
        )
    return "\n".join(lines)


def check_ablation_ordering(results: dict[str, RunResult]) -> list[str]:
    """Expected mean orderings of the switch grid, with one-std slack.

    Checks HGMP >= VARIANT 2, HGMP >= VARIANT 3, and each single-switch
    variant >= VARIANT 1. Returns violation descriptions; an inversion
    within one sample std (the larger of the pair) is tolerated.
    """
    expected = [
        ("HGMP", "VARIANT 2"),
        ("HGMP", "VARIANT 3"),
        ("VARIANT 2", "VARIANT 1"),
        ("VARIANT 3", "VARIANT 1"),
    ]
    problems = []
    for hi, lo in expected:
        if hi not in results or lo not in results:
            continue
        a, b = results[hi], results[lo]
        slack = max(a.std_micro, b.std_micro)
        if a.mean_micro < b.mean_micro - slack:
            problems.append(
                f"{lo} mean micro-F1 {b.mean_micro:.4f} exceeds {hi} "
                f"{a.mean_micro:.4f} by more than one std ({slack:.4f})"
            )
    return problems


def run_result_from_dict(d: dict) -> RunResult:
    return RunResult(
        variant=d["variant"], task_kind=d["task_kind"], shots=int(d["shots"]),
        seeds=tuple(d["seeds"]), micro=tuple(d["micro"]), macro=tuple(d["macro"]),
    )


def load_results_csv(path) -> list[RunResult]:
    """Inverse of :func:`write_results_csv` (rows regrouped per cell)."""
    path = Path(path)
    rows = path.read_text(encoding="utf-8").strip().split("\n")
    header = rows[0].split(",")
    expected = ["variant", "task", "shots", "seed", "micro_f1", "macro_f1"]
    if header != expected:
        raise HgmpError(f"{path}: unexpected results header {header}")
    cells: dict[tuple, dict] = {}
    for row in rows[1:]:
        variant, kind, shots, seed, mi, ma = row.split(",")
        key = (variant, kind, int(shots))
        cell = cells.setdefault(key, {"seeds": [], "micro": [], "macro": []})
        cell["seeds"].append(int(seed))
        cell["micro"].append(float(mi))
        cell["macro"].append(float(ma))
    out = []
    for (variant, kind, shots), cell in cells.items():
        out.append(RunResult(variant=variant, task_kind=kind, shots=shots,
                             seeds=tuple(cell["seeds"]), micro=tuple(cell["micro"]),
                             macro=tuple(cell["macro"])))
    return out


def expected_chance_band(num_classes: int, micro) -> bool:
    """True when mean micro-F1 sits within 3 sample stds of chance level."""
    if len(micro) < 2:
        raise HgmpError("need at least 2 seeds to form a band")
    mean = float(np.mean(micro))
    std = float(np.std(micro, ddof=1))
    return abs(mean - 1.0 / num_classes) <= 3 * std
