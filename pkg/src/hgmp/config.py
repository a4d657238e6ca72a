"""Run configuration: one flat record covering the whole pipeline.

Configs load from JSON and accept command-line overrides; unknown keys are
rejected rather than silently ignored so typos surface early.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .augment import RATIO_MODES, STRATEGIES, AugmentConfig
from .encoder import BACKBONES
from .errors import DataFormatError, HgmpError
from .pretrain import OPTIMIZERS, PretrainConfig
from .prompt import COMBINE_MODES, PROMPT_MODES

TASK_KINDS = ("node", "edge", "graph")


@dataclass(frozen=True)
class RunConfig:
    # task construction
    task: str = "node"
    tau: int = 2
    shots: int = 10
    query_fraction: float = 1.0
    edge_tie_rule: str = "skip"
    # encoder
    hidden_dim: int = 64
    proj_dim: int = 32
    num_layers: int = 2
    backbone: str = "gcn"
    encoder_seed: int = 0
    # pre-training
    epochs: int = 20
    batch_size: int = 64
    pretrain_lr: float = 0.01
    pretrain_optimizer: str = "sgd"
    temperature: float = 0.5
    augment_ratio: float = 0.2
    ratio_mode: str = "squared"
    view_strategies: tuple = (("node_mask",), ("edge_permute",))
    augment_seed: int = 0
    pretrain_seed: int = 0
    # prompt tuning
    tune_steps: int = 200
    tune_lr: float = 0.01
    tune_optimizer: str = "sgd"
    prompt_mode: str = "ones"
    prompt_combine: str = "multiplicative"
    # evaluation
    seeds: tuple = (0, 1, 2, 3, 4)
    # IO (optional; CLI flags override)
    data: str | None = None
    out: str | None = None

    def __post_init__(self):
        if self.task not in TASK_KINDS:
            raise HgmpError(f"unknown task {self.task!r}; expected one of {TASK_KINDS}")
        if self.backbone not in BACKBONES:
            raise HgmpError(f"unknown backbone {self.backbone!r}")
        if self.ratio_mode not in RATIO_MODES:
            raise HgmpError(f"unknown ratio_mode {self.ratio_mode!r}")
        if self.prompt_mode not in PROMPT_MODES:
            raise HgmpError(f"unknown prompt_mode {self.prompt_mode!r}")
        if self.prompt_combine not in COMBINE_MODES:
            raise HgmpError(f"unknown prompt_combine {self.prompt_combine!r}")
        if self.pretrain_optimizer not in OPTIMIZERS:
            raise HgmpError(f"unknown pretrain_optimizer {self.pretrain_optimizer!r}")
        if self.tune_optimizer not in OPTIMIZERS:
            raise HgmpError(f"unknown tune_optimizer {self.tune_optimizer!r}")
        for view in self.view_strategies:
            for s in view:
                if s not in STRATEGIES:
                    raise HgmpError(f"unknown augmentation strategy {s!r}")
        if self.tau < 1:
            raise HgmpError("tau must be >= 1")
        if self.shots < 1:
            raise HgmpError("shots must be >= 1")
        if not self.seeds:
            raise HgmpError("seeds must be non-empty")

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(
            ratio=self.augment_ratio,
            view_strategies=tuple(tuple(v) for v in self.view_strategies),
            ratio_mode=self.ratio_mode,
            seed=self.augment_seed,
        )

    def pretrain_config(self, ratio_mode: str | None = None) -> PretrainConfig:
        aug = self.augment_config()
        if ratio_mode is not None:
            aug = dataclasses.replace(aug, ratio_mode=ratio_mode)
        return PretrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.pretrain_lr,
            temperature=self.temperature,
            augment=aug,
            seed=self.pretrain_seed,
            optimizer=self.pretrain_optimizer,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["view_strategies"] = [list(v) for v in self.view_strategies]
        d["seeds"] = list(self.seeds)
        return d

    def fingerprint(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def with_overrides(self, **overrides) -> "RunConfig":
        """Replace fields from non-None override values."""
        fields = {f.name for f in dataclasses.fields(self)}
        updates = {}
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in fields:
                raise HgmpError(f"unknown config key {key!r}")
            updates[key] = value
        return _normalize(dataclasses.replace(self, **updates))


def _normalize(cfg: RunConfig) -> RunConfig:
    views = tuple(tuple(v) for v in cfg.view_strategies)
    seeds = tuple(int(s) for s in cfg.seeds)
    return dataclasses.replace(cfg, view_strategies=views, seeds=seeds)


def config_from_dict(d: dict) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(d) - fields)
    if unknown:
        raise DataFormatError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return _normalize(RunConfig(**d))
    except TypeError as exc:
        raise DataFormatError(f"bad config value: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"missing file: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise DataFormatError(f"{path}: config must be a JSON object")
    return config_from_dict(d)


def save_config(cfg: RunConfig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
