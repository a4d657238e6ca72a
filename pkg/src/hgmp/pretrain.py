"""Contrastive pre-training over augmented subgraph views.

Each subgraph contributes two stochastically augmented views per step; the
loss pulls a subgraph's own views together and pushes everything else away.
Views of item i sit at rows 2i and 2i+1 of the latent batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .augment import AugmentConfig, make_views, with_seed
from .encoder import HetEncoder, PackedGraphs, freeze
from .errors import HgmpError
from .hetgraph import HetGraph
from .taskbuilder import InducedSubgraph

DEFAULT_TEMPERATURE = 0.5

OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.01
    temperature: float = DEFAULT_TEMPERATURE
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.epochs < 0:
            raise HgmpError("epochs must be >= 0")
        if self.batch_size < 1:
            raise HgmpError("batch_size must be >= 1")
        if self.lr < 0:
            raise HgmpError("lr must be >= 0")
        if self.temperature <= 0:
            raise HgmpError("temperature must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise HgmpError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "temperature": self.temperature,
            "augment": {
                "ratio": self.augment.ratio,
                "view_strategies": [list(v) for v in self.augment.view_strategies],
                "ratio_mode": self.augment.ratio_mode,
                "seed": self.augment.seed,
            },
            "seed": self.seed,
            "optimizer": self.optimizer,
        }


def make_optimizer(name: str, params, lr: float) -> torch.optim.Optimizer:
    """Plain fixed-step descent by default; adaptive variant behind config."""
    params = list(params)
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr)
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    raise HgmpError(f"unknown optimizer {name!r}; expected one of {OPTIMIZERS}")


def contrastive_loss(latents: torch.Tensor,
                     temperature: float = DEFAULT_TEMPERATURE) -> torch.Tensor:
    """Normalized temperature-scaled cross entropy over paired views.

    ``latents`` has shape (2N, p) with views of item i at rows 2i and 2i+1.
    Similarity is cosine; each anchor's own row is excluded from the
    denominator; the 2N anchor terms are averaged. N=1 gives exactly 0.
    """
    if latents.ndim != 2 or latents.shape[0] % 2 != 0 or latents.shape[0] == 0:
        raise HgmpError("latents must have shape (2N, p) with N >= 1")
    if temperature <= 0:
        raise HgmpError("temperature must be positive")
    two_n = latents.shape[0]
    z = torch.nn.functional.normalize(latents, dim=1)
    sim = (z @ z.T) / temperature
    eye = torch.eye(two_n, dtype=torch.bool)
    sim = sim.masked_fill(eye, float("-inf"))
    idx = torch.arange(two_n)
    pos = idx ^ 1  # 2i <-> 2i+1
    log_denom = torch.logsumexp(sim, dim=1)
    loss = -(sim[idx, pos] - log_denom).sum() / two_n
    return loss


def _item_seed(master: int, epoch: int, item: int) -> int:
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, int(epoch), int(item)])
    return int(ss.generate_state(1)[0])


def pretrain(subgraphs, encoder: HetEncoder,
             cfg: PretrainConfig | None = None) -> tuple[HetEncoder, list[float]]:
    """Train ``encoder`` in place on two-view batches; returns it frozen.

    The second return value is the trace: one mean batch loss per epoch.
    Item order is reshuffled each epoch from ``cfg.seed``. A leftover batch
    of a single item still runs (its loss is identically 0, so it does not
    move the weights). Fully deterministic per config; ``epochs=0`` freezes
    the untouched initialization.
    """
    cfg = cfg or PretrainConfig()
    graphs: list[HetGraph] = [
        s.graph if isinstance(s, InducedSubgraph) else s for s in subgraphs
    ]
    if not graphs:
        raise HgmpError("pre-training corpus is empty")
    if encoder.frozen:
        raise HgmpError("encoder is frozen; re-initialize before pre-training")
    opt = make_optimizer(cfg.optimizer,
                         (p for p in encoder.parameters() if p.requires_grad), cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    encoder.train()
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(graphs))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start:start + cfg.batch_size]
            views = []
            for item in chunk:
                acfg = with_seed(cfg.augment, _item_seed(cfg.augment.seed, epoch, int(item)))
                v1, v2 = make_views(graphs[item], acfg)
                views.append(v1.graph)
                views.append(v2.graph)
            packed = PackedGraphs(views)
            u = encoder.project(encoder.embed(packed))
            loss = contrastive_loss(u, cfg.temperature)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        trace.append(float(np.mean(losses)) if losses else 0.0)
    freeze(encoder)
    return encoder, trace
