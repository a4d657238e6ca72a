"""Per-node-type feature prompts and the few-shot tuning loop.

A prompt bank holds one learnable vector per node type, combined elementwise
with raw features before they enter the (frozen) encoder. The default
combination is multiplication, whose all-ones start is an exact identity:
an untuned bank never changes embeddings. An additive variant exists behind
the ``combine`` flag for comparison runs. Tuning fits only the bank and a
linear head by cross entropy on the support set.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .checkpoint import read_checkpoint, write_checkpoint
from .encoder import HetEncoder, PackedGraphs, _init_linear
from .errors import DataFormatError, HgmpError
from .hetgraph import GraphSchema, HetGraph
from .taskbuilder import FewShotTask, InducedSubgraph

PROMPT_MODES = ("ones", "random")
COMBINE_MODES = ("multiplicative", "additive")


class PromptBank(nn.Module):
    """One prompt vector per node type, broadcast over that type's rows."""

    def __init__(self, schema: GraphSchema, combine: str = "multiplicative"):
        super().__init__()
        if combine not in COMBINE_MODES:
            raise HgmpError(f"unknown combine mode {combine!r}; expected one of {COMBINE_MODES}")
        self.schema = schema
        self.schema_fingerprint = schema.fingerprint()
        self.combine = combine
        self.vectors = nn.ParameterDict({
            t: nn.Parameter(torch.ones(schema.feature_dims[t], dtype=torch.float64))
            for t in schema.node_type_names
        })

    def transform(self, type_name: str, x: torch.Tensor) -> torch.Tensor:
        v = self.vectors[type_name]
        return x * v if self.combine == "multiplicative" else x + v

    def transform_packed(self, packed: PackedGraphs) -> dict[str, torch.Tensor]:
        """Prompted per-type feature tensors for a packed batch (keeps grad)."""
        return {t: self.transform(t, packed.feats[t]) for t in packed.feats}

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {t: v.detach().numpy().copy() for t, v in self.vectors.items()}


def init_prompts(schema: GraphSchema, mode: str = "ones", seed: int = 0,
                 combine: str = "multiplicative") -> PromptBank:
    """Fresh bank: "ones" starts at the multiplicative identity, "random"
    perturbs around it (around 0 for the additive variant)."""
    if mode not in PROMPT_MODES:
        raise HgmpError(f"unknown prompt mode {mode!r}; expected one of {PROMPT_MODES}")
    bank = PromptBank(schema, combine=combine)
    if mode == "random":
        gen = torch.Generator(device="cpu")
        gen.manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
        center = 1.0 if combine == "multiplicative" else 0.0
        with torch.no_grad():
            for t in schema.node_type_names:
                bank.vectors[t].normal_(mean=0.0, std=0.1, generator=gen)
                bank.vectors[t].add_(center)
    return bank


def apply_prompts(g: HetGraph, bank: PromptBank) -> HetGraph:
    """New graph whose features carry the bank's current values (no grad)."""
    if g.schema.fingerprint() != bank.schema_fingerprint:
        raise HgmpError("prompt bank does not match the graph's schema")
    vecs = bank.as_arrays()
    features = {}
    for t, x in g.features.items():
        features[t] = x * vecs[t] if bank.combine == "multiplicative" else x + vecs[t]
    return g.replace(features=features)


class TaskHead(nn.Module):
    """Linear classifier over graph codes."""

    def __init__(self, hidden_dim: int, num_classes: int, seed: int = 0):
        super().__init__()
        if num_classes < 2:
            raise HgmpError("num_classes must be >= 2")
        self.lin = nn.Linear(hidden_dim, num_classes, dtype=torch.float64)
        gen = torch.Generator(device="cpu")
        gen.manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
        _init_linear(self.lin, gen)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.lin(z)


def init_head(hidden_dim: int, num_classes: int, seed: int = 0) -> TaskHead:
    return TaskHead(hidden_dim, num_classes, seed=seed)


def _as_graphs(items) -> list[HetGraph]:
    return [s.graph if isinstance(s, InducedSubgraph) else s for s in items]


def tune(task: FewShotTask, frozen_encoder: HetEncoder, bank: PromptBank,
         head: TaskHead, steps: int = 200, lr: float = 0.01, seed: int = 0,
         tune_bank: bool = True,
         optimizer: str = "sgd") -> tuple[PromptBank, TaskHead, list[float]]:
    """Fit bank and head on the support set by full-batch cross entropy.

    The encoder must be frozen beforehand; its parameters are never part of
    the optimizer and are bitwise unchanged afterwards. ``tune_bank=False``
    pins the bank at its current values and fits only the head. ``steps=0``
    and ``lr=0`` are legal no-ops. ``seed`` is accepted for interface
    symmetry; the loop itself is deterministic.
    """
    del seed
    if not frozen_encoder.frozen:
        raise HgmpError("encoder must be frozen before prompt tuning")
    if steps < 0:
        raise HgmpError("steps must be >= 0")
    if lr < 0:
        raise HgmpError("lr must be >= 0")
    if not task.support:
        raise HgmpError("support set is empty")
    from .pretrain import make_optimizer

    packed = PackedGraphs(_as_graphs(task.support))
    labels = torch.tensor([sg.label for sg in task.support], dtype=torch.int64)
    params = list(head.parameters())
    if tune_bank:
        params += list(bank.parameters())
    else:
        for p in bank.parameters():
            p.requires_grad_(False)
    opt = make_optimizer(optimizer, params, lr)
    trace = []
    for _ in range(steps):
        feats = bank.transform_packed(packed)
        z = frozen_encoder.embed(packed, features_override=feats)
        loss = nn.functional.cross_entropy(head(z), labels)
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(float(loss.detach()))
    return bank, head, trace


def score_many(items, frozen_encoder: HetEncoder, bank: PromptBank,
               head: TaskHead) -> np.ndarray:
    """Class score matrix, one row per item."""
    graphs = _as_graphs(items)
    if not graphs:
        return np.zeros((0, head.lin.out_features))
    packed = PackedGraphs(graphs)
    with torch.no_grad():
        feats = bank.transform_packed(packed)
        z = frozen_encoder.embed(packed, features_override=feats)
        return head(z).numpy().copy()


def predict_many(items, frozen_encoder: HetEncoder, bank: PromptBank,
                 head: TaskHead) -> np.ndarray:
    """Predicted class ids; score ties resolve to the lowest class id."""
    scores = score_many(items, frozen_encoder, bank, head)
    return np.argmax(scores, axis=1).astype(np.int64)


def predict(subgraph, frozen_encoder: HetEncoder, bank: PromptBank,
            head: TaskHead) -> tuple[int, np.ndarray]:
    """Class id and score vector for one subgraph."""
    scores = score_many([subgraph], frozen_encoder, bank, head)[0]
    return int(np.argmax(scores)), scores


def save_prompt_state(bank: PromptBank, head: TaskHead, path) -> None:
    meta = {
        "kind": "prompt",
        "combine": bank.combine,
        "schema_fingerprint": bank.schema_fingerprint,
        "schema": bank.schema.to_dict(),
        "hidden_dim": head.lin.in_features,
        "num_classes": head.lin.out_features,
    }
    arrays = {f"prompt/{t}": v.detach().numpy() for t, v in bank.vectors.items()}
    arrays["head/weight"] = head.lin.weight.detach().numpy()
    arrays["head/bias"] = head.lin.bias.detach().numpy()
    write_checkpoint(path, meta, arrays)


def load_prompt_state(path, schema: GraphSchema | None = None) -> tuple[PromptBank, TaskHead]:
    meta, arrays = read_checkpoint(path)
    if meta.get("kind") != "prompt":
        raise DataFormatError(f"{path}: not a prompt checkpoint")
    if schema is None:
        schema = GraphSchema.from_dict(meta["schema"])
    if schema.fingerprint() != meta["schema_fingerprint"]:
        raise DataFormatError(
            "schema fingerprint mismatch: checkpoint was written for a different schema"
        )
    bank = PromptBank(schema, combine=meta["combine"])
    with torch.no_grad():
        for t in schema.node_type_names:
            bank.vectors[t].copy_(torch.from_numpy(arrays[f"prompt/{t}"]))
    head = TaskHead(meta["hidden_dim"], meta["num_classes"])
    with torch.no_grad():
        head.lin.weight.copy_(torch.from_numpy(arrays["head/weight"]))
        head.lin.bias.copy_(torch.from_numpy(arrays["head/bias"]))
    return bank, head
