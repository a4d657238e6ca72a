"""Heterogeneous graph encoder.

Per-type linear projections align every node type into one hidden space;
message passing is then type-erased over the union of all edges. Readout is
a mean over all nodes of a graph, and a two-layer head maps the graph code
into the contrastive space. Everything runs in float64 on CPU so that runs
are bit-reproducible; CPU ``index_add_`` is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .checkpoint import read_checkpoint, write_checkpoint
from .errors import DataFormatError, HgmpError
from .hetgraph import GraphSchema, HetGraph

BACKBONES = ("gcn", "gat")

DEFAULT_HIDDEN_DIM = 64
DEFAULT_PROJ_DIM = 32
DEFAULT_NUM_LAYERS = 2


@dataclass
class GraphEmbedding:
    """Graph-level codes plus per-node hidden states for diagnostics.

    ``z`` (length h) feeds downstream heads; ``u`` (length p) lives in the
    contrastive space; ``node_states[t]`` holds the final hidden row of each
    type-t node in local order.
    """

    z: np.ndarray
    u: np.ndarray
    node_states: dict[str, np.ndarray]


class PackedGraphs:
    """Disjoint union of typed graphs, ready for one batched forward pass.

    Nodes get contiguous global rows (graph-major, then type in schema
    order). Structure tensors, including the symmetrized self-looped edge
    list and GCN norms, are precomputed here once so a pack can be reused
    across forward passes.
    """

    def __init__(self, graphs: list[HetGraph]):
        if not graphs:
            raise HgmpError("cannot pack an empty list of graphs")
        schema = graphs[0].schema
        for g in graphs[1:]:
            if g.schema.fingerprint() != schema.fingerprint():
                raise HgmpError("all packed graphs must share one schema")
        self.schema = schema
        self.num_graphs = len(graphs)
        names = schema.node_type_names

        base = 0
        feats: dict[str, list[np.ndarray]] = {t: [] for t in names}
        slots: dict[str, list[np.ndarray]] = {t: [] for t in names}
        graph_ids = []
        counts = []
        offsets = []  # per graph, per type: global row of that type's node 0
        for gi, g in enumerate(graphs):
            total = sum(g.node_count(t) for t in names)
            if total == 0:
                raise HgmpError(f"graph {gi} has no nodes")
            per_type = {}
            for t in names:
                n = g.node_count(t)
                per_type[t] = base
                feats[t].append(g.features[t])
                slots[t].append(np.arange(base, base + n, dtype=np.int64))
                base += n
            offsets.append(per_type)
            graph_ids.append(np.full(total, gi, dtype=np.int64))
            counts.append(total)
        self.n_nodes = base
        self.feats = {
            t: torch.from_numpy(np.ascontiguousarray(np.concatenate(feats[t], axis=0)
                                if feats[t] else np.zeros((0, schema.feature_dims[t]))))
            for t in names
        }
        self.slots = {
            t: torch.from_numpy(np.concatenate(slots[t]) if slots[t]
                                else np.zeros(0, dtype=np.int64))
            for t in names
        }
        self.graph_ids = torch.from_numpy(np.concatenate(graph_ids))
        self.counts = torch.from_numpy(np.asarray(counts, dtype=np.int64))

        srcs, dsts = [], []
        for gi, g in enumerate(graphs):
            for e in schema.edge_types:
                arr = g.edges[e.name]
                if arr.shape[0] == 0:
                    continue
                srcs.append(arr[:, 0] + offsets[gi][e.src])
                dsts.append(arr[:, 1] + offsets[gi][e.dst])
        if srcs:
            src = np.concatenate(srcs)
            dst = np.concatenate(dsts)
        else:
            src = np.zeros(0, dtype=np.int64)
            dst = np.zeros(0, dtype=np.int64)
        # symmetrize, then append one self loop per node
        loop = np.arange(self.n_nodes, dtype=np.int64)
        sym_src = np.concatenate([src, dst, loop])
        sym_dst = np.concatenate([dst, src, loop])
        deg = np.bincount(sym_dst, minlength=self.n_nodes).astype(np.float64)
        norm = 1.0 / np.sqrt(deg[sym_src] * deg[sym_dst])
        self.edge_src = torch.from_numpy(sym_src)
        self.edge_dst = torch.from_numpy(sym_dst)
        self.gcn_norm = torch.from_numpy(norm)
        self._edge_dst_np = sym_dst

    def scatter_features(self, feats: dict[str, torch.Tensor],
                         proj: nn.ModuleDict) -> torch.Tensor:
        """Project per-type features and place them at their global rows."""
        h = next(iter(proj.values())).out_features
        out = torch.zeros(self.n_nodes, h, dtype=torch.float64)
        for t, x in feats.items():
            if x.shape[0] == 0:
                continue
            out[self.slots[t]] = proj[t](x)
        return out

    def mean_readout(self, h: torch.Tensor) -> torch.Tensor:
        acc = torch.zeros(self.num_graphs, h.shape[1], dtype=torch.float64)
        acc.index_add_(0, self.graph_ids, h)
        return acc / self.counts.unsqueeze(1).to(torch.float64)


class GCNLayer(nn.Module):
    """Symmetric-normalized convolution with self loops (norms live in the pack)."""

    def __init__(self, dim: int):
        super().__init__()
        self.lin = nn.Linear(dim, dim)

    def forward(self, h: torch.Tensor, packed: PackedGraphs) -> torch.Tensor:
        msg = self.lin(h)[packed.edge_src] * packed.gcn_norm.unsqueeze(1)
        out = torch.zeros_like(h)
        out.index_add_(0, packed.edge_dst, msg)
        return out


class GATLayer(nn.Module):
    """Single-head graph attention with LeakyReLU scoring and self loops."""

    def __init__(self, dim: int, negative_slope: float = 0.2):
        super().__init__()
        self.lin = nn.Linear(dim, dim, bias=False)
        self.att_src = nn.Parameter(torch.zeros(dim, dtype=torch.float64))
        self.att_dst = nn.Parameter(torch.zeros(dim, dtype=torch.float64))
        self.bias = nn.Parameter(torch.zeros(dim, dtype=torch.float64))
        self.negative_slope = negative_slope

    def forward(self, h: torch.Tensor, packed: PackedGraphs) -> torch.Tensor:
        wh = self.lin(h)
        score = (wh @ self.att_src)[packed.edge_src] + (wh @ self.att_dst)[packed.edge_dst]
        score = nn.functional.leaky_relu(score, self.negative_slope)
        # stabilized segment softmax over incoming edges; the max is a
        # constant offset per segment, so it is computed outside autograd
        dst = packed._edge_dst_np
        seg_max = np.full(packed.n_nodes, -np.inf)
        np.maximum.at(seg_max, dst, score.detach().numpy())
        ex = torch.exp(score - torch.from_numpy(seg_max[dst]))
        denom = torch.zeros(packed.n_nodes, dtype=torch.float64)
        denom.index_add_(0, packed.edge_dst, ex)
        alpha = ex / denom[packed.edge_dst]
        out = torch.zeros_like(h)
        out.index_add_(0, packed.edge_dst, wh[packed.edge_src] * alpha.unsqueeze(1))
        return out + self.bias


def _init_linear(lin: nn.Linear, gen: torch.Generator) -> None:
    bound = 1.0 / math.sqrt(lin.weight.shape[1])
    with torch.no_grad():
        lin.weight.uniform_(-bound, bound, generator=gen)
        if lin.bias is not None:
            lin.bias.uniform_(-bound, bound, generator=gen)


class HetEncoder(nn.Module):
    """Frozen-able encoder: per-type projections, L shared layers, mean readout."""

    def __init__(self, schema: GraphSchema, hidden_dim: int = DEFAULT_HIDDEN_DIM,
                 proj_dim: int = DEFAULT_PROJ_DIM,
                 num_layers: int = DEFAULT_NUM_LAYERS,
                 backbone: str = "gcn", seed: int = 0):
        super().__init__()
        if backbone not in BACKBONES:
            raise HgmpError(f"unknown backbone {backbone!r}; expected one of {BACKBONES}")
        if hidden_dim < 1 or proj_dim < 1 or num_layers < 1:
            raise HgmpError("hidden_dim, proj_dim and num_layers must be >= 1")
        if proj_dim > hidden_dim:
            raise HgmpError("proj_dim must not exceed hidden_dim")
        self.schema = schema
        self.schema_fingerprint = schema.fingerprint()
        self.hidden_dim = hidden_dim
        self.proj_dim = proj_dim
        self.num_layers = num_layers
        self.backbone = backbone
        self.seed = seed
        self.frozen = False
        self.proj = nn.ModuleDict({
            t: nn.Linear(schema.feature_dims[t], hidden_dim)
            for t in schema.node_type_names
        })
        make = GCNLayer if backbone == "gcn" else GATLayer
        self.layers = nn.ModuleList([make(hidden_dim) for _ in range(num_layers)])
        self.head = nn.Sequential(
            nn.Linear(hidden_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, proj_dim),
        )
        self.double()
        self._reset_parameters(seed)

    def _reset_parameters(self, seed: int) -> None:
        gen = torch.Generator(device="cpu")
        gen.manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
        for t in self.schema.node_type_names:
            _init_linear(self.proj[t], gen)
        for layer in self.layers:
            _init_linear(layer.lin, gen)
            if isinstance(layer, GATLayer):
                bound = 1.0 / math.sqrt(self.hidden_dim)
                with torch.no_grad():
                    layer.att_src.uniform_(-bound, bound, generator=gen)
                    layer.att_dst.uniform_(-bound, bound, generator=gen)
                    layer.bias.zero_()
        _init_linear(self.head[0], gen)
        _init_linear(self.head[2], gen)

    def embed(self, packed: PackedGraphs,
              features_override: dict[str, torch.Tensor] | None = None,
              return_nodes: bool = False):
        """Graph codes z, shape (num_graphs, hidden_dim).

        With ``return_nodes`` also yields the final per-node hidden matrix in
        pack row order.
        """
        if packed.schema.fingerprint() != self.schema_fingerprint:
            raise HgmpError("packed graphs do not match the encoder's schema")
        feats = features_override if features_override is not None else packed.feats
        h = packed.scatter_features(feats, self.proj)
        for i, layer in enumerate(self.layers):
            h = layer(h, packed)
            if i < len(self.layers) - 1:
                h = torch.relu(h)
        z = packed.mean_readout(h)
        return (z, h) if return_nodes else z

    def forward(self, packed: PackedGraphs,
                features_override: dict[str, torch.Tensor] | None = None) -> torch.Tensor:
        return self.embed(packed, features_override)

    def project(self, z: torch.Tensor) -> torch.Tensor:
        return self.head(z)


def init_encoder(schema: GraphSchema, hidden_dim: int = DEFAULT_HIDDEN_DIM,
                 proj_dim: int = DEFAULT_PROJ_DIM,
                 num_layers: int = DEFAULT_NUM_LAYERS,
                 backbone: str = "gcn", seed: int = 0) -> HetEncoder:
    return HetEncoder(schema, hidden_dim=hidden_dim, proj_dim=proj_dim,
                      num_layers=num_layers, backbone=backbone, seed=seed)


def encode_graph(g, encoder: HetEncoder) -> GraphEmbedding:
    """Embed one graph (or a subgraph carrier with a ``.graph``); no gradients."""
    graph: HetGraph = getattr(g, "graph", g)
    packed = PackedGraphs([graph])
    with torch.no_grad():
        z, h = encoder.embed(packed, return_nodes=True)
        u = encoder.project(z)
    node_states = {
        t: h[packed.slots[t]].numpy().copy() for t in graph.schema.node_type_names
    }
    return GraphEmbedding(z=z[0].numpy().copy(), u=u[0].numpy().copy(),
                          node_states=node_states)


def project_head(z, encoder: HetEncoder) -> np.ndarray:
    """Apply the contrastive head to a GraphEmbedding or raw code array."""
    if isinstance(z, GraphEmbedding):
        z = z.z
    zt = torch.as_tensor(np.asarray(z, dtype=np.float64))
    single = zt.ndim == 1
    if single:
        zt = zt.unsqueeze(0)
    with torch.no_grad():
        u = encoder.project(zt)
    u = u.numpy().copy()
    return u[0] if single else u


def freeze(encoder: HetEncoder) -> HetEncoder:
    """Disable gradients on every encoder parameter and mark it frozen."""
    for p in encoder.parameters():
        p.requires_grad_(False)
    encoder.frozen = True
    encoder.eval()
    return encoder


def parameter_bytes(encoder: HetEncoder) -> bytes:
    """Canonical byte serialization of all parameters, for tamper checks."""
    chunks = []
    for name, p in sorted(encoder.state_dict().items()):
        chunks.append(name.encode("utf-8"))
        chunks.append(np.ascontiguousarray(p.detach().numpy()).tobytes())
    return b"".join(chunks)


def save_encoder(encoder: HetEncoder, path) -> None:
    meta = {
        "kind": "encoder",
        "backbone": encoder.backbone,
        "hidden_dim": encoder.hidden_dim,
        "proj_dim": encoder.proj_dim,
        "num_layers": encoder.num_layers,
        "seed": encoder.seed,
        "frozen": encoder.frozen,
        "schema_fingerprint": encoder.schema_fingerprint,
        "schema": encoder.schema.to_dict(),
    }
    arrays = {k: v.detach().numpy() for k, v in encoder.state_dict().items()}
    write_checkpoint(path, meta, arrays)


def load_encoder(path, schema: GraphSchema | None = None) -> HetEncoder:
    """Restore an encoder; verifies the schema fingerprint when one is given."""
    meta, arrays = read_checkpoint(path)
    if meta.get("kind") != "encoder":
        raise DataFormatError(f"{path}: not an encoder checkpoint")
    if schema is None:
        schema = GraphSchema.from_dict(meta["schema"])
    if schema.fingerprint() != meta["schema_fingerprint"]:
        raise DataFormatError(
            "schema fingerprint mismatch: checkpoint was written for a different schema"
        )
    enc = HetEncoder(schema, hidden_dim=meta["hidden_dim"], proj_dim=meta["proj_dim"],
                     num_layers=meta["num_layers"], backbone=meta["backbone"],
                     seed=meta["seed"])
    state = {k: torch.from_numpy(v) for k, v in arrays.items()}
    enc.load_state_dict(state)
    if meta["frozen"]:
        freeze(enc)
    return enc
