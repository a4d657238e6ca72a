"""Graph-level task reformulation: typed ego subgraphs and k-shot episodes.

Node- and edge-level classification are recast as graph classification by
extracting an induced subgraph around each labeled object and letting it
inherit the label. For a node the subgraph is its radius-tau BFS ball (hops
ignore edge direction); for an edge it is the union of both endpoints'
balls. In both cases every parent edge between included nodes is kept, with
types preserved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, HgmpError
from .hetgraph import HetGraph, load_graph, save_graph

DEFAULT_TAU = 2


@dataclass(frozen=True)
class NodeOrigin:
    type: str
    index: int


@dataclass(frozen=True)
class EdgeOrigin:
    edge_type: str
    position: int


@dataclass
class InducedSubgraph:
    """A local typed graph with provenance and an inherited task label.

    ``node_map[t][j]`` is the parent index of local node j of type t; local
    indices follow ascending parent order, so extraction is deterministic.
    """

    graph: HetGraph
    origin: NodeOrigin | EdgeOrigin
    label: int | None
    node_map: dict[str, np.ndarray]
    tau: int

    def origin_key(self) -> tuple:
        o = self.origin
        if isinstance(o, NodeOrigin):
            return ("node", o.type, o.index)
        return ("edge", o.edge_type, o.position)


@dataclass
class FewShotTask:
    """A k-shot episode: k support subgraphs per class plus a query set."""

    task_kind: str
    support: list[InducedSubgraph]
    query: list[InducedSubgraph]
    classes: tuple[int, ...]
    k: int
    seed: int


class AdjacencyIndex:
    """Type-erased undirected adjacency over (type, index) nodes.

    Nodes get global ids by concatenating types in schema order; the index
    is CSR-shaped and built once per graph so repeated BFS queries are cheap.
    """

    def __init__(self, g: HetGraph):
        self.graph = g
        names = g.schema.node_type_names
        counts = [g.node_count(t) for t in names]
        self.offsets = {t: o for t, o in zip(names, np.concatenate(([0], np.cumsum(counts))))}
        self.n = int(sum(counts))
        srcs, dsts = [], []
        for e in g.schema.edge_types:
            arr = g.edges[e.name]
            if arr.shape[0] == 0:
                continue
            s = arr[:, 0] + self.offsets[e.src]
            d = arr[:, 1] + self.offsets[e.dst]
            srcs.append(np.concatenate([s, d]))
            dsts.append(np.concatenate([d, s]))
        if srcs:
            src = np.concatenate(srcs)
            dst = np.concatenate(dsts)
            order = np.argsort(src, kind="stable")
            self.neighbors = dst[order]
            self.indptr = np.concatenate(
                ([0], np.cumsum(np.bincount(src, minlength=self.n)))
            )
        else:
            self.neighbors = np.empty(0, dtype=np.int64)
            self.indptr = np.zeros(self.n + 1, dtype=np.int64)

    def global_id(self, type_name: str, index: int) -> int:
        return int(self.offsets[type_name] + index)

    def ball(self, seeds: list[int], tau: int) -> np.ndarray:
        """Global ids within ``tau`` hops of any seed (seeds included)."""
        visited = np.zeros(self.n, dtype=bool)
        frontier = np.unique(np.asarray(seeds, dtype=np.int64))
        visited[frontier] = True
        for _ in range(tau):
            if frontier.size == 0:
                break
            nxt = np.concatenate(
                [self.neighbors[self.indptr[u]:self.indptr[u + 1]] for u in frontier]
            ) if frontier.size else np.empty(0, dtype=np.int64)
            nxt = np.unique(nxt)
            nxt = nxt[~visited[nxt]]
            visited[nxt] = True
            frontier = nxt
        return np.flatnonzero(visited)


def _extract(g: HetGraph, included_global: np.ndarray, index: AdjacencyIndex,
             origin, label, tau: int) -> InducedSubgraph:
    names = g.schema.node_type_names
    node_map = {}
    local_pos = {}
    features = {}
    for t in names:
        off = index.offsets[t]
        count = g.node_count(t)
        sel = included_global[(included_global >= off) & (included_global < off + count)] - off
        node_map[t] = sel.astype(np.int64)
        pos = np.full(count, -1, dtype=np.int64)
        pos[sel] = np.arange(sel.size)
        local_pos[t] = pos
        features[t] = g.features[t][sel]
    edges = {}
    for e in g.schema.edge_types:
        arr = g.edges[e.name]
        if arr.shape[0] == 0:
            edges[e.name] = arr
            continue
        keep = (local_pos[e.src][arr[:, 0]] >= 0) & (local_pos[e.dst][arr[:, 1]] >= 0)
        kept = arr[keep]
        edges[e.name] = np.column_stack(
            [local_pos[e.src][kept[:, 0]], local_pos[e.dst][kept[:, 1]]]
        )
    t_target = g.schema.target_type
    labels = {}
    for parent_idx, cls in g.labels.items():
        lp = local_pos[t_target][parent_idx]
        if lp >= 0:
            labels[int(lp)] = cls
    local = HetGraph(schema=g.schema, features=features, edges=edges, labels=labels)
    return InducedSubgraph(graph=local, origin=origin, label=label,
                           node_map=node_map, tau=tau)


def node_induced_subgraph(
    g: HetGraph, v: tuple[str, int], tau: int = DEFAULT_TAU,
    index: AdjacencyIndex | None = None,
) -> InducedSubgraph:
    """Radius-tau ego subgraph around node ``v = (type, index)``.

    The label is inherited when v is a labeled target node, else left unset.
    Pass a prebuilt ``index`` when extracting many subgraphs from one graph.
    """
    t, i = v
    if tau < 1:
        raise HgmpError("tau must be >= 1")
    if t not in g.schema.node_type_names or not 0 <= i < g.node_count(t):
        raise HgmpError(f"node ({t!r}, {i}) does not exist")
    index = index or AdjacencyIndex(g)
    included = index.ball([index.global_id(t, i)], tau)
    label = g.labels.get(i) if t == g.schema.target_type else None
    return _extract(g, included, index, NodeOrigin(t, i), label, tau)


def edge_induced_subgraph(
    g: HetGraph, e: tuple[str, int], tau: int = DEFAULT_TAU,
    index: AdjacencyIndex | None = None,
    label: int | None = None,
) -> InducedSubgraph:
    """Union of the two endpoints' tau-balls, with all internal edges."""
    etype_name, pos = e
    if tau < 1:
        raise HgmpError("tau must be >= 1")
    etype = g.schema.edge_type(etype_name)
    arr = g.edges[etype_name]
    if not 0 <= pos < arr.shape[0]:
        raise HgmpError(f"edge ({etype_name!r}, {pos}) does not exist")
    index = index or AdjacencyIndex(g)
    s, d = arr[pos]
    seeds = [index.global_id(etype.src, int(s)), index.global_id(etype.dst, int(d))]
    included = index.ball(seeds, tau)
    return _extract(g, included, index, EdgeOrigin(etype_name, pos), label, tau)


def build_node_tasks(g: HetGraph, tau: int = DEFAULT_TAU) -> list[InducedSubgraph]:
    """One labeled ego subgraph per labeled target node."""
    if not g.labels:
        raise HgmpError("graph has no labeled target nodes")
    index = AdjacencyIndex(g)
    t = g.schema.target_type
    return [
        node_induced_subgraph(g, (t, i), tau, index=index) for i in sorted(g.labels)
    ]


def build_pretrain_corpus(g: HetGraph, tau: int = DEFAULT_TAU) -> list[InducedSubgraph]:
    """Ego subgraphs around every target node, labeled or not (labels unused)."""
    index = AdjacencyIndex(g)
    t = g.schema.target_type
    return [
        node_induced_subgraph(g, (t, i), tau, index=index)
        for i in range(g.node_count(t))
    ]


def build_edge_tasks(
    g: HetGraph, tau: int = DEFAULT_TAU, tie_rule: str = "skip"
) -> list[InducedSubgraph]:
    """Labeled subgraphs for edges touching the target type.

    An edge with exactly one target-type endpoint inherits that endpoint's
    label (edges whose target endpoint is unlabeled are skipped). Edges with
    two target endpoints follow ``tie_rule``: "skip" drops them, "first"
    labels by the source endpoint. Edges with none are skipped.
    """
    if tie_rule not in ("skip", "first"):
        raise HgmpError(f"unknown tie rule {tie_rule!r}")
    if not g.labels:
        raise HgmpError("graph has no labeled target nodes")
    t_target = g.schema.target_type
    index = AdjacencyIndex(g)
    out = []
    for e in g.schema.edge_types:
        src_is = e.src == t_target
        dst_is = e.dst == t_target
        if not (src_is or dst_is):
            continue
        arr = g.edges[e.name]
        for pos in range(arr.shape[0]):
            s, d = int(arr[pos, 0]), int(arr[pos, 1])
            if src_is and dst_is:
                if tie_rule == "skip":
                    continue
                label = g.labels.get(s)
            elif src_is:
                label = g.labels.get(s)
            else:
                label = g.labels.get(d)
            if label is None:
                continue
            out.append(edge_induced_subgraph(g, (e.name, pos), tau, index=index, label=label))
    if not out:
        raise HgmpError("no qualifying edges (no target-type endpoint carries a label)")
    return out


def sample_k_shot(
    tasks: list[InducedSubgraph], k: int, query_fraction: float = 1.0,
    seed: int = 0, task_kind: str | None = None,
) -> FewShotTask:
    """Split labeled subgraphs into a k-shot support set and a query set.

    Exactly k support items per class, sampled without replacement; the
    remaining items (a ``query_fraction`` share per class) become queries.
    Deterministic for a fixed seed; support and query never share an origin.
    """
    if k < 1:
        raise HgmpError("k must be >= 1")
    if not 0.0 < query_fraction <= 1.0:
        raise HgmpError("query_fraction must lie in (0, 1]")
    by_class: dict[int, list[InducedSubgraph]] = {}
    for sg in tasks:
        if sg.label is None:
            raise HgmpError(f"unlabeled subgraph at origin {sg.origin_key()}")
        by_class.setdefault(sg.label, []).append(sg)
    classes = tuple(sorted(by_class))
    for c in classes:
        if len(by_class[c]) < k + 1:
            raise HgmpError(
                f"class {c} has {len(by_class[c])} items, needs at least {k + 1}"
            )
    rng = np.random.default_rng(seed)
    support, query = [], []
    for c in classes:
        items = by_class[c]
        order = rng.permutation(len(items))
        support.extend(items[j] for j in order[:k])
        rest = order[k:]
        n_query = int(math.ceil(query_fraction * rest.size))
        query.extend(items[j] for j in rest[:n_query])
    if task_kind is None:
        task_kind = "node" if isinstance(tasks[0].origin, NodeOrigin) else "edge"
    return FewShotTask(
        task_kind=task_kind, support=support, query=query,
        classes=classes, k=k, seed=seed,
    )


# ---------------------------------------------------------------------------
# Task dumps
# ---------------------------------------------------------------------------


def _origin_dict(origin) -> dict:
    if isinstance(origin, NodeOrigin):
        return {"kind": "node", "type": origin.type, "index": origin.index}
    return {"kind": "edge", "edge_type": origin.edge_type, "position": origin.position}


def _origin_from_dict(d: dict):
    if d["kind"] == "node":
        return NodeOrigin(d["type"], int(d["index"]))
    return EdgeOrigin(d["edge_type"], int(d["position"]))


def dump_tasks(items: list[tuple[InducedSubgraph, str]], out_dir) -> Path:
    """Write subgraphs as per-subgraph dataset directories plus tasks.json.

    ``items`` pairs each subgraph with its split name ("support", "query",
    "all", ...). Returns the path of the written index.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (sg, split) in enumerate(items):
        sub = f"sg_{i:05d}"
        save_graph(sg.graph, out / sub)
        entries.append({
            "dir": sub,
            "origin": _origin_dict(sg.origin),
            "label": sg.label,
            "split": split,
            "tau": sg.tau,
        })
    ipath = out / "tasks.json"
    with open(ipath, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ipath


def dump_few_shot_task(task: FewShotTask, out_dir) -> Path:
    items = [(sg, "support") for sg in task.support] + [(sg, "query") for sg in task.query]
    return dump_tasks(items, out_dir)


def load_task_dump(dump_dir) -> list[dict]:
    """Read a task dump; returns records with graph, origin, label, split, tau."""
    ipath = Path(dump_dir) / "tasks.json"
    if not ipath.exists():
        raise DataFormatError(f"missing file: {ipath}")
    with open(ipath, encoding="utf-8") as fh:
        entries = json.load(fh)
    out = []
    for entry in entries:
        out.append({
            "graph": load_graph(Path(dump_dir) / entry["dir"]),
            "origin": _origin_from_dict(entry["origin"]),
            "label": entry["label"],
            "split": entry["split"],
            "tau": entry["tau"],
        })
    return out
