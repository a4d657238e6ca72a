"""Typed heterogeneous-graph data model, validation, and on-disk format.

A graph holds one dense feature matrix per node type (dimensions may differ
across types), typed edge lists of (src, dst) index pairs, and class labels
on a single target node type. Graphs are immutable after construction:
feature and edge arrays are marked read-only, and every transformation in
the package produces a new graph.

On-disk format (one directory per dataset):
    manifest.json       schema: node types with dims, edge types with
                        src/dst types, target type, class count, file names
    nodes_<type>.csv    one row per node, columns f0..f{d-1} (row = node id)
    edges_<type>.csv    columns src,dst
    labels.csv          columns node_id,class (target-type nodes only)

All numbers are decimal text with a header row; floats are written with
``repr`` so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, HgmpError

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class NodeType:
    """A node type: symbolic name plus its feature dimension."""

    name: str
    dim: int


@dataclass(frozen=True)
class EdgeType:
    """A directed edge type between two declared node types."""

    name: str
    src: str
    dst: str


@dataclass(frozen=True)
class GraphSchema:
    """Node/edge type declarations, the labeled target type, and class count."""

    node_types: tuple[NodeType, ...]
    edge_types: tuple[EdgeType, ...]
    target_type: str
    num_classes: int

    def __post_init__(self):
        names = [t.name for t in self.node_types]
        if len(set(names)) != len(names):
            raise HgmpError(f"duplicate node type names: {names}")
        enames = [e.name for e in self.edge_types]
        if len(set(enames)) != len(enames):
            raise HgmpError(f"duplicate edge type names: {enames}")
        for e in self.edge_types:
            if e.src not in names or e.dst not in names:
                raise HgmpError(
                    f"edge type {e.name!r} references unknown node type "
                    f"({e.src!r} -> {e.dst!r})"
                )
        if self.target_type not in names:
            raise HgmpError(f"target type {self.target_type!r} not in schema")
        if self.num_classes < 1:
            raise HgmpError("num_classes must be >= 1")

    @property
    def node_type_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.node_types)

    @property
    def feature_dims(self) -> dict[str, int]:
        return {t.name: t.dim for t in self.node_types}

    def edge_type(self, name: str) -> EdgeType:
        for e in self.edge_types:
            if e.name == name:
                return e
        raise HgmpError(f"unknown edge type {name!r}")

    def fingerprint(self) -> str:
        """Stable hex digest of the schema; stored in checkpoints."""
        payload = {
            "node_types": [[t.name, t.dim] for t in self.node_types],
            "edge_types": [[e.name, e.src, e.dst] for e in self.edge_types],
            "target_type": self.target_type,
            "num_classes": self.num_classes,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "node_types": [{"name": t.name, "dim": t.dim} for t in self.node_types],
            "edge_types": [
                {"name": e.name, "src": e.src, "dst": e.dst} for e in self.edge_types
            ],
            "target_type": self.target_type,
            "num_classes": self.num_classes,
        }

    @staticmethod
    def from_dict(d: dict) -> "GraphSchema":
        return GraphSchema(
            node_types=tuple(NodeType(t["name"], int(t["dim"])) for t in d["node_types"]),
            edge_types=tuple(
                EdgeType(e["name"], e["src"], e["dst"]) for e in d["edge_types"]
            ),
            target_type=d["target_type"],
            num_classes=int(d["num_classes"]),
        )


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass
class HetGraph:
    """An immutable typed graph: per-type features, typed edges, target labels.

    ``features[t]`` is a (count, d_t) float64 matrix; ``edges[e]`` is an
    (m, 2) int64 array of (src, dst) type-local indices; ``labels`` maps
    target-type node index -> class id.
    """

    schema: GraphSchema
    features: dict[str, np.ndarray]
    edges: dict[str, np.ndarray]
    labels: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        feats = {}
        for t in self.schema.node_types:
            x = np.asarray(self.features.get(t.name, np.zeros((0, t.dim))), dtype=np.float64)
            if x.ndim != 2:
                raise HgmpError(f"features[{t.name!r}] must be 2-D, got shape {x.shape}")
            feats[t.name] = _freeze(x)
        self.features = feats
        edges = {}
        for e in self.schema.edge_types:
            a = np.asarray(self.edges.get(e.name, np.zeros((0, 2))), dtype=np.int64)
            if a.size == 0:
                a = a.reshape(0, 2)
            if a.ndim != 2 or a.shape[1] != 2:
                raise HgmpError(f"edges[{e.name!r}] must have shape (m, 2), got {a.shape}")
            edges[e.name] = _freeze(a)
        self.edges = edges
        self.labels = {int(k): int(v) for k, v in self.labels.items()}

    def node_count(self, type_name: str) -> int:
        return self.features[type_name].shape[0]

    @property
    def num_nodes(self) -> int:
        return sum(x.shape[0] for x in self.features.values())

    @property
    def num_edges(self) -> int:
        return sum(a.shape[0] for a in self.edges.values())

    def replace(self, features=None, edges=None, labels=None) -> "HetGraph":
        """Copy with some arrays swapped out (used by augmentation)."""
        return HetGraph(
            schema=self.schema,
            features=dict(features if features is not None else self.features),
            edges=dict(edges if edges is not None else self.edges),
            labels=dict(labels if labels is not None else self.labels),
        )


def validate(g: HetGraph) -> list[str]:
    """Check every HetGraph invariant; returns a list of violation messages.

    Empty list means the graph is valid. Violations name the invariant and
    its location; nothing is raised.
    """
    out = []
    dims = g.schema.feature_dims
    for t in g.schema.node_types:
        x = g.features[t.name]
        if x.shape[1] != dims[t.name]:
            out.append(
                f"dimension: features[{t.name!r}] has d={x.shape[1]}, schema says {dims[t.name]}"
            )
        if not np.all(np.isfinite(x)):
            out.append(f"finite: features[{t.name!r}] contains non-finite values")
    for e in g.schema.edge_types:
        a = g.edges[e.name]
        n_src = g.node_count(e.src)
        n_dst = g.node_count(e.dst)
        if a.shape[0]:
            bad_src = (a[:, 0] < 0) | (a[:, 0] >= n_src)
            bad_dst = (a[:, 1] < 0) | (a[:, 1] >= n_dst)
            for pos in np.flatnonzero(bad_src | bad_dst):
                out.append(
                    f"dangling: edges[{e.name!r}] row {pos} = {tuple(a[pos])} "
                    f"outside ({e.src}:{n_src}, {e.dst}:{n_dst})"
                )
    n_target = g.node_count(g.schema.target_type)
    for idx, cls in sorted(g.labels.items()):
        if not 0 <= idx < n_target:
            out.append(f"label: node index {idx} outside target type range [0, {n_target})")
        if not 0 <= cls < g.schema.num_classes:
            out.append(
                f"label: class {cls} on node {idx} outside [0, {g.schema.num_classes})"
            )
    return out


def type_counts(g: HetGraph) -> tuple[dict[str, int], dict[str, int]]:
    """Per-type node and edge counts, as (node_counts, edge_counts)."""
    nodes = {t.name: g.node_count(t.name) for t in g.schema.node_types}
    edges = {e.name: g.edges[e.name].shape[0] for e in g.schema.edge_types}
    return nodes, edges


# ---------------------------------------------------------------------------
# On-disk dataset format
# ---------------------------------------------------------------------------


def save_graph(g: HetGraph, out_dir) -> Path:
    """Write a graph as a dataset directory; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"nodes": {}, "edges": {}, "labels": "labels.csv"}
    for t in g.schema.node_types:
        fname = f"nodes_{t.name}.csv"
        files["nodes"][t.name] = fname
        x = g.features[t.name]
        with open(out / fname, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"f{j}" for j in range(t.dim)])
            for row in x:
                w.writerow([repr(float(v)) for v in row])
    for e in g.schema.edge_types:
        fname = f"edges_{e.name}.csv"
        files["edges"][e.name] = fname
        with open(out / fname, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["src", "dst"])
            for s, d in g.edges[e.name]:
                w.writerow([int(s), int(d)])
    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "class"])
        for idx in sorted(g.labels):
            w.writerow([idx, g.labels[idx]])
    manifest = dict(g.schema.to_dict(), files=files)
    mpath = out / MANIFEST_NAME
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return mpath


def _read_rows(path: Path):
    if not path.exists():
        raise DataFormatError(f"missing file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, header row required") from None
        yield header
        yield from reader


def load_graph(manifest_path) -> HetGraph:
    """Load and validate a dataset directory given its manifest path.

    The manifest path may also be the dataset directory itself. Malformed
    input raises DataFormatError naming the file and row. Multi-label
    sources are reduced to the first listed label per node.
    """
    mpath = Path(manifest_path)
    if mpath.is_dir():
        mpath = mpath / MANIFEST_NAME
    if not mpath.exists():
        raise DataFormatError(f"missing file: {mpath}")
    with open(mpath, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{mpath}: invalid JSON ({exc})") from exc
    try:
        schema = GraphSchema.from_dict(manifest)
        files = manifest["files"]
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{mpath}: missing manifest key {exc}") from exc
    base = mpath.parent

    features = {}
    for t in schema.node_types:
        fpath = base / files["nodes"][t.name]
        rows = _read_rows(fpath)
        next(rows)  # header
        mat = []
        for i, row in enumerate(rows, start=2):
            if len(row) != t.dim:
                raise DataFormatError(
                    f"{fpath}: row {i}: expected {t.dim} values for type "
                    f"{t.name!r}, got {len(row)}"
                )
            try:
                mat.append([float(v) for v in row])
            except ValueError as exc:
                raise DataFormatError(f"{fpath}: row {i}: {exc}") from exc
        features[t.name] = np.array(mat, dtype=np.float64).reshape(len(mat), t.dim)

    edges = {}
    for e in schema.edge_types:
        fpath = base / files["edges"][e.name]
        rows = _read_rows(fpath)
        next(rows)
        n_src = features[e.src].shape[0]
        n_dst = features[e.dst].shape[0]
        pairs = []
        for i, row in enumerate(rows, start=2):
            try:
                s, d = int(row[0]), int(row[1])
            except (ValueError, IndexError) as exc:
                raise DataFormatError(f"{fpath}: row {i}: {exc}") from exc
            if not (0 <= s < n_src and 0 <= d < n_dst):
                raise DataFormatError(
                    f"{fpath}: row {i}: dangling endpoint ({s}, {d}); "
                    f"{e.src} has {n_src} nodes, {e.dst} has {n_dst}"
                )
            pairs.append((s, d))
        edges[e.name] = np.array(pairs, dtype=np.int64).reshape(len(pairs), 2)

    labels = {}
    lpath = base / files["labels"]
    rows = _read_rows(lpath)
    next(rows)
    n_target = features[schema.target_type].shape[0]
    for i, row in enumerate(rows, start=2):
        try:
            idx, cls = int(row[0]), int(row[1])
        except (ValueError, IndexError) as exc:
            raise DataFormatError(f"{lpath}: row {i}: {exc}") from exc
        if not 0 <= idx < n_target:
            raise DataFormatError(
                f"{lpath}: row {i}: label on node {idx} outside target type "
                f"{schema.target_type!r} (count {n_target})"
            )
        if not 0 <= cls < schema.num_classes:
            raise DataFormatError(
                f"{lpath}: row {i}: class {cls} outside [0, {schema.num_classes})"
            )
        if idx not in labels:  # first listed label wins (multi-label reduction)
            labels[idx] = cls

    g = HetGraph(schema=schema, features=features, edges=edges, labels=labels)
    violations = validate(g)
    if violations:
        raise DataFormatError(f"{mpath}: invalid graph: " + "; ".join(violations))
    return g
