"""Synthetic planted-class heterogeneous graphs for desk-scale experiments.

The generator plants a class signal of strength ``s`` in two places: feature
means (per-class directions scaled by ``s``) and wiring (a target node picks
same-class auxiliary neighbors with probability ``s``, uniform otherwise).
At ``s = 0`` features are pure noise and wiring is uniform, so any classifier
should sit at chance. Types listed in ``distractor_types`` carry high-variance
featureless noise and uniform wiring regardless of ``s``; they exist to give
type-aware components something to suppress.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import HgmpError
from .hetgraph import EdgeType, GraphSchema, HetGraph, NodeType


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and signal parameters for one generated graph."""

    node_counts: dict[str, int]
    feature_dims: dict[str, int]
    target_type: str
    num_classes: int
    signal: float
    edges_per_target: dict[str, int]
    distractor_types: tuple[str, ...] = ()
    distractor_scale: float = 5.0
    class_sep: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.target_type not in self.node_counts:
            raise HgmpError(f"target type {self.target_type!r} missing from node_counts")
        if set(self.node_counts) != set(self.feature_dims):
            raise HgmpError("node_counts and feature_dims must declare the same types")
        if any(c <= 0 for c in self.node_counts.values()):
            raise HgmpError("all node counts must be > 0")
        if any(d <= 0 for d in self.feature_dims.values()):
            raise HgmpError("all feature dims must be > 0")
        if self.num_classes < 2:
            raise HgmpError("num_classes must be >= 2")
        if not 0.0 <= self.signal <= 1.0:
            raise HgmpError("signal strength must lie in [0, 1]")
        for t, m in self.edges_per_target.items():
            if t not in self.node_counts or t == self.target_type:
                raise HgmpError(f"edges_per_target key {t!r} is not an auxiliary type")
            if m < 0:
                raise HgmpError("edges_per_target values must be >= 0")
        for t in self.distractor_types:
            if t not in self.node_counts:
                raise HgmpError(f"distractor type {t!r} not declared")

    def schema(self) -> GraphSchema:
        node_types = tuple(
            NodeType(name, self.feature_dims[name]) for name in self.node_counts
        )
        edge_types = tuple(
            EdgeType(f"{self.target_type}_{aux}", self.target_type, aux)
            for aux in self.edges_per_target
        )
        return GraphSchema(
            node_types=node_types,
            edge_types=edge_types,
            target_type=self.target_type,
            num_classes=self.num_classes,
        )

    def to_dict(self) -> dict:
        return {
            "node_counts": dict(self.node_counts),
            "feature_dims": dict(self.feature_dims),
            "target_type": self.target_type,
            "num_classes": self.num_classes,
            "signal": self.signal,
            "edges_per_target": dict(self.edges_per_target),
            "distractor_types": list(self.distractor_types),
            "distractor_scale": self.distractor_scale,
            "class_sep": self.class_sep,
            "seed": self.seed,
        }

    def replace(self, **changes) -> "SyntheticSpec":
        return dataclasses.replace(self, **changes)

    @staticmethod
    def from_dict(d: dict) -> "SyntheticSpec":
        return SyntheticSpec(
            node_counts={k: int(v) for k, v in d["node_counts"].items()},
            feature_dims={k: int(v) for k, v in d["feature_dims"].items()},
            target_type=d["target_type"],
            num_classes=int(d["num_classes"]),
            signal=float(d["signal"]),
            edges_per_target={k: int(v) for k, v in d["edges_per_target"].items()},
            distractor_types=tuple(d.get("distractor_types", ())),
            distractor_scale=float(d.get("distractor_scale", 5.0)),
            class_sep=float(d.get("class_sep", 3.0)),
            seed=int(d.get("seed", 0)),
        )


def _balanced_classes(n: int, c: int, rng: np.random.Generator) -> np.ndarray:
    reps = -(-n // c)
    assign = np.tile(np.arange(c), reps)[:n]
    rng.shuffle(assign)
    return assign


def _class_directions(dim: int, c: int, rng: np.random.Generator) -> np.ndarray:
    """One unit direction per class, orthonormal when dim >= c."""
    raw = rng.standard_normal((dim, max(c, 1)))
    if dim >= c:
        q, _ = np.linalg.qr(raw)
        return q[:, :c].T
    dirs = raw.T[:c]
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def generate_synthetic(spec: SyntheticSpec) -> HetGraph:
    """Deterministically generate a planted-class graph from ``spec``.

    Target features are ``class_sep * signal`` along a per-class direction
    plus unit-variance gaussian noise; non-distractor auxiliary types get
    the same treatment against their own latent class assignment. Each
    target node draws ``edges_per_target[aux]`` edges to each auxiliary
    type, picking a same-class neighbor with probability ``signal``.
    """
    schema = spec.schema()
    rng = np.random.default_rng(spec.seed)

    classes = {
        name: _balanced_classes(count, spec.num_classes, rng)
        for name, count in spec.node_counts.items()
    }

    features = {}
    for name, count in spec.node_counts.items():
        d = spec.feature_dims[name]
        noise = rng.standard_normal((count, d))
        if name in spec.distractor_types:
            features[name] = spec.distractor_scale * noise
            continue
        dirs = _class_directions(d, spec.num_classes, rng)
        shift = spec.class_sep * spec.signal * dirs[classes[name]]
        features[name] = shift + noise

    target = spec.target_type
    n_target = spec.node_counts[target]
    edges = {}
    for aux, per_node in spec.edges_per_target.items():
        n_aux = spec.node_counts[aux]
        pools = [np.flatnonzero(classes[aux] == c) for c in range(spec.num_classes)]
        assortative = spec.signal > 0 and aux not in spec.distractor_types
        pairs = np.empty((n_target * per_node, 2), dtype=np.int64)
        k = 0
        for v in range(n_target):
            pool = pools[classes[target][v]]
            for _ in range(per_node):
                if assortative and pool.size and rng.random() < spec.signal:
                    dst = int(pool[rng.integers(pool.size)])
                else:
                    dst = int(rng.integers(n_aux))
                pairs[k] = (v, dst)
                k += 1
        edges[f"{target}_{aux}"] = pairs

    labels = {int(v): int(classes[target][v]) for v in range(n_target)}
    return HetGraph(schema=schema, features=features, edges=edges, labels=labels)
