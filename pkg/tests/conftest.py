"""Shared builders for the test suite.

The random graph builder is intentionally independent of the synthetic
generator in the package: property tests should not inherit its structure.
"""

from __future__ import annotations

import numpy as np
import pytest

from hgmp.hetgraph import EdgeType, GraphSchema, HetGraph, NodeType


def random_hetgraph(seed: int, max_nodes: int = 50, max_types: int = 3,
                    num_classes: int = 3, feature_dim: int | None = None,
                    self_edges: bool = True) -> HetGraph:
    """A random valid heterogeneous graph with labels on the target type.

    Node counts, feature dims, edge types, and wiring are all drawn from the
    seed; every node type gets at least one node so packing never sees an
    empty type.
    """
    rng = np.random.default_rng(seed)
    n_types = int(rng.integers(1, max_types + 1))
    names = [f"t{i}" for i in range(n_types)]
    counts = {t: int(rng.integers(1, max(2, max_nodes // n_types) + 1)) for t in names}
    dims = {t: feature_dim or int(rng.integers(2, 7)) for t in names}
    node_types = tuple(NodeType(t, dims[t]) for t in names)

    edge_types = []
    edges = {}
    pairs = [(a, b) for a in names for b in names if self_edges or a != b]
    rng.shuffle(pairs)
    for a, b in pairs[: int(rng.integers(1, len(pairs) + 1))]:
        ename = f"{a}__{b}"
        m = int(rng.integers(0, 4 * max(counts[a], counts[b]) + 1))
        src = rng.integers(0, counts[a], size=m)
        dst = rng.integers(0, counts[b], size=m)
        edge_types.append(EdgeType(ename, a, b))
        edges[ename] = np.stack([src, dst], axis=1).astype(np.int64)

    target = names[0]
    schema = GraphSchema(node_types, tuple(edge_types), target, num_classes)
    features = {
        t: rng.standard_normal((counts[t], dims[t])).astype(np.float64) for t in names
    }
    n_labeled = int(rng.integers(0, counts[target] + 1))
    labeled = rng.choice(counts[target], size=n_labeled, replace=False)
    labels = {int(v): int(rng.integers(0, num_classes)) for v in labeled}
    return HetGraph(schema=schema, features=features, edges=edges, labels=labels)


def two_type_graph() -> HetGraph:
    """Small fixed graph: 4 papers (target, labeled) and 3 authors.

    paper-author wiring:  p0-a0, p1-a0, p1-a1, p2-a1, p3-a2
    paper-paper citation: p0->p1, p2->p3
    """
    schema = GraphSchema(
        node_types=(NodeType("paper", 3), NodeType("author", 2)),
        edge_types=(
            EdgeType("writes", "author", "paper"),
            EdgeType("cites", "paper", "paper"),
        ),
        target_type="paper",
        num_classes=2,
    )
    features = {
        "paper": np.arange(12, dtype=np.float64).reshape(4, 3),
        "author": np.arange(6, dtype=np.float64).reshape(3, 2) + 100.0,
    }
    edges = {
        "writes": np.array([[0, 0], [0, 1], [1, 1], [1, 2], [2, 3]], dtype=np.int64),
        "cites": np.array([[0, 1], [2, 3]], dtype=np.int64),
    }
    labels = {0: 0, 1: 0, 2: 1, 3: 1}
    return HetGraph(schema=schema, features=features, edges=edges, labels=labels)


def path_graph(n: int = 6) -> HetGraph:
    """Single-type directed path 0 -> 1 -> ... -> n-1 with 1-d features."""
    schema = GraphSchema(
        node_types=(NodeType("v", 1),),
        edge_types=(EdgeType("next", "v", "v"),),
        target_type="v",
        num_classes=2,
    )
    feats = {"v": np.arange(n, dtype=np.float64).reshape(n, 1)}
    edges = {"next": np.stack([np.arange(n - 1), np.arange(1, n)], axis=1).astype(np.int64)}
    labels = {i: i % 2 for i in range(n)}
    return HetGraph(schema=schema, features=feats, edges=edges, labels=labels)


@pytest.fixture
def tiny_graph() -> HetGraph:
    return two_type_graph()


@pytest.fixture
def line_graph() -> HetGraph:
    return path_graph()
