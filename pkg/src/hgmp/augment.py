"""Count-weighted heterogeneous graph augmentation.

Two structure-preserving perturbations, both steered by a global ratio ``r``:

* node masking: zero out the feature rows of selected nodes, topology intact;
* edge permutation: shuffle destination endpoints among a selected subset of
  one edge type, so per-type edge counts and destination multisets survive.

How much of each type gets perturbed follows a squared-count weighting: a
type with count c_i receives weight c_i^2 / sum_j c_j^2, which concentrates
perturbation on abundant types and all but exempts rare structural types.
A type-blind variant (weights proportional to plain counts, i.e. uniform
selection over the whole graph) is available for ablations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import HgmpError
from .hetgraph import HetGraph, type_counts

STRATEGIES = ("node_mask", "edge_permute")
RATIO_MODES = ("squared", "proportional")


@dataclass(frozen=True)
class AugmentConfig:
    """Ratio, per-view strategy assignment, and weighting mode."""

    ratio: float = 0.2
    view_strategies: tuple[tuple[str, ...], tuple[str, ...]] = (
        ("node_mask",),
        ("edge_permute",),
    )
    ratio_mode: str = "squared"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise HgmpError("augmentation ratio must lie in [0, 1]")
        if self.ratio_mode not in RATIO_MODES:
            raise HgmpError(f"ratio_mode must be one of {RATIO_MODES}")
        for strategies in self.view_strategies:
            if not strategies:
                raise HgmpError("each view needs at least one strategy")
            for s in strategies:
                if s not in STRATEGIES:
                    raise HgmpError(f"unknown strategy {s!r}")


@dataclass
class AugmentView:
    """An augmented graph copy plus the audit trail of what was perturbed."""

    graph: HetGraph
    masked_nodes: dict[str, np.ndarray] = field(default_factory=dict)
    permuted_edges: dict[str, np.ndarray] = field(default_factory=dict)
    seed: int = 0

    def audit_dict(self) -> dict:
        """JSON-serializable audit record."""
        return {
            "seed": int(self.seed),
            "masked_nodes": {t: v.tolist() for t, v in self.masked_nodes.items()},
            "permuted_edges": {t: v.tolist() for t, v in self.permuted_edges.items()},
        }


def _adjusted_ratios(counts: dict[str, int], mode: str) -> dict[str, float]:
    if any(c < 0 for c in counts.values()):
        raise HgmpError("counts must be nonnegative")
    power = 2.0 if mode == "squared" else 1.0
    weights = {t: float(c) ** power for t, c in counts.items()}
    total = math.fsum(weights.values())
    if total == 0.0:
        raise HgmpError("all counts are zero")
    return {t: w / total for t, w in weights.items()}


def adjusted_node_ratios(counts: dict[str, int], mode: str = "squared") -> dict[str, float]:
    """Squared-count share per node type: count(i)^2 / sum_j count(j)^2."""
    return _adjusted_ratios(counts, mode)


def adjusted_edge_ratios(counts: dict[str, int], mode: str = "squared") -> dict[str, float]:
    """Squared-count share per edge type, same form as the node variant."""
    return _adjusted_ratios(counts, mode)


def _round_half_up(x: float) -> int:
    # declared tie rule for "round to nearest"
    return int(math.floor(x + 0.5))


def num_to_mask(r: float, a_i: float, total_nodes: int, count_i: int) -> int:
    """Nodes to mask for one type: round(r * a_i * |V|), clamped to [0, count]."""
    return max(0, min(count_i, _round_half_up(r * a_i * total_nodes)))


def num_to_permute(r: float, b_i: float, total_edges: int, count_i: int) -> int:
    """Edges to permute for one type: round(r * b_i * |E|), clamped to [0, count]."""
    return max(0, min(count_i, _round_half_up(r * b_i * total_edges)))


def apply_node_masking(
    g: HetGraph, r: float, seed: int, ratio_mode: str = "squared"
) -> AugmentView:
    """Zero the feature rows of count-weighted node selections, per type.

    Selection is uniform without replacement within each type and
    deterministic for a fixed seed; structure is untouched.
    """
    if not 0.0 <= r <= 1.0:
        raise HgmpError("augmentation ratio must lie in [0, 1]")
    node_counts, _ = type_counts(g)
    ratios = adjusted_node_ratios(node_counts, ratio_mode)
    total = g.num_nodes
    rng = np.random.default_rng(seed)
    features = dict(g.features)
    masked = {}
    for t in g.schema.node_type_names:
        n = num_to_mask(r, ratios[t], total, node_counts[t])
        if n == 0:
            masked[t] = np.empty(0, dtype=np.int64)
            continue
        chosen = np.sort(rng.choice(node_counts[t], size=n, replace=False)).astype(np.int64)
        x = features[t].copy()
        x[chosen] = 0.0
        features[t] = x
        masked[t] = chosen
    return AugmentView(graph=g.replace(features=features), masked_nodes=masked, seed=seed)


def apply_edge_permutation(
    g: HetGraph, r: float, seed: int, ratio_mode: str = "squared"
) -> AugmentView:
    """Shuffle destination endpoints within a count-weighted edge selection.

    Per edge type, the selected positions' destinations are rearranged by a
    uniform random permutation; sources, counts, and the per-type multiset
    of destinations are preserved. Deterministic per seed.
    """
    if not 0.0 <= r <= 1.0:
        raise HgmpError("augmentation ratio must lie in [0, 1]")
    _, edge_counts = type_counts(g)
    if sum(edge_counts.values()) == 0:
        return AugmentView(
            graph=g.replace(),
            permuted_edges={e: np.empty(0, dtype=np.int64) for e in edge_counts},
            seed=seed,
        )
    ratios = adjusted_edge_ratios(edge_counts, ratio_mode)
    total = g.num_edges
    rng = np.random.default_rng(seed)
    edges = dict(g.edges)
    permuted = {}
    for e in edge_counts:
        n = num_to_permute(r, ratios[e], total, edge_counts[e])
        if n == 0:
            permuted[e] = np.empty(0, dtype=np.int64)
            continue
        positions = np.sort(rng.choice(edge_counts[e], size=n, replace=False)).astype(np.int64)
        arr = edges[e].copy()
        arr[positions, 1] = arr[positions, 1][rng.permutation(n)]
        edges[e] = arr
        permuted[e] = positions
    return AugmentView(graph=g.replace(edges=edges), permuted_edges=permuted, seed=seed)


def _view_seed(master: int, view_index: int, strategy_index: int) -> int:
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, view_index, strategy_index])
    return int(ss.generate_state(1)[0])


def _apply_strategies(
    g: HetGraph, strategies: tuple[str, ...], r: float, master: int, view_index: int,
    ratio_mode: str,
) -> AugmentView:
    view = AugmentView(graph=g, seed=_view_seed(master, view_index, 0))
    for j, strat in enumerate(strategies):
        seed = _view_seed(master, view_index, j)
        if strat == "node_mask":
            step = apply_node_masking(view.graph, r, seed, ratio_mode)
            view = AugmentView(
                graph=step.graph,
                masked_nodes=step.masked_nodes,
                permuted_edges=view.permuted_edges,
                seed=view.seed,
            )
        else:
            step = apply_edge_permutation(view.graph, r, seed, ratio_mode)
            view = AugmentView(
                graph=step.graph,
                masked_nodes=view.masked_nodes,
                permuted_edges=step.permuted_edges,
                seed=view.seed,
            )
    return view


def make_views(g: HetGraph, cfg: AugmentConfig) -> tuple[AugmentView, AugmentView]:
    """Produce the two independently seeded views used for contrastive pairs.

    Each view applies its configured strategies in declared order; sub-seeds
    are derived from ``cfg.seed`` so the pair is fully reproducible.
    """
    v1 = _apply_strategies(g, cfg.view_strategies[0], cfg.ratio, cfg.seed, 0, cfg.ratio_mode)
    v2 = _apply_strategies(g, cfg.view_strategies[1], cfg.ratio, cfg.seed, 1, cfg.ratio_mode)
    return v1, v2


def with_seed(cfg: AugmentConfig, seed: int) -> AugmentConfig:
    """Copy of ``cfg`` with a different master seed."""
    return replace(cfg, seed=seed)
