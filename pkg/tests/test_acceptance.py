"""Release gate: the eleven shipping criteria, one test per criterion.

Every test asserts its documented tolerance or runtime budget and prints a
single PASS line carrying the measured numbers (visible under ``pytest -s``
or in the captured-output section). The desk benchmark behind criteria 9
and 10 runs once in module-scoped fixtures; its wall clock is asserted
against the stated budget. Oracles here are deliberately independent of the
package internals: python-set BFS, two-loop loss evaluation, closed forms,
central finite differences, and hand confusion matrices.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest
import torch

from conftest import random_hetgraph, two_type_graph
from hgmp.augment import (
    adjusted_edge_ratios,
    adjusted_node_ratios,
    apply_edge_permutation,
    apply_node_masking,
    num_to_mask,
    num_to_permute,
)
from hgmp.cli import main
from hgmp.config import RunConfig
from hgmp.encoder import PackedGraphs, freeze, init_encoder, save_encoder
from hgmp.experiments import (
    build_tasks,
    check_ablation_ordering,
    evaluate_encoder,
    expected_chance_band,
    macro_f1,
    micro_f1,
    pretrain_encoder,
    run_ablation,
)
from hgmp.pretrain import contrastive_loss
from hgmp.prompt import init_head, init_prompts, score_many, tune
from hgmp.synthetic import SyntheticSpec, generate_synthetic
from hgmp.taskbuilder import (
    build_node_tasks,
    edge_induced_subgraph,
    node_induced_subgraph,
    sample_k_shot,
)

# ---------------------------------------------------------------------------
# Desk benchmark constants (criteria 9 and 10)
# ---------------------------------------------------------------------------
# Planted 3-class graph, ~600 target nodes, 3 auxiliary types. The "term"
# type is an abundant high-variance distractor wired uniformly at random:
# suppressible by trainable prompts, and exactly what the squared ratio
# concentrates masking on. The rare "subject" type carries clean signal.

BENCH_SPEC = SyntheticSpec(
    node_counts={"target": 600, "author": 240, "subject": 18, "term": 300},
    feature_dims={"target": 16, "author": 12, "subject": 8, "term": 16},
    target_type="target",
    num_classes=3,
    signal=0.9,
    edges_per_target={"author": 4, "subject": 2, "term": 6},
    distractor_types=("term",),
    distractor_scale=8.0,
    class_sep=2.0,
    seed=20250814,
)

BENCH_CONFIG = RunConfig(
    tau=1,
    shots=10,
    epochs=8,
    batch_size=128,
    pretrain_lr=0.01,
    pretrain_optimizer="adam",
    augment_ratio=0.4,
    tune_steps=200,
    tune_lr=0.05,
    tune_optimizer="adam",
    seeds=(0, 1, 2, 3, 4),
)


@pytest.fixture(scope="module")
def desk_benchmark():
    t0 = time.perf_counter()
    g = generate_synthetic(BENCH_SPEC)
    results = run_ablation(g, "node", BENCH_CONFIG)
    return {"results": results, "elapsed": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def null_control():
    t0 = time.perf_counter()
    g = generate_synthetic(BENCH_SPEC.replace(signal=0.0))
    cfg = BENCH_CONFIG.with_overrides(seeds=tuple(range(20)))
    tasks = build_tasks(g, "node", cfg)
    encoder, _ = pretrain_encoder(g, cfg)
    result = evaluate_encoder(encoder, tasks, "node", cfg)
    return {"result": result, "elapsed": time.perf_counter() - t0}


# ---------------------------------------------------------------------------
# Criterion 1: ratio algebra
# ---------------------------------------------------------------------------


def test_criterion_01_ratio_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    for trial in range(1000):
        m = int(rng.integers(1, 7))
        counts = {f"t{i}": int(rng.integers(1, 100_001)) for i in range(m)}
        fn = adjusted_node_ratios if trial % 2 == 0 else adjusted_edge_ratios
        ratios = fn(counts, "squared")
        assert abs(math.fsum(ratios.values()) - 1.0) <= 1e-12
        # 3x scaling keeps every square below 2**53, so the quotients are
        # bit-identical, not merely close
        scaled = {t: 3 * c for t, c in counts.items()}
        assert fn(scaled, "squared") == ratios
    for m in range(1, 7):
        uniform = adjusted_node_ratios({f"t{i}": 17 for i in range(m)})
        assert all(v == 1.0 / m for v in uniform.values())
    hand = adjusted_node_ratios({"A": 3, "B": 4})
    assert hand == {"A": 0.36, "B": 0.64}

    # 56 subject nodes among 10,942 across 4 types; the adjusted subject
    # ratio is largest when the other three counts minimize their sum of
    # squares, so sweep the largest part with the inner pair balanced
    others = 10_942 - 56
    n1 = np.arange(1, others - 1, dtype=np.int64)
    rest = others - n1
    lo = rest // 2
    sq_sums = n1**2 + lo**2 + (rest - lo) ** 2
    i = int(np.argmin(sq_sums))
    worst_counts = {
        "subject": 56,
        "paper": int(n1[i]),
        "author": int(lo[i]),
        "term": int(rest[i] - lo[i]),
    }
    bound = adjusted_node_ratios(worst_counts)["subject"]
    assert bound < 1e-4
    assert abs(bound - 56**2 / (56**2 + int(sq_sums[i]))) <= 1e-18

    dt = time.perf_counter() - t0
    assert dt < 5.0
    print(f"PASS criterion 1: 1000 maps sum/scale/uniform ok; hand case exact; "
          f"worst subject ratio {bound:.3e} < 1e-4; {dt:.2f}s < 5s")


# ---------------------------------------------------------------------------
# Criterion 2: count formulas
# ---------------------------------------------------------------------------


def test_criterion_02_count_formulas():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    for trial in range(1000):
        if trial % 10 == 8:
            r = 0.0
        elif trial % 10 == 9:
            r = 1.0
        else:
            r = float(rng.uniform())
        a = float(rng.uniform())
        total = int(rng.integers(1, 100_001))
        count = int(rng.integers(0, total + 1))
        want = min(count, max(0, math.floor(r * a * total + 0.5)))
        assert num_to_mask(r, a, total, count) == want
        assert num_to_permute(r, a, total, count) == want
    dt = time.perf_counter() - t0
    assert dt < 1.0
    print(f"PASS criterion 2: 1000 inputs match round-then-clamp incl r in {{0,1}}; "
          f"{dt:.2f}s < 1s")


# ---------------------------------------------------------------------------
# Criterion 3: augmentation structure preservation
# ---------------------------------------------------------------------------


def test_criterion_03_structure_preservation():
    t0 = time.perf_counter()
    ratios = (0.0, 0.3, 0.7, 1.0)
    for i in range(100):
        g = random_hetgraph(seed=3000 + i, max_nodes=200, max_types=4)
        r = ratios[i % 4]

        mv = apply_node_masking(g, r, seed=i)
        assert set(mv.graph.edges) == set(g.edges)
        for e in g.edges:
            assert np.array_equal(mv.graph.edges[e], g.edges[e])
        mv2 = apply_node_masking(g, r, seed=i)
        for t in g.features:
            assert np.array_equal(mv.graph.features[t], mv2.graph.features[t])

        pv = apply_edge_permutation(g, r, seed=i)
        for e in g.edges:
            a, b = g.edges[e], pv.graph.edges[e]
            assert a.shape == b.shape
            assert np.array_equal(np.sort(a[:, 1]), np.sort(b[:, 1]))
        pv2 = apply_edge_permutation(g, r, seed=i)
        for e in g.edges:
            assert np.array_equal(pv.graph.edges[e], pv2.graph.edges[e])
    dt = time.perf_counter() - t0
    assert dt < 30.0
    print(f"PASS criterion 3: 100 graphs, topology/counts/dest-multisets/"
          f"determinism preserved; {dt:.2f}s < 30s")


# ---------------------------------------------------------------------------
# Criterion 4: subgraph oracle
# ---------------------------------------------------------------------------


def _undirected_adjacency(g):
    adj: dict[tuple, set] = {}
    for e in g.schema.edge_types:
        for s, d in g.edges[e.name]:
            a, b = (e.src, int(s)), (e.dst, int(d))
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
    return adj


def _brute_ball(adj, seeds, tau):
    seen = set(seeds)
    frontier = set(seeds)
    for _ in range(tau):
        nxt = set()
        for v in frontier:
            nxt |= adj.get(v, set())
        frontier = nxt - seen
        seen |= frontier
    return seen


def _brute_internal_edges(g, nodes):
    out = []
    for e in g.schema.edge_types:
        for s, d in g.edges[e.name]:
            if (e.src, int(s)) in nodes and (e.dst, int(d)) in nodes:
                out.append((e.name, int(s), int(d)))
    return sorted(out)


def _subgraph_in_parent_terms(sub):
    nodes = {(t, int(p)) for t, arr in sub.node_map.items() for p in arr}
    edges = []
    for e in sub.graph.schema.edge_types:
        for ls, ld in sub.graph.edges[e.name]:
            edges.append((
                e.name,
                int(sub.node_map[e.src][int(ls)]),
                int(sub.node_map[e.dst][int(ld)]),
            ))
    return nodes, sorted(edges)


def test_criterion_04_subgraph_oracle():
    t0 = time.perf_counter()
    queries = 0
    for gi in range(20):
        g = random_hetgraph(seed=4000 + gi, max_nodes=50, max_types=3)
        adj = _undirected_adjacency(g)
        rng = np.random.default_rng(900 + gi)
        nonempty = [e for e in g.schema.edge_types if g.edges[e.name].shape[0] > 0]

        node_budget = 5 if nonempty else 10
        for q in range(node_budget):
            t = g.schema.node_type_names[int(rng.integers(len(g.schema.node_type_names)))]
            v = int(rng.integers(g.node_count(t)))
            tau = 1 + (queries % 3)
            sub = node_induced_subgraph(g, (t, v), tau=tau)
            want_nodes = _brute_ball(adj, [(t, v)], tau)
            got_nodes, got_edges = _subgraph_in_parent_terms(sub)
            assert got_nodes == want_nodes
            assert got_edges == _brute_internal_edges(g, want_nodes)
            queries += 1

        for q in range(10 - node_budget):
            e = nonempty[int(rng.integers(len(nonempty)))]
            pos = int(rng.integers(g.edges[e.name].shape[0]))
            tau = 1 + (queries % 3)
            sub = edge_induced_subgraph(g, (e.name, pos), tau=tau)
            s, d = g.edges[e.name][pos]
            want_nodes = _brute_ball(adj, [(e.src, int(s)), (e.dst, int(d))], tau)
            got_nodes, got_edges = _subgraph_in_parent_terms(sub)
            assert got_nodes == want_nodes
            assert got_edges == _brute_internal_edges(g, want_nodes)
            queries += 1

    assert queries == 200
    dt = time.perf_counter() - t0
    assert dt < 10.0
    print(f"PASS criterion 4: 200 node/edge queries equal brute-force BFS "
          f"exactly; {dt:.2f}s < 10s")


# ---------------------------------------------------------------------------
# Criterion 5: contrastive loss
# ---------------------------------------------------------------------------


def _brute_force_loss(z: np.ndarray, temperature: float) -> float:
    zn = z / np.linalg.norm(z, axis=1, keepdims=True)
    n = z.shape[0]
    total = 0.0
    for i in range(n):
        num = math.exp(float(zn[i] @ zn[i ^ 1]) / temperature)
        den = 0.0
        for k in range(n):
            if k != i:
                den += math.exp(float(zn[i] @ zn[k]) / temperature)
        total += -math.log(num / den)
    return total / n


def test_criterion_05_contrastive_loss():
    rng = np.random.default_rng(505)
    single = torch.tensor(rng.standard_normal((2, 5)))
    assert float(contrastive_loss(single, 0.5)) == 0.0

    ortho = torch.eye(8, dtype=torch.float64)[:6]
    got = float(contrastive_loss(ortho, 1.0))
    assert abs(got - _brute_force_loss(ortho.numpy(), 1.0)) <= 1e-6
    assert abs(got - math.log(5.0)) <= 1e-9

    for temp in (0.2, 0.5, 1.0):
        z = torch.tensor(rng.standard_normal((8, 5)))
        assert abs(float(contrastive_loss(z, temp))
                   - _brute_force_loss(z.numpy(), temp)) <= 1e-6

    z = torch.tensor(rng.standard_normal((10, 4)))
    base = float(contrastive_loss(z, 0.5))
    assert abs(float(contrastive_loss(3.7 * z, 0.5)) - base) <= 1e-9
    row_scales = torch.tensor(rng.uniform(0.1, 10.0, size=(10, 1)))
    assert abs(float(contrastive_loss(z * row_scales, 0.5)) - base) <= 1e-9

    print("PASS criterion 5: N=1 exactly 0; orthonormal batch matches brute "
          "force within 1e-6 (and log(2N-1)); scale invariance within 1e-9")


# ---------------------------------------------------------------------------
# Criterion 6: gradient checks
# ---------------------------------------------------------------------------


def _central_fd(loss_fn, named_params, h=1e-5):
    grads = {}
    with torch.no_grad():
        for name, p in named_params:
            flat = p.data.view(-1)
            out = torch.zeros(flat.numel(), dtype=torch.float64)
            for k in range(flat.numel()):
                orig = float(flat[k])
                flat[k] = orig + h
                up = loss_fn()
                flat[k] = orig - h
                down = loss_fn()
                flat[k] = orig
                out[k] = (up - down) / (2.0 * h)
            grads[name] = out.view_as(p.data)
    return grads


def _assert_grads_match(analytic, fd, label):
    worst = 0.0
    for name, a in analytic.items():
        f = fd[name]
        diff = (a - f).abs()
        denom = torch.maximum(a.abs(), f.abs())
        bad = (diff > 1e-8) & (diff > 1e-3 * denom)
        assert not bool(bad.any()), (
            f"{label} {name}: finite differences disagree, "
            f"max abs diff {float(diff.max()):.3e}"
        )
        with_rel = diff[denom > 1e-8] / denom[denom > 1e-8]
        if with_rel.numel():
            worst = max(worst, float(with_rel.max()))
    return worst


def _view_batch():
    """Four small graphs (two items x two augmented views), 7 nodes each."""
    g = two_type_graph()
    g2 = g.replace(features={t: 0.5 * x + 0.1 for t, x in g.features.items()})
    return [
        apply_node_masking(g, 0.4, seed=1).graph,
        apply_edge_permutation(g, 0.6, seed=2).graph,
        apply_node_masking(g2, 0.4, seed=3).graph,
        apply_edge_permutation(g2, 0.6, seed=4).graph,
    ]


def test_criterion_06_gradient_checks():
    t0 = time.perf_counter()
    packed = PackedGraphs(_view_batch())
    schema = two_type_graph().schema
    worst = 0.0

    for backbone in ("gcn", "gat"):
        enc = init_encoder(schema, hidden_dim=6, proj_dim=3, num_layers=2,
                           backbone=backbone, seed=11)

        def loss():
            return contrastive_loss(enc.project(enc.embed(packed)), 0.5)

        loss().backward()
        named = [(n, p) for n, p in enc.named_parameters()]
        analytic = {n: p.grad.detach().clone() for n, p in named}
        fd = _central_fd(lambda: float(loss()), named)
        worst = max(worst, _assert_grads_match(analytic, fd, f"contrastive/{backbone}"))

    enc = freeze(init_encoder(schema, hidden_dim=6, proj_dim=3, seed=5))
    bank = init_prompts(schema, mode="random", seed=7)
    head = init_head(6, 2, seed=3)
    labels = torch.tensor([0, 1, 0, 1])

    def ce():
        z = enc.embed(packed, features_override=bank.transform_packed(packed))
        return torch.nn.functional.cross_entropy(head(z), labels)

    ce().backward()
    named = [(n, p) for n, p in bank.named_parameters()]
    analytic = {n: p.grad.detach().clone() for n, p in named}
    fd = _central_fd(lambda: float(ce()), named)
    worst = max(worst, _assert_grads_match(analytic, fd, "cross-entropy/prompts"))

    dt = time.perf_counter() - t0
    assert dt < 120.0
    print(f"PASS criterion 6: analytic vs central differences, worst rel err "
          f"{worst:.2e} < 1e-3 (encoder+head, every prompt vector); {dt:.1f}s < 120s")


# ---------------------------------------------------------------------------
# Criterion 7: prompt identity and freezing
# ---------------------------------------------------------------------------


def test_criterion_07_prompt_identity_and_freezing(tmp_path):
    spec = SyntheticSpec(
        node_counts={"t": 40, "a": 16},
        feature_dims={"t": 6, "a": 4},
        target_type="t",
        num_classes=2,
        signal=0.8,
        edges_per_target={"a": 2},
        seed=7,
    )
    g = generate_synthetic(spec)
    tasks = build_node_tasks(g, tau=1)

    enc = freeze(init_encoder(g.schema, hidden_dim=8, proj_dim=4, seed=1))
    head = init_head(8, 2, seed=2)
    ones_bank = init_prompts(g.schema, mode="ones")

    items = tasks[:6]
    prompted = score_many(items, enc, ones_bank, head)
    packed = PackedGraphs([s.graph for s in items])
    with torch.no_grad():
        plain = head(enc.embed(packed)).numpy()
    max_dev = float(np.abs(prompted - plain).max())
    assert max_dev <= 1e-12

    before = tmp_path / "before.ckpt"
    after = tmp_path / "after.ckpt"
    save_encoder(enc, before)
    task = sample_k_shot(tasks, k=2, seed=0)
    tune(task, enc, init_prompts(g.schema), init_head(8, 2, seed=4),
         steps=500, lr=0.05)
    save_encoder(enc, after)
    assert before.read_bytes() == after.read_bytes()

    print(f"PASS criterion 7: all-ones prompts reproduce scores within 1e-12 "
          f"(max dev {max_dev:.1e}); checkpoint bytes identical after 500 steps")


# ---------------------------------------------------------------------------
# Criterion 8: metric oracle
# ---------------------------------------------------------------------------


def test_criterion_08_metric_oracle():
    assert micro_f1([2, 0, 1], [2, 0, 1]) == 1.0
    assert macro_f1([2, 0, 1], [2, 0, 1]) == 1.0

    # confusion for golds [0,0,1,1] vs preds [0,1,0,1]: one hit per class,
    # per-class precision = recall = 0.5, so both averages are 0.5
    assert micro_f1([0, 1, 0, 1], [0, 0, 1, 1]) == 0.5
    assert macro_f1([0, 1, 0, 1], [0, 0, 1, 1]) == 0.5

    # all-one predictions on balanced golds: predicted class has precision
    # 1/2 and recall 1 (F1 = 2/3), the other class scores 0
    assert micro_f1([1, 1, 1, 1], [0, 1, 0, 1]) == 0.5
    assert macro_f1([1, 1, 1, 1], [0, 1, 0, 1]) == (2.0 / 3.0) / 2.0

    rng = np.random.default_rng(808)
    for _ in range(100):
        n = int(rng.integers(1, 51))
        c = int(rng.integers(2, 7))
        preds = rng.integers(0, c, size=n)
        golds = rng.integers(0, c, size=n)
        assert micro_f1(preds, golds, c) == float(np.mean(preds == golds))

    print("PASS criterion 8: three hand confusion-matrix cases exact; "
          "micro == accuracy on 100 random cases")


# ---------------------------------------------------------------------------
# Criteria 9 and 10: desk benchmark and ablation ordering
# ---------------------------------------------------------------------------


def test_criterion_09_desk_benchmark(desk_benchmark, null_control):
    res = desk_benchmark["results"]
    hgmp, v1 = res["HGMP"], res["VARIANT 1"]
    assert hgmp.mean_micro >= 0.80
    assert hgmp.mean_micro >= v1.mean_micro

    null = null_control["result"]
    assert len(null.micro) == 20
    band = 3.0 * null.std_micro
    assert abs(null.mean_micro - 1.0 / 3.0) <= band
    assert expected_chance_band(3, null.micro)

    total = desk_benchmark["elapsed"] + null_control["elapsed"]
    assert total < 600.0
    print(f"PASS criterion 9: HGMP micro {hgmp.mean_micro:.3f} >= 0.80 and >= "
          f"VARIANT 1 {v1.mean_micro:.3f}; null mean {null.mean_micro:.4f} "
          f"within 3 std ({band:.4f}) of 1/3; {total:.0f}s < 600s")


def test_criterion_10_ablation_ordering(desk_benchmark):
    res = desk_benchmark["results"]
    pairs = (
        ("HGMP", "VARIANT 2"),
        ("HGMP", "VARIANT 3"),
        ("VARIANT 2", "VARIANT 1"),
        ("VARIANT 3", "VARIANT 1"),
    )
    gaps = []
    for hi, lo in pairs:
        a, b = res[hi], res[lo]
        assert len(a.micro) >= 5 and len(b.micro) >= 5
        gap = a.mean_micro - b.mean_micro
        slack = max(a.std_micro, b.std_micro)
        assert gap >= -slack, f"{hi} trails {lo} by more than one std"
        gaps.append(f"{hi}-{lo} {gap:+.3f}")
    assert check_ablation_ordering(res) == []
    print(f"PASS criterion 10: ordering holds over 5 seeds ({'; '.join(gaps)})")


# ---------------------------------------------------------------------------
# Criterion 11: command-line determinism
# ---------------------------------------------------------------------------


def test_criterion_11_cli_determinism(tmp_path):
    spec = {
        "node_counts": {"t": 48, "a": 16, "b": 8},
        "feature_dims": {"t": 6, "a": 5, "b": 4},
        "target_type": "t",
        "num_classes": 2,
        "signal": 0.9,
        "edges_per_target": {"a": 2, "b": 1},
        "seed": 11,
    }
    cfg = {
        "tau": 1, "shots": 2, "hidden_dim": 8, "proj_dim": 4,
        "epochs": 2, "batch_size": 16, "tune_steps": 10, "seeds": [0, 1],
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    data = tmp_path / "data"
    assert main(["synth", "--spec", str(spec_path), "--out", str(data)]) == 0

    def run_twice(argv_for):
        dirs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{argv_for[0]}_{tag}"
            assert main(argv_for + ["--out", str(out)]) == 0
            dirs.append(out)
        names = sorted(p.name for p in dirs[0].iterdir())
        assert names == sorted(p.name for p in dirs[1].iterdir())
        for name in names:
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name
        return dirs[0], names

    pre_dir, pre_files = run_twice(
        ["pretrain", "--data", str(data), "--config", str(cfg_path)])
    _, eval_files = run_twice(
        ["tune-eval", "--data", str(data), "--config", str(cfg_path),
         "--encoder", str(pre_dir / "encoder.ckpt")])

    print(f"PASS criterion 11: byte-identical reruns "
          f"(pretrain: {', '.join(pre_files)}; tune-eval: {', '.join(eval_files)})")
