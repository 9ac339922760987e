"""Acceptance criteria 1-9, one test each, at the stated tolerances.

Every test prints a PASS/FAIL line; the lines are repeated in the terminal summary.
"""

import math
import time
from collections import defaultdict, deque

import numpy as np
import pytest

from conftest import A1, A2, WALKTHROUGH, build_graph, random_action, random_window, record_criterion
from slicexplain.agent import RewardConfig, reward
from slicexplain.core import NUM_ATTRS, MultiModalAction
from slicexplain.explain import (
    CATEGORY_ORDER,
    TransitionRecord,
    build_transitions,
    category_fractions,
    fit_distill_tree,
    shapley_scores,
)
from slicexplain.graph import AttributedGraph, expected_reward
from slicexplain.pipeline import (
    ExperimentConfig,
    compare_traces,
    explain_trace,
    load_trace,
    preset,
    rebuild_graph,
    run_experiment,
    trace_actions_windows,
)

SEEDS = range(5)
RUN_LIMIT_S = 120.0


@pytest.fixture(scope="module")
def steering_runs(tmp_path_factory):
    """Baseline and steered runs for both profiles over five seeds (default duration)."""
    root = tmp_path_factory.mktemp("steering")
    runs, times = {}, {}
    for seed in SEEDS:
        for name in ("ht-trf1-b-10", "ht-trf1-a3-10", "ll-trf1-b-10", "ll-trf1-a2-10"):
            cfg = preset(name, seed=seed, output_dir=str(root / name / f"seed{seed}"))
            t0 = time.perf_counter()
            res = run_experiment(cfg)
            times[(name, seed)] = time.perf_counter() - t0
            runs[(name, seed)] = res
    return runs, times


# -- 1 -----------------------------------------------------------------------
def test_criterion_1_graph_oracle():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(policy="replay", replay_actions=WALKTHROUGH, duration=3, warmup=0)
    res = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    g = res.graph
    _, windows = trace_actions_windows(res.records)
    merged_ok = all(
        len(g.node(A1).samples[p]) == 2
        and np.array_equal(g.node(A1).samples[p][0], windows[0].attribute_samples()[p])
        and np.array_equal(g.node(A1).samples[p][1], windows[2].attribute_samples()[p])
        for p in range(NUM_ATTRS)
    )
    ok = (
        set(g.nodes) == {A1, A2}
        and g.edges == {(A1, A2): 1, (A2, A1): 1}
        and g.node(A1).occurrence_count == 2
        and g.node(A2).occurrence_count == 1
        and merged_ok
        and elapsed < 1.0
    )
    record_criterion(1, "graph oracle", ok, f"nodes={len(g.nodes)} edges={len(g.edges)} t={elapsed:.3f}s")
    assert ok


# -- 2 -----------------------------------------------------------------------
def test_criterion_2_transition_partition(steering_runs):
    runs, _ = steering_runs
    worst = 0.0
    checked = 0
    ok = True
    for res in runs.values():
        actions, windows = trace_actions_windows(res.records)
        recs = build_transitions(actions, windows)
        by_cat = defaultdict(int)
        for r in recs:
            by_cat[r.category] += 1
        frac = category_fractions(recs)
        worst = max(worst, abs(sum(frac.values()) - 1.0))
        ok &= len(recs) == len(actions) - 1
        ok &= sum(by_cat.values()) == len(recs) and set(by_cat) <= set(CATEGORY_ORDER)
        checked += 1
    ok &= worst <= 1e-9
    record_criterion(2, "transition partition", ok, f"traces={checked} max|sum-1|={worst:.2e}")
    assert ok


# -- 3 -----------------------------------------------------------------------
def _audit_steering(records, cfg: RewardConfig, strategy: str, history_len: int) -> tuple[int, int, list[str]]:
    """Replay a trace with an independent bookkeeping of node means and edges."""
    reward_sum = defaultdict(float)
    rate_sum = defaultdict(float)
    count = defaultdict(int)
    succ = defaultdict(set)
    hist: deque = deque(maxlen=history_len)
    prev_action = None
    prev_window = None
    replacements = 0
    violations = []
    for rec in records:
        a = MultiModalAction.from_obj(rec["action"])
        orig = MultiModalAction.from_obj(rec["original_action"])
        if rec["replaced"]:
            replacements += 1
            if orig in count:
                r_orig = reward_sum[orig] / count[orig]
                obj_orig = rate_sum[orig] / count[orig] if strategy == "AR3" else r_orig
            else:
                r_orig = reward(prev_window, cfg)
                obj_orig = float(prev_window[:, 0, 0].mean()) if strategy == "AR3" else r_orig
            obj_new = rate_sum[a] / count[a] if strategy == "AR3" else reward_sum[a] / count[a]
            w = r_orig < sum(hist) / len(hist)
            in_q = a == prev_action or a in succ[prev_action]
            if strategy == "AR2":
                good = (not w) and obj_new < obj_orig
            else:
                good = w and obj_new > obj_orig
            if not (good and in_q):
                violations.append(f"step {rec['step']}: {obj_new} vs {obj_orig} omega={w} in_q={in_q}")
        window = np.asarray(rec["kpi_window"], dtype=float)
        r = reward(window, cfg)
        reward_sum[a] += r
        rate_sum[a] += float(window[:, 0, 0].mean())
        count[a] += 1
        if prev_action is not None:
            succ[prev_action].add(a)
        hist.append(rec["reward"])
        prev_action, prev_window = a, window
    return len(records), replacements, violations


@pytest.mark.slow
def test_criterion_3_steering_guarantees():
    details = []
    ok = True
    for name, strategy in (("ht-trf1-a1-10", "AR1"), ("ll-trf1-a2-10", "AR2"), ("ht-trf1-a3-10", "AR3")):
        cfg = preset(name, duration=11_000, warmup=1000, seed=21)
        res = run_experiment(cfg)
        steered = [r for r in res.records if r["phase"] == "steering"]
        n, reps, bad = _audit_steering(res.records, cfg.profile().reward_config, strategy, cfg.history_len)
        ok &= len(steered) >= 10_000 and not bad and reps > 0
        details.append(f"{strategy}: steps={len(steered)} replaced={reps} violations={len(bad)}")
        assert not bad, bad[:5]
    record_criterion(3, "steering guarantees", ok, "; ".join(details))
    assert ok


# -- 4 -----------------------------------------------------------------------
def test_criterion_4_reward_oracles():
    rng = np.random.default_rng(2024)
    worst_r = worst_e = 0.0
    for _ in range(1000):
        w = random_window(rng)
        cfg = RewardConfig(tuple(rng.normal(size=3)))
        naive = 0.0
        for l in range(3):
            col = [w.samples[m][cfg.target_kpi[l]][l] for m in range(10)]
            naive += cfg.weights[l] * (sum(col) / len(col))
        worst_r = max(worst_r, abs(reward(w, cfg) - naive))

        k = int(rng.integers(1, 6))
        a = random_action(rng)
        other = random_action(rng)
        actions = [a if rng.random() < 0.6 else other for _ in range(k)] + [a]
        windows = [random_window(rng, ues=tuple(rng.integers(0, 3, size=3) + 1)) for _ in actions]
        g = build_graph(actions, windows)
        mine = [x for b, x in zip(actions, windows) if b == a]
        oracle = 0.0
        for l in range(3):
            vals = [x.samples[m, cfg.target_kpi[l], l] for x in mine for m in range(10)]
            oracle += cfg.weights[l] * sum(vals) / len(vals)
        worst_e = max(worst_e, abs(expected_reward(g, a, cfg) - oracle))
    ok = worst_r <= 1e-9 and worst_e <= 1e-9
    record_criterion(4, "reward/mean oracles", ok, f"max|reward err|={worst_r:.1e} max|expected err|={worst_e:.1e}")
    assert ok


# -- 5 -----------------------------------------------------------------------
def _table(values, n=9):
    w = 1 << np.arange(n)
    return lambda m: float(values[int(np.dot(np.asarray(m, dtype=int), w))])


def test_criterion_5_shapley_axioms():
    rng = np.random.default_rng(5)
    n = 9
    masks = ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(bool)
    worst_eff = worst_sym = worst_null = 0.0
    slowest = 0.0
    for _ in range(100):
        base = rng.normal(size=1 << n)
        i, j = rng.choice(n, size=2, replace=False)
        null = int(rng.integers(n))
        # symmetrise over features i and j, then make `null` irrelevant
        swapped = masks.copy()
        swapped[:, [i, j]] = swapped[:, [j, i]]
        idx_sw = swapped @ (1 << np.arange(n))
        sym = base + base[idx_sw]
        cleared = masks.copy()
        cleared[:, null] = False
        values = sym[cleared @ (1 << np.arange(n))]
        t0 = time.perf_counter()
        phi = shapley_scores(_table(values), n)
        slowest = max(slowest, time.perf_counter() - t0)
        worst_eff = max(worst_eff, abs(phi.sum() - (values[-1] - values[0])))
        if null not in (i, j):
            worst_sym = max(worst_sym, abs(phi[i] - phi[j]))
        worst_null = max(worst_null, abs(phi[null]))
    ok = worst_eff <= 1e-9 and worst_sym <= 1e-9 and worst_null <= 1e-9 and slowest < 1.0
    record_criterion(5, "Shapley axioms", ok,
                     f"eff={worst_eff:.1e} sym={worst_sym:.1e} null={worst_null:.1e} slowest={slowest:.3f}s")
    assert ok


# -- 6 -----------------------------------------------------------------------
def test_criterion_6_explanation_latency(steering_runs):
    runs, _ = steering_runs
    trace = runs[("ht-trf1-a3-10", 0)].trace_path
    t0 = time.perf_counter()
    report, _ = explain_trace(trace)
    wall = time.perf_counter() - t0
    steps = len(load_trace(trace))
    ok = steps == 7200 and wall < 10.0 and report.synthesis_time_s < 10.0
    record_criterion(6, "explanation latency", ok, f"steps={steps} wall={wall:.2f}s reported={report.synthesis_time_s:.2f}s")
    assert ok


# -- 7 -----------------------------------------------------------------------
def test_criterion_7_tree_fidelity(steering_runs):
    rng = np.random.default_rng(7)
    separable_ok = True
    for trial in range(20):
        cats = [CATEGORY_ORDER[k] for k in rng.choice(len(CATEGORY_ORDER), size=2, replace=False)]
        feat = int(rng.integers(NUM_ATTRS))
        n = int(rng.integers(20, 200))
        labels = rng.integers(0, 2, size=n)
        X = rng.normal(size=(n, NUM_ATTRS))
        X[:, feat] = np.where(labels == 0, -rng.uniform(0.01, 5, n), 1 + rng.uniform(0.01, 5, n))
        recs = [TransitionRecord(cats[y], x, A1, A2, t + 1) for t, (x, y) in enumerate(zip(X, labels))]
        tree = fit_distill_tree(recs)
        acc = tree.accuracy(X, [r.category.value for r in recs])
        separable_ok &= acc == 1.0
    runs, _ = steering_runs
    sim_ok = True
    worst_margin = math.inf
    for (name, seed), res in runs.items():
        if seed > 1:
            continue
        report, _ = explain_trace(res.records)
        worst_margin = min(worst_margin, report.accuracy - report.majority_baseline)
        sim_ok &= report.accuracy >= report.majority_baseline
    ok = separable_ok and sim_ok
    record_criterion(7, "decision-tree fidelity", ok,
                     f"separable 100%={separable_ok} min(sim acc - majority)={worst_margin:+.3f}")
    assert ok


# -- 8 -----------------------------------------------------------------------
def _pooled(runs, name, slice_, kpi, start):
    return np.concatenate([
        np.asarray(r["kpi_window"], dtype=float)[:, kpi, slice_]
        for seed in SEEDS for r in runs[(name, seed)].records[start:]
    ])


@pytest.mark.slow
def test_criterion_8_directional_benefit(steering_runs):
    runs, times = steering_runs
    start = preset("ht-trf1-b-10").warmup
    per_seed = []
    for seed in SEEDS:
        ht = compare_traces(runs[("ht-trf1-b-10", seed)].trace_path, runs[("ht-trf1-a3-10", seed)].trace_path,
                            slices=[0], kpis=[0])
        ll = compare_traces(runs[("ll-trf1-b-10", seed)].trace_path, runs[("ll-trf1-a2-10", seed)].trace_path,
                            slices=[2], kpis=[2])
        per_seed.append((ht["deltas"]["eMBB.tx_brate"]["p50"]["delta"], ll["deltas"]["URLLC.dl_buffer"]["p95"]["delta"]))
    ht_base = _pooled(runs, "ht-trf1-b-10", 0, 0, start)
    ht_ar3 = _pooled(runs, "ht-trf1-a3-10", 0, 0, start)
    ll_base = _pooled(runs, "ll-trf1-b-10", 2, 2, start)
    ll_ar2 = _pooled(runs, "ll-trf1-a2-10", 2, 2, start)
    d_median = float(np.percentile(ht_ar3, 50) - np.percentile(ht_base, 50))
    d_p95 = float(np.percentile(ll_ar2, 95) - np.percentile(ll_base, 95))
    slowest = max(times.values())
    ok = d_median >= 0 and d_p95 <= 0 and slowest <= RUN_LIMIT_S
    seeds_txt = " ".join(f"s{s}:({a:+.3g},{b:+.3g})" for s, (a, b) in zip(SEEDS, per_seed))
    record_criterion(8, "directional steering benefit", ok,
                     f"pooled AR3 median dTx={d_median:+.4f} Mbit/s, AR2 p95 dBuf={d_p95:+.1f} B, "
                     f"slowest run={slowest:.1f}s; per-seed {seeds_txt}")
    assert ok


# -- 9 -----------------------------------------------------------------------
def test_criterion_9_determinism(tmp_path):
    outs = []
    for tag in ("first", "second"):
        cfg = preset("ht-trf2-a1-20", duration=600, warmup=200, seed=99, output_dir=str(tmp_path / tag))
        outs.append(run_experiment(cfg))
    same_trace = outs[0].trace_path.read_bytes() == outs[1].trace_path.read_bytes()
    same_graph = outs[0].graph_path.read_bytes() == outs[1].graph_path.read_bytes()
    g = outs[0].graph
    g2 = AttributedGraph.from_json(g.to_json())
    round_trip = g2.nodes == g.nodes and g2.edges == g.edges and g2.last_node == g.last_node
    rebuilt = rebuild_graph(outs[0].trace_path)
    live_match = rebuilt.nodes == g.nodes and rebuilt.edges == g.edges
    ok = same_trace and same_graph and round_trip and live_match
    record_criterion(9, "determinism and serialization", ok,
                     f"trace={same_trace} graph={same_graph} json round-trip={round_trip} rebuild={live_match}")
    assert ok
