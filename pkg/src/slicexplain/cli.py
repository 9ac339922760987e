"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime/I-O error, 4 failed check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .core import KPI_NAMES, SLICE_NAMES, ConfigError
from .graph import AttributedGraph
from .pipeline import (
    GRAPH_NAME,
    PRESETS,
    TraceError,
    compare_traces,
    explain_trace,
    load_config,
    load_trace,
    rebuild_graph,
    run_experiment,
    shapley_for_step,
)
from .steer import steering_stats

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK = 4

log = logging.getLogger("slicexplain")


def _ues(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected exactly three per-slice counts")
    return vals


def _lookup(names: tuple[str, ...], value: str, what: str) -> int:
    low = [n.lower() for n in names]
    if value.isdigit() and int(value) < len(names):
        return int(value)
    if value.lower() in low:
        return low.index(value.lower())
    raise ConfigError(f"unknown {what} {value!r}; expected one of {list(names)}")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _simulate_one(cfg_obj: dict) -> str:
    from .pipeline import ExperimentConfig

    cfg = ExperimentConfig.from_obj(cfg_obj)
    res = run_experiment(cfg)
    return str(res.trace_path)


def cmd_simulate(args: argparse.Namespace) -> int:
    overrides = {
        "preset": args.preset,
        "agent": args.agent,
        "policy": args.policy,
        "traffic": args.traffic,
        "ues": args.ues,
        "strategy": args.strategy,
        "history_len": args.history_len,
        "duration": args.duration,
        "warmup": args.warmup,
        "epsilon": args.epsilon,
        "replay_path": args.replay,
        "output_dir": args.out,
    }
    seeds = args.seeds or ([args.seed] if args.seed is not None else [None])
    cfgs = []
    for s in seeds:
        cfg = load_config(args.config, **overrides, seed=s)
        if cfg.output_dir is None:
            cfg.output_dir = str(Path("runs") / cfg.name)
        if len(seeds) > 1:
            cfg.output_dir = str(Path(cfg.output_dir) / f"seed{cfg.seed}")
        cfgs.append(cfg)
    if len(cfgs) == 1:
        print(_simulate_one(cfgs[0].to_obj()))
        return EXIT_OK
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for path in pool.map(_simulate_one, [c.to_obj() for c in cfgs]):
            print(path)
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    report, _ = explain_trace(args.trace, mode=args.mode, source=args.source,
                              max_depth=args.max_depth, min_leaf=args.min_leaf)
    out = Path(args.out) if args.out else Path(args.trace).parent
    _write(out / "explanation.json", report.to_json())
    _write(out / "explanation.txt", report.render_text())
    print(report.render_text(), end="")
    if args.max_seconds is not None and report.synthesis_time_s > args.max_seconds:
        print(f"synthesis took {report.synthesis_time_s:.2f}s > {args.max_seconds}s", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    slices = [_lookup(SLICE_NAMES, args.slice, "slice")] if args.slice else None
    kpis = [_lookup(KPI_NAMES, args.kpi, "KPI")] if args.kpi else None
    result = compare_traces(args.baseline, args.steered, slices=slices, kpis=kpis, start_step=args.start)
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        _write(Path(args.out), text)
    print(text)
    return EXIT_OK


def cmd_shapley(args: argparse.Namespace) -> int:
    try:
        result = shapley_for_step(args.trace, args.step, k=args.k)
    except AssertionError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        _write(Path(args.out), text)
    print(text)
    return EXIT_OK


def cmd_export_dot(args: argparse.Namespace) -> int:
    src = Path(args.source)
    if src.is_dir():
        src = src / GRAPH_NAME
    g = AttributedGraph.load(src) if src.suffix == ".json" else rebuild_graph(src)
    dot = g.to_dot()
    if args.out:
        _write(Path(args.out), dot)
    else:
        print(dot, end="")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    stats = steering_stats(load_trace(args.trace))
    print(json.dumps(stats.to_obj(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_presets(args: argparse.Namespace) -> int:
    for name in sorted(PRESETS):
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slicexplain", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the closed loop and write a trace")
    s.add_argument("--config", help="YAML/JSON experiment config")
    s.add_argument("--preset", help="named experiment configuration (see `presets`)")
    s.add_argument("--agent", choices=["HT", "LL"])
    s.add_argument("--policy", choices=["tabular-bandit", "greedy-graph", "replay"])
    s.add_argument("--traffic", choices=["TRF1", "TRF2"])
    s.add_argument("--ues", type=_ues, help="per-slice UE counts, e.g. 2,2,2")
    s.add_argument("--strategy", help="none, AR1, AR2 or AR3")
    s.add_argument("--history-len", type=int)
    s.add_argument("--duration", type=int)
    s.add_argument("--warmup", type=int)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--replay", help="JSON-lines file of actions for the replay policy")
    s.add_argument("--seed", type=int)
    s.add_argument("--seeds", type=int, nargs="+", help="run several seeds in parallel")
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--out", help="run output directory")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("explain", help="synthesise explanations from a trace")
    e.add_argument("trace")
    e.add_argument("--mode", choices=["mean-diff", "jsd"], default="mean-diff")
    e.add_argument("--source", choices=["window", "node"], default="window")
    e.add_argument("--max-depth", type=int, default=4)
    e.add_argument("--min-leaf", type=int, default=5)
    e.add_argument("--max-seconds", type=float, help="fail (exit 4) if synthesis is slower")
    e.add_argument("--out", help="directory for explanation.json/.txt (default: next to the trace)")
    e.set_defaults(func=cmd_explain)

    c = sub.add_parser("compare", help="percentile deltas between a baseline and a steered trace")
    c.add_argument("baseline")
    c.add_argument("steered")
    c.add_argument("--slice", help="eMBB, mMTC, URLLC or index")
    c.add_argument("--kpi", help="tx_brate, tx_pkts, dl_buffer or index")
    c.add_argument("--start", type=int, help="first step to include (default: config warm-up)")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    h = sub.add_parser("shapley", help="exact Shapley scores of the latent features at one step")
    h.add_argument("trace")
    h.add_argument("--step", type=int, required=True)
    h.add_argument("-k", type=int, default=15, help="neighbours in the surrogate")
    h.add_argument("--out")
    h.set_defaults(func=cmd_shapley)

    d = sub.add_parser("export-dot", help="write the attributed graph in DOT format")
    d.add_argument("source", help="graph.json, a run directory, or a trace")
    d.add_argument("--out")
    d.set_defaults(func=cmd_export_dot)

    st = sub.add_parser("stats", help="steering substitution/suggestion tallies")
    st.add_argument("trace")
    st.set_defaults(func=cmd_stats)

    pr = sub.add_parser("presets", help="list named configurations")
    pr.set_defaults(func=cmd_presets)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TraceError) as exc:
        # malformed traces are input errors too, but keep them distinct from bad configs
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME if isinstance(exc, TraceError) else EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
