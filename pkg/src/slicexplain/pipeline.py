"""Closed-loop orchestration: env -> graph -> encoder -> agent -> [steer] -> env.

Also holds the experiment configuration and presets, the JSON-lines trace format,
and the offline commands that consume traces (explain, compare, shapley).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Sequence

import numpy as np
import yaml

from .agent import AgentProfile, EndOfTrace, Encoder, ReplayAgent, decide, make_agent, reward
from .core import (
    KPI_NAMES,
    NUM_SLICES,
    SLICE_NAMES,
    ConfigError,
    KpiWindow,
    MultiModalAction,
)
from .explain import build_transitions, fit_distill_tree, shapley_scores, summarize
from .explain.report import ExplanationReport
from .graph import AttributedGraph, graph_record
from .sim import env_init, env_remove_ue, env_step, get_profile
from .steer import RewardHistory, SteeringConfig, SteeringDecision, Strategy, steer

log = logging.getLogger(__name__)

TRACE_NAME = "trace.jsonl"
GRAPH_NAME = "graph.json"
CONFIG_NAME = "config.json"
WARMUP_NOTE = "steering starts after a warm-up segment that stands in for online training"

# fields that may legitimately differ between a baseline run and a steered run
_STEERING_FIELDS = {"strategy", "history_len", "output_dir", "name"}


class TraceError(ValueError):
    """Malformed or inconsistent trace input."""


@dataclass
class ExperimentConfig:
    agent: str = "HT"
    policy: str = "tabular-bandit"
    weights: tuple[float, float, float] | None = None
    traffic: str = "TRF1"
    ues: tuple[int, int, int] = (2, 2, 2)
    ues_after_warmup: tuple[int, int, int] | None = None
    strategy: str = "none"
    history_len: int = 10
    duration: int = 7200
    warmup: int = 1000
    seed: int = 0
    epsilon: float = 0.1
    replay_path: str | None = None
    replay_actions: list | None = None
    output_dir: str | None = None
    name: str = "run"

    def __post_init__(self) -> None:
        self.ues = tuple(int(x) for x in self.ues)  # type: ignore[assignment]
        if self.ues_after_warmup is not None:
            self.ues_after_warmup = tuple(int(x) for x in self.ues_after_warmup)  # type: ignore[assignment]
        if self.weights is not None:
            self.weights = tuple(float(x) for x in self.weights)  # type: ignore[assignment]

    def validate(self) -> None:
        if self.duration < 2:
            raise ConfigError("duration must be at least 2 decision steps")
        if self.warmup < 0:
            raise ConfigError("warmup must be non-negative")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if len(self.ues) != NUM_SLICES or min(self.ues) < 0 or sum(self.ues) == 0:
            raise ConfigError(f"bad per-slice UE counts {self.ues}")
        if self.ues_after_warmup is not None:
            after = self.ues_after_warmup
            if len(after) != NUM_SLICES or sum(after) == 0 or any(a > b or a < 0 for a, b in zip(after, self.ues)):
                raise ConfigError(f"ues_after_warmup {after} must be a non-empty reduction of {self.ues}")
        get_profile(self.traffic)
        Strategy.parse(self.strategy)
        SteeringConfig(Strategy.parse(self.strategy), self.history_len, self.profile().reward_config)
        if self.policy == "replay" and not (self.replay_path or self.replay_actions):
            raise ConfigError("replay policy needs replay_path or replay_actions")

    def profile(self) -> AgentProfile:
        return AgentProfile.named(self.agent, self.policy, self.weights)

    def to_obj(self) -> dict:
        obj = dataclasses.asdict(self)
        for k, v in obj.items():
            if isinstance(v, tuple):
                obj[k] = list(v)
        if obj["replay_actions"] is not None:
            obj["replay_actions"] = [MultiModalAction.from_obj(a).to_obj() for a in self.replay_actions]  # type: ignore[union-attr]
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _presets() -> dict[str, dict]:
    user_layouts = {
        "6": (2, 2, 2), "5": (2, 1, 2), "4": (1, 1, 2), "3": (1, 1, 1), "2": (1, 0, 1),
        "1-embb": (1, 0, 0), "1-mmtc": (0, 1, 0), "1-urllc": (0, 0, 1),
    }
    out: dict[str, dict] = {}
    for agent in ("HT", "LL"):
        for trf in ("TRF1", "TRF2"):
            base = f"{agent.lower()}-{trf.lower()}"
            for tag, ues in user_layouts.items():
                out[f"{base}-{tag}"] = {"agent": agent, "traffic": trf, "ues": ues, "strategy": "none"}
            for tag, strat in (("a1", "AR1"), ("a2", "AR2"), ("a3", "AR3"), ("b", "none")):
                for o in (10, 20):
                    out[f"{base}-{tag}-{o}"] = {
                        "agent": agent, "traffic": trf, "ues": (2, 2, 2), "ues_after_warmup": (2, 1, 2),
                        "strategy": strat, "history_len": o,
                    }
    return out


PRESETS = _presets()


def preset(name: str, **overrides: Any) -> ExperimentConfig:
    try:
        fields = dict(PRESETS[name.lower()])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}") from None
    fields.update(overrides)
    fields.setdefault("name", name.lower())
    return ExperimentConfig(**fields)


def load_config(path: str | Path | None = None, **overrides: Any) -> ExperimentConfig:
    """Read a YAML/JSON config (optionally naming a ``preset``) and apply overrides."""
    obj: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            loaded = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        obj.update(loaded)
    obj.update({k: v for k, v in overrides.items() if v is not None})
    name = obj.pop("preset", None)
    try:
        cfg = preset(name, **obj) if name else ExperimentConfig.from_obj(obj)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


@dataclass
class ControlMessage:
    step: int
    source: str
    kind: str
    action: MultiModalAction
    original_action: MultiModalAction
    route: list[str] = field(default_factory=list)
    decision: SteeringDecision | None = None


class Dispatcher:
    """In-process stand-in for the RIC message router.

    Control messages from the agent go through the steering stage when it is
    attached and enabled, otherwise straight to the environment.
    """

    def __init__(self, steering_stage: Callable[[ControlMessage], ControlMessage] | None = None):
        self.steering_stage = steering_stage
        self.bypass = steering_stage is None

    @property
    def route(self) -> tuple[str, ...]:
        return ("agent", "env") if self.bypass or self.steering_stage is None else ("agent", "steer", "env")

    def dispatch(self, msg: ControlMessage) -> ControlMessage:
        msg.route.append("agent")
        if not self.bypass and self.steering_stage is not None:
            msg = self.steering_stage(msg)
            msg.route.append("steer")
        msg.route.append("env")
        return msg


@dataclass
class RunResult:
    records: list[dict]
    graph: AttributedGraph
    trace_path: Path | None = None
    graph_path: Path | None = None


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def run_experiment(
    cfg: ExperimentConfig,
    on_step: Callable[[int, ControlMessage, AttributedGraph], None] | None = None,
) -> RunResult:
    """Run the closed loop and, if ``cfg.output_dir`` is set, write trace, graph and config.

    ``on_step`` is called after each steering decision and before the action is
    enforced, with the graph in the state the decision saw.
    """
    cfg.validate()
    profile = cfg.profile()
    rcfg = profile.reward_config
    state = env_init(cfg.ues, get_profile(cfg.traffic), cfg.seed)
    graph = AttributedGraph()
    replay = None
    if profile.policy_impl == "replay":
        replay = list(cfg.replay_actions) if cfg.replay_actions else ReplayAgent.from_jsonl(cfg.replay_path).actions  # type: ignore[arg-type]
    agent = make_agent(profile, graph=graph, epsilon=cfg.epsilon, replay_actions=replay)
    agent_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xA9]))
    encoder = Encoder(cfg.seed)
    scfg = SteeringConfig(Strategy.parse(cfg.strategy), cfg.history_len, rcfg)
    history = RewardHistory(cfg.history_len)

    prev_window = KpiWindow.zeros()
    a_prev: MultiModalAction | None = None

    def steering_stage(msg: ControlMessage) -> ControlMessage:
        decision = steer(scfg, graph, msg.action, a_prev, history, fallback_window=prev_window)
        msg.decision = decision
        msg.action = decision.action
        return msg

    dispatcher = Dispatcher(steering_stage if scfg.strategy is not Strategy.NONE else None)
    records: list[dict] = []
    for t in range(cfg.duration):
        if t == cfg.warmup and cfg.ues_after_warmup is not None:
            for l in range(NUM_SLICES):
                while state.ue_counts[l] > cfg.ues_after_warmup[l]:
                    env_remove_ue(state, l)
        latent = encoder.encode(prev_window)
        try:
            proposal = decide(agent, latent, agent_rng)
        except EndOfTrace:
            log.info("replay trace exhausted at step %d", t)
            break
        in_warmup = t < cfg.warmup
        if dispatcher.steering_stage is not None:
            dispatcher.bypass = in_warmup
        msg = dispatcher.dispatch(ControlMessage(t, "agent", "control", proposal, proposal))
        if on_step is not None:
            on_step(t, msg, graph)
        action = msg.action
        ue_counts = list(state.ue_counts)
        state, window = env_step(state, action)
        graph_record(graph, action, window)
        r = reward(window, rcfg)
        history.append(r)
        agent.observe(action, r)
        decision = msg.decision or SteeringDecision(action=action, original=proposal, reason="bypass")
        rec = {
            "step": t,
            "phase": "warmup" if in_warmup else "steering",
            "action": action.to_obj(),
            "original_action": proposal.to_obj(),
            "replaced": decision.replaced,
            "reward": r,
            "latent": [float(x) for x in latent],
            "ue_counts": ue_counts,
            "route": msg.route,
            "steering": decision.to_obj(scfg.strategy),
        }
        rec.update(window.to_obj())
        records.append(rec)
        prev_window = window
        a_prev = action

    result = RunResult(records, graph)
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            result.trace_path = out / TRACE_NAME
            write_trace(result.trace_path, records)
            result.graph_path = out / GRAPH_NAME
            graph.save(result.graph_path)
            (out / CONFIG_NAME).write_text(json.dumps(cfg.to_obj(), indent=2, sort_keys=True), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"failed writing run output under {out}: {exc}") from exc
    return result


def write_trace(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(_dumps(rec) + "\n")


def iter_trace(path: str | Path) -> Iterator[dict]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot open trace {path}: {exc}") from exc
    with fh:
        expected = 0
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            if not isinstance(rec, dict) or "step" not in rec or "action" not in rec or "kpi_window" not in rec:
                raise TraceError(f"{path}:{lineno}: record lacks step/action/kpi_window")
            if rec["step"] != expected:
                raise TraceError(f"{path}:{lineno}: step {rec['step']} breaks contiguity (expected {expected})")
            expected += 1
            yield rec


def load_trace(path: str | Path) -> list[dict]:
    return list(iter_trace(path))


def _as_records(trace: str | Path | Sequence[dict]) -> list[dict]:
    if isinstance(trace, (str, Path)):
        return load_trace(trace)
    return list(trace)


def trace_actions_windows(records: Sequence[dict]) -> tuple[list[MultiModalAction], list[KpiWindow]]:
    actions, windows = [], []
    for rec in records:
        try:
            actions.append(MultiModalAction.from_obj(rec["action"]))
            windows.append(KpiWindow.from_obj(rec))
        except (ValueError, KeyError, TypeError) as exc:
            raise TraceError(f"step {rec.get('step')}: {exc}") from exc
    return actions, windows


def rebuild_graph(trace: str | Path | Sequence[dict]) -> AttributedGraph:
    records = _as_records(trace)
    g = AttributedGraph()
    actions, windows = trace_actions_windows(records)
    for a, w in zip(actions, windows):
        graph_record(g, a, w)
    return g


def explain_trace(
    trace: str | Path | Sequence[dict],
    mode: str = "mean-diff",
    source: str = "window",
    max_depth: int = 4,
    min_leaf: int = 5,
) -> tuple[ExplanationReport, AttributedGraph]:
    """Rebuild the graph from a trace, extract transitions, fit the tree and summarise.

    The reported synthesis time covers everything from reading the trace onwards.
    """
    t0 = time.perf_counter()
    records = _as_records(trace)
    actions, windows = trace_actions_windows(records)
    g = AttributedGraph()
    for a, w in zip(actions, windows):
        graph_record(g, a, w)
    transitions = build_transitions(actions, windows, g=g, mode=mode, source=source)
    tree = fit_distill_tree(transitions, max_depth=max_depth, min_leaf=min_leaf)
    notes = []
    if tree.degenerate:
        notes.append("only one transition category present; tree is a single leaf")
    if any(r.get("phase") == "steering" for r in records) and any(r.get("phase") == "warmup" for r in records):
        notes.append(WARMUP_NOTE)
    report = summarize(transitions, tree, delta_mode=mode, notes=notes)
    report.synthesis_time_s = time.perf_counter() - t0
    return report, g


def _sidecar_config(trace: str | Path | Sequence[dict]) -> dict | None:
    if not isinstance(trace, (str, Path)):
        return None
    p = Path(trace).with_name(CONFIG_NAME)
    if p.exists():
        return json.loads(p.read_text(encoding="utf-8"))
    return None


PERCENTILES = (25, 50, 75, 95)


def _slice_kpi_values(records: Sequence[dict], start: int, slice_: int, kpi: int) -> np.ndarray:
    rows = [np.asarray(r["kpi_window"], dtype=float)[:, kpi, slice_] for r in records[start:]]
    return np.concatenate(rows) if rows else np.zeros(0)


def compare_traces(
    baseline: str | Path | Sequence[dict],
    steered: str | Path | Sequence[dict],
    slices: Sequence[int] | None = None,
    kpis: Sequence[int] | None = None,
    start_step: int | None = None,
) -> dict:
    """Percentile deltas (steered minus baseline) of each slice's KPI rows."""
    cfg_a, cfg_b = _sidecar_config(baseline), _sidecar_config(steered)
    if cfg_a is not None and cfg_b is not None:
        diff = sorted(k for k in set(cfg_a) | set(cfg_b)
                      if k not in _STEERING_FIELDS and cfg_a.get(k) != cfg_b.get(k))
        if diff:
            raise ConfigError(f"traces come from different configurations (differ in {diff})")
    rec_a, rec_b = _as_records(baseline), _as_records(steered)
    if len(rec_a) != len(rec_b):
        raise ConfigError(f"trace lengths differ: {len(rec_a)} vs {len(rec_b)}")
    if start_step is None:
        start_step = int(cfg_a["warmup"]) if cfg_a is not None else 0
        start_step = min(start_step, max(len(rec_a) - 1, 0))
    slices = range(NUM_SLICES) if slices is None else slices
    kpis = range(len(KPI_NAMES)) if kpis is None else kpis
    out: dict = {"start_step": start_step, "steps": len(rec_a) - start_step, "deltas": {}}
    for l in slices:
        for k in kpis:
            a = _slice_kpi_values(rec_a, start_step, l, k)
            b = _slice_kpi_values(rec_b, start_step, l, k)
            entry = {}
            for q in PERCENTILES:
                qa = float(np.percentile(a, q)) if a.size else 0.0
                qb = float(np.percentile(b, q)) if b.size else 0.0
                rel = (qb - qa) / abs(qa) * 100.0 if qa != 0 else (0.0 if qb == qa else math.copysign(math.inf, qb - qa))
                entry[f"p{q}"] = {"baseline": qa, "steered": qb, "delta": qb - qa, "delta_pct": rel}
            entry["mean"] = {"baseline": float(a.mean()) if a.size else 0.0, "steered": float(b.mean()) if b.size else 0.0}
            out["deltas"][f"{SLICE_NAMES[l]}.{KPI_NAMES[k]}"] = entry
    return out


class KnnSurrogate:
    """k-nearest-neighbour regression from latent vectors to the agent's outputs."""

    def __init__(self, X: np.ndarray, Y: np.ndarray, k: int = 15):
        self.X = np.asarray(X, dtype=float)
        self.Y = np.asarray(Y, dtype=float)
        self.k = max(1, min(k, len(self.X)))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        d = np.sum((self.X - x) ** 2, axis=1)
        idx = np.argsort(d, kind="stable")[: self.k]
        return self.Y[idx].mean(axis=0)


def shapley_for_step(trace: str | Path | Sequence[dict], step: int, k: int = 15, check_tol: float = 1e-9) -> dict:
    """Exact per-latent-feature scores for the agent's PRB decision at ``step``.

    The agent is replaced by a k-NN surrogate fitted on the trace's (latent, proposed
    PRB) pairs; absent features take their trace mean.
    """
    records = _as_records(trace)
    if not 0 <= step < len(records):
        raise TraceError(f"step {step} outside trace of {len(records)} steps")
    if "latent" not in records[step]:
        raise TraceError(f"step {step} has no latent record")
    X = np.array([r["latent"] for r in records if "latent" in r], dtype=float)
    Y = np.array([MultiModalAction.from_obj(r.get("original_action", r["action"])).prb for r in records if "latent" in r], dtype=float)
    model = KnnSurrogate(X, Y, k)
    x = np.asarray(records[step]["latent"], dtype=float)
    baseline = X.mean(axis=0)
    n = len(x)
    out: dict = {"step": step, "baseline": baseline.tolist(), "latent": x.tolist(), "k": model.k, "outputs": {}}
    for l in range(NUM_SLICES):
        cache: dict[bytes, float] = {}

        def f(mask: np.ndarray, _l: int = l) -> float:
            key = np.packbits(mask).tobytes()
            if key not in cache:
                cache[key] = float(model(np.where(mask, x, baseline))[_l])
            return cache[key]

        standard = shapley_scores(f, n, "standard")
        printed = shapley_scores(f, n, "as-printed")
        full, empty = f(np.ones(n, dtype=bool)), f(np.zeros(n, dtype=bool))
        gap = abs(standard.sum() - (full - empty))
        if gap > check_tol:
            raise AssertionError(f"efficiency violated for {SLICE_NAMES[l]} PRBs: gap {gap:.3g}")
        out["outputs"][f"prb.{SLICE_NAMES[l]}"] = {
            "standard": standard.tolist(),
            "as_printed": printed.tolist(),
            "f_full": full,
            "f_empty": empty,
            "efficiency_gap": gap,
        }
    return out


__all__ = [
    "ControlMessage",
    "Dispatcher",
    "ExperimentConfig",
    "GRAPH_NAME",
    "PRESETS",
    "RunResult",
    "TRACE_NAME",
    "TraceError",
    "compare_traces",
    "explain_trace",
    "iter_trace",
    "load_config",
    "load_trace",
    "preset",
    "rebuild_graph",
    "run_experiment",
    "shapley_for_step",
    "write_trace",
]
