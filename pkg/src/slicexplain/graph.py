"""Attributed action graph.

Nodes are enforced actions, each carrying the KPI samples observed right after the
action ran (one sample block per attribute per occurrence). Directed, counted edges
record which action followed which.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import RewardConfig, slice_target_means
from .core import (
    ATTR_NAMES,
    NUM_ATTRS,
    NUM_ROWS,
    NUM_SLICES,
    KpiWindow,
    MultiModalAction,
    attr_index,
)


class NodeNotFound(KeyError):
    pass


@dataclass
class NodeAttribute:
    """KPI distributions of one node.

    ``samples[p]`` is a list with one (rows, n_ues) block per occurrence.
    """

    samples: list[list[np.ndarray]] = field(default_factory=lambda: [[] for _ in range(NUM_ATTRS)])
    occurrence_count: int = 0
    # running totals per attribute: [sum of samples, n samples, sum of row aggregates, n rows]
    _totals: np.ndarray = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self._totals = np.zeros((NUM_ATTRS, 4))
        for p, blocks in enumerate(self.samples):
            for b in blocks:
                self._accumulate(p, b)

    def _accumulate(self, p: int, b: np.ndarray) -> None:
        t = self._totals[p]
        t[0] += b.sum()
        t[1] += b.size
        t[2] += b.sum(axis=1).sum()
        t[3] += b.shape[0]

    def add(self, blocks: Sequence[np.ndarray]) -> None:
        if len(blocks) != NUM_ATTRS:
            raise ValueError(f"expected {NUM_ATTRS} attribute blocks, got {len(blocks)}")
        for p, b in enumerate(blocks):
            b = np.asarray(b, dtype=float)
            if b.ndim == 1:
                b = b.reshape(-1, 1)
            self.samples[p].append(b)
            self._accumulate(p, b)
        self.occurrence_count += 1

    def pooled(self, p: int) -> np.ndarray:
        blocks = self.samples[p]
        if not blocks:
            return np.zeros(0)
        return np.concatenate([b.reshape(-1) for b in blocks])

    def mean(self, p: int) -> float:
        """Mean over every stored per-UE sample; 0 for a slice without UEs."""
        total, n = self._totals[p, 0], self._totals[p, 1]
        return float(total / n) if n else 0.0

    def slice_mean(self, p: int) -> float:
        """Mean over rows and occurrences of the slice aggregate (per-row sum across UEs)."""
        total, n = self._totals[p, 2], self._totals[p, 3]
        return float(total / n) if n else 0.0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NodeAttribute):
            return NotImplemented
        if self.occurrence_count != other.occurrence_count:
            return False
        for mine, theirs in zip(self.samples, other.samples):
            if len(mine) != len(theirs):
                return False
            if any(a.shape != b.shape or not np.array_equal(a, b) for a, b in zip(mine, theirs)):
                return False
        return True


def _block(b) -> np.ndarray:
    arr = np.asarray(b, dtype=float)
    if arr.ndim == 2:
        return arr
    return arr.reshape(NUM_ROWS, -1) if arr.size else np.zeros((NUM_ROWS, 0))


@dataclass
class AttributedGraph:
    nodes: dict[MultiModalAction, NodeAttribute] = field(default_factory=dict)
    edges: dict[tuple[MultiModalAction, MultiModalAction], int] = field(default_factory=dict)
    last_node: MultiModalAction | None = None
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False, compare=False)

    def __contains__(self, action: object) -> bool:
        return action in self.nodes

    def node(self, action: MultiModalAction) -> NodeAttribute:
        try:
            return self.nodes[action]
        except KeyError:
            raise NodeNotFound(f"no node for action {action}") from None

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_lock", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.RLock()

    # -- serialisation -------------------------------------------------
    def to_obj(self) -> dict:
        return {
            "nodes": [
                {
                    "action": a.to_obj(),
                    "occurrence_count": attr.occurrence_count,
                    "samples": [[b.tolist() for b in blocks] for blocks in attr.samples],
                }
                for a, attr in self.nodes.items()
            ],
            "edges": [
                {"src": s.to_obj(), "dst": d.to_obj(), "count": c} for (s, d), c in self.edges.items()
            ],
            "last_node": self.last_node.to_obj() if self.last_node is not None else None,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "AttributedGraph":
        g = cls()
        for n in obj["nodes"]:
            samples = [[_block(b) for b in blocks] for blocks in n["samples"]]
            attr = NodeAttribute(samples=samples, occurrence_count=int(n["occurrence_count"]))
            g.nodes[MultiModalAction.from_obj(n["action"])] = attr
        for e in obj["edges"]:
            g.edges[(MultiModalAction.from_obj(e["src"]), MultiModalAction.from_obj(e["dst"]))] = int(e["count"])
        if obj.get("last_node") is not None:
            g.last_node = MultiModalAction.from_obj(obj["last_node"])
        return g

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AttributedGraph":
        return cls.from_obj(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AttributedGraph":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def to_dot(self, name: str = "G") -> str:
        ids = {a: f"n{i}" for i, a in enumerate(sorted(self.nodes))}
        lines = [f"digraph {name} {{", "  node [shape=box];"]
        for a in sorted(self.nodes):
            lines.append(f'  {ids[a]} [label="{a}\\nx{self.nodes[a].occurrence_count}"];')
        for (s, d), c in sorted(self.edges.items()):
            lines.append(f'  {ids[s]} -> {ids[d]} [label="{c}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def graph_record(
    g: AttributedGraph,
    action: MultiModalAction,
    consequence: KpiWindow,
    per_ue_samples: Sequence[np.ndarray] | None = None,
) -> AttributedGraph:
    """Add one enforced action and the window it produced; link it to the previous action."""
    blocks = per_ue_samples if per_ue_samples is not None else consequence.attribute_samples()
    with g._lock:
        attr = g.nodes.get(action)
        if attr is None:
            attr = g.nodes[action] = NodeAttribute()
        attr.add(blocks)
        if g.last_node is not None:
            key = (g.last_node, action)
            g.edges[key] = g.edges.get(key, 0) + 1
        g.last_node = action
    return g


def expected_kpi(g: AttributedGraph, action: MultiModalAction, p: int) -> float:
    return g.node(action).mean(p)


def expected_slice_kpi(g: AttributedGraph, action: MultiModalAction, p: int) -> float:
    return g.node(action).slice_mean(p)


def expected_reward(g: AttributedGraph, action: MultiModalAction, cfg: RewardConfig) -> float:
    """Reward of the node's averaged consequences (per-slice aggregates)."""
    attr = g.node(action)
    means = [attr.slice_mean(attr_index(cfg.target_kpi[l], l)) for l in range(NUM_SLICES)]
    return slice_target_means(cfg, means)


def neighbors(g: AttributedGraph, action: MultiModalAction) -> list[tuple[MultiModalAction, NodeAttribute]]:
    """One-hop out-neighbours, sorted by action."""
    g.node(action)
    outs = sorted(d for (s, d) in g.edges if s == action)
    return [(d, g.nodes[d]) for d in outs]


def describe_node(g: AttributedGraph, action: MultiModalAction) -> dict:
    attr = g.node(action)
    return {
        "action": str(action),
        "occurrences": attr.occurrence_count,
        "means": {ATTR_NAMES[p]: attr.mean(p) for p in range(NUM_ATTRS)},
    }
