"""Transition categories and KPI-delta vectors between consecutive actions."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from ..core import NUM_ATTRS, KpiWindow, MultiModalAction
from ..graph import AttributedGraph

JSD_BINS = 32
DELTA_MODES = ("mean-diff", "jsd")


class TransitionCategory(str, Enum):
    SAME_PRB = "Same-PRB"
    SAME_SCHED = "Same-Sched"
    DISTINCT = "Distinct"
    SELF = "Self"


CATEGORY_ORDER = tuple(TransitionCategory)


def classify_transition(a_prev: MultiModalAction, a_next: MultiModalAction) -> TransitionCategory:
    same_prb = a_prev.prb == a_next.prb
    same_sched = a_prev.sched == a_next.sched
    if same_prb and same_sched:
        return TransitionCategory.SELF
    if same_prb:
        return TransitionCategory.SAME_PRB
    if same_sched:
        return TransitionCategory.SAME_SCHED
    return TransitionCategory.DISTINCT


@dataclass
class TransitionRecord:
    category: TransitionCategory
    v: np.ndarray
    from_action: MultiModalAction
    to_action: MultiModalAction
    step: int

    def __post_init__(self) -> None:
        self.v = np.asarray(self.v, dtype=float)
        if self.v.shape != (NUM_ATTRS,):
            raise ValueError(f"delta vector must have {NUM_ATTRS} entries")


def histogram_jsd(x: np.ndarray, y: np.ndarray, bins: int = JSD_BINS) -> float:
    """Jensen-Shannon divergence (natural log) between two samples binned on a
    shared equal-width grid over their pooled range. Result lies in [0, ln 2]."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size == 0 or y.size == 0:
        return 0.0
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    if hi <= lo:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    p = np.histogram(x, bins=edges)[0].astype(float)
    q = np.histogram(y, bins=edges)[0].astype(float)
    p /= p.sum()
    q /= q.sum()
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_pm = np.where(p > 0, p * np.log(p / m), 0.0).sum()
        kl_qm = np.where(q > 0, q * np.log(q / m), 0.0).sum()
    return float(np.clip(0.5 * (kl_pm + kl_qm), 0.0, np.log(2.0)))


def _pooled_mean(blocks: Sequence[np.ndarray]) -> float:
    flat = [np.asarray(b, dtype=float).reshape(-1) for b in blocks]
    flat = np.concatenate(flat) if flat else np.zeros(0)
    return float(flat.mean()) if flat.size else 0.0


def sample_delta(prev: Sequence[Sequence[np.ndarray]], nxt: Sequence[Sequence[np.ndarray]], mode: str = "mean-diff") -> np.ndarray:
    """Delta vector between two attribute sample sets (each: per attribute, a list of blocks)."""
    if mode not in DELTA_MODES:
        raise ValueError(f"unknown delta mode {mode!r}")
    v = np.zeros(NUM_ATTRS)
    for p in range(NUM_ATTRS):
        if mode == "mean-diff":
            v[p] = _pooled_mean(nxt[p]) - _pooled_mean(prev[p])
        else:
            a = np.concatenate([np.reshape(b, -1) for b in prev[p]]) if len(prev[p]) else np.zeros(0)
            b = np.concatenate([np.reshape(c, -1) for c in nxt[p]]) if len(nxt[p]) else np.zeros(0)
            v[p] = histogram_jsd(a, b)
    return v


def kpi_delta(g: AttributedGraph, a_prev: MultiModalAction, a_next: MultiModalAction, mode: str = "mean-diff") -> np.ndarray:
    """Delta between the stored distributions of two nodes."""
    prev, nxt = g.node(a_prev), g.node(a_next)
    return sample_delta(prev.samples, nxt.samples, mode)


def build_transitions(
    actions: Sequence[MultiModalAction],
    windows: Sequence[KpiWindow] | None = None,
    g: AttributedGraph | None = None,
    mode: str = "mean-diff",
    source: str = "window",
) -> list[TransitionRecord]:
    """One record per consecutive pair of enforced actions.

    ``source="window"`` compares the two steps' own consequence windows, so repeated
    transitions keep their individual KPI variation. ``source="node"`` compares the
    pooled node distributions in ``g`` instead.
    """
    if len(actions) < 2:
        raise ValueError("need at least two steps to form a transition")
    if source == "window":
        if windows is None or len(windows) != len(actions):
            raise ValueError("window source needs one consequence window per action")
        blocks = [[[b] for b in w.attribute_samples()] for w in windows]
    elif source == "node":
        if g is None:
            raise ValueError("node source needs the attributed graph")
    else:
        raise ValueError(f"unknown transition source {source!r}")
    records = []
    for t in range(1, len(actions)):
        a, b = actions[t - 1], actions[t]
        if source == "window":
            v = sample_delta(blocks[t - 1], blocks[t], mode)
        else:
            v = kpi_delta(g, a, b, mode)  # type: ignore[arg-type]
        records.append(TransitionRecord(classify_transition(a, b), v, a, b, t))
    return records


def category_fractions(records: Sequence[TransitionRecord]) -> dict[str, float]:
    n = len(records)
    counts = {c.value: 0 for c in CATEGORY_ORDER}
    for r in records:
        counts[r.category.value] += 1
    return {k: (c / n if n else 0.0) for k, c in counts.items()}
