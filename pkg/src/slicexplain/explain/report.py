"""Turn a fitted distillation tree into readable statements and a category table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import ATTR_NAMES, NUM_ATTRS
from .transitions import CATEGORY_ORDER, TransitionRecord, category_fractions
from .tree import DistillTree, majority_baseline

# |mean delta| below this (in units of the attribute's spread) counts as no effect
EFFECT_THRESHOLD = 0.25


@dataclass
class Statement:
    category: str
    conditions: list[str]
    n_records: int
    purity: float
    dominant_attr: str | None
    dominant_delta: float
    text: str


@dataclass
class ExplanationReport:
    tree: DistillTree
    statements: list[Statement]
    fractions: dict[str, float]
    counts: dict[str, int]
    interpretations: dict[str, str]
    accuracy: float
    majority_baseline: float
    synthesis_time_s: float = 0.0
    delta_mode: str = "mean-diff"
    notes: list[str] = field(default_factory=list)

    def to_obj(self) -> dict:
        return {
            "tree": self.tree.to_obj(),
            "statements": [s.__dict__ for s in self.statements],
            "fractions": self.fractions,
            "counts": self.counts,
            "interpretations": self.interpretations,
            "accuracy": self.accuracy,
            "majority_baseline": self.majority_baseline,
            "synthesis_time_s": self.synthesis_time_s,
            "delta_mode": self.delta_mode,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)

    def render_text(self) -> str:
        out = ["Distilled decision tree", "======================="]
        out.append(self.tree.render())
        out.append("")
        out.append(f"training accuracy {self.accuracy:.3f} (majority baseline {self.majority_baseline:.3f})")
        out.append("")
        out.append("Statements")
        out.append("----------")
        out.extend(f"- {s.text}" for s in self.statements)
        out.append("")
        width = max(len(c.value) for c in CATEGORY_ORDER)
        out.append(f"{'Transition'.ljust(width)}  Share   Interpretation")
        for c in CATEGORY_ORDER:
            out.append(f"{c.value.ljust(width)}  {self.fractions[c.value]:5.1%}  {self.interpretations[c.value]}")
        out.append("")
        out.append(f"delta mode: {self.delta_mode}; synthesis time: {self.synthesis_time_s:.3f} s")
        out.extend(f"note: {n}" for n in self.notes)
        return "\n".join(out) + "\n"


def _fmt_condition(tree: DistillTree, cond: tuple[int, str, float]) -> str:
    f, op, thr = cond
    return f"{tree.feature_names[f]} {op} {thr:.4g}"  # type: ignore[index]


def _route(tree: DistillTree, records: Sequence[TransitionRecord]) -> dict[int, list[TransitionRecord]]:
    groups: dict[int, list[TransitionRecord]] = {}
    for r in records:
        groups.setdefault(id(tree._leaf_for(r.v)), []).append(r)
    return groups


def _dominant(vs: np.ndarray, scale: np.ndarray) -> tuple[int | None, float]:
    if vs.size == 0:
        return None, 0.0
    mean = vs.mean(axis=0)
    z = np.abs(mean) / scale
    p = int(np.argmax(z))
    if mean[p] == 0.0:
        return None, 0.0
    return p, float(mean[p])


def _interpret(vs: np.ndarray, scale: np.ndarray) -> str:
    if vs.size == 0:
        return "not observed"
    mean = vs.mean(axis=0)
    if np.all(np.abs(mean) < 1e-12):
        return "No change in KPIs"
    z = mean / scale
    order = [p for p in np.argsort(-np.abs(z), kind="stable") if abs(z[p]) >= EFFECT_THRESHOLD][:3]
    if not order:
        return "Produces minor changes in KPIs"
    parts = [f"{'augments' if z[p] > 0 else 'diminishes'} {ATTR_NAMES[p]}" for p in order]
    text = ", ".join(parts)
    return text[0].upper() + text[1:]


def summarize(
    records: Sequence[TransitionRecord],
    tree: DistillTree,
    synthesis_time_s: float = 0.0,
    delta_mode: str = "mean-diff",
    notes: Sequence[str] = (),
) -> ExplanationReport:
    """One statement per leaf (root-to-leaf conditions), category shares, and a
    per-category interpretation table."""
    X = np.vstack([r.v for r in records]) if records else np.zeros((0, NUM_ATTRS))
    spread = X.std(axis=0) if len(records) else np.ones(NUM_ATTRS)
    scale = np.where(spread > 0, spread, 1.0)
    groups = _route(tree, records)
    statements = []
    for path, leaf in tree.leaves():
        category = tree.classes[leaf.label]  # type: ignore[index]
        members = groups.get(id(leaf), [])
        same = [r for r in members if r.category.value == category] or members
        vs = np.vstack([r.v for r in same]) if same else np.zeros((0, NUM_ATTRS))
        p, delta = _dominant(vs, scale)
        conds = [_fmt_condition(tree, c) for c in path]
        when = " and ".join(conds) if conds else "in every observed state"
        if p is None:
            effect = "no KPI change"
        else:
            effect = f"{ATTR_NAMES[p]} {'increases' if delta > 0 else 'decreases'} by {abs(delta):.4g} on average"
        prefix = "when " if conds else ""
        text = f"the agent uses {category} transitions {prefix}{when}; dominant effect: {effect}"
        statements.append(Statement(category, conds, leaf.n, leaf.purity,
                                    ATTR_NAMES[p] if p is not None else None, delta, text))
    fractions = category_fractions(records)
    counts = {c.value: sum(1 for r in records if r.category is c) for c in CATEGORY_ORDER}
    interpretations = {}
    for c in CATEGORY_ORDER:
        vs = np.vstack([r.v for r in records if r.category is c]) if counts[c.value] else np.zeros((0, NUM_ATTRS))
        interpretations[c.value] = _interpret(vs, scale)
    labels = [r.category.value for r in records]
    return ExplanationReport(
        tree=tree,
        statements=statements,
        fractions=fractions,
        counts=counts,
        interpretations=interpretations,
        accuracy=tree.accuracy(X, labels) if records else 0.0,
        majority_baseline=majority_baseline(labels),
        synthesis_time_s=synthesis_time_s,
        delta_mode=delta_mode,
        notes=list(notes),
    )
