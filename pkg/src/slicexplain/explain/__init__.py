from .report import ExplanationReport, Statement, summarize
from .shapley import masked_evaluator, shapley_scores
from .transitions import (
    CATEGORY_ORDER,
    TransitionCategory,
    TransitionRecord,
    build_transitions,
    category_fractions,
    classify_transition,
    histogram_jsd,
    kpi_delta,
    sample_delta,
)
from .tree import DistillTree, fit_distill_tree, majority_baseline

__all__ = [
    "CATEGORY_ORDER",
    "DistillTree",
    "ExplanationReport",
    "Statement",
    "TransitionCategory",
    "TransitionRecord",
    "build_transitions",
    "category_fractions",
    "classify_transition",
    "fit_distill_tree",
    "histogram_jsd",
    "kpi_delta",
    "majority_baseline",
    "masked_evaluator",
    "sample_delta",
    "shapley_scores",
    "summarize",
]
