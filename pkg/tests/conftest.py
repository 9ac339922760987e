from __future__ import annotations

import numpy as np
import pytest

from slicexplain.core import NUM_KPIS, NUM_ROWS, NUM_SLICES, KpiWindow, MultiModalAction
from slicexplain.graph import AttributedGraph, graph_record

# three consecutive actions: A, B, A
A1 = MultiModalAction.of([36, 3, 11], [1, 2, 2])
A2 = MultiModalAction.of([36, 3, 11], [2, 0, 1])
WALKTHROUGH = [A1, A2, A1]

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
    if detail:
        line += f" | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def random_window(rng: np.random.Generator, ues=(2, 2, 2)) -> KpiWindow:
    """A window with random per-UE rows whose slice rows are their sums."""
    blocks = []
    for n in ues:
        blocks.append(rng.uniform(0, 50, size=(NUM_ROWS, NUM_KPIS, n)).round(3))
    samples = np.stack([b.sum(axis=2) for b in blocks], axis=2)
    return KpiWindow(samples, tuple(blocks))


def random_action(rng: np.random.Generator) -> MultiModalAction:
    cut = np.sort(rng.integers(0, 51, size=2))
    prb = [int(cut[0]), int(cut[1] - cut[0]), int(50 - cut[1])]
    return MultiModalAction.of(prb, rng.integers(0, 3, size=NUM_SLICES).tolist())


def build_graph(actions, windows) -> AttributedGraph:
    g = AttributedGraph()
    for a, w in zip(actions, windows):
        graph_record(g, a, w)
    return g


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def walkthrough_windows(rng):
    return [random_window(rng) for _ in WALKTHROUGH]
