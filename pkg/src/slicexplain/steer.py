"""Intent-based action steering over the attributed graph.

A gate compares the proposed action's expected reward with the running average of
recent realised rewards. When the gate opens for the configured strategy, the
candidates are the previous action plus its one-hop successors, and the proposal is
swapped only if the best candidate is strictly better for the strategy's objective.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .agent import RewardConfig, reward
from .core import ConfigError, Kpi, KpiWindow, MultiModalAction, Slice, attr_index
from .graph import AttributedGraph, expected_reward, expected_slice_kpi, neighbors

# attribute used by the bitrate strategy: eMBB transmitted bitrate
BITRATE_ATTR = attr_index(Kpi.TX_BRATE, Slice.EMBB)


class Strategy(str, Enum):
    NONE = "none"
    MAX_REWARD = "AR1"
    MIN_REWARD = "AR2"
    IMPROVE_BITRATE = "AR3"

    @classmethod
    def parse(cls, value: "str | Strategy | None") -> "Strategy":
        if value is None:
            return cls.NONE
        if isinstance(value, Strategy):
            return value
        aliases = {
            "none": cls.NONE, "baseline": cls.NONE,
            "ar1": cls.MAX_REWARD, "max-reward": cls.MAX_REWARD,
            "ar2": cls.MIN_REWARD, "min-reward": cls.MIN_REWARD,
            "ar3": cls.IMPROVE_BITRATE, "improve-bitrate": cls.IMPROVE_BITRATE,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ConfigError(f"unknown steering strategy {value!r}") from None


@dataclass
class SteeringConfig:
    strategy: Strategy
    history_len: int
    reward_config: RewardConfig

    def __post_init__(self) -> None:
        self.strategy = Strategy.parse(self.strategy)
        if self.history_len < 1:
            raise ConfigError("history length O must be >= 1")


class RewardHistory:
    """The last ``maxlen`` realised rewards."""

    def __init__(self, maxlen: int, values: Iterable[float] = ()):
        self._values: deque[float] = deque(values, maxlen=maxlen)

    def append(self, value: float) -> None:
        self._values.append(float(value))

    def __len__(self) -> int:
        return len(self._values)

    def mean(self) -> float:
        if not self._values:
            raise ValueError("empty reward history")
        return sum(self._values) / len(self._values)


def omega(expected: float, history: RewardHistory) -> bool:
    """True when the expected reward falls strictly below the recent average."""
    return expected < history.mean()


@dataclass
class SteeringDecision:
    action: MultiModalAction
    original: MultiModalAction
    replaced: bool = False
    suggested: bool = False
    reason: str = "pass-through"
    omega: bool | None = None
    q_size: int = 0
    candidate: MultiModalAction | None = None
    expected_original: float | None = None
    expected_candidate: float | None = None
    estimated_from_window: bool = False

    def to_obj(self, strategy: Strategy) -> dict:
        return {
            "strategy": strategy.value,
            "replaced": self.replaced,
            "suggested": self.suggested,
            "reason": self.reason,
            "omega": self.omega,
            "q_size": self.q_size,
            "original_action": self.original.to_obj(),
            "chosen_action": self.action.to_obj(),
            "candidate": self.candidate.to_obj() if self.candidate is not None else None,
            "expected_original": self.expected_original,
            "expected_candidate": self.expected_candidate,
            "estimated_from_window": self.estimated_from_window,
        }


def _objective(strategy: Strategy, g: AttributedGraph, action: MultiModalAction, cfg: RewardConfig) -> float:
    if strategy is Strategy.IMPROVE_BITRATE:
        return expected_slice_kpi(g, action, BITRATE_ATTR)
    return expected_reward(g, action, cfg)


def _window_objective(strategy: Strategy, window: KpiWindow, cfg: RewardConfig) -> float:
    if strategy is Strategy.IMPROVE_BITRATE:
        return float(window.samples[:, Kpi.TX_BRATE, Slice.EMBB].mean())
    return reward(window, cfg)


def steer(
    cfg: SteeringConfig,
    g: AttributedGraph,
    a_t: MultiModalAction,
    a_prev: MultiModalAction | None,
    history: RewardHistory,
    fallback_window: KpiWindow | None = None,
) -> SteeringDecision:
    """Gate and possibly replace the agent's proposal ``a_t``.

    If ``a_t`` has no node yet, its expected values come from ``fallback_window``
    (normally the latest observed window) as a one-sample estimate.
    """
    decision = SteeringDecision(action=a_t, original=a_t)
    strategy = cfg.strategy
    if strategy is Strategy.NONE:
        return decision
    if len(history) == 0:
        decision.reason = "empty reward history"
        return decision

    estimated = a_t not in g
    if not estimated:
        r_t = expected_reward(g, a_t, cfg.reward_config)
        obj_t = _objective(strategy, g, a_t, cfg.reward_config)
    elif fallback_window is not None:
        r_t = reward(fallback_window, cfg.reward_config)
        obj_t = _window_objective(strategy, fallback_window, cfg.reward_config)
    else:
        decision.reason = "proposal unseen and no window to estimate it"
        return decision
    decision.estimated_from_window = estimated
    decision.expected_original = obj_t

    w = omega(r_t, history)
    decision.omega = w
    gate = (
        (w and strategy is Strategy.MAX_REWARD)
        or (not w and strategy is Strategy.MIN_REWARD)
        or (w and strategy is Strategy.IMPROVE_BITRATE)
    )
    if not gate:
        decision.reason = "gate closed"
        return decision
    if a_prev is None or a_prev not in g:
        decision.reason = "previous action not in graph"
        return decision

    visited = {a_prev}
    queue = [a_prev]
    for nb, _attr in neighbors(g, a_prev):
        if nb not in visited:
            visited.add(nb)
            queue.append(nb)
    decision.q_size = len(queue)

    scored = [(_objective(strategy, g, a, cfg.reward_config), a) for a in queue]
    if strategy is Strategy.MIN_REWARD:
        # lowest value, then lowest action tuple
        value, best = min(scored, key=lambda t: (t[0], t[1]))
        better = value < obj_t
    else:
        # highest value, then lowest action tuple
        value, best = min(scored, key=lambda t: (-t[0], t[1]))
        better = value > obj_t
    decision.candidate = best
    decision.expected_candidate = value
    decision.suggested = best != a_t
    if better:
        decision.action = best
        decision.replaced = True
        decision.reason = "replaced"
    else:
        decision.reason = "no strictly better candidate"
    return decision


@dataclass
class SteeringStats:
    substitutions: dict[str, int] = field(default_factory=dict)
    suggestions: dict[str, int] = field(default_factory=dict)
    replacements_used: dict[str, int] = field(default_factory=dict)
    total_steps: int = 0
    total_substitutions: int = 0
    total_suggestions: int = 0

    @property
    def max_substitutions(self) -> int:
        return max(self.substitutions.values(), default=0)

    @property
    def any_substituted_more_than_3(self) -> bool:
        return self.max_substitutions > 3

    def to_obj(self) -> dict:
        return {
            "substitutions": self.substitutions,
            "suggestions": self.suggestions,
            "replacements_used": self.replacements_used,
            "total_steps": self.total_steps,
            "total_substitutions": self.total_substitutions,
            "total_suggestions": self.total_suggestions,
            "max_substitutions": self.max_substitutions,
            "any_substituted_more_than_3": self.any_substituted_more_than_3,
        }


def steering_stats(trace: Iterable[Mapping]) -> SteeringStats:
    """Per-action tallies of how often the graph proposed replacing the agent's action
    (suggestions) and how often it actually did (substitutions)."""
    subs: Counter[str] = Counter()
    sugg: Counter[str] = Counter()
    used: Counter[str] = Counter()
    steps = 0
    for rec in trace:
        steps += 1
        original = str(MultiModalAction.from_obj(rec.get("original_action", rec["action"])))
        steering = rec.get("steering") or {}
        replaced = bool(rec.get("replaced", steering.get("replaced", False)))
        suggested = bool(steering.get("suggested", replaced))
        if suggested or replaced:
            sugg[original] += 1
        if replaced:
            subs[original] += 1
            used[str(MultiModalAction.from_obj(rec["action"]))] += 1
    return SteeringStats(
        substitutions=dict(sorted(subs.items())),
        suggestions=dict(sorted(sugg.items())),
        replacements_used=dict(sorted(used.items())),
        total_steps=steps,
        total_substitutions=sum(subs.values()),
        total_suggestions=sum(sugg.values()),
    )
