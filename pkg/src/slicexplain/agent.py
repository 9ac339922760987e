"""Decision pipeline stand-in: KPI window -> encoder -> policy -> multi-modal action.

The policies here replace a trained DRL agent. They only need to emit valid actions
and react to rewards; what matters downstream is that the encoder hides the
KPI-to-action link, exactly like an autoencoder in front of a real agent.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .core import (
    NUM_KPIS,
    NUM_ROWS,
    NUM_SLICES,
    ConfigError,
    Kpi,
    KpiWindow,
    MultiModalAction,
)

if TYPE_CHECKING:
    from .graph import AttributedGraph

LATENT_DIM = NUM_KPIS * NUM_SLICES
# eMBB -> tx_brate, mMTC -> tx_pkts, URLLC -> dl_buffer
DEFAULT_TARGET_KPI = (Kpi.TX_BRATE, Kpi.TX_PKTS, Kpi.DL_BUFFER)


class EndOfTrace(Exception):
    """A replay agent ran out of scripted actions."""


@dataclass(frozen=True)
class RewardConfig:
    weights: tuple[float, float, float]
    target_kpi: tuple[int, int, int] = tuple(int(k) for k in DEFAULT_TARGET_KPI)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "target_kpi", tuple(int(k) for k in self.target_kpi))
        if len(self.weights) != NUM_SLICES or len(self.target_kpi) != NUM_SLICES:
            raise ConfigError("reward config needs one weight and one target KPI per slice")

    def check_signs(self) -> None:
        w = self.weights
        if not (w[0] > 0 and w[1] > 0 and w[2] < 0):
            raise ConfigError(f"reward weights {w} must be positive for eMBB/mMTC and negative for URLLC")

    def scaled(self, alpha: float) -> "RewardConfig":
        return RewardConfig(tuple(alpha * w for w in self.weights), self.target_kpi)  # type: ignore[arg-type]


HT_REWARD = RewardConfig((0.7, 0.15, -0.15))
LL_REWARD = RewardConfig((0.15, 0.15, -0.7))


def reward(window: KpiWindow | np.ndarray, cfg: RewardConfig) -> float:
    """Weighted sum over slices of the mean of each slice's target KPI."""
    samples = window.samples if isinstance(window, KpiWindow) else np.asarray(window, dtype=float)
    total = 0.0
    for l, (w, k) in enumerate(zip(cfg.weights, cfg.target_kpi)):
        total += w * float(np.mean(samples[:, k, l]))
    return total


def slice_target_means(cfg: RewardConfig, means: Sequence[float]) -> float:
    """Reward from already-averaged per-slice target KPI values."""
    return float(sum(w * m for w, m in zip(cfg.weights, means)))


class Encoder:
    """Min-max normalisation to [-1, 1] with running per-KPI bounds, then a fixed
    random projection of the 90 inputs down to 9 latent values squashed by tanh."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAE]))
        self.weights = rng.normal(size=(LATENT_DIM, NUM_ROWS * NUM_KPIS * NUM_SLICES)) / np.sqrt(NUM_ROWS * NUM_KPIS * NUM_SLICES)
        self.lo: np.ndarray | None = None
        self.hi: np.ndarray | None = None

    def normalize(self, samples: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        span = hi - lo
        out = np.full(samples.shape, -1.0)
        for k in range(NUM_KPIS):
            if span[k] > 0:
                out[:, k, :] = 2.0 * (samples[:, k, :] - lo[k]) / span[k] - 1.0
        return np.clip(out, -1.0, 1.0)

    def project(self, samples: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        x = self.normalize(samples, lo, hi).reshape(-1)
        return np.clip(np.tanh(self.weights @ x), -1.0, 1.0)

    def update_bounds(self, samples: np.ndarray) -> None:
        lo = samples.min(axis=(0, 2))
        hi = samples.max(axis=(0, 2))
        if self.lo is None:
            self.lo, self.hi = lo, hi
        else:
            self.lo = np.minimum(self.lo, lo)
            self.hi = np.maximum(self.hi, hi)

    def encode(self, window: KpiWindow) -> np.ndarray:
        self.update_bounds(window.samples)
        assert self.lo is not None and self.hi is not None
        return self.project(window.samples, self.lo, self.hi)


def encode(window: KpiWindow, encoder: Encoder | None = None) -> np.ndarray:
    return (encoder or Encoder()).encode(window)


def default_action_set() -> list[MultiModalAction]:
    """PRB triples emphasising each slice in turn, crossed with all 27 scheduler triples."""
    prb_triples = sorted(set(itertools.permutations((36, 3, 11))) | set(itertools.permutations((30, 9, 11))))
    scheds = list(itertools.product(range(3), repeat=NUM_SLICES))
    return [MultiModalAction(p, s) for p in prb_triples for s in scheds]  # type: ignore[arg-type]


@dataclass
class AgentProfile:
    kind: str  # "HT" or "LL"
    policy_impl: str = "tabular-bandit"  # "replay", "greedy-graph", "tabular-bandit"
    reward_config: RewardConfig = field(default=HT_REWARD)

    @classmethod
    def named(cls, kind: str, policy_impl: str = "tabular-bandit", weights: Sequence[float] | None = None) -> "AgentProfile":
        kind = kind.upper()
        if kind not in ("HT", "LL"):
            raise ConfigError(f"agent kind must be HT or LL, got {kind!r}")
        if policy_impl not in ("replay", "greedy-graph", "tabular-bandit"):
            raise ConfigError(f"unknown policy implementation {policy_impl!r}")
        cfg = RewardConfig(tuple(weights)) if weights is not None else (HT_REWARD if kind == "HT" else LL_REWARD)  # type: ignore[arg-type]
        cfg.check_signs()
        mags = [abs(w) for w in cfg.weights]
        prio = 0 if kind == "HT" else 2
        if mags[prio] < max(mags):
            raise ConfigError(f"{kind} profile must give the largest weight magnitude to slice {prio}")
        return cls(kind, policy_impl, cfg)


class ReplayAgent:
    """Emits a scripted sequence of actions, ignoring the latent state."""

    def __init__(self, actions: Iterable[MultiModalAction]):
        self.actions = [MultiModalAction.from_obj(a) for a in actions]
        self.pos = 0

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ReplayAgent":
        actions = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    actions.append(MultiModalAction.from_obj(obj.get("action", obj) if isinstance(obj, dict) else obj))
                except (ValueError, KeyError, TypeError) as exc:
                    raise ConfigError(f"{path}:{lineno}: bad replay action: {exc}") from exc
        return cls(actions)

    def decide(self, latent: np.ndarray, rng: np.random.Generator) -> MultiModalAction:
        if self.pos >= len(self.actions):
            raise EndOfTrace(f"replay trace exhausted after {self.pos} actions")
        action = self.actions[self.pos]
        self.pos += 1
        return action

    def observe(self, action: MultiModalAction, value: float) -> None:
        pass


class BanditAgent:
    """Epsilon-greedy over a discrete action set with sample-mean reward estimates.

    Untried actions are explored first, in random order.
    """

    def __init__(self, actions: Sequence[MultiModalAction] | None = None, epsilon: float = 0.1):
        self.actions = list(actions) if actions is not None else default_action_set()
        self.index = {a: i for i, a in enumerate(self.actions)}
        self.epsilon = epsilon
        self.counts = np.zeros(len(self.actions), dtype=np.int64)
        self.means = np.zeros(len(self.actions))

    def decide(self, latent: np.ndarray, rng: np.random.Generator) -> MultiModalAction:
        untried = np.flatnonzero(self.counts == 0)
        if untried.size:
            return self.actions[int(rng.choice(untried))]
        if rng.random() < self.epsilon:
            return self.actions[int(rng.integers(len(self.actions)))]
        return self.actions[int(np.argmax(self.means))]

    def observe(self, action: MultiModalAction, value: float) -> None:
        i = self.index.get(action)
        if i is None:
            return
        self.counts[i] += 1
        self.means[i] += (value - self.means[i]) / self.counts[i]

    def value(self, action: MultiModalAction) -> float:
        return float(self.means[self.index[action]])


class GreedyGraphAgent:
    """Moves to the one-hop neighbour of the last enforced action with the best expected
    reward; explores a random action with probability ``epsilon`` or when the graph
    offers nothing."""

    def __init__(self, graph: "AttributedGraph", cfg: RewardConfig, epsilon: float = 0.1,
                 actions: Sequence[MultiModalAction] | None = None):
        self.graph = graph
        self.cfg = cfg
        self.epsilon = epsilon
        self.actions = list(actions) if actions is not None else default_action_set()

    def decide(self, latent: np.ndarray, rng: np.random.Generator) -> MultiModalAction:
        from .graph import expected_reward, neighbors

        explore = rng.random() < self.epsilon
        last = self.graph.last_node
        if explore or last is None:
            return self.actions[int(rng.integers(len(self.actions)))]
        cands = [a for a, _ in neighbors(self.graph, last)]
        if not cands:
            return self.actions[int(rng.integers(len(self.actions)))]
        return max(sorted(cands), key=lambda a: expected_reward(self.graph, a, self.cfg))

    def observe(self, action: MultiModalAction, value: float) -> None:
        pass


def make_agent(profile: AgentProfile, graph: "AttributedGraph | None" = None, epsilon: float = 0.1,
               replay_actions: Iterable[MultiModalAction] | None = None):
    if profile.policy_impl == "replay":
        if replay_actions is None:
            raise ConfigError("replay policy needs a replay trace")
        return ReplayAgent(replay_actions)
    if profile.policy_impl == "greedy-graph":
        if graph is None:
            raise ConfigError("greedy-graph policy needs an attributed graph")
        return GreedyGraphAgent(graph, profile.reward_config, epsilon)
    return BanditAgent(epsilon=epsilon)


def decide(agent, latent: np.ndarray, rng: np.random.Generator) -> MultiModalAction:
    latent = np.asarray(latent, dtype=float)
    if latent.shape != (LATENT_DIM,):
        raise ValueError(f"latent state must have {LATENT_DIM} entries")
    action = agent.decide(latent, rng)
    # constructing the action re-validates PRB bounds and budget
    return MultiModalAction.from_obj(action)

