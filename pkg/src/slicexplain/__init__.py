"""Post-hoc explanation and intent-based steering for DRL-style RAN slicing agents."""

from .agent import HT_REWARD, LL_REWARD, AgentProfile, Encoder, RewardConfig, decide, encode, make_agent, reward
from .core import ConfigError, Kpi, KpiWindow, MultiModalAction, SchedPolicy, Slice
from .graph import (
    AttributedGraph,
    NodeAttribute,
    NodeNotFound,
    expected_kpi,
    expected_reward,
    graph_record,
    neighbors,
)
from .pipeline import (
    ExperimentConfig,
    TraceError,
    compare_traces,
    explain_trace,
    load_config,
    preset,
    run_experiment,
    shapley_for_step,
)
from .sim import TRF1, TRF2, env_init, env_step, sched_allocate
from .steer import RewardHistory, SteeringConfig, Strategy, steer, steering_stats

__version__ = "0.1.0"

__all__ = [
    "HT_REWARD",
    "LL_REWARD",
    "TRF1",
    "TRF2",
    "AgentProfile",
    "AttributedGraph",
    "ConfigError",
    "Encoder",
    "ExperimentConfig",
    "Kpi",
    "KpiWindow",
    "MultiModalAction",
    "NodeAttribute",
    "NodeNotFound",
    "RewardConfig",
    "RewardHistory",
    "SchedPolicy",
    "Slice",
    "SteeringConfig",
    "Strategy",
    "TraceError",
    "compare_traces",
    "decide",
    "encode",
    "env_init",
    "env_step",
    "expected_kpi",
    "expected_reward",
    "explain_trace",
    "graph_record",
    "load_config",
    "make_agent",
    "neighbors",
    "preset",
    "reward",
    "run_experiment",
    "sched_allocate",
    "shapley_for_step",
    "steer",
    "steering_stats",
]
