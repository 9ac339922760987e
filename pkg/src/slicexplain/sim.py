"""Desk-scale downlink simulator: one gNB, three slices, per-slice schedulers.

One decision interval is ``NUM_ROWS`` ticks of ``TICK_S`` seconds. Each tick draws
arrivals, splits each slice's PRB grant among its UEs with the slice's scheduler,
drains buffers and records one KPI row per slice.

Traffic and channel randomness come from two generators whose draw pattern does not
depend on the enforced action, so two runs with the same seed but different actions
see the same arrivals and channel trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    NUM_KPIS,
    NUM_ROWS,
    NUM_SLICES,
    PRB_BUDGET,
    ConfigError,
    Kpi,
    KpiWindow,
    MultiModalAction,
    SchedPolicy,
)

TICK_S = 0.025
MTU_BYTES = 1500

# Spectral efficiency (bit/s/Hz) per CQI index 1..15, LTE 4-bit CQI table.
CQI_EFFICIENCY = (
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141,
    2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547,
)
MEDIAN_CQI = 8
# 50 PRBs at the median CQI carry 15 Mbit/s -> 7500 bits per PRB per 25 ms tick.
_BITS_AT_MEDIAN = 15e6 * TICK_S / PRB_BUDGET
BITS_PER_PRB_TICK = tuple(int(round(e * _BITS_AT_MEDIAN / CQI_EFFICIENCY[MEDIAN_CQI - 1])) for e in CQI_EFFICIENCY)

CQI_MIN, CQI_MAX = 1, 15
BUFFER_LIMIT_BYTES = 500_000  # per-UE drop-tail queue
PF_EWMA = 0.1
PF_RATE_FLOOR = 1e-3  # Mbit/s


@dataclass(frozen=True)
class TrafficProfile:
    """Per-slice downlink arrival model.

    eMBB UEs receive constant bitrate traffic; mMTC and URLLC UEs receive Poisson
    packet arrivals of ``poisson_packet_bytes`` with the given mean rate.
    """

    name: str
    embb_cbr_mbps: float
    mmtc_kbps: float
    urllc_kbps: float
    poisson_packet_bytes: int = 125

    def mean_bytes_per_tick(self, slice_: int) -> float:
        if slice_ == 0:
            return self.embb_cbr_mbps * 1e6 * TICK_S / 8
        kbps = self.mmtc_kbps if slice_ == 1 else self.urllc_kbps
        return kbps * 1e3 * TICK_S / 8


TRF1 = TrafficProfile("TRF1", embb_cbr_mbps=4.0, mmtc_kbps=44.6, urllc_kbps=89.3)
TRF2 = TrafficProfile("TRF2", embb_cbr_mbps=2.0, mmtc_kbps=133.9, urllc_kbps=178.6)
PROFILES = {"TRF1": TRF1, "TRF2": TRF2}


def get_profile(name: str) -> TrafficProfile:
    try:
        return PROFILES[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown traffic profile {name!r}; expected one of {sorted(PROFILES)}") from None


@dataclass
class UeState:
    ue_id: int
    slice: int
    dl_buffer: int = 0  # bytes
    cqi: int = MEDIAN_CQI
    avg_rate: float = 0.0  # Mbit/s, EWMA of served rate

    @property
    def channel_quality(self) -> float:
        return CQI_EFFICIENCY[self.cqi - 1]

    @property
    def bits_per_prb(self) -> int:
        return BITS_PER_PRB_TICK[self.cqi - 1]


@dataclass
class EnvState:
    ues: list[UeState]
    profile: TrafficProfile
    seed: int
    traffic_rng: np.random.Generator = field(repr=False)
    channel_rng: np.random.Generator = field(repr=False)
    tick: int = 0
    buffer_limit: int = BUFFER_LIMIT_BYTES
    dropped_bytes: int = 0

    def slice_ues(self, slice_: int) -> list[UeState]:
        return [u for u in self.ues if u.slice == slice_]

    @property
    def ue_counts(self) -> tuple[int, int, int]:
        return tuple(len(self.slice_ues(l)) for l in range(NUM_SLICES))  # type: ignore[return-value]


def env_init(num_ues_per_slice: Sequence[int], profile: TrafficProfile, seed: int,
             buffer_limit: int = BUFFER_LIMIT_BYTES) -> EnvState:
    counts = [int(c) for c in num_ues_per_slice]
    if len(counts) != NUM_SLICES or any(c < 0 for c in counts):
        raise ConfigError(f"UE counts must be {NUM_SLICES} non-negative integers, got {list(num_ues_per_slice)}")
    if sum(counts) == 0:
        raise ConfigError("at least one UE is required")
    root = np.random.SeedSequence(seed)
    traffic_seq, channel_seq = root.spawn(2)
    channel_rng = np.random.default_rng(channel_seq)
    ues = []
    for l, c in enumerate(counts):
        for _ in range(c):
            ues.append(UeState(ue_id=len(ues), slice=l))
    for ue, cqi in zip(ues, channel_rng.integers(4, 13, size=len(ues))):
        ue.cqi = int(cqi)
    return EnvState(
        ues=ues,
        profile=profile,
        seed=seed,
        traffic_rng=np.random.default_rng(traffic_seq),
        channel_rng=channel_rng,
        buffer_limit=buffer_limit,
    )


def env_remove_ue(state: EnvState, slice_: int) -> UeState:
    """Detach the most recently added UE of a slice (used for the user-drop scenarios)."""
    members = state.slice_ues(slice_)
    if not members:
        raise ConfigError(f"slice {slice_} has no UE to remove")
    victim = members[-1]
    state.ues.remove(victim)
    if not state.ues:
        state.ues.append(victim)
        raise ConfigError("cannot remove the last UE")
    return victim


def prb_demand(ue: UeState) -> int:
    """PRBs needed to empty the UE's buffer this tick at its current CQI."""
    return math.ceil(ue.dl_buffer * 8 / ue.bits_per_prb)


def _largest_remainder(prbs: int, weights: np.ndarray) -> list[int]:
    total = weights.sum()
    if total <= 0:
        weights = np.ones_like(weights)
        total = weights.sum()
    exact = prbs * weights / total
    shares = np.floor(exact).astype(int)
    rest = prbs - int(shares.sum())
    frac = exact - shares
    # stable sort on -frac keeps ascending UE order among equal fractions
    for i in np.argsort(-frac, kind="stable")[:rest]:
        shares[i] += 1
    return [int(s) for s in shares]


def _water_fill(prbs: int, demands: Sequence[int]) -> list[int]:
    shares = [0] * len(demands)
    left = prbs
    while left > 0:
        open_ = [i for i, d in enumerate(demands) if shares[i] < d]
        if not open_:
            break
        level = min(shares[i] for i in open_)
        # raise the lowest UEs by one PRB, ascending id first
        for i in open_:
            if shares[i] == level and left > 0:
                shares[i] += 1
                left -= 1
    return shares


def sched_allocate(
    policy: int,
    prbs: int,
    ues: Sequence[UeState],
    demands: Sequence[int] | None = None,
) -> list[int]:
    """Split a slice's PRB grant among its UEs.

    RR: as-equal-as-possible, remainder to the lowest UE ids.
    PF: proportional to channel efficiency over average served rate.
    WF: equal water level capped at each UE's PRB demand; surplus stays unused.
    """
    if not 0 <= prbs <= PRB_BUDGET:
        raise ConfigError(f"PRB grant {prbs} outside [0,{PRB_BUDGET}]")
    if not ues:
        raise ConfigError("scheduler needs at least one UE")
    n = len(ues)
    policy = SchedPolicy(policy)
    if policy is SchedPolicy.RR:
        base, rem = divmod(prbs, n)
        return [base + (1 if i < rem else 0) for i in range(n)]
    if policy is SchedPolicy.PF:
        weights = np.array([u.channel_quality / max(u.avg_rate, PF_RATE_FLOOR) for u in ues])
        return _largest_remainder(prbs, weights)
    if demands is None:
        demands = [prb_demand(u) for u in ues]
    return _water_fill(prbs, demands)


def _arrival_params(state: EnvState) -> tuple[np.ndarray, np.ndarray]:
    prof = state.profile
    lam = np.array([prof.mean_bytes_per_tick(ue.slice) / prof.poisson_packet_bytes for ue in state.ues])
    cbr = np.array([ue.slice == 0 for ue in state.ues])
    return lam, cbr


def _arrivals(state: EnvState, params: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    prof = state.profile
    lam, cbr = params if params is not None else _arrival_params(state)
    # draw for every UE each tick so the stream does not depend on slice membership order
    counts = state.traffic_rng.poisson(lam)
    out = counts.astype(np.int64) * prof.poisson_packet_bytes
    out[cbr] = int(round(prof.mean_bytes_per_tick(0)))
    return out


def _evolve_channel(state: EnvState) -> None:
    # mean-reverting bounded walk: drift toward the middle of the CQI range
    u = state.channel_rng.random(len(state.ues))
    span = CQI_MAX - CQI_MIN
    for ue, x in zip(state.ues, u):
        p_up = 0.1 * (CQI_MAX - ue.cqi) / span
        p_down = 0.1 * (ue.cqi - CQI_MIN) / span
        if x < p_up:
            ue.cqi += 1
        elif x < p_up + p_down:
            ue.cqi -= 1


def env_step(state: EnvState, action: MultiModalAction) -> tuple[EnvState, KpiWindow]:
    """Enforce ``action`` for one decision interval and return the KPI window it produced."""
    action = MultiModalAction.from_obj(action)
    samples = np.zeros((NUM_ROWS, NUM_KPIS, NUM_SLICES))
    groups = [state.slice_ues(l) for l in range(NUM_SLICES)]
    ue_rows = [np.zeros((NUM_ROWS, NUM_KPIS, len(g))) for g in groups]
    params = _arrival_params(state)
    for m in range(NUM_ROWS):
        arrivals = _arrivals(state, params)
        for ue, a in zip(state.ues, arrivals):
            room = max(state.buffer_limit - ue.dl_buffer, 0)
            accepted = min(int(a), room)
            state.dropped_bytes += int(a) - accepted
            ue.dl_buffer += accepted
        for l, group in enumerate(groups):
            if not group:
                continue
            shares = sched_allocate(action.sched[l], action.prb[l], group)
            for j, (ue, share) in enumerate(zip(group, shares)):
                capacity = share * ue.bits_per_prb // 8
                served = min(ue.dl_buffer, capacity)
                ue.dl_buffer -= served
                rate = served * 8 / TICK_S / 1e6
                ue.avg_rate = (1 - PF_EWMA) * ue.avg_rate + PF_EWMA * rate
                ue_rows[l][m, Kpi.TX_BRATE, j] = rate
                ue_rows[l][m, Kpi.TX_PKTS, j] = math.ceil(served / MTU_BYTES)
                ue_rows[l][m, Kpi.DL_BUFFER, j] = ue.dl_buffer
            samples[m, :, l] = ue_rows[l][m].sum(axis=1)
        _evolve_channel(state)
        state.tick += 1
    return state, KpiWindow(samples, tuple(ue_rows))
