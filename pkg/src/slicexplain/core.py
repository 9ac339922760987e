"""Shared domain types: slices, KPIs, scheduling policies, actions, KPI windows."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

NUM_SLICES = 3
NUM_KPIS = 3
NUM_ROWS = 10
NUM_ATTRS = NUM_KPIS * NUM_SLICES
PRB_BUDGET = 50


class Slice(IntEnum):
    EMBB = 0
    MMTC = 1
    URLLC = 2


class Kpi(IntEnum):
    TX_BRATE = 0  # Mbit/s
    TX_PKTS = 1  # packets
    DL_BUFFER = 2  # bytes


class SchedPolicy(IntEnum):
    RR = 0
    WF = 1
    PF = 2


SLICE_NAMES = ("eMBB", "mMTC", "URLLC")
KPI_NAMES = ("tx_brate", "tx_pkts", "dl_buffer")


class ConfigError(ValueError):
    """Invalid configuration or action."""


def attr_index(kpi: int, slice_: int) -> int:
    """Flat attribute index for a (KPI, slice) pair; KPI-major."""
    return int(kpi) * NUM_SLICES + int(slice_)


def attr_split(p: int) -> tuple[int, int]:
    return divmod(int(p), NUM_SLICES)


def attr_name(p: int) -> str:
    k, l = attr_split(p)
    return f"{KPI_NAMES[k]}[{SLICE_NAMES[l]}]"


ATTR_NAMES = tuple(attr_name(p) for p in range(NUM_ATTRS))


@dataclass(frozen=True, order=True)
class MultiModalAction:
    """Joint slicing (PRBs per slice) and scheduling (policy per slice) decision.

    Ordering is lexicographic on ``prb`` then ``sched``, which is what tie-breaks use.
    """

    prb: tuple[int, int, int]
    sched: tuple[int, int, int]

    def __post_init__(self) -> None:
        prb = tuple(int(x) for x in self.prb)
        sched = tuple(int(x) for x in self.sched)
        object.__setattr__(self, "prb", prb)
        object.__setattr__(self, "sched", sched)
        if len(prb) != NUM_SLICES or len(sched) != NUM_SLICES:
            raise ConfigError(f"action needs {NUM_SLICES} PRB and scheduler entries: {self}")
        if any(x < 0 or x > PRB_BUDGET for x in prb) or sum(prb) > PRB_BUDGET:
            raise ConfigError(f"PRB allocation {list(prb)} outside [0,{PRB_BUDGET}] or over budget")
        if any(s not in (0, 1, 2) for s in sched):
            raise ConfigError(f"scheduler codes {list(sched)} must be in {{0,1,2}}")

    @classmethod
    def of(cls, prb: Sequence[int], sched: Sequence[int]) -> "MultiModalAction":
        return cls(tuple(prb), tuple(sched))  # type: ignore[arg-type]

    @classmethod
    def from_obj(cls, obj) -> "MultiModalAction":
        """Accept ``{"prb": [...], "sched": [...]}`` or ``[[...], [...]]``."""
        if isinstance(obj, MultiModalAction):
            return obj
        if isinstance(obj, dict):
            return cls.of(obj["prb"], obj["sched"])
        prb, sched = obj
        return cls.of(prb, sched)

    def to_obj(self) -> dict:
        return {"prb": list(self.prb), "sched": list(self.sched)}

    @property
    def key(self) -> tuple[int, ...]:
        return self.prb + self.sched

    def __str__(self) -> str:
        return f"({list(self.prb)}, {list(self.sched)})"


@dataclass
class KpiWindow:
    """One decision interval of measurements.

    ``samples`` has shape (rows, KPIs, slices) and holds per-slice aggregates.
    ``ue_samples[l]`` has shape (rows, KPIs, n_ues_in_slice_l) with the per-UE values
    the aggregates were built from (empty last axis for a slice with no UEs).
    """

    samples: np.ndarray
    ue_samples: tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape != (NUM_ROWS, NUM_KPIS, NUM_SLICES):
            raise ValueError(f"KPI window must be {NUM_ROWS}x{NUM_KPIS}x{NUM_SLICES}, got {self.samples.shape}")
        if np.any(self.samples < 0) or not np.all(np.isfinite(self.samples)):
            raise ValueError("KPI window entries must be finite and non-negative")
        if not self.ue_samples:
            # no per-UE breakdown: treat each slice aggregate as a single pseudo-UE
            self.ue_samples = tuple(self.samples[:, :, l : l + 1].copy() for l in range(NUM_SLICES))
        else:
            self.ue_samples = tuple(_ue_block(u) for u in self.ue_samples)

    @classmethod
    def zeros(cls) -> "KpiWindow":
        return cls(np.zeros((NUM_ROWS, NUM_KPIS, NUM_SLICES)))

    def attribute_samples(self) -> list[np.ndarray]:
        """Per-attribute sample blocks, each shaped (rows, n_ues)."""
        out = []
        for p in range(NUM_ATTRS):
            k, l = attr_split(p)
            out.append(self.ue_samples[l][:, k, :].copy())
        return out

    def to_obj(self) -> dict:
        return {
            "kpi_window": self.samples.tolist(),
            "ue_samples": [u.tolist() for u in self.ue_samples],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "KpiWindow":
        ue = obj.get("ue_samples")
        ue_arrays: Iterable[np.ndarray] = ()
        if ue is not None:
            ue_arrays = tuple(_ue_block(u) for u in ue)
        return cls(np.asarray(obj["kpi_window"], dtype=float), tuple(ue_arrays))


def _ue_block(u) -> np.ndarray:
    arr = np.asarray(u, dtype=float)
    if arr.size == 0:
        return np.zeros((NUM_ROWS, NUM_KPIS, 0))
    return arr.reshape(NUM_ROWS, NUM_KPIS, -1)
