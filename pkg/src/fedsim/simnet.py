"""Traffic ledger and simulated (wall-clock free) time accounting.

Node ``SERVER`` is the federation server hosted by the coordinating agency;
agencies are numbered from 0. Transfers whose destination is the server
count as uploads, everything else as downloads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

SERVER = -1
KINDS = ("model", "data")


@dataclass(frozen=True)
class Transfer:
    src: int
    dst: int
    nbytes: int
    kind: str


@dataclass
class TrafficLedger:
    events: list = field(default_factory=list)
    bytes_up: int = 0
    bytes_down: int = 0

    @property
    def total_bytes(self) -> int:
        return self.bytes_up + self.bytes_down

    def totals_by_kind(self) -> dict:
        out = dict.fromkeys(KINDS, 0)
        for ev in self.events:
            out[ev.kind] += ev.nbytes
        return out


def record_transfer(ledger: TrafficLedger, src: int, dst: int, nbytes: int, kind: str) -> TrafficLedger:
    if nbytes <= 0:
        raise ValueError("a transfer must carry a positive number of bytes")
    if kind not in KINDS:
        raise ValueError(f"unknown transfer kind {kind!r}")
    ledger.events.append(Transfer(src, dst, int(nbytes), kind))
    if dst == SERVER:
        ledger.bytes_up += int(nbytes)
    else:
        ledger.bytes_down += int(nbytes)
    return ledger


def simulated_time(
    ledger: TrafficLedger,
    cp,
    compute_units: Sequence[Mapping[int, float]] | Mapping[int, float],
    unit_bytes: float,
) -> float:
    """Time units spent moving bytes plus time spent training.

    Every transfer is charged on the critical path (all of them pass through
    the server's link): ``K_n * total_bytes / unit_bytes``. ``compute_units``
    is a sequence of phases, each mapping node -> data units trained in that
    phase; nodes within a phase run in parallel (the phase costs its max),
    phases run one after another. Flavor-1 rounds are one phase each;
    relay visits and centralized chunks are single-node phases, so they sum.
    A bare mapping is treated as one phase.
    """
    if isinstance(compute_units, Mapping):
        compute_units = [compute_units]
    compute = sum(max(phase.values(), default=0.0) for phase in compute_units)
    transfer = ledger.total_bytes / unit_bytes if ledger.events else 0.0
    return cp.k_n * transfer + cp.k_s * compute
