"""Simulated distributed runtime: logical ranks, a message router, and cost metering.

Ranks are plain integers executed in-process.  All inter-rank data flow
goes through :meth:`SimWorld.exchange`, which meters every message with
the linear cost model ``g(n, e) = a * n + b * e`` (node and element
counts of the payload).  Messages carrying master-side mesh data are
additionally charged to the receiver's ``c_p`` (the per-rank incoming
master-data cost); the step total ``C = sum_p c_p`` is the quantity the
ghosting strategies compete on.  A single rank never pays anything.

Delivery order is defined by the message key ``(src, tag, seq)`` rather
than by submission order, so any interleaving of rank execution produces
the same inbox streams.  Work is accounted in deterministic units
(quadrature points evaluated); wall-clock readings are kept alongside for
the curious but never drive decisions unless explicitly requested.
"""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import RoutingError

TAG_GHOST_MASTER = 1
TAG_REDIST = 2
TAG_ASSEMBLY = 3

_TAG_NAMES = {TAG_GHOST_MASTER: "ghost", TAG_REDIST: "redist", TAG_ASSEMBLY: "assembly"}


@dataclass(frozen=True)
class CostModel:
    """g(n, e) = a * n + b * e."""

    a: float = 1.0
    b: float = 1.0

    def cost(self, nodes: int, elems: int) -> float:
        return self.a * nodes + self.b * elems


@dataclass(frozen=True)
class Message:
    """One routed message; payload sizes are metered, content is opaque."""

    src: int
    dst: int
    tag: int
    payload_nodes: int = 0
    payload_elems: int = 0
    seq: int = 0
    payload: object = None

    def key(self):
        return (self.src, self.tag, self.seq)


class CostLedger:
    """Per-rank communication, memory, and work counters.

    Counters are monotone within a step and reset only at step
    boundaries (:meth:`begin_step`); run-level accumulators survive the
    reset.  ``c`` holds the incoming master-data cost per rank, ``volume``
    the per-tag metered volume, ``work`` the deterministic work units, and
    ``wall`` measured seconds.
    """

    def __init__(self, nranks: int, model: CostModel):
        self.nranks = nranks
        self.model = model
        self.c = np.zeros(nranks)
        self.volume = {tag: np.zeros(nranks) for tag in _TAG_NAMES}
        self.msgs = np.zeros(nranks, dtype=np.int64)
        self.work = np.zeros(nranks)
        self.wall = np.zeros(nranks)
        self.cum_volume = {tag: 0.0 for tag in _TAG_NAMES}
        self.cum_master_cost = 0.0

    def begin_step(self) -> None:
        self.cum_master_cost += float(self.c.sum())
        for tag in self.volume:
            self.cum_volume[tag] += float(self.volume[tag].sum())
        self.c[:] = 0.0
        for tag in self.volume:
            self.volume[tag][:] = 0.0
        self.msgs[:] = 0
        self.work[:] = 0.0
        self.wall[:] = 0.0

    def charge(self, msg: Message) -> None:
        if msg.src == msg.dst:
            return
        g = self.model.cost(msg.payload_nodes, msg.payload_elems)
        self.volume[msg.tag][msg.dst] += g
        self.msgs[msg.dst] += 1
        if msg.tag == TAG_GHOST_MASTER:
            self.c[msg.dst] += g

    def add_work(self, rank: int, units: float) -> None:
        self.work[rank] += units

    def add_wall(self, rank: int, seconds: float) -> None:
        self.wall[rank] += seconds

    @property
    def total_master_cost(self) -> float:
        """C = sum over ranks of the incoming master-data cost (this step)."""
        return float(self.c.sum())

    def snapshot(self) -> "LedgerSnapshot":
        return LedgerSnapshot(
            c=self.c.copy(),
            volume={t: v.copy() for t, v in self.volume.items()},
            msgs=self.msgs.copy(),
            work=self.work.copy(),
            wall=self.wall.copy(),
        )


@dataclass(frozen=True)
class LedgerSnapshot:
    c: np.ndarray
    volume: dict
    msgs: np.ndarray
    work: np.ndarray
    wall: np.ndarray

    @property
    def total_master_cost(self) -> float:
        return float(self.c.sum())


class SimWorld:
    """A set of logical ranks wired to one metered router.

    Rank-private state lives in per-rank dicts reachable through
    :meth:`private`; with ``isolation_check`` enabled, touching another
    rank's dict while executing as some rank raises, which keeps the
    simulation honest about what would need real communication.
    """

    def __init__(self, nranks: int, model: CostModel | None = None,
                 isolation_check: bool = False):
        if nranks < 1:
            raise RoutingError("need at least one rank")
        self.nranks = nranks
        self.ledger = CostLedger(nranks, model or CostModel())
        self.isolation_check = isolation_check
        self._inboxes = [[] for _ in range(nranks)]
        self._private = [{} for _ in range(nranks)]
        self._active_rank = None

    def exchange(self, messages) -> None:
        """Route a batch of messages and meter them."""
        for msg in messages:
            if not (0 <= msg.src < self.nranks and 0 <= msg.dst < self.nranks):
                raise RoutingError(f"message {msg.src}->{msg.dst} outside 0..{self.nranks - 1}")
            self.ledger.charge(msg)
            self._inboxes[msg.dst].append(msg)

    def drain(self, rank: int, tag: int | None = None):
        """Take messages addressed to ``rank``, sorted by (src, tag, seq)."""
        box = self._inboxes[rank]
        if tag is None:
            taken, box[:] = box[:], []
        else:
            taken = [m for m in box if m.tag == tag]
            box[:] = [m for m in box if m.tag != tag]
        return sorted(taken, key=Message.key)

    def private(self, rank: int) -> dict:
        if (self.isolation_check and self._active_rank is not None
                and self._active_rank != rank):
            raise RoutingError(
                f"rank {self._active_rank} touched private state of rank {rank}")
        return self._private[rank]

    @contextmanager
    def as_rank(self, rank: int):
        prev, self._active_rank = self._active_rank, rank
        start = time.perf_counter()
        try:
            yield self._private[rank]
        finally:
            self.ledger.add_wall(rank, time.perf_counter() - start)
            self._active_rank = prev

    def work_clock(self, rank: int):
        """(work units, wall seconds) spent by ``rank`` this step."""
        return float(self.ledger.work[rank]), float(self.ledger.wall[rank])
