"""Interface load measurement and rebalancing.

Imbalance is tracked with two max/min ratios: ``eta_t`` over per-rank
evaluation clocks (deterministic work units by default) and ``eta_e``
over per-rank owned slave element counts.  A rank with nothing while
others have something is the worst case and maps to infinity; if all
ranks are equal (including all-zero, e.g. before first contact) the
ratio is one.

Rebalancing rebuilds both interface decompositions independently of the
volume decomposition: the slave side by RCB over current element
centroids with activity weights (one plus the integration cells the
element produced in the previous evaluation, concentrating ranks near
the contact zone), the master side by unweighted RCB.  Policy ``static``
does this once at the first step, ``dynamic`` re-fires whenever a ratio
reaches its threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geomesh
from .errors import ConfigError
from .partition import OwnershipMap, independent_interface_dd
from .runtime import Message, SimWorld, TAG_REDIST


@dataclass(frozen=True)
class ImbalanceReport:
    eta_t: float
    eta_e: float


@dataclass(frozen=True)
class LbPolicy:
    mode: str = "none"  # none | static | dynamic
    eta_t_hat: float = 1.8
    eta_e_hat: float | None = None  # defaults to eta_t_hat
    part_tol: float = 1.03

    def __post_init__(self):
        if self.mode not in ("none", "static", "dynamic"):
            raise ConfigError(f"unknown lb mode {self.mode!r}")
        if self.eta_t_hat < 1.0 or (self.eta_e_hat is not None and self.eta_e_hat < 1.0):
            raise ConfigError("imbalance thresholds must be >= 1")

    @property
    def e_threshold(self) -> float:
        return self.eta_t_hat if self.eta_e_hat is None else self.eta_e_hat


def imbalance_ratio(values) -> float:
    """max/min of non-negative per-rank values; 1.0 if all equal, inf if
    some rank sits idle while another works."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 1.0
    hi, lo = float(v.max()), float(v.min())
    if hi == lo:
        return 1.0
    if lo == 0.0:
        return float("inf")
    return hi / lo


def measure_imbalance(clocks, owned_counts) -> ImbalanceReport:
    return ImbalanceReport(eta_t=imbalance_ratio(clocks),
                           eta_e=imbalance_ratio(owned_counts))


def should_rebalance(policy: LbPolicy, step: int, report: ImbalanceReport | None) -> bool:
    """Trigger rule; thresholds fire on >= (reaching counts as crossing).

    Both ``static`` and ``dynamic`` fire unconditionally at step 0 (no
    statistics exist yet); afterwards only ``dynamic`` watches the
    report.
    """
    if policy.mode == "none":
        return False
    if step == 0:
        return True
    if policy.mode == "static":
        return False
    if report is None:
        return True
    return report.eta_t >= policy.eta_t_hat or report.eta_e >= policy.e_threshold


@dataclass
class RebalanceResult:
    slave_dd: OwnershipMap
    master_dd: OwnershipMap
    migrated_elems: int
    redist_cost: float
    weight_ratio: float  # max/min per-rank sum of the partition weights
    uniform_weights: bool


def _migration_messages(old_owner, new_owner, elems_conn, tag_seq):
    msgs = []
    moved = np.flatnonzero(old_owner != new_owner)
    if moved.size == 0:
        return msgs, 0
    pairs = np.unique(np.column_stack([old_owner[moved], new_owner[moved]]), axis=0)
    for src, dst in pairs:
        chunk = moved[(old_owner[moved] == src) & (new_owner[moved] == dst)]
        n_nodes = np.unique(elems_conn[chunk].ravel()).size
        msgs.append(Message(src=int(src), dst=int(dst), tag=TAG_REDIST,
                            payload_nodes=int(n_nodes), payload_elems=int(chunk.size),
                            seq=tag_seq))
    return msgs, int(moved.size)


def rebalance_interface(world: SimWorld, slave_coords, slave_elems, master_coords,
                        master_elems, old_slave_dd: OwnershipMap,
                        old_master_dd: OwnershipMap, weights,
                        policy: LbPolicy) -> RebalanceResult:
    """Repartition both sides and meter the element migration.

    Weights apply to the slave side only.  Raises through any partition
    infeasibility (fewer elements than ranks); callers decide whether a
    fallback is acceptable.
    """
    nranks = world.nranks
    w = np.ones(slave_elems.shape[0]) if weights is None else np.asarray(weights, float)
    uniform = bool(np.all(w == w[0])) if w.size else True
    slave_dd = independent_interface_dd(
        "slave", slave_elems, slave_coords.shape[0],
        geomesh.elem_centroids(slave_coords, slave_elems), nranks,
        weights=w, tol=policy.part_tol)
    master_dd = independent_interface_dd(
        "master", master_elems, master_coords.shape[0],
        geomesh.elem_centroids(master_coords, master_elems), nranks,
        tol=policy.part_tol)

    per_rank_w = np.array([w[slave_dd.elem_owner == p].sum() for p in range(nranks)])
    ratio = imbalance_ratio(per_rank_w)

    msgs_s, moved_s = _migration_messages(old_slave_dd.elem_owner,
                                          slave_dd.elem_owner, slave_elems, 0)
    msgs_m, moved_m = _migration_messages(old_master_dd.elem_owner,
                                          master_dd.elem_owner, master_elems, 1)
    world.exchange(msgs_s + msgs_m)
    redist = 0.0
    for p in range(nranks):
        for msg in world.drain(p, TAG_REDIST):
            redist += world.ledger.model.cost(msg.payload_nodes, msg.payload_elems)
    return RebalanceResult(slave_dd, master_dd, moved_s + moved_m, redist,
                           ratio, uniform)
