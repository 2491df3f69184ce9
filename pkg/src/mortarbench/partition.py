"""Domain decompositions of interface meshes.

Two roads lead to a distributed interface:

* ``interface_dd_from_bulk`` inherits element owners from the volume
  decomposition of the parent body.  Cheap and consistent with the bulk,
  but only the ranks whose volume subdomain happens to touch the
  interface own any of it.
* ``independent_interface_dd`` partitions the interface elements in their
  own right (recursive coordinate bisection over element centroids) so
  every rank gets a share.

Both produce an :class:`OwnershipMap` with a one-element overlap layer:
every rank additionally sees ("ghosts") the off-rank elements sharing a
node with its own elements, plus the off-rank nodes of its own elements.
Node ownership follows the lowest-id adjacent element.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InfeasiblePartitionError


@dataclass
class OwnershipMap:
    """Owner ranks plus per-rank ghost sets for one mesh."""

    side: str
    nranks: int
    elem_owner: np.ndarray  # (n_elems,) int
    node_owner: np.ndarray  # (n_nodes,) int
    ghost_elems: list  # per rank, sorted int arrays
    ghost_nodes: list

    def owned_elems(self, rank: int) -> np.ndarray:
        return np.flatnonzero(self.elem_owner == rank)

    def owned_nodes(self, rank: int) -> np.ndarray:
        return np.flatnonzero(self.node_owner == rank)

    def visible_elems(self, rank: int) -> np.ndarray:
        return np.sort(np.concatenate([self.owned_elems(rank), self.ghost_elems[rank]]))


def rcb_partition(points: np.ndarray, nparts: int, weights=None, tol: float = 1.03):
    """Recursive coordinate bisection of weighted points.

    Splits recursively along the axis of largest extent at the weighted
    median; ties in coordinates are broken by point id, so the result is
    a pure function of the inputs.  Uneven part counts are handled by
    splitting the target weight proportionally.  ``tol`` documents the
    intended bound max part weight <= tol * ideal; with exact median
    splits the bound holds for uniform weights once parts are large
    enough for integer granularity not to dominate.

    Returns an ``(n,)`` int array of part ids.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if nparts < 1:
        raise InfeasiblePartitionError("nparts must be >= 1")
    if nparts > n:
        raise InfeasiblePartitionError(f"cannot cut {n} entities into {nparts} parts")
    if weights is None:
        weights = np.ones(n)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,) or (weights < 0).any():
            raise InfeasiblePartitionError("weights must be non-negative, one per entity")
    owner = np.empty(n, dtype=np.int64)
    _rcb_recurse(points, weights, np.arange(n), 0, nparts, owner)
    return owner


def _rcb_recurse(points, weights, ids, first_part, nparts, owner):
    if nparts == 1:
        owner[ids] = first_part
        return
    sub = points[ids]
    extent = sub.max(axis=0) - sub.min(axis=0)
    axis = int(np.argmax(extent))
    order = np.lexsort((ids, sub[:, axis]))
    ids_sorted = ids[order]
    w_sorted = weights[ids_sorted]
    left_parts = nparts // 2
    right_parts = nparts - left_parts
    total = w_sorted.sum()
    target = total * left_parts / nparts
    cum = np.cumsum(w_sorted)
    # split index k: left side gets ids_sorted[:k]; both sides must stay
    # large enough to host their part counts
    lo, hi = left_parts, ids_sorted.size - right_parts
    k = int(np.searchsorted(cum, target))
    best, best_err = None, None
    for cand in {max(lo, min(k, hi)), max(lo, min(k + 1, hi))}:
        err = abs(cum[cand - 1] - target)
        if best is None or err < best_err:
            best, best_err = cand, err
    k = best
    _rcb_recurse(points, weights, ids_sorted[:k], first_part, left_parts, owner)
    _rcb_recurse(points, weights, ids_sorted[k:], first_part + left_parts, right_parts, owner)


def build_overlapping_dd(side: str, elems: np.ndarray, n_nodes: int,
                         elem_owner: np.ndarray, nranks: int) -> OwnershipMap:
    """Derive node owners and the one-element ghost layer from element owners.

    A node belongs to the owner of its lowest-id adjacent element.  Rank p
    ghosts every off-rank element sharing a node with a p-owned element
    and every off-rank node of a p-owned element; nothing beyond that one
    layer.
    """
    n_elems = elems.shape[0]
    elem_owner = np.asarray(elem_owner, dtype=np.int64)
    node_owner = np.full(n_nodes, -1, dtype=np.int64)
    # lowest-id adjacent element wins; iterate high-to-low so low ids overwrite
    for e in range(n_elems - 1, -1, -1):
        node_owner[elems[e]] = elem_owner[e]

    # node -> adjacent elements (CSR layout)
    counts = np.zeros(n_nodes, dtype=np.int64)
    np.add.at(counts, elems.ravel(), 1)
    starts = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    adj = np.empty(elems.size, dtype=np.int64)
    fill = starts[:-1].copy()
    for e in range(n_elems):
        for node in elems[e]:
            adj[fill[node]] = e
            fill[node] += 1

    ghost_elems, ghost_nodes = [], []
    for p in range(nranks):
        owned_e = np.flatnonzero(elem_owner == p)
        own_nodes = np.unique(elems[owned_e].ravel()) if owned_e.size else np.empty(0, np.int64)
        if own_nodes.size:
            neigh = np.unique(np.concatenate(
                [adj[starts[n]:starts[n + 1]] for n in own_nodes]))
            ge = neigh[elem_owner[neigh] != p]
            gn = own_nodes[node_owner[own_nodes] != p]
        else:
            ge = np.empty(0, np.int64)
            gn = np.empty(0, np.int64)
        ghost_elems.append(np.sort(ge))
        ghost_nodes.append(np.sort(gn))
    return OwnershipMap(side, nranks, elem_owner, node_owner, ghost_elems, ghost_nodes)


def interface_dd_from_bulk(side: str, elems: np.ndarray, n_nodes: int,
                           bulk_owner_of_elem: np.ndarray, nranks: int) -> OwnershipMap:
    """Interface decomposition aligned with the volume decomposition.

    ``bulk_owner_of_elem`` maps each interface element to the rank owning
    its parent volume region.  Ranks whose volume subdomain does not touch
    the interface simply own nothing here.
    """
    return build_overlapping_dd(side, elems, n_nodes, bulk_owner_of_elem, nranks)


def independent_interface_dd(side: str, elems: np.ndarray, n_nodes: int,
                             centroids: np.ndarray, nranks: int,
                             weights=None, tol: float = 1.03) -> OwnershipMap:
    """Partition interface elements in their own right via RCB.

    Raises :class:`InfeasiblePartitionError` when there are fewer elements
    than ranks; callers may retry with fewer parts, but never silently.
    """
    if elems.shape[0] < nranks:
        raise InfeasiblePartitionError(
            f"{side}: {elems.shape[0]} elements cannot satisfy {nranks} ranks")
    owner = rcb_partition(centroids, nranks, weights=weights, tol=tol)
    return build_overlapping_dd(side, elems, n_nodes, owner, nranks)


def write_owner_csv(dd: OwnershipMap, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["side", "kind", "id", "owner"])
        for i, o in enumerate(dd.elem_owner):
            w.writerow([dd.side, "elem", i, int(o)])
        for i, o in enumerate(dd.node_owner):
            w.writerow([dd.side, "node", i, int(o)])


def write_ghost_csv(dd: OwnershipMap, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["side", "rank", "kind", "id"])
        for p in range(dd.nranks):
            for e in dd.ghost_elems[p]:
                w.writerow([dd.side, p, "elem", int(e)])
            for n in dd.ghost_nodes[p]:
                w.writerow([dd.side, p, "node", int(n)])
