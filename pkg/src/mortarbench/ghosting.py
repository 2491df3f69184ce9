"""Master-side ghosting strategies.

Before a rank can integrate mortar terms over its slave elements it must
hold the nearby master elements, which generally live elsewhere.  Three
ways to get them:

* ``ghost_redundant``: every rank receives the entire master interface.
  Trivially complete, cost grows with ranks times master size.
* ``ghost_binning``: a uniform Cartesian bin grid over the interface;
  each rank fetches only masters registered in the bins its slave
  elements touch plus the 27-neighborhood.  Complete by construction of
  the bin edge length.
* ``round_robin``: masters stay partitioned; the subdomains rotate
  through the ranks over ``nranks`` iterations so every slave/master
  combination is seen exactly once without persistent ghosting.

Plans list whole master elements; nodes travel with their elements.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geomesh
from .errors import StaleGridError
from .partition import OwnershipMap
from .runtime import Message, SimWorld, TAG_GHOST_MASTER


@dataclass
class BinGrid:
    """Uniform Cartesian binning of both interface sides.

    ``beta_min`` is the safety edge length: the largest slave element
    edge plus twice the mean nodal interface velocity times ``dt``
    (elements cannot move out of the neighborhood between rebuilds).
    Actual bin edges ``beta`` are at least that, after fitting an integer
    number of bins into the expanded bounding box.
    """

    lo: np.ndarray            # expanded bbox corner
    beta: np.ndarray          # (3,) bin edge lengths, >= beta_min
    dims: np.ndarray          # (3,) int bin counts
    beta_min: float
    master_bin_of: np.ndarray  # (n_master_elems,) flat bin index per master elem
    master_half_extent: float  # half the largest master AABB edge, stencil margin
    build_coords: tuple        # (slave coords, master coords) at build time

    def flat_index(self, ijk: np.ndarray) -> np.ndarray:
        return (ijk[:, 0] * self.dims[1] + ijk[:, 1]) * self.dims[2] + ijk[:, 2]

    def bin_of_points(self, pts: np.ndarray) -> np.ndarray:
        ijk = np.floor((pts - self.lo) / self.beta).astype(np.int64)
        ijk = np.clip(ijk, 0, self.dims - 1)
        return self.flat_index(ijk)

    def check_fresh(self, slave_coords: np.ndarray, master_coords: np.ndarray) -> None:
        ds = np.abs(slave_coords - self.build_coords[0]).max(initial=0.0)
        dm = np.abs(master_coords - self.build_coords[1]).max(initial=0.0)
        if max(ds, dm) > self.beta_min:
            raise StaleGridError(
                f"coordinates moved {max(ds, dm):.3g} since grid build, "
                f"beyond beta_min {self.beta_min:.3g}; rebuild the grid")


def min_bin_edge(slave_coords, slave_elems, mean_velocity: float, dt: float) -> float:
    """Largest slave element edge plus two steps of mean interface motion."""
    return geomesh.max_edge_length(slave_coords, slave_elems) + 2.0 * dt * mean_velocity


def build_bin_grid(slave_coords, slave_elems, master_coords, master_elems,
                   mean_velocity: float = 0.0, dt: float = 1.0) -> BinGrid:
    """Construct the bin grid over all interface nodes.

    The bounding box of both sides is expanded by ``beta_min`` in each
    direction; per axis the bin count is ``floor(extent / beta_min)``
    clamped to at least one, so edges never fall below ``beta_min``.
    Master elements register in the bin containing their centroid.
    """
    beta_min = min_bin_edge(slave_coords, slave_elems, mean_velocity, dt)
    pts = np.vstack([slave_coords, master_coords])
    lo = pts.min(axis=0) - beta_min
    hi = pts.max(axis=0) + beta_min
    extent = hi - lo
    dims = np.maximum(np.floor(extent / beta_min).astype(np.int64), 1)
    beta = extent / dims
    grid = BinGrid(
        lo=lo, beta=beta, dims=dims, beta_min=beta_min,
        master_bin_of=np.empty(0, dtype=np.int64),
        master_half_extent=0.0,
        build_coords=(slave_coords.copy(), master_coords.copy()))
    cen = geomesh.elem_centroids(master_coords, master_elems)
    grid.master_bin_of = grid.bin_of_points(cen)
    mlo, mhi = geomesh.elem_aabbs(master_coords, master_elems)
    grid.master_half_extent = float((mhi - mlo).max(initial=0.0)) / 2.0
    return grid


def _stencil_bins(grid: BinGrid, bins_ijk: np.ndarray) -> np.ndarray:
    """Flat indices of the given bins plus their 27-neighborhood, clipped."""
    if bins_ijk.size == 0:
        return np.empty(0, dtype=np.int64)
    offs = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)])
    grown = (bins_ijk[:, None, :] + offs[None, :, :]).reshape(-1, 3)
    grown = grown[(grown >= 0).all(axis=1) & (grown < grid.dims).all(axis=1)]
    return np.unique(grid.flat_index(grown))


def slave_coverage_bins(grid: BinGrid, slave_coords, slave_elems,
                        elem_ids: np.ndarray, search_tol: float) -> np.ndarray:
    """Bins touched by the given slave elements' search volumes.

    Element AABBs are inflated by the contact search tolerance plus half
    the largest master extent; the latter compensates for registering
    masters by centroid, making the one-ring stencil sufficient for every
    pair the proximity search can produce.
    """
    if elem_ids.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    lo, hi = geomesh.elem_aabbs(slave_coords, slave_elems[elem_ids])
    margin = search_tol + grid.master_half_extent
    ilo = np.clip(np.floor((lo - margin - grid.lo) / grid.beta).astype(np.int64), 0, grid.dims - 1)
    ihi = np.clip(np.floor((hi + margin - grid.lo) / grid.beta).astype(np.int64), 0, grid.dims - 1)
    cells = set()
    for a, b in zip(ilo, ihi):
        for i in range(a[0], b[0] + 1):
            for j in range(a[1], b[1] + 1):
                for k in range(a[2], b[2] + 1):
                    cells.add((i, j, k))
    if not cells:
        return np.empty((0, 3), dtype=np.int64)
    return np.array(sorted(cells), dtype=np.int64)


@dataclass
class GhostPlan:
    """Per-rank master elements to fetch, with their owners and node counts."""

    strategy: str
    elems: list          # per rank, sorted int array of master elem ids
    nodes: list          # per rank, sorted int array of master node ids
    source: list         # per rank, owner rank per planned elem


def _plan_from_elem_sets(strategy, master_elems_conn, master_dd, elem_sets):
    elems, nodes, source = [], [], []
    for p, es in enumerate(elem_sets):
        es = np.asarray(sorted(es), dtype=np.int64)
        elems.append(es)
        if es.size:
            nodes.append(np.unique(master_elems_conn[es].ravel()))
            source.append(master_dd.elem_owner[es])
        else:
            nodes.append(np.empty(0, dtype=np.int64))
            source.append(np.empty(0, dtype=np.int64))
    return GhostPlan(strategy, elems, nodes, source)


def ghost_redundant(master_elems_conn: np.ndarray, master_dd: OwnershipMap) -> GhostPlan:
    """Everyone fetches every master element they do not already own."""
    all_elems = np.arange(master_elems_conn.shape[0])
    sets = [all_elems[master_dd.elem_owner != p] for p in range(master_dd.nranks)]
    return _plan_from_elem_sets("redundant", master_elems_conn, master_dd, sets)


def ghost_binning(grid: BinGrid, slave_coords, slave_elems, slave_dd: OwnershipMap,
                  master_coords, master_elems_conn, master_dd: OwnershipMap,
                  search_tol: float) -> GhostPlan:
    """Fetch only masters registered near each rank's slave subdomain.

    Coverage is computed from the rank's owned plus overlap-ghosted slave
    elements (the latter are integrated for boundary rows), expanded by
    the one-ring stencil.
    """
    grid.check_fresh(slave_coords, master_coords)
    order = np.argsort(grid.master_bin_of, kind="stable")
    sorted_bins = grid.master_bin_of[order]
    sets = []
    for p in range(slave_dd.nranks):
        mine = slave_dd.visible_elems(p)
        cover = slave_coverage_bins(grid, slave_coords, slave_elems, mine, search_tol)
        stencil = _stencil_bins(grid, cover)
        if stencil.size:
            lo = np.searchsorted(sorted_bins, stencil, side="left")
            hi = np.searchsorted(sorted_bins, stencil, side="right")
            hits = np.concatenate([order[a:b] for a, b in zip(lo, hi)]) if stencil.size else []
            hits = np.asarray(hits, dtype=np.int64)
            hits = hits[master_dd.elem_owner[hits] != p]
        else:
            hits = np.empty(0, dtype=np.int64)
        sets.append(np.unique(hits))
    return _plan_from_elem_sets("binning", master_elems_conn, master_dd, sets)


def round_robin_schedule(nranks: int) -> np.ndarray:
    """``schedule[i, s]`` = rank hosting master subdomain ``s`` in iteration ``i``.

    Iteration ``i`` shifts every subdomain by ``i`` ranks, so each rank
    hosts each subdomain exactly once across the ``nranks`` iterations
    (a cyclic Latin square).
    """
    i = np.arange(nranks)[:, None]
    s = np.arange(nranks)[None, :]
    return (s + i) % nranks


def apply_ghost_plan(world: SimWorld, plan: GhostPlan, master_elems_conn: np.ndarray,
                     master_dd: OwnershipMap, already_visible: list | None = None) -> list:
    """Ship the planned master data through the router and meter it.

    One message per (owner, receiver) pair; payload sizes are the chunk's
    element count and its unique node count.  ``already_visible``
    (per-rank element id arrays) suppresses re-sending data a rank
    already holds; pass ``None`` to ship the full plan.  Returns the
    per-rank element ids actually shipped.
    """
    msgs = []
    shipped = []
    for p in range(master_dd.nranks):
        es = plan.elems[p]
        if already_visible is not None and es.size:
            es = es[~np.isin(es, already_visible[p])]
        shipped.append(es)
        if es.size == 0:
            continue
        owners = master_dd.elem_owner[es]
        for q in np.unique(owners):
            chunk = es[owners == q]
            n_nodes = np.unique(master_elems_conn[chunk].ravel()).size
            msgs.append(Message(src=int(q), dst=p, tag=TAG_GHOST_MASTER,
                                payload_nodes=int(n_nodes), payload_elems=int(chunk.size)))
    world.exchange(msgs)
    for p in range(master_dd.nranks):
        world.drain(p, TAG_GHOST_MASTER)
    return shipped


def apply_round_robin_shift(world: SimWorld, master_elems_conn: np.ndarray,
                            master_dd: OwnershipMap, iteration: int) -> np.ndarray:
    """Meter one round-robin iteration; returns the hosted subdomain per rank.

    In iteration ``i`` rank ``p`` hosts master subdomain ``(p - i) mod P``.
    Iteration 0 is free (every rank hosts its own masters); afterwards the
    previous host forwards the whole subdomain to the next one.
    """
    nranks = master_dd.nranks
    hosted = (np.arange(nranks) - iteration) % nranks
    if iteration > 0:
        msgs = []
        for p in range(nranks):
            s = int(hosted[p])
            prev_host = (s + iteration - 1) % nranks
            es = np.flatnonzero(master_dd.elem_owner == s)
            if es.size == 0:
                continue
            n_nodes = np.unique(master_elems_conn[es].ravel()).size
            msgs.append(Message(src=int(prev_host), dst=p, tag=TAG_GHOST_MASTER,
                                payload_nodes=int(n_nodes), payload_elems=int(es.size)))
        world.exchange(msgs)
        for p in range(nranks):
            world.drain(p, TAG_GHOST_MASTER)
    return hosted
