"""Segment-based mortar coupling: search, clipping, integration, assembly.

The coupling matrices are built facet by facet.  For one slave element
and one nearby master element the pipeline is

1. flatten: build the slave facet's auxiliary plane and project both
   elements onto it along the plane normal,
2. clip the projected master polygon against the projected slave polygon
   (both convex, counter-clockwise),
3. fan the clip polygon into triangular integration cells from its
   centroid,
4. integrate with a symmetric triangle rule, pulling quadrature points
   back into both elements' parameter spaces by inverting the projected
   bilinear maps.

Rows of the resulting matrices belong to slave nodes (one Lagrange
multiplier per slave node).  Each rank integrates every element that
touches one of its rows, i.e. its owned elements plus the one-element
overlap, and keeps only the rows it owns, so no partial sums ever cross
ranks; whole row contributions are shipped to the final row owners in
one assembly pass at the end of a step.

The multiplier basis is either the trace basis itself (``standard``) or
the element-wise biorthogonal (``dual``) basis, whose coefficients make
the slave coupling block diagonal whenever the slave support is fully
covered.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse
import scipy.sparse.linalg

from . import geomesh
from .errors import ConfigError, DegenerateGeometryError, ProjectionError
from .geomesh import FacetPlane

_COS80 = math.cos(math.radians(80.0))


@dataclass(frozen=True)
class Tolerances:
    """Geometric tolerances of the integration pipeline.

    All but ``angle_tol`` and ``param_tol`` scale with the slave mesh
    size ``h`` (largest slave element edge).
    """

    search_tol: float
    vertex_tol: float
    cell_area_tol: float
    angle_tol: float = _COS80
    param_tol: float = 1.0e-8


def default_tolerances(h_max: float) -> Tolerances:
    return Tolerances(search_tol=0.5 * h_max,
                      vertex_tol=1.0e-10 * h_max,
                      cell_area_tol=1.0e-12 * h_max * h_max)


# symmetric triangle rules (barycentric points, weights summing to one),
# named by the polynomial degree they integrate exactly
def _perm3(a, b, c):
    pts = {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}
    return sorted(pts)


def _group(a, w):
    pts = sorted({(1.0 - 2.0 * a, a, a), (a, 1.0 - 2.0 * a, a), (a, a, 1.0 - 2.0 * a)})
    return [(p, w) for p in pts]


_TRI_RULES = {}
_TRI_RULES[1] = [((1 / 3, 1 / 3, 1 / 3), 1.0)]
_TRI_RULES[2] = _group(1 / 6, 1 / 3)
_TRI_RULES[4] = (_group(0.445948490915965, 0.223381589678011)
                 + _group(0.091576213509771, 0.109951743655322))
_TRI_RULES[5] = ([((1 / 3, 1 / 3, 1 / 3), 0.225)]
                 + _group(0.470142064105115, 0.132394152788506)
                 + _group(0.101286507323456, 0.125939180544827))
_TRI_RULES[6] = (_group(0.249286745170910, 0.116786275726379)
                 + _group(0.063089014491502, 0.050844906370207)
                 + [(p, 0.082851075618374) for p in _perm3(
                     0.310352451033785, 0.636502499121399, 0.053145049844816)])


def triangle_rule(degree: int = 5):
    """(points, weights) of the smallest stocked rule exact to ``degree``."""
    for d in sorted(_TRI_RULES):
        if d >= degree:
            rule = _TRI_RULES[d]
            pts = np.array([p for p, _ in rule])
            wts = np.array([w for _, w in rule])
            return pts, wts
    raise ConfigError(f"no triangle rule of degree {degree} stocked (max 6)")


def contact_search(slave_coords, slave_elems, slave_ids, master_coords,
                   master_elems, master_ids, search_tol: float) -> np.ndarray:
    """Candidate pairs by inflated-AABB overlap, sorted by (slave, master).

    Both boxes are inflated by ``search_tol``.  Returns a (k, 2) array of
    global element ids.
    """
    slave_ids = np.asarray(slave_ids, dtype=np.int64)
    master_ids = np.asarray(master_ids, dtype=np.int64)
    if slave_ids.size == 0 or master_ids.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    slo, shi = geomesh.elem_aabbs(slave_coords, slave_elems[slave_ids])
    mlo, mhi = geomesh.elem_aabbs(master_coords, master_elems[master_ids])
    slo = slo - search_tol
    shi = shi + search_tol
    mlo = mlo - search_tol
    mhi = mhi + search_tol
    pairs = []
    block = max(1, int(2.0e6 / max(master_ids.size, 1)))
    for start in range(0, slave_ids.size, block):
        sl = slice(start, start + block)
        hit = ((slo[sl, None, :] <= mhi[None, :, :])
               & (shi[sl, None, :] >= mlo[None, :, :])).all(axis=2)
        si, mi = np.nonzero(hit)
        if si.size:
            pairs.append(np.column_stack([slave_ids[sl][si], master_ids[mi]]))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    out = np.vstack(pairs)
    return out[np.lexsort((out[:, 1], out[:, 0]))]


def project_to_plane(points: np.ndarray, plane: FacetPlane) -> np.ndarray:
    """In-plane coordinates of points projected along the plane normal."""
    return (points - plane.origin) @ plane.basis.T


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise)."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_convex(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex subject against a convex CCW clipper."""
    out = [tuple(p) for p in subject]
    n = clipper.shape[0]
    for i in range(n):
        if not out:
            break
        a = clipper[i]
        b = clipper[(i + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]
        inp, out = out, []
        prev = inp[-1]
        prev_side = ex * (prev[1] - a[1]) - ey * (prev[0] - a[0])
        for cur in inp:
            cur_side = ex * (cur[1] - a[1]) - ey * (cur[0] - a[0])
            if cur_side >= 0.0:
                if prev_side < 0.0:
                    t = prev_side / (prev_side - cur_side)
                    out.append((prev[0] + t * (cur[0] - prev[0]),
                                prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif prev_side >= 0.0:
                t = prev_side / (prev_side - cur_side)
                out.append((prev[0] + t * (cur[0] - prev[0]),
                            prev[1] + t * (cur[1] - prev[1])))
            prev, prev_side = cur, cur_side
    return np.asarray(out, dtype=float).reshape(-1, 2)


def dedupe_polygon(poly: np.ndarray, vertex_tol: float) -> np.ndarray:
    """Drop consecutive vertices (cyclically) closer than ``vertex_tol``."""
    if poly.shape[0] < 2:
        return poly
    keep = []
    for p in poly:
        if not keep or np.hypot(p[0] - keep[-1][0], p[1] - keep[-1][1]) > vertex_tol:
            keep.append(p)
    while len(keep) > 1 and np.hypot(keep[0][0] - keep[-1][0],
                                     keep[0][1] - keep[-1][1]) <= vertex_tol:
        keep.pop()
    return np.asarray(keep).reshape(-1, 2)


def is_convex_ccw(poly: np.ndarray, eps: float = 0.0) -> bool:
    n = poly.shape[0]
    if n < 3:
        return False
    a = poly
    b = np.roll(poly, -1, axis=0)
    c = np.roll(poly, -2, axis=0)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - b[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - b[:, 0])
    return bool((cross >= -eps).all())


def triangulate(poly: np.ndarray) -> np.ndarray:
    """Centroid fan: (n, 3, 2) triangles, one per polygon edge."""
    c = poly.mean(axis=0)
    n = poly.shape[0]
    tris = np.empty((n, 3, 2))
    tris[:, 0] = c
    tris[:, 1] = poly
    tris[:, 2] = np.roll(poly, -1, axis=0)
    return tris


def shape_q4(xi: np.ndarray) -> np.ndarray:
    """Bilinear shape functions at (n, 2) parameter points, corner order CCW."""
    x, y = xi[:, 0], xi[:, 1]
    return 0.25 * np.column_stack([(1 - x) * (1 - y), (1 + x) * (1 - y),
                                   (1 + x) * (1 + y), (1 - x) * (1 + y)])


def _bilinear_coeffs(corners: np.ndarray):
    a0 = 0.25 * (corners[0] + corners[1] + corners[2] + corners[3])
    a1 = 0.25 * (-corners[0] + corners[1] + corners[2] - corners[3])
    a2 = 0.25 * (-corners[0] - corners[1] + corners[2] + corners[3])
    a3 = 0.25 * (corners[0] - corners[1] + corners[2] - corners[3])
    return a0, a1, a2, a3


def inverse_map(corners: np.ndarray, pts: np.ndarray, param_tol: float = 1.0e-8,
                max_iter: int = 30) -> np.ndarray:
    """Invert the 2D bilinear map of a quad at many points (damped Newton).

    Raises :class:`ProjectionError` if Newton stalls or the recovered
    parameters leave ``[-1 - param_tol, 1 + param_tol]^2``.
    """
    a0, a1, a2, a3 = _bilinear_coeffs(corners)
    diam = float(np.linalg.norm(corners.max(axis=0) - corners.min(axis=0)))
    if diam <= 0.0:
        raise DegenerateGeometryError("quad collapsed to a point")
    res_tol = 1.0e-12 * diam
    xi = np.zeros_like(pts)
    target = pts - a0
    for _ in range(max_iter):
        cur = (np.outer(xi[:, 0], a1) + np.outer(xi[:, 1], a2)
               + np.outer(xi[:, 0] * xi[:, 1], a3))
        r = cur - target
        if np.abs(r).max(initial=0.0) <= res_tol:
            break
        j00 = a1[0] + a3[0] * xi[:, 1]
        j01 = a2[0] + a3[0] * xi[:, 0]
        j10 = a1[1] + a3[1] * xi[:, 1]
        j11 = a2[1] + a3[1] * xi[:, 0]
        det = j00 * j11 - j01 * j10
        if np.abs(det).min() < 1.0e-300:
            raise ProjectionError("singular Jacobian while inverting bilinear map")
        dx = (j11 * r[:, 0] - j01 * r[:, 1]) / det
        dy = (-j10 * r[:, 0] + j00 * r[:, 1]) / det
        step = np.column_stack([dx, dy])
        # damp oversized steps; keeps warped elements from oscillating
        norm = np.abs(step).max(axis=1)
        scale = np.minimum(1.0, 1.0 / np.maximum(norm, 1.0e-30))
        scale = np.where(norm > 1.0, scale, 1.0)
        xi = xi - step * scale[:, None]
    else:
        cur = (np.outer(xi[:, 0], a1) + np.outer(xi[:, 1], a2)
               + np.outer(xi[:, 0] * xi[:, 1], a3))
        if np.abs(cur - target).max(initial=0.0) > res_tol:
            raise ProjectionError(f"bilinear inversion did not converge in {max_iter} steps")
    lim = 1.0 + param_tol
    if np.abs(xi).max(initial=0.0) > lim:
        raise ProjectionError("inverted parameters leave the element domain")
    return np.clip(xi, -1.0, 1.0)


_GL3_PTS = np.array([-math.sqrt(3.0 / 5.0), 0.0, math.sqrt(3.0 / 5.0)])
_GL3_WTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def _quad_mass(corners: np.ndarray):
    """(integral N_k N_l, integral N_k) over a quad by 3x3 Gauss."""
    a0, a1, a2, a3 = _bilinear_coeffs(corners)
    xi, eta = np.meshgrid(_GL3_PTS, _GL3_PTS, indexing="ij")
    w = np.outer(_GL3_WTS, _GL3_WTS).ravel()
    pts = np.column_stack([xi.ravel(), eta.ravel()])
    jx = a1[None, :] + a3[None, :] * pts[:, 1:2]
    jy = a2[None, :] + a3[None, :] * pts[:, 0:1]
    det = jx[:, 0] * jy[:, 1] - jx[:, 1] * jy[:, 0]
    n = shape_q4(pts)
    wdet = w * np.abs(det)
    me = n.T @ (n * wdet[:, None])
    de = n.T @ wdet
    return me, de


def dual_coefficients(corners: np.ndarray) -> np.ndarray:
    """Coefficient matrix of the element-wise biorthogonal basis.

    ``A = diag(int N) @ inv(int N N^T)``; the dual functions are
    ``phi_j = sum_k A[j, k] N_k`` and satisfy
    ``int phi_j N_k = delta_jk int N_k`` on the element.  Invariant under
    uniform scaling of the element.
    """
    me, de = _quad_mass(corners)
    return np.diag(de) @ np.linalg.inv(me)


def biorthogonality_residual(corners: np.ndarray, a_mat: np.ndarray) -> float:
    me, de = _quad_mass(corners)
    return float(np.abs(a_mat @ me - np.diag(de)).max())


@dataclass
class PairResult:
    d_block: np.ndarray  # (4, 4) rows slave nodes, cols slave nodes
    m_block: np.ndarray  # (4, 4) rows slave nodes, cols master nodes
    n_cells: int
    area: float
    n_qp: int


def integrate_pair(slave_q2d: np.ndarray, master_q2d: np.ndarray, tol: Tolerances,
                   rule_pts: np.ndarray, rule_wts: np.ndarray,
                   dual_a: np.ndarray | None = None) -> PairResult | None:
    """Integrate one projected slave/master pair; ``None`` if they miss.

    Both inputs are 2D corner quadruples in the slave facet plane, in
    their meshes' node order.  ``dual_a`` switches the multiplier basis
    from the trace functions to the element's biorthogonal set.
    """
    clipper = slave_q2d if polygon_area(slave_q2d) > 0.0 else slave_q2d[::-1]
    if not is_convex_ccw(clipper, eps=tol.cell_area_tol):
        raise DegenerateGeometryError("slave facet projects to a non-convex polygon")
    m_ccw = master_q2d if polygon_area(master_q2d) > 0.0 else master_q2d[::-1]
    if is_convex_ccw(m_ccw, eps=tol.cell_area_tol):
        subjects = [m_ccw]
    else:
        subjects = [m_ccw[[0, 1, 2]], m_ccw[[0, 2, 3]]]  # warped: split into triangles
    cells = []
    for subject in subjects:
        poly = clip_convex(subject, clipper)
        poly = dedupe_polygon(poly, tol.vertex_tol)
        if poly.shape[0] < 3 or abs(polygon_area(poly)) <= tol.cell_area_tol:
            continue
        for tri in triangulate(poly):
            if abs(polygon_area(tri)) > tol.cell_area_tol:
                cells.append(tri)
    if not cells:
        return None
    tris = np.stack(cells)
    areas = 0.5 * np.abs(
        (tris[:, 1, 0] - tris[:, 0, 0]) * (tris[:, 2, 1] - tris[:, 0, 1])
        - (tris[:, 1, 1] - tris[:, 0, 1]) * (tris[:, 2, 0] - tris[:, 0, 0]))
    # quadrature points of every cell in one batch
    pts = np.einsum("gb,cbx->cgx", rule_pts, tris).reshape(-1, 2)
    wts = (rule_wts[None, :] * areas[:, None]).ravel()
    n_sl = shape_q4(inverse_map(slave_q2d, pts, tol.param_tol))
    n_ma = shape_q4(inverse_map(master_q2d, pts, tol.param_tol))
    phi = n_sl if dual_a is None else n_sl @ dual_a.T
    d_block = phi.T @ (n_sl * wts[:, None])
    m_block = phi.T @ (n_ma * wts[:, None])
    return PairResult(d_block, m_block, len(cells), float(areas.sum()), pts.shape[0])


@dataclass
class RankEval:
    """Row-filtered local contributions plus bookkeeping of one rank."""

    rows_d: np.ndarray
    cols_d: np.ndarray
    vals_d: np.ndarray
    rows_m: np.ndarray
    cols_m: np.ndarray
    vals_m: np.ndarray
    work: float                    # quadrature points evaluated
    cells_by_owned_elem: dict      # slave elem id -> integration cells (owned only)
    covered_area: dict             # slave elem id -> clipped area (owned only)
    plane_area: dict               # slave elem id -> projected footprint area
    stats: dict


def evaluate_rank(slave_coords, slave_elems, slave_normals, master_coords,
                  master_elems, eval_elem_ids, owned_elem_mask, row_node_mask,
                  visible_master_ids, tol: Tolerances, rule_pts, rule_wts,
                  basis: str = "dual") -> RankEval:
    """Integrate all pairs of the given slave elements, keeping owned rows.

    ``eval_elem_ids`` are the slave elements this rank integrates (its
    owned elements plus the one-element overlap); ``row_node_mask`` marks
    the slave nodes whose matrix rows this rank is responsible for.
    Contributions to other rows are discarded here because their owners
    compute them too.
    """
    if basis not in ("standard", "dual"):
        raise ConfigError(f"unknown multiplier basis {basis!r}")
    stats = {"candidates": 0, "backfacing": 0, "empty": 0,
             "integrated": 0, "cells": 0, "qp": 0}
    rows_d, cols_d, vals_d = [], [], []
    rows_m, cols_m, vals_m = [], [], []
    cells_by_elem, covered, plane_area = {}, {}, {}
    work = 0.0
    pairs = contact_search(slave_coords, slave_elems, eval_elem_ids,
                           master_coords, master_elems, visible_master_ids,
                           tol.search_tol)
    stats["candidates"] = int(pairs.shape[0])
    if pairs.shape[0] == 0:
        empty_i = np.empty(0, dtype=np.int64)
        empty_f = np.empty(0)
        return RankEval(empty_i, empty_i, empty_f, empty_i, empty_i, empty_f,
                        0.0, cells_by_elem, covered, plane_area, stats)

    master_fn = geomesh.facet_normals(master_coords, master_elems)
    uniq = np.unique(pairs[:, 0])
    bounds = np.append(np.searchsorted(pairs[:, 0], uniq), pairs.shape[0])
    for ui, se in enumerate(uniq):
        conn = slave_elems[se]
        plane = geomesh.facet_plane(slave_coords, conn, slave_normals)
        s2d = project_to_plane(slave_coords[conn], plane)
        owned_here = bool(owned_elem_mask[se])
        if owned_here:
            plane_area[int(se)] = abs(polygon_area(s2d))
        dual_a = dual_coefficients(s2d) if basis == "dual" else None
        row_keep = row_node_mask[conn]
        if not row_keep.any():
            # no owned rows on this element; it only exists here as
            # someone else's overlap
            if owned_here:
                cells_by_elem[int(se)] = 0
                covered[int(se)] = 0.0
            continue
        kept_rows = conn[row_keep]
        for k in range(bounds[ui], bounds[ui + 1]):
            me = pairs[k, 1]
            if plane.normal @ master_fn[me] > -tol.angle_tol:
                stats["backfacing"] += 1
                continue
            m2d = project_to_plane(master_coords[master_elems[me]], plane)
            res = integrate_pair(s2d, m2d, tol, rule_pts, rule_wts, dual_a)
            if res is None:
                stats["empty"] += 1
                continue
            stats["integrated"] += 1
            stats["cells"] += res.n_cells
            stats["qp"] += res.n_qp
            work += res.n_qp
            if owned_here:
                cells_by_elem[int(se)] = cells_by_elem.get(int(se), 0) + res.n_cells
                covered[int(se)] = covered.get(int(se), 0.0) + res.area
            mconn = master_elems[me]
            db = res.d_block[row_keep]
            mb = res.m_block[row_keep]
            rows_d.append(np.repeat(kept_rows, 4))
            cols_d.append(np.tile(conn, kept_rows.size))
            vals_d.append(db.ravel())
            rows_m.append(np.repeat(kept_rows, 4))
            cols_m.append(np.tile(mconn, kept_rows.size))
            vals_m.append(mb.ravel())
        if owned_here and int(se) not in cells_by_elem:
            cells_by_elem[int(se)] = 0
            covered[int(se)] = 0.0

    def cat(chunks, dtype):
        return (np.concatenate(chunks) if chunks
                else np.empty(0, dtype=dtype))

    return RankEval(cat(rows_d, np.int64), cat(cols_d, np.int64), cat(vals_d, float),
                    cat(rows_m, np.int64), cat(cols_m, np.int64), cat(vals_m, float),
                    work, cells_by_elem, covered, plane_area, stats)


def assemble_offprocess(world, rank_evals, row_owner: np.ndarray,
                        n_slave_nodes: int, n_master_nodes: int) -> "MortarMatrices":
    """Route row contributions to their final owners and merge.

    ``row_owner`` is the system-side owner per slave node (it follows the
    volume decomposition and does not change when evaluation is
    rebalanced).  Each evaluating rank keeps what it already owns and
    ships the rest in one message per destination; with evaluation and
    row ownership aligned no message is sent at all.
    """
    from .runtime import Message, TAG_ASSEMBLY
    from .errors import AssemblyError

    nranks = world.nranks
    local = [[] for _ in range(nranks)]
    msgs = []
    for p, ev in enumerate(rank_evals):
        if ev.rows_d.size == 0 and ev.rows_m.size == 0:
            continue
        od = row_owner[ev.rows_d]
        om = row_owner[ev.rows_m]
        for q in np.unique(np.concatenate([od, om])):
            sd = od == q
            sm = om == q
            chunk = (ev.rows_d[sd], ev.cols_d[sd], ev.vals_d[sd],
                     ev.rows_m[sm], ev.cols_m[sm], ev.vals_m[sm])
            if q == p:
                local[p].append(chunk)
            else:
                shipped_rows = np.unique(np.concatenate([chunk[0], chunk[3]])).size
                msgs.append(Message(src=p, dst=int(q), tag=TAG_ASSEMBLY,
                                    payload_nodes=int(shipped_rows), payload_elems=0,
                                    payload=chunk))
    world.exchange(msgs)
    parts = []
    for q in range(nranks):
        parts.extend(local[q])
        for msg in world.drain(q, TAG_ASSEMBLY):
            chunk = msg.payload
            rows = np.concatenate([chunk[0], chunk[3]])
            if rows.size and (row_owner[rows] != q).any():
                raise AssemblyError(f"rank {q} received rows it does not own")
            parts.append(chunk)

    def cat(i, dtype):
        arrs = [c[i] for c in parts if c[i].size]
        return np.concatenate(arrs) if arrs else np.empty(0, dtype=dtype)

    return MortarMatrices(n_slave_nodes, n_master_nodes,
                          cat(0, np.int64), cat(1, np.int64), cat(2, float),
                          cat(3, np.int64), cat(4, np.int64), cat(5, float))


@dataclass
class MortarMatrices:
    """Assembled coupling matrices in triplet form."""

    n_slave_nodes: int
    n_master_nodes: int
    rows_d: np.ndarray
    cols_d: np.ndarray
    vals_d: np.ndarray
    rows_m: np.ndarray
    cols_m: np.ndarray
    vals_m: np.ndarray

    def d_csr(self):
        return scipy.sparse.coo_matrix(
            (self.vals_d, (self.rows_d, self.cols_d)),
            shape=(self.n_slave_nodes, self.n_slave_nodes)).tocsr()

    def m_csr(self):
        return scipy.sparse.coo_matrix(
            (self.vals_m, (self.rows_m, self.cols_m)),
            shape=(self.n_slave_nodes, self.n_master_nodes)).tocsr()


def rel_frobenius_diff(a, b) -> float:
    """|A - B|_F / max(|A|_F, |B|_F); zero matrices compare equal."""
    na, nb = scipy.sparse.linalg.norm(a), scipy.sparse.linalg.norm(b)
    denom = max(na, nb)
    if denom == 0.0:
        return 0.0
    return float(scipy.sparse.linalg.norm(a - b) / denom)


def matrices_close(a: MortarMatrices, b: MortarMatrices, rtol: float = 1.0e-12) -> bool:
    return (rel_frobenius_diff(a.d_csr(), b.d_csr()) <= rtol
            and rel_frobenius_diff(a.m_csr(), b.m_csr()) <= rtol)


def write_matrix_market(mat: MortarMatrices, d_path: str, m_path: str) -> None:
    scipy.io.mmwrite(d_path, scipy.sparse.coo_matrix(
        (mat.vals_d, (mat.rows_d, mat.cols_d)),
        shape=(mat.n_slave_nodes, mat.n_slave_nodes)))
    scipy.io.mmwrite(m_path, scipy.sparse.coo_matrix(
        (mat.vals_m, (mat.rows_m, mat.cols_m)),
        shape=(mat.n_slave_nodes, mat.n_master_nodes)))


def write_diagnostics_csv(path: str, per_rank_stats: list, coverage: dict,
                          plane_area: dict) -> None:
    """Pair counters per rank plus covered-area fraction per slave element."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record", "rank_or_elem", "candidates", "backfacing", "empty",
                    "integrated", "cells", "qp", "covered_fraction"])
        for p, st in enumerate(per_rank_stats):
            w.writerow(["rank", p, st["candidates"], st["backfacing"], st["empty"],
                        st["integrated"], st["cells"], st["qp"], ""])
        for eid in sorted(coverage):
            pa = plane_area.get(eid, 0.0)
            frac = coverage[eid] / pa if pa > 0 else 0.0
            w.writerow(["elem", eid, "", "", "", "", "", "", f"{frac:.17g}"])
