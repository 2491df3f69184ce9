"""Interface surface meshes, benchmark scenarios, and facet geometry.

Meshes are first-order quadrilateral surface meshes in 3D, stored as flat
numpy arrays (one coordinate row per node, one connectivity row per
element).  Two benchmark scenarios are provided:

``two_block``
    Two axis-aligned blocks pressed into each other by a small initial
    penetration.  The smaller block contributes the slave face (0.8 x 0.8),
    the larger one the master face (1.0 x 1.0); both faces carry ``5 * m``
    elements per edge so the meshes never match.  The geometry is static.

``moving_patch``
    The outer surface of a cylinder resting on a flat block.  The cylinder
    first closes the initial gap over ``approach_steps`` load steps and
    then rotates about its axis, sweeping the contact patch around the
    tube.  The block top is meshed a few times finer than the tube.

All motion is prescribed rigidly and resolved per step from the reference
configuration, so repeated runs are reproducible to the bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DegenerateGeometryError, MeshError

# moving_patch geometry knobs.  These are benchmark parameters, not
# physics: they are chosen so that the contact patch covers a mesh-
# independent fraction of the tube and moves by one element every few
# steps at the default resolution.
CYL_RADIUS = 1.0
CYL_INNER_RADIUS = 0.6
CYL_WIDTH = 1.0
CYL_GAP0 = 0.05
CYL_PENETRATION = 0.02
BLOCK_X0, BLOCK_LX = -0.75, 1.5
BLOCK_Y0, BLOCK_LY = -0.125, 1.25
BLOCK_DEPTH = 0.5

# two_block geometry (slave block sits on top, faces penetrate by 1e-3)
TB_PENETRATION = 1.0e-3

_BULK_PROXY_CAP = 24  # proxy cells per edge used for volume partitioning


@dataclass
class InterfaceMesh:
    """One side of a coupling interface.

    Parameters
    ----------
    side : str
        ``"slave"`` or ``"master"``.
    coords : (n_nodes, 3) float array
        Current nodal coordinates.
    elems : (n_elems, 4) int array
        Node ids per quad, counter-clockwise w.r.t. the outward normal.
    normals : (n_nodes, 3) float array
        Averaged outward unit normals, one per node.
    """

    side: str
    coords: np.ndarray
    elems: np.ndarray
    normals: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elems(self) -> int:
        return self.elems.shape[0]


@dataclass(frozen=True)
class FacetPlane:
    """Flat auxiliary plane of a slave facet with an in-plane basis."""

    origin: np.ndarray
    normal: np.ndarray
    basis: np.ndarray  # (2, 3), orthonormal, right-handed with normal


@dataclass(frozen=True)
class MotionSchedule:
    """Rigid slave-side motion, resolved per load step.

    ``kind == "static"`` leaves the slave where it is.  ``kind ==
    "approach_roll"`` translates by ``approach_vec`` linearly over the
    first ``approach_steps`` steps and afterwards rotates about the
    (translated) axis by equal increments totaling ``total_angle``.
    """

    kind: str = "static"
    steps: int = 1
    approach_steps: int = 0
    total_angle: float = 0.0
    axis_point: tuple = (0.0, 0.0, 0.0)
    axis_dir: tuple = (0.0, 1.0, 0.0)
    approach_vec: tuple = (0.0, 0.0, 0.0)

    def transform(self, step: int):
        """Return ``(R, pivot, t)`` with ``x' = R @ (x - pivot) + pivot + t``."""
        if self.kind == "static":
            return np.eye(3), np.zeros(3), np.zeros(3)
        if not 0 <= step < self.steps:
            raise ConfigError(f"step {step} outside schedule of {self.steps} steps")
        approach = np.asarray(self.approach_vec, dtype=float)
        if step < self.approach_steps:
            frac = (step + 1) / self.approach_steps
            return np.eye(3), np.zeros(3), frac * approach
        roll_steps = self.steps - self.approach_steps
        angle = self.total_angle * (step + 1 - self.approach_steps) / roll_steps
        # rotating the translated body about its translated axis is the same
        # map as rotating about the reference axis and then translating
        pivot = np.asarray(self.axis_point, dtype=float)
        return _axis_rotation(np.asarray(self.axis_dir, dtype=float), angle), pivot, approach


@dataclass
class Scenario:
    """A benchmark scenario: reference meshes plus a motion schedule."""

    kind: str
    refine: int
    slave: InterfaceMesh
    master: InterfaceMesh
    steps: int
    approach_steps: int
    dt: float
    motion: MotionSchedule
    bulk_nodes: int  # synthetic volume-mesh size behind both bodies
    bulk_elems: int


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix about a unit axis (Rodrigues)."""
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def facet_normals(coords: np.ndarray, elems: np.ndarray) -> np.ndarray:
    """Unit normal per element from the cross product of its diagonals."""
    d1 = coords[elems[:, 2]] - coords[elems[:, 0]]
    d2 = coords[elems[:, 3]] - coords[elems[:, 1]]
    n = np.cross(d1, d2)
    norms = np.linalg.norm(n, axis=1)
    bad = np.flatnonzero(norms <= 0.0)
    if bad.size:
        raise DegenerateGeometryError(f"element {bad[0]} has a degenerate facet normal")
    return n / norms[:, None]


def averaged_nodal_normals(coords: np.ndarray, elems: np.ndarray) -> np.ndarray:
    """Averaged outward unit normal per node.

    Each node receives the normalized sum of the unit facet normals of its
    adjacent elements.  The result is independent of element ordering.
    A (near) cancelling sum indicates a fold in the surface and raises.
    """
    fn = facet_normals(coords, elems)
    acc = np.zeros_like(coords)
    for k in range(4):
        np.add.at(acc, elems[:, k], fn)
    norms = np.linalg.norm(acc, axis=1)
    touched = np.zeros(coords.shape[0], dtype=bool)
    touched[elems.ravel()] = True
    bad = np.flatnonzero(touched & (norms < 1.0e-12))
    if bad.size:
        raise DegenerateGeometryError(
            f"node {bad[0]}: adjacent facet normals cancel, surface folds back")
    out = np.zeros_like(coords)
    out[touched] = acc[touched] / norms[touched, None]
    return out


def facet_plane(coords: np.ndarray, elem: np.ndarray, nodal_normals: np.ndarray) -> FacetPlane:
    """Flat plane of one slave facet.

    Origin is the vertex average, the plane normal is the normalized mean
    of the four nodal normals, and the in-plane basis comes from the first
    element edge by Gram-Schmidt.
    """
    pts = coords[elem]
    origin = pts.mean(axis=0)
    n = nodal_normals[elem].mean(axis=0)
    n_len = np.linalg.norm(n)
    if n_len < 1.0e-12:
        raise DegenerateGeometryError("nodal normals of facet average to zero")
    n = n / n_len
    e0 = pts[1] - pts[0]
    b1 = e0 - (e0 @ n) * n
    b1_len = np.linalg.norm(b1)
    if b1_len < 1.0e-14:
        raise DegenerateGeometryError("first facet edge is parallel to the plane normal")
    b1 = b1 / b1_len
    b2 = np.cross(n, b1)
    return FacetPlane(origin=origin, normal=n, basis=np.vstack([b1, b2]))


def element_areas(coords: np.ndarray, elems: np.ndarray) -> np.ndarray:
    """Quad areas via half the diagonal cross product (exact for planar quads)."""
    d1 = coords[elems[:, 2]] - coords[elems[:, 0]]
    d2 = coords[elems[:, 3]] - coords[elems[:, 1]]
    return 0.5 * np.linalg.norm(np.cross(d1, d2), axis=1)


def elem_centroids(coords: np.ndarray, elems: np.ndarray) -> np.ndarray:
    return coords[elems].mean(axis=1)


def elem_aabbs(coords: np.ndarray, elems: np.ndarray):
    """Per-element axis-aligned bounding boxes as ``(lo, hi)`` arrays."""
    pts = coords[elems]
    return pts.min(axis=1), pts.max(axis=1)


def max_edge_length(coords: np.ndarray, elems: np.ndarray) -> float:
    """Longest element edge over the mesh (diagonals excluded)."""
    pts = coords[elems]
    edges = pts - np.roll(pts, -1, axis=1)
    return float(np.linalg.norm(edges, axis=2).max())


def validate_mesh(mesh: InterfaceMesh, area_tol_rel: float = 1.0e-12) -> None:
    """Raise :class:`MeshError` on broken connectivity or degenerate facets."""
    if mesh.elems.min(initial=0) < 0 or mesh.elems.max(initial=-1) >= mesh.n_nodes:
        raise MeshError(f"{mesh.side}: element references a node outside the mesh")
    span = mesh.coords.max(axis=0) - mesh.coords.min(axis=0)
    diag2 = float(span @ span)
    areas = element_areas(mesh.coords, mesh.elems)
    bad = np.flatnonzero(areas <= area_tol_rel * diag2)
    if bad.size:
        raise MeshError(f"{mesh.side}: element {bad[0]} has (near) zero area")
    norms = np.linalg.norm(mesh.normals, axis=1)
    used = np.zeros(mesh.n_nodes, dtype=bool)
    used[mesh.elems.ravel()] = True
    if not np.allclose(norms[used], 1.0, atol=1.0e-12):
        raise MeshError(f"{mesh.side}: nodal normals are not unit length")


def _planar_grid(x0, y0, lx, ly, nx, ny, z, normal_up):
    """Structured quad grid on a z-plane, wound for the requested normal."""
    xs = x0 + lx * np.arange(nx + 1) / nx
    ys = y0 + ly * np.arange(ny + 1) / ny
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    coords = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(z))])

    def nid(i, j):
        return i * (ny + 1) + j

    elems = []
    for i in range(nx):
        for j in range(ny):
            if normal_up:
                elems.append([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
            else:
                elems.append([nid(i, j), nid(i, j + 1), nid(i + 1, j + 1), nid(i + 1, j)])
    return coords, np.asarray(elems, dtype=np.int64)


def build_two_block(refine: int, steps: int = 1, dt: float = 1.0) -> Scenario:
    """Two nested contact faces, slave 0.8 x 0.8 centered on master 1.0 x 1.0.

    Both faces carry ``5 * refine`` elements per edge, giving the familiar
    node/element counts (refine 4: 441 slave nodes / 400 slave elements;
    refine 32: 25921 / 25600).  The slave face floats ``TB_PENETRATION``
    below the master plane and nothing moves.
    """
    if refine < 1:
        raise ConfigError("refine must be >= 1")
    n = 5 * refine
    sc, se = _planar_grid(0.1, 0.1, 0.8, 0.8, n, n, -TB_PENETRATION, normal_up=False)
    mc, me = _planar_grid(0.0, 0.0, 1.0, 1.0, n, n, 0.0, normal_up=True)
    slave = InterfaceMesh("slave", sc, se, averaged_nodal_normals(sc, se))
    master = InterfaceMesh("master", mc, me, averaged_nodal_normals(mc, me))
    bulk_elems = 2 * n ** 3
    bulk_nodes = 2 * (n + 1) ** 3
    return Scenario("two_block", refine, slave, master, steps, 0, dt,
                    MotionSchedule(kind="static", steps=steps),
                    bulk_nodes, bulk_elems)


def build_moving_patch(refine: int, steps: int = 200, approach_steps: int = 20,
                       dt: float = 1.0) -> Scenario:
    """Cylinder outer surface (slave) over a flat block top (master).

    The tube carries ``16 * refine`` elements around the circumference and
    ``4 * refine`` along the axis; doubling ``refine`` quadruples the slave
    element count.  The schedule closes the initial gap over
    ``approach_steps`` and then rotates the tube by 180 degrees in equal
    increments over the remaining steps.
    """
    if refine < 1:
        raise ConfigError("refine must be >= 1")
    if not 0 <= approach_steps <= steps:
        raise ConfigError("need 0 <= approach_steps <= steps")
    nc, na = 16 * refine, 4 * refine
    zc = CYL_RADIUS + CYL_GAP0
    theta = 2.0 * math.pi * np.arange(nc) / nc
    ys = CYL_WIDTH * np.arange(na + 1) / na
    coords = np.empty((nc * (na + 1), 3))
    for j in range(nc):
        base = j * (na + 1)
        coords[base:base + na + 1, 0] = CYL_RADIUS * math.sin(theta[j])
        coords[base:base + na + 1, 1] = ys
        coords[base:base + na + 1, 2] = zc - CYL_RADIUS * math.cos(theta[j])

    def nid(j, i):
        return (j % nc) * (na + 1) + i

    elems = []
    for j in range(nc):
        for i in range(na):
            elems.append([nid(j, i), nid(j, i + 1), nid(j + 1, i + 1), nid(j + 1, i)])
    se = np.asarray(elems, dtype=np.int64)
    slave = InterfaceMesh("slave", coords, se, averaged_nodal_normals(coords, se))

    mc, me = _planar_grid(BLOCK_X0, BLOCK_Y0, BLOCK_LX, BLOCK_LY,
                          12 * refine, 10 * refine, 0.0, normal_up=True)
    master = InterfaceMesh("master", mc, me, averaged_nodal_normals(mc, me))

    motion = MotionSchedule(
        kind="approach_roll", steps=steps, approach_steps=approach_steps,
        total_angle=math.pi, axis_point=(0.0, 0.0, zc), axis_dir=(0.0, 1.0, 0.0),
        approach_vec=(0.0, 0.0, -(CYL_GAP0 + CYL_PENETRATION)))

    tube_cells = nc * na * 4
    block_cells = 12 * refine * 10 * refine * 8
    bulk_elems = tube_cells + block_cells
    bulk_nodes = nc * (na + 1) * 5 + (12 * refine + 1) * (10 * refine + 1) * 9
    return Scenario("moving_patch", refine, slave, master, steps, approach_steps,
                    dt, motion, bulk_nodes, bulk_elems)


def scenario_from_config(cfg: dict) -> Scenario:
    """Build a scenario from a plain config mapping.

    Recognized keys: ``scenario`` (``two_block`` | ``moving_patch``),
    ``refine``, ``steps``, ``approach_steps``, ``dt``.
    """
    kind = cfg.get("scenario")
    refine = int(cfg.get("refine", 1))
    dt = float(cfg.get("dt", 1.0))
    if kind == "two_block":
        return build_two_block(refine, steps=int(cfg.get("steps", 1)), dt=dt)
    if kind == "moving_patch":
        steps = int(cfg.get("steps", 200))
        # default approach keeps the 200/20 proportion so short runs work
        approach = cfg.get("approach_steps")
        approach = steps // 10 if approach is None else int(approach)
        return build_moving_patch(refine, steps=steps, approach_steps=approach,
                                  dt=dt)
    raise ConfigError(f"unknown scenario {kind!r}")


def advance_step(scenario: Scenario, step: int) -> InterfaceMesh:
    """Slave mesh at a given step, rebuilt from the reference configuration.

    The transform is applied to the reference coordinates (never
    incrementally), so a step can be recomputed in isolation and repeated
    runs agree bitwise.  Normals are recomputed from the moved facets.
    """
    if not 0 <= step < scenario.steps:
        raise ConfigError(f"step {step} outside 0..{scenario.steps - 1}")
    rot, pivot, t = scenario.motion.transform(step)
    coords = (scenario.slave.coords - pivot) @ rot.T + pivot + t
    return replace(scenario.slave, coords=coords,
                   normals=averaged_nodal_normals(coords, scenario.slave.elems))


def bulk_proxy_points(scenario: Scenario):
    """Synthetic volume sample points behind each body.

    Used to emulate a volume decomposition without meshing the volumes:
    the returned point clouds fill the two bodies and get partitioned
    jointly; interface elements then inherit the owner of the nearest
    sample point of their own body.  Resolution is capped to keep the
    proxy cheap at high interface refinement.
    """
    if scenario.kind == "two_block":
        n = min(5 * scenario.refine, _BULK_PROXY_CAP)
        slave_pts = _box_cells((0.1, 0.1, -TB_PENETRATION), (0.8, 0.8, 0.8), (n, n, n))
        master_pts = _box_cells((0.0, 0.0, -1.0), (1.0, 1.0, 1.0), (n, n, n))
        return slave_pts, master_pts
    if scenario.kind == "moving_patch":
        r = scenario.refine
        nth = min(16 * r, 2 * _BULK_PROXY_CAP)
        ny = min(4 * r, 12)
        zc = CYL_RADIUS + CYL_GAP0
        th = 2.0 * math.pi * (np.arange(nth) + 0.5) / nth
        rad = CYL_INNER_RADIUS + (CYL_RADIUS - CYL_INNER_RADIUS) * (np.arange(3) + 0.5) / 3
        yy = CYL_WIDTH * (np.arange(ny) + 0.5) / ny
        tt, rr, yg = np.meshgrid(th, rad, yy, indexing="ij")
        slave_pts = np.column_stack([
            (rr * np.sin(tt)).ravel(), yg.ravel(), (zc - rr * np.cos(tt)).ravel()])
        master_pts = _box_cells((BLOCK_X0, BLOCK_Y0, -BLOCK_DEPTH),
                                (BLOCK_LX, BLOCK_LY, BLOCK_DEPTH), (12, 10, 4))
        return slave_pts, master_pts
    raise ConfigError(f"no bulk proxy for scenario {scenario.kind!r}")


def _box_cells(origin, lengths, counts):
    ax = [o + l * (np.arange(c) + 0.5) / c for o, l, c in zip(origin, lengths, counts)]
    gx, gy, gz = np.meshgrid(*ax, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


def write_vtk_polydata(mesh: InterfaceMesh, path: str) -> None:
    """Dump a mesh as legacy-VTK ASCII polydata (points, quads, normals)."""
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"mortarbench {mesh.side} surface\n")
        fh.write("ASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for p in mesh.coords:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        fh.write(f"POLYGONS {mesh.n_elems} {5 * mesh.n_elems}\n")
        for e in mesh.elems:
            fh.write(f"4 {e[0]} {e[1]} {e[2]} {e[3]}\n")
        fh.write(f"POINT_DATA {mesh.n_nodes}\n")
        fh.write("NORMALS normals double\n")
        for v in mesh.normals:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
