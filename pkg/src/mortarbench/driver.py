"""Benchmark driver: configuration, the step loop, and file reports.

One run wires the pieces together per load step in a fixed order:
advance the kinematics, maybe rebalance, ghost master data, integrate
the interface on every rank, assemble rows to their owners, snapshot the
ledger.  Everything observable is deterministic for a given
configuration; wall-clock readings are carried along but only replace
the work-unit clock when explicitly requested.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial import cKDTree

from . import balance, geomesh, ghosting, mortar, partition
from .errors import ConfigError, MortarBenchError
from .runtime import CostModel, SimWorld, TAG_GHOST_MASTER, TAG_REDIST

GHOSTINGS = ("redundant", "binning", "roundrobin")

RANK_COLUMNS = ["step", "rank", "owned_sl_elems", "ghost_ma_nodes", "ghost_ma_elems",
                "c_p", "S_p", "W_p", "t_p"]
STEP_COLUMNS = ["C", "eta_t", "eta_e", "rebalanced", "t_redist_proxy", "t_ghost_proxy"]


@dataclass
class RunConfig:
    scenario: str = "two_block"
    refine: int = 1
    steps: int | None = None
    approach_steps: int | None = None
    dt: float = 1.0
    nranks: int = 1
    ghosting: str = "binning"
    lb_mode: str = "none"
    eta_t_hat: float = 1.8
    eta_e_hat: float | None = None
    part_tol: float = 1.03
    basis: str = "dual"
    quad_order: int = 5
    cost_a: float = 1.0
    cost_b: float = 1.0
    seed: int = 0
    out_dir: str | None = None
    verify: bool = False
    wall_clock: bool = False
    dump_matrices: bool = False
    dump_dd: bool = False
    dump_meshes: bool = False
    isolation_check: bool = False
    label: str | None = None

    def __post_init__(self):
        if self.ghosting not in GHOSTINGS:
            raise ConfigError(f"ghosting must be one of {GHOSTINGS}")
        if self.nranks < 1:
            raise ConfigError("nranks must be >= 1")
        if self.label is None:
            self.label = f"{self.scenario}-r{self.refine}-P{self.nranks}-" \
                         f"{self.ghosting}-{self.lb_mode}"

    def policy(self) -> balance.LbPolicy:
        return balance.LbPolicy(mode=self.lb_mode, eta_t_hat=self.eta_t_hat,
                                eta_e_hat=self.eta_e_hat, part_tol=self.part_tol)


_CONFIG_KEYS = {
    "scenario": "scenario", "refine": "refine", "steps": "steps",
    "approach_steps": "approach_steps", "dt": "dt", "ranks": "nranks",
    "ghosting": "ghosting", "lb": "lb_mode", "eta_t": "eta_t_hat",
    "eta_e": "eta_e_hat", "part_tol": "part_tol", "basis": "basis",
    "quad_order": "quad_order", "seed": "seed", "label": "label",
    "cost_a": "cost_a", "cost_b": "cost_b",
}


def config_from_mapping(cfg: dict, **overrides) -> RunConfig:
    """Run configuration from a JSON-style mapping plus keyword overrides."""
    kwargs = {}
    for key, value in cfg.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[_CONFIG_KEYS[key]] = value
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**kwargs)


def load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def build_scenario(config: RunConfig) -> geomesh.Scenario:
    cfg = {"scenario": config.scenario, "refine": config.refine, "dt": config.dt}
    if config.steps is not None:
        cfg["steps"] = config.steps
    if config.approach_steps is not None:
        cfg["approach_steps"] = config.approach_steps
    return geomesh.scenario_from_config(cfg)


@dataclass
class RunResult:
    config: RunConfig
    n_slave_nodes: int
    n_slave_elems: int
    n_master_nodes: int
    n_master_elems: int
    rank_rows: list = field(default_factory=list)
    step_rows: list = field(default_factory=list)
    decision_rows: list = field(default_factory=list)
    rebalance_audits: list = field(default_factory=list)
    accumulated: dict = field(default_factory=dict)
    matrices: mortar.MortarMatrices | None = None

    @property
    def rebalance_steps(self):
        return [r["step"] for r in self.decision_rows if r["fired"]]


def _bulk_aligned_dds(scenario, nranks):
    """Volume-decomposition-aligned interface DDs plus the row owner map.

    The two bodies' proxy point clouds are partitioned jointly; every
    interface element inherits the owner of the nearest proxy point of
    its own body (its parent volume region, evaluated on the reference
    configuration).
    """
    if nranks == 1:
        zs = np.zeros(scenario.slave.n_elems, dtype=np.int64)
        zm = np.zeros(scenario.master.n_elems, dtype=np.int64)
    else:
        pts_s, pts_m = geomesh.bulk_proxy_points(scenario)
        owner = partition.rcb_partition(np.vstack([pts_s, pts_m]), nranks)
        own_s, own_m = owner[:pts_s.shape[0]], owner[pts_s.shape[0]:]
        cen_s = geomesh.elem_centroids(scenario.slave.coords, scenario.slave.elems)
        cen_m = geomesh.elem_centroids(scenario.master.coords, scenario.master.elems)
        zs = own_s[cKDTree(pts_s).query(cen_s)[1]]
        zm = own_m[cKDTree(pts_m).query(cen_m)[1]]
    slave_dd = partition.interface_dd_from_bulk(
        "slave", scenario.slave.elems, scenario.slave.n_nodes, zs, nranks)
    master_dd = partition.interface_dd_from_bulk(
        "master", scenario.master.elems, scenario.master.n_nodes, zm, nranks)
    return slave_dd, master_dd


def evaluate_serial(slave_mesh, master_mesh, tol, rule_pts, rule_wts,
                    basis) -> mortar.MortarMatrices:
    """Single-process reference evaluation (also the --verify oracle)."""
    all_slave = np.arange(slave_mesh.n_elems)
    all_master = np.arange(master_mesh.n_elems)
    owned = np.ones(slave_mesh.n_elems, dtype=bool)
    rows = np.ones(slave_mesh.n_nodes, dtype=bool)
    ev = mortar.evaluate_rank(slave_mesh.coords, slave_mesh.elems, slave_mesh.normals,
                              master_mesh.coords, master_mesh.elems, all_slave,
                              owned, rows, all_master, tol, rule_pts, rule_wts, basis)
    return mortar.MortarMatrices(slave_mesh.n_nodes, master_mesh.n_nodes,
                                 ev.rows_d, ev.cols_d, ev.vals_d,
                                 ev.rows_m, ev.cols_m, ev.vals_m)


def _fmt(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.17g}"
    return str(value)


def run(config: RunConfig) -> RunResult:
    """Execute a configured benchmark run; see the module docstring."""
    scenario = build_scenario(config)
    geomesh.validate_mesh(scenario.slave)
    geomesh.validate_mesh(scenario.master)
    nranks = config.nranks
    if scenario.slave.n_elems < nranks:
        raise ConfigError(
            f"{scenario.slave.n_elems} slave elements cannot feed {nranks} ranks")
    policy = config.policy()
    rule_pts, rule_wts = mortar.triangle_rule(config.quad_order)
    world = SimWorld(nranks, CostModel(config.cost_a, config.cost_b),
                     isolation_check=config.isolation_check)

    slave_dd, master_dd = _bulk_aligned_dds(scenario, nranks)
    row_owner = slave_dd.node_owner.copy()
    s_omega = world.ledger.model.cost(scenario.bulk_nodes, scenario.bulk_elems) / nranks

    master = scenario.master
    n_sl_e = scenario.slave.n_elems
    result = RunResult(config, scenario.slave.n_nodes, n_sl_e,
                       master.n_nodes, master.n_elems)

    visible_cache = None  # per-rank master elems already shipped (redundant)
    last_plan = None
    cells_prev = np.zeros(n_sl_e)
    prev_work = None
    prev_owned = None
    prev_coords = None
    matrices = None
    max_work_sum = 0.0

    for step in range(scenario.steps):
        try:
            slave_now = geomesh.advance_step(scenario, step)
            h_max = geomesh.max_edge_length(slave_now.coords, slave_now.elems)
            tol = mortar.default_tolerances(h_max)
            if prev_coords is None:
                mean_vel = 0.0
            else:
                moved = np.linalg.norm(slave_now.coords - prev_coords, axis=1).sum()
                mean_vel = moved / (slave_now.n_nodes + master.n_nodes) / scenario.dt
            world.ledger.begin_step()

            report = (balance.measure_imbalance(prev_work, prev_owned)
                      if prev_work is not None else None)
            fired = balance.should_rebalance(policy, step, report)
            migrated = 0
            redist_cost = 0.0
            if fired:
                reb = balance.rebalance_interface(
                    world, slave_now.coords, slave_now.elems, master.coords,
                    master.elems, slave_dd, master_dd, 1.0 + cells_prev, policy)
                slave_dd, master_dd = reb.slave_dd, reb.master_dd
                migrated, redist_cost = reb.migrated_elems, reb.redist_cost
                visible_cache = None
                counts_after = np.array([np.count_nonzero(slave_dd.elem_owner == p)
                                         for p in range(nranks)])
                result.rebalance_audits.append({
                    "step": step,
                    "weight_ratio": reb.weight_ratio,
                    "uniform_weights": reb.uniform_weights,
                    "count_ratio": balance.imbalance_ratio(counts_after),
                    "migrated_elems": migrated,
                })

            owned_master = [master_dd.owned_elems(p) for p in range(nranks)]
            base_visible = [master_dd.visible_elems(p) for p in range(nranks)]
            if visible_cache is None:
                visible_cache = [v.copy() for v in base_visible]

            if config.ghosting == "redundant":
                plan = ghosting.ghost_redundant(master.elems, master_dd)
                ghosting.apply_ghost_plan(world, plan, master.elems, master_dd,
                                          already_visible=visible_cache)
                visible = [np.arange(master.n_elems) for _ in range(nranks)]
                visible_cache = visible
            elif config.ghosting == "binning":
                grid = ghosting.build_bin_grid(slave_now.coords, slave_now.elems,
                                               master.coords, master.elems,
                                               mean_vel, scenario.dt)
                plan = ghosting.ghost_binning(grid, slave_now.coords, slave_now.elems,
                                              slave_dd, master.coords, master.elems,
                                              master_dd, tol.search_tol)
                ghosting.apply_ghost_plan(world, plan, master.elems, master_dd)
                visible = [np.union1d(base_visible[p], plan.elems[p])
                           for p in range(nranks)]
                last_plan = plan
            else:  # roundrobin: masters rotate, no persistent plan
                visible = None

            owned_mask = np.zeros(n_sl_e, dtype=bool)
            rank_evals = []
            if config.ghosting != "roundrobin":
                for p in range(nranks):
                    own = slave_dd.elem_owner == p
                    rows = slave_dd.node_owner == p
                    with world.as_rank(p):
                        ev = mortar.evaluate_rank(
                            slave_now.coords, slave_now.elems, slave_now.normals,
                            master.coords, master.elems, slave_dd.visible_elems(p),
                            own, rows, visible[p], tol, rule_pts, rule_wts,
                            config.basis)
                    world.ledger.add_work(p, ev.work)
                    rank_evals.append(ev)
            else:
                partials = [[] for _ in range(nranks)]
                for it in range(nranks):
                    hosted = ghosting.apply_round_robin_shift(world, master.elems,
                                                              master_dd, it)
                    for p in range(nranks):
                        sub = owned_master[int(hosted[p])]
                        own = slave_dd.elem_owner == p
                        rows = slave_dd.node_owner == p
                        with world.as_rank(p):
                            ev = mortar.evaluate_rank(
                                slave_now.coords, slave_now.elems, slave_now.normals,
                                master.coords, master.elems,
                                slave_dd.visible_elems(p), own, rows, sub,
                                tol, rule_pts, rule_wts, config.basis)
                        world.ledger.add_work(p, ev.work)
                        partials[p].append(ev)
                rank_evals = [_merge_evals(parts) for parts in partials]

            cells_prev = np.zeros(n_sl_e)
            for ev in rank_evals:
                for eid, c in ev.cells_by_owned_elem.items():
                    cells_prev[eid] = c

            matrices = mortar.assemble_offprocess(world, rank_evals, row_owner,
                                                  scenario.slave.n_nodes,
                                                  master.n_nodes)
            if config.verify:
                ref = evaluate_serial(slave_now, master, tol, rule_pts, rule_wts,
                                      config.basis)
                if not mortar.matrices_close(matrices, ref):
                    raise MortarBenchError("parallel result deviates from serial oracle")

            work = world.ledger.work.copy()
            owned_counts = np.array([np.count_nonzero(slave_dd.elem_owner == p)
                                     for p in range(nranks)])
            max_work_sum += float(work.max())

            for p in range(nranks):
                if config.ghosting == "roundrobin":
                    g_elems, g_nodes = _rr_peak_foreign(master, master_dd, p)
                else:
                    g_elems, g_nodes = _ghost_counts(master, master_dd, visible[p], p)
                s_vis = world.ledger.model.cost(
                    slave_dd.owned_nodes(p).size + slave_dd.ghost_nodes[p].size,
                    slave_dd.owned_elems(p).size + slave_dd.ghost_elems[p].size)
                m_vis = world.ledger.model.cost(
                    master_dd.owned_nodes(p).size + g_nodes,
                    master_dd.owned_elems(p).size + g_elems)
                w_p, wall_p = world.work_clock(p)
                result.rank_rows.append({
                    "step": step, "rank": p,
                    "owned_sl_elems": int(owned_counts[p]),
                    "ghost_ma_nodes": int(g_nodes), "ghost_ma_elems": int(g_elems),
                    "c_p": float(world.ledger.c[p]),
                    "S_p": float(s_omega + s_vis + m_vis),
                    "W_p": float(w_p),
                    "t_p": float(wall_p) if config.wall_clock else float(w_p),
                })
            result.step_rows.append({
                "step": step,
                "C": world.ledger.total_master_cost,
                "eta_t": balance.imbalance_ratio(work),
                "eta_e": balance.imbalance_ratio(owned_counts),
                "rebalanced": int(fired),
                "t_redist_proxy": float(world.ledger.volume[TAG_REDIST].sum()),
                "t_ghost_proxy": float(world.ledger.volume[TAG_GHOST_MASTER].sum()),
            })
            result.decision_rows.append({
                "step": step,
                "eta_t": report.eta_t if report else 1.0,
                "eta_e": report.eta_e if report else 1.0,
                "fired": int(fired),
                "migrated_elems": migrated,
                "redist_cost": redist_cost,
            })
            prev_work = work
            prev_owned = owned_counts
            prev_coords = slave_now.coords
        except MortarBenchError as exc:
            raise type(exc)(f"step {step}: {exc}") from exc

    result.matrices = matrices
    ghost_elem_counts = np.array([r["ghost_ma_elems"] for r in result.rank_rows])
    result.accumulated = {
        "max_ghost_elems": int(ghost_elem_counts.max()),
        "avg_ghost_elems": float(ghost_elem_counts.mean()),
        "max_work_sum": max_work_sum,
        "ghost_volume": world.ledger.cum_volume[TAG_GHOST_MASTER]
                        + float(world.ledger.volume[TAG_GHOST_MASTER].sum()),
        "redist_volume": world.ledger.cum_volume[TAG_REDIST]
                         + float(world.ledger.volume[TAG_REDIST].sum()),
        "master_cost": world.ledger.cum_master_cost
                       + float(world.ledger.c.sum()),
        "rebalances": sum(r["fired"] for r in result.decision_rows),
    }
    if config.out_dir:
        _write_outputs(result, scenario, slave_dd, master_dd, last_plan)
    return result


def _merge_evals(parts):
    merged_cells = {}
    covered = {}
    plane_area = {}
    stats = {k: 0 for k in parts[0].stats}
    for ev in parts:
        for eid, c in ev.cells_by_owned_elem.items():
            merged_cells[eid] = merged_cells.get(eid, 0) + c
        for eid, a in ev.covered_area.items():
            covered[eid] = covered.get(eid, 0.0) + a
        plane_area.update(ev.plane_area)
        for k, v in ev.stats.items():
            stats[k] += v

    def cat(name, dtype):
        arrs = [getattr(ev, name) for ev in parts if getattr(ev, name).size]
        return np.concatenate(arrs) if arrs else np.empty(0, dtype=dtype)

    return mortar.RankEval(cat("rows_d", np.int64), cat("cols_d", np.int64),
                           cat("vals_d", float), cat("rows_m", np.int64),
                           cat("cols_m", np.int64), cat("vals_m", float),
                           sum(ev.work for ev in parts), merged_cells, covered,
                           plane_area, stats)


def _ghost_counts(master, master_dd, visible_elems, rank):
    nodes = np.unique(master.elems[visible_elems].ravel()) if visible_elems.size \
        else np.empty(0, np.int64)
    g_nodes = int(np.count_nonzero(master_dd.node_owner[nodes] != rank))
    g_elems = int(np.count_nonzero(master_dd.elem_owner[visible_elems] != rank))
    return g_elems, g_nodes


def _rr_peak_foreign(master, master_dd, rank):
    """High-water transient ghost volume of a round-robin step."""
    peak_e = peak_n = 0
    for s in range(master_dd.nranks):
        if s == rank:
            continue
        es = master_dd.owned_elems(s)
        if es.size == 0:
            continue
        peak_e = max(peak_e, int(es.size))
        peak_n = max(peak_n, int(np.unique(master.elems[es].ravel()).size))
    return peak_e, peak_n


def _write_outputs(result, scenario, slave_dd, master_dd, last_plan):
    cfg = result.config
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RANK_COLUMNS + STEP_COLUMNS)
        by_step = {}
        for row in result.rank_rows:
            by_step.setdefault(row["step"], []).append(row)
        for srow in result.step_rows:
            for row in by_step.get(srow["step"], []):
                w.writerow([_fmt(row[c]) for c in RANK_COLUMNS] + [""] * len(STEP_COLUMNS))
            w.writerow([_fmt(srow["step"]), "-1"] + [""] * (len(RANK_COLUMNS) - 2)
                       + [_fmt(srow[c]) for c in STEP_COLUMNS])
    with open(os.path.join(out, "decision_log.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "eta_t", "eta_e", "fired", "migrated_elems", "redist_cost"])
        for row in result.decision_rows:
            w.writerow([_fmt(row[c]) for c in
                        ("step", "eta_t", "eta_e", "fired", "migrated_elems",
                         "redist_cost")])
    summary = {
        "label": cfg.label,
        "seed": cfg.seed,
        "config": {k: v for k, v in asdict(cfg).items() if k != "out_dir"},
        "mesh": {"slave_nodes": result.n_slave_nodes,
                 "slave_elems": result.n_slave_elems,
                 "master_nodes": result.n_master_nodes,
                 "master_elems": result.n_master_elems},
        "accumulated": result.accumulated,
        "rebalance_steps": result.rebalance_steps,
        "rebalance_audits": result.rebalance_audits,
        "eta_t_history": [r["eta_t"] for r in result.step_rows],
        "eta_e_history": [r["eta_e"] for r in result.step_rows],
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    if cfg.dump_matrices and result.matrices is not None:
        mortar.write_matrix_market(result.matrices,
                                   os.path.join(out, "D.mtx"),
                                   os.path.join(out, "M.mtx"))
    if cfg.dump_dd:
        partition.write_owner_csv(slave_dd, os.path.join(out, "slave_owners.csv"))
        partition.write_owner_csv(master_dd, os.path.join(out, "master_owners.csv"))
        partition.write_ghost_csv(slave_dd, os.path.join(out, "slave_ghosts.csv"))
        partition.write_ghost_csv(master_dd, os.path.join(out, "master_ghosts.csv"))
        if last_plan is not None:
            _write_plan_csv(last_plan, os.path.join(out, "ghost_plan.csv"))
    if cfg.dump_meshes:
        geomesh.write_vtk_polydata(scenario.slave, os.path.join(out, "slave.vtk"))
        geomesh.write_vtk_polydata(scenario.master, os.path.join(out, "master.vtk"))


def _write_plan_csv(plan, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "master_elem_id", "source_rank"])
        for p, (es, src) in enumerate(zip(plan.elems, plan.source)):
            for e, s in zip(es, src):
                w.writerow([p, int(e), int(s)])


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    raise TypeError(f"cannot serialize {type(value)}")


@dataclass
class CompareRow:
    label: str
    max_work_sum: float
    ghost_volume: float
    redist_volume: float
    master_cost: float
    rebalances: int
    work_ratio: float


def compare(configs: list[RunConfig]) -> list[CompareRow]:
    """Run several configurations on the same scenario and tabulate them.

    Configurations must agree on scenario kind, refinement, and step
    counts; otherwise the comparison is meaningless and rejected.
    """
    if not configs:
        raise ConfigError("nothing to compare")
    key0 = (configs[0].scenario, configs[0].refine, configs[0].steps,
            configs[0].approach_steps, configs[0].dt)
    for c in configs[1:]:
        key = (c.scenario, c.refine, c.steps, c.approach_steps, c.dt)
        if key != key0:
            raise ConfigError(f"config {c.label!r} runs a different scenario "
                              f"than {configs[0].label!r}; not comparable")
    results = [run(c) for c in configs]
    base = results[0].accumulated["max_work_sum"]
    rows = []
    for res in results:
        acc = res.accumulated
        ratio = acc["max_work_sum"] / base if base > 0 else float("nan")
        rows.append(CompareRow(res.config.label, acc["max_work_sum"],
                               acc["ghost_volume"], acc["redist_volume"],
                               acc["master_cost"], acc["rebalances"], ratio))
    return rows


def write_compare_csv(rows: list[CompareRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "max_work_sum", "ghost_volume", "redist_volume",
                    "master_cost", "rebalances", "work_ratio"])
        for r in rows:
            w.writerow([r.label, _fmt(r.max_work_sum), _fmt(r.ghost_volume),
                        _fmt(r.redist_volume), _fmt(r.master_cost),
                        r.rebalances, _fmt(r.work_ratio)])
