"""Command line entry points.

``mortarbench run`` executes one configuration, ``compare`` several,
``report`` renders figures from a finished run directory.  All errors
exit with status 1 and a diagnostic on stderr; stack traces are kept for
unexpected exceptions only.
"""
from __future__ import annotations

import os
import sys

import click

from . import driver, report
from .errors import MortarBenchError

_GHOST = click.Choice(["redundant", "binning", "roundrobin"])
_LB = click.Choice(["none", "static", "dynamic"])
_BASIS = click.Choice(["standard", "dual"])


@click.group()
def main():
    """Distributed mortar contact-evaluation benchmark."""


def _run_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True),
                     help="JSON run configuration; flags override its entries."),
        click.option("--scenario", type=click.Choice(["two_block", "moving_patch"]),
                     default=None),
        click.option("--refine", type=int, default=None),
        click.option("--steps", type=int, default=None),
        click.option("--approach-steps", "approach_steps", type=int, default=None),
        click.option("--ranks", "nranks", type=int, default=None),
        click.option("--ghosting", type=_GHOST, default=None),
        click.option("--lb", "lb_mode", type=_LB, default=None),
        click.option("--eta-t", "eta_t_hat", type=float, default=None),
        click.option("--eta-e", "eta_e_hat", type=float, default=None),
        click.option("--part-tol", "part_tol", type=float, default=None),
        click.option("--basis", type=_BASIS, default=None),
        click.option("--quad-order", "quad_order", type=int, default=None),
        click.option("--seed", type=int, default=None),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _build_config(config_path, out_dir, **overrides) -> driver.RunConfig:
    cfg = driver.load_config(config_path) if config_path else {}
    try:
        run_cfg = driver.config_from_mapping(cfg, **overrides)
    except TypeError as exc:
        raise MortarBenchError(str(exc)) from exc
    if out_dir is not None:
        run_cfg.out_dir = out_dir
    return run_cfg


@main.command("run")
@_run_options
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory for metrics.csv, summary.json, ...")
@click.option("--verify", is_flag=True,
              help="Re-assemble serially each step and compare (slow).")
@click.option("--wall-clock", is_flag=True,
              help="Report measured seconds as t_p instead of work units.")
@click.option("--dump-matrices", is_flag=True, help="Write D.mtx and M.mtx.")
@click.option("--dump-dd", is_flag=True, help="Write ownership/ghost CSVs.")
@click.option("--dump-meshes", is_flag=True, help="Write interface VTK files.")
@click.option("--isolation-check", is_flag=True,
              help="Trap cross-rank access to rank-private state.")
def run_cmd(config_path, out_dir, verify, wall_clock, dump_matrices, dump_dd,
            dump_meshes, isolation_check, **overrides):
    """Run one benchmark configuration."""
    try:
        cfg = _build_config(config_path, out_dir, **overrides)
        cfg.verify = verify
        cfg.wall_clock = wall_clock
        cfg.dump_matrices = dump_matrices
        cfg.dump_dd = dump_dd
        cfg.dump_meshes = dump_meshes
        cfg.isolation_check = isolation_check
        result = driver.run(cfg)
    except MortarBenchError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    acc = result.accumulated
    click.echo(f"{cfg.label}: {len(result.step_rows)} steps, "
               f"accumulated max work {acc['max_work_sum']:.6g}, "
               f"ghost volume {acc['ghost_volume']:.6g}, "
               f"rebalances {acc['rebalances']}")
    if cfg.out_dir:
        click.echo(f"outputs in {cfg.out_dir}")


@main.command("compare")
@click.option("--configs", "config_paths", type=click.Path(exists=True),
              multiple=True, required=True,
              help="JSON configurations; repeat the flag per file.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Directory for comparison.csv and its figure.")
def compare_cmd(config_paths, out_dir):
    """Run several configurations on one scenario and tabulate ratios."""
    try:
        cfgs = [driver.config_from_mapping(driver.load_config(p))
                for p in config_paths]
        rows = driver.compare(cfgs)
    except MortarBenchError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    header = f"{'label':40s} {'max work':>14s} {'ghost vol':>14s} " \
             f"{'rebal':>6s} {'ratio':>8s}"
    click.echo(header)
    for r in rows:
        click.echo(f"{r.label:40s} {r.max_work_sum:14.6g} {r.ghost_volume:14.6g} "
                   f"{r.rebalances:6d} {r.work_ratio:8.3f}")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "comparison.csv")
        driver.write_compare_csv(rows, path)
        for fig in report.render_comparison(path):
            click.echo(f"wrote {fig}")


@main.command("report")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--eta-t", "eta_t_hat", type=float, default=None,
              help="Draw the rebalance threshold into the imbalance figure.")
def report_cmd(run_dir, eta_t_hat):
    """Render figures from a run directory's metrics.csv."""
    try:
        written = report.render_report(run_dir, eta_t_hat)
    except (MortarBenchError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
