import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from mortarbench import cli, driver, mortar, report
from mortarbench.driver import RunConfig, config_from_mapping
from mortarbench.errors import ConfigError


def small_run(tmp_path=None, **kw):
    kw.setdefault("scenario", "two_block")
    kw.setdefault("refine", 1)
    kw.setdefault("steps", 2)
    kw.setdefault("nranks", 2)
    if tmp_path is not None:
        kw["out_dir"] = str(tmp_path)
    return driver.run(RunConfig(**kw))


# configuration ------------------------------------------------------------

def test_config_mapping_translates_keys():
    cfg = config_from_mapping({"ranks": 4, "lb": "dynamic", "eta_t": 2.0,
                               "scenario": "two_block"})
    assert cfg.nranks == 4 and cfg.lb_mode == "dynamic" and cfg.eta_t_hat == 2.0


def test_config_mapping_rejects_unknown_key():
    with pytest.raises(ConfigError):
        config_from_mapping({"rank": 4})


def test_config_overrides_beat_file_values():
    cfg = config_from_mapping({"refine": 1}, refine=3, steps=None)
    assert cfg.refine == 3
    assert cfg.steps is None


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(ghosting="telepathy")
    with pytest.raises(ConfigError):
        RunConfig(nranks=0)
    assert RunConfig(refine=2, nranks=4).label == "two_block-r2-P4-binning-none"
    assert RunConfig(label="x").label == "x"


def test_run_rejects_more_ranks_than_elements():
    with pytest.raises(ConfigError):
        driver.run(RunConfig(refine=1, steps=1, nranks=26))


# serial and parallel runs ---------------------------------------------------

def test_serial_run_has_no_communication():
    res = small_run(nranks=1, steps=3)
    assert all(r["c_p"] == 0.0 for r in res.rank_rows)
    assert all(r["C"] == 0.0 for r in res.step_rows)
    assert all(r["eta_t"] == 1.0 for r in res.step_rows)
    assert res.accumulated["ghost_volume"] == 0.0


def test_row_counts_and_mesh_sizes():
    res = small_run(refine=2, steps=2, nranks=3)
    assert res.n_slave_elems == 100 and res.n_slave_nodes == 121
    assert len(res.rank_rows) == 2 * 3
    assert len(res.step_rows) == 2
    assert len(res.decision_rows) == 2


def test_parallel_matches_serial_oracle():
    small_run(nranks=4, steps=2, verify=True)  # raises on mismatch


def test_isolation_check_clean():
    small_run(nranks=3, steps=1, isolation_check=True)


def test_max_work_sum_audits_against_rows():
    res = small_run(nranks=4, steps=3, ghosting="binning")
    per_step = {}
    for row in res.rank_rows:
        per_step[row["step"]] = max(per_step.get(row["step"], 0.0), row["W_p"])
    assert res.accumulated["max_work_sum"] == pytest.approx(sum(per_step.values()))


def test_work_equals_clock_without_wall_flag():
    res = small_run(nranks=2, steps=2)
    assert all(r["t_p"] == r["W_p"] for r in res.rank_rows)
    wall = small_run(nranks=2, steps=2, wall_clock=True)
    assert any(r["t_p"] != r["W_p"] for r in wall.rank_rows)


def test_roundrobin_reports_peak_foreign_subdomain():
    res = small_run(nranks=3, steps=1, ghosting="roundrobin")
    owned = {r["rank"]: r["owned_sl_elems"] for r in res.rank_rows}
    assert sum(owned.values()) == res.n_slave_elems
    ghosts = [r["ghost_ma_elems"] for r in res.rank_rows]
    # the transient high-water mark: somebody always hosts a foreign block
    assert max(ghosts) > 0
    assert max(ghosts) <= res.n_master_elems
    # a zero peak means that rank owns every master element, so everyone
    # else must peak at the full master side
    for p, g in enumerate(ghosts):
        if g == 0:
            assert all(h == res.n_master_elems
                       for q, h in enumerate(ghosts) if q != p)


def test_roundrobin_matrices_match_binning():
    rr = small_run(nranks=3, steps=1, ghosting="roundrobin")
    bn = small_run(nranks=3, steps=1, ghosting="binning")
    assert mortar.rel_frobenius_diff(rr.matrices.d_csr(), bn.matrices.d_csr()) < 1e-12
    assert mortar.rel_frobenius_diff(rr.matrices.m_csr(), bn.matrices.m_csr()) < 1e-12


# load balancing --------------------------------------------------------------

def test_static_rebalances_exactly_once():
    res = small_run(nranks=2, steps=4, lb_mode="static")
    assert res.rebalance_steps == [0]
    assert res.accumulated["rebalances"] == 1
    assert res.decision_rows[0]["fired"] == 1
    assert all(r["fired"] == 0 for r in res.decision_rows[1:])


def test_none_never_rebalances():
    res = small_run(nranks=2, steps=3, lb_mode="none")
    assert res.rebalance_steps == []
    assert res.accumulated["redist_volume"] == 0.0


def test_dynamic_rebalance_records_audit():
    res = small_run(nranks=2, steps=3, lb_mode="dynamic")
    assert len(res.rebalance_audits) == res.accumulated["rebalances"] >= 1
    audit = res.rebalance_audits[0]
    assert audit["step"] == 0
    assert audit["weight_ratio"] >= 1.0
    assert audit["uniform_weights"]  # no cell statistics exist at step 0


def test_dynamic_disarms_once_balanced():
    # uniform contact: the first rebalance levels the clocks and the
    # trigger goes quiet for the rest of the run
    res = driver.run(RunConfig(scenario="two_block", refine=2, steps=5,
                               nranks=4, lb_mode="dynamic", eta_t_hat=1.8))
    assert res.rebalance_steps == [0]
    assert all(r["eta_t"] < 1.8 for r in res.decision_rows[1:])


def test_dynamic_stays_armed_while_hot():
    # a moving contact band leaves some ranks with idle work clocks, so
    # every firing decision must trace back to a ratio at threshold
    res = driver.run(RunConfig(scenario="moving_patch", refine=1, steps=6,
                               approach_steps=2, nranks=4, lb_mode="dynamic",
                               eta_t_hat=1.8, eta_e_hat=1e9))
    assert res.accumulated["rebalances"] >= 1
    for row in res.decision_rows[1:]:
        if row["fired"]:
            assert row["eta_t"] >= 1.8
        else:
            assert row["eta_t"] < 1.8


# outputs ---------------------------------------------------------------------

def test_metrics_csv_layout(tmp_path):
    res = small_run(tmp_path, nranks=2, steps=2)
    lines = (tmp_path / "metrics.csv").read_text().strip().split("\n")
    header = lines[0].split(",")
    assert header == driver.RANK_COLUMNS + driver.STEP_COLUMNS
    assert len(lines) == 1 + 2 * (2 + 1)  # per step: one row per rank + summary
    summary = [ln for ln in lines[1:] if ln.split(",")[1] == "-1"]
    assert len(summary) == 2
    for ln in summary:
        fields = ln.split(",")
        assert fields[2:len(driver.RANK_COLUMNS)] == [""] * 7
        assert all(f != "" for f in fields[len(driver.RANK_COLUMNS):])


def test_repeated_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    small_run(a, nranks=4, steps=2, lb_mode="dynamic", seed=7)
    small_run(b, nranks=4, steps=2, lb_mode="dynamic", seed=7)
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert (a / "decision_log.csv").read_bytes() == (b / "decision_log.csv").read_bytes()


def test_summary_json_contents(tmp_path):
    res = small_run(tmp_path, nranks=2, steps=2, lb_mode="static")
    data = json.loads((tmp_path / "summary.json").read_text())
    assert data["label"] == res.config.label
    assert data["mesh"]["slave_elems"] == res.n_slave_elems
    assert data["rebalance_steps"] == [0]
    assert data["accumulated"]["max_work_sum"] == pytest.approx(
        res.accumulated["max_work_sum"])
    assert len(data["eta_t_history"]) == 2


def test_decision_log_layout(tmp_path):
    small_run(tmp_path, nranks=2, steps=3, lb_mode="dynamic")
    lines = (tmp_path / "decision_log.csv").read_text().strip().split("\n")
    assert lines[0] == "step,eta_t,eta_e,fired,migrated_elems,redist_cost"
    assert len(lines) == 4


def test_optional_dumps(tmp_path):
    small_run(tmp_path, nranks=2, steps=1, dump_matrices=True, dump_dd=True,
              dump_meshes=True)
    for name in ("D.mtx", "M.mtx", "slave_owners.csv", "master_owners.csv",
                 "slave_ghosts.csv", "master_ghosts.csv", "ghost_plan.csv",
                 "slave.vtk", "master.vtk"):
        assert (tmp_path / name).exists(), name


# comparison ------------------------------------------------------------------

def test_compare_single_config_is_unity():
    rows = driver.compare([RunConfig(refine=1, steps=1, nranks=2)])
    assert rows[0].work_ratio == 1.0


def test_compare_ratios_are_relative_to_first():
    cfgs = [RunConfig(refine=1, steps=1, nranks=4, ghosting="redundant"),
            RunConfig(refine=1, steps=1, nranks=4, ghosting="binning")]
    rows = driver.compare(cfgs)
    assert rows[1].work_ratio == pytest.approx(
        rows[1].max_work_sum / rows[0].max_work_sum)
    assert rows[0].ghost_volume > rows[1].ghost_volume  # binning ships less


def test_compare_rejects_mixed_scenarios():
    with pytest.raises(ConfigError):
        driver.compare([RunConfig(refine=1, steps=1),
                        RunConfig(refine=2, steps=1)])
    with pytest.raises(ConfigError):
        driver.compare([])


def test_compare_csv_and_figure(tmp_path):
    rows = driver.compare([RunConfig(refine=1, steps=1, nranks=2)])
    path = tmp_path / "comparison.csv"
    driver.write_compare_csv(rows, str(path))
    written = report.render_comparison(str(path))
    assert [os.path.basename(p) for p in written] == ["comparison.png"]
    assert os.path.exists(written[0])


# figures ---------------------------------------------------------------------

def test_render_report_writes_figures(tmp_path):
    small_run(tmp_path, nranks=2, steps=3, lb_mode="static")
    written = report.render_report(str(tmp_path), eta_t_hat=1.8)
    names = sorted(os.path.basename(p) for p in written)
    assert names == ["accumulated.png", "comm_volume.png",
                     "imbalance.png", "work_per_step.png"]
    for p in written:
        assert os.path.getsize(p) > 0


def test_read_metrics_requires_step_rows(tmp_path):
    path = tmp_path / "metrics.csv"
    path.write_text(",".join(driver.RANK_COLUMNS + driver.STEP_COLUMNS) + "\n")
    with pytest.raises(ConfigError):
        report.read_metrics(str(path))


# command line ----------------------------------------------------------------

def test_cli_run_and_report(tmp_path):
    runner = CliRunner()
    out = tmp_path / "run"
    res = runner.invoke(cli.main, ["run", "--scenario", "two_block",
                                   "--refine", "1", "--steps", "1",
                                   "--ranks", "2", "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert "outputs in" in res.output
    rep = runner.invoke(cli.main, ["report", str(out)])
    assert rep.exit_code == 0, rep.output
    assert rep.output.count("wrote") == 4


def test_cli_run_from_config_file(tmp_path):
    cfg = {"scenario": "two_block", "refine": 1, "steps": 1, "ranks": 2,
           "ghosting": "redundant", "label": "from-file"}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    res = CliRunner().invoke(cli.main, ["run", "--config", str(path)])
    assert res.exit_code == 0, res.output
    assert "from-file" in res.output


def test_cli_rejects_bad_config(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"warp_factor": 9}))
    res = CliRunner().invoke(cli.main, ["run", "--config", str(path)])
    assert res.exit_code == 1


def test_cli_compare(tmp_path):
    paths = []
    for i, ghost in enumerate(["redundant", "binning"]):
        p = tmp_path / f"c{i}.json"
        p.write_text(json.dumps({"refine": 1, "steps": 1, "ranks": 2,
                                 "ghosting": ghost}))
        paths.append(str(p))
    out = tmp_path / "cmp"
    res = CliRunner().invoke(cli.main, ["compare", "--configs", paths[0],
                                        "--configs", paths[1],
                                        "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert (out / "comparison.csv").exists()
    assert (out / "comparison.png").exists()
