import json

import numpy as np
import pytest

from firmtomo import io
from firmtomo.cli import main
from firmtomo.config import ConfigError, ExperimentConfig, cell_seed

SMALL = {"grid_size": 20, "angles": [8], "noise_levels": [0.0], "gammas": [1.0], "trials": 1,
         "phase1_rounds": 100}


@pytest.fixture
def cfg_file(tmp_path):
    def make(**over):
        data = dict(SMALL, **over)
        path = tmp_path / f"cfg{len(list(tmp_path.glob('cfg*')))}.json"
        path.write_text(json.dumps(data))
        return path
    return make


def test_phantom_outputs(tmp_path, cfg_file):
    out = tmp_path / "ph" / "nested"
    assert main(["phantom", "--config", str(cfg_file()), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.glob("*.pgm"))
    assert names == ["xrf1.pgm", "xrf2.pgm", "xrf3.pgm", "xrt.pgm"]
    imgs = [io.read_image_csv(out / f"{n}.csv") for n in ("xrf1", "xrf2", "xrf3", "xrt")]
    np.testing.assert_array_equal(imgs[3], 0.1 * imgs[0] + 0.6 * imgs[1] + 0.3 * imgs[2])
    assert (out / "manifest.json").exists() and (out / "config.json").exists()
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(["phantom", "--config", str(cfg_file()), "--out", str(out)]) == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


@pytest.mark.parametrize("solver", ["firm", "firmplus", "fedpgd", "pgd", "plsqr"])
def test_solve_each_solver(tmp_path, cfg_file, solver):
    out = tmp_path / solver
    assert main(["solve", "--config", str(cfg_file(max_iter=3000)), "--out", str(out),
                 "--solver", solver]) == 0
    manifest = io.read_json(out / "manifest.json")
    assert manifest["solver"] == solver
    report = io.read_json(out / "report.json")
    assert report["f"] >= 0
    if solver in ("firm", "firmplus"):
        assert manifest["reason"] == "eta_below_eps"
    if solver in ("firm", "firmplus", "fedpgd"):
        header = (out / "rounds.csv").read_text().splitlines()[0]
        assert header.startswith("k,t,eta,agent_1_seconds") and header.endswith("server_ops")
    saved = json.loads((out / "config.json").read_text())
    assert saved["solver"] == solver


def test_usage_and_config_errors(tmp_path, cfg_file, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--solver", "simplex"])
    assert exc.value.code == 2
    assert main(["solve", "--config", str(cfg_file(grid_size=1))]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid_sise": 20}')
    assert main(["phantom", "--config", str(bad)]) == 2
    assert main(["report", "--out", str(tmp_path / "nothing")]) == 2


def test_solver_failure_exit_code(tmp_path, cfg_file, monkeypatch):
    import firmtomo.cli as cli

    def boom(*a, **k):
        raise RuntimeError("diverged")
    monkeypatch.setattr(cli, "run_solver", boom)
    assert main(["solve", "--config", str(cfg_file()), "--out", str(tmp_path / "x")]) == 3


def test_sweep_rows_resume_and_pool(tmp_path, cfg_file):
    cfg = cfg_file(noise_levels=[0.0, 0.05], trials=2, gammas=[1.0])
    serial = tmp_path / "serial"
    assert main(["sweep", "--config", str(cfg), "--out", str(serial), "--seed", "5"]) == 0
    gaps = (serial / "gaps.csv").read_text().splitlines()
    assert len(gaps) == 1 + 1 * 2 * 1 * 2
    assert all(line.endswith(",ok") for line in gaps[1:])
    assert len((serial / "summary.csv").read_text().splitlines()) == 1 + 2
    report = (serial / "report.csv").read_text()

    # resume: completed cells are not recomputed
    stamp = {p.name: p.stat().st_mtime_ns for p in (serial / "cells").iterdir()}
    assert main(["sweep", "--config", str(cfg), "--out", str(serial), "--seed", "5"]) == 0
    assert {p.name: p.stat().st_mtime_ns for p in (serial / "cells").iterdir()} == stamp
    assert (serial / "report.csv").read_text() == report

    pooled = tmp_path / "pooled"
    cfg2 = cfg_file(noise_levels=[0.0, 0.05], trials=2, gammas=[1.0], pool_workers=2)
    assert main(["sweep", "--config", str(cfg2), "--out", str(pooled), "--seed", "5"]) == 0
    assert (pooled / "report.csv").read_text() == report
    assert main(["report", "--config", str(cfg), "--out", str(serial)]) == 0


def test_sweep_records_failed_cells(tmp_path, cfg_file, monkeypatch):
    import firmtomo.experiment as exp

    real = exp.run_solver

    def flaky(inst, cfg, solver, gamma, s, **kw):
        if s > 0:
            raise FloatingPointError("nan in iterate")
        return real(inst, cfg, solver, gamma, s, **kw)
    monkeypatch.setattr(exp, "run_solver", flaky)
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg_file(noise_levels=[0.0, 0.05])), "--out", str(out)]) == 0
    lines = (out / "gaps.csv").read_text().splitlines()[1:]
    assert [line.rsplit(",", 1)[1] for line in lines] == ["ok", "error"]


def test_config_presets_and_seeds(tmp_path):
    paper = ExperimentConfig.preset("paper")
    assert paper.grid_size == 250 and paper.trials == 10 and paper.phase1_rounds == 10_000
    with pytest.raises(ConfigError):
        ExperimentConfig.preset("cluster")
    with pytest.raises(ConfigError):
        ExperimentConfig(weights=[0.7, 0.7])
    cfg = ExperimentConfig(angles=[25, 50])
    cfg.dump(tmp_path / "c.json")
    assert ExperimentConfig.load(tmp_path / "c.json") == cfg
    a = cell_seed(0, 25, 0.01, 1.0, 3)
    assert a == cell_seed(0, 25, 0.01, 1.0, 3)
    assert len({a, cell_seed(1, 25, 0.01, 1.0, 3), cell_seed(0, 25, 0.05, 1.0, 3),
                cell_seed(0, 25, 0.01, 0.1, 3), cell_seed(0, 25, 0.01, 1.0, 4)}) == 5
    assert 0 <= a < 2 ** 64
