import json

import numpy as np
import pytest
import yaml

from factorcavity import cli, exact, io, models
from factorcavity.graphmodel import DegreeSpec, FactorGraph


def run_cli(argv):
    return cli.main(argv)


def test_check_ldgm_passes(capsys):
    rc = run_cli(["check", "--model", "ldgm", "--eta", "0.25", "--dspec", "2",
                  "--kspec", "2:0.5,3:0.5", "--pos-trials", "100"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "SYM: pass xi=1.0" in out
    assert "DEG: pass" in out
    assert "POS: pass (no-violation-found" in out


def test_check_fails_on_broken_symmetry(tmp_path, capsys):
    cfg = {
        "model": None,  # placeholder; direct family configs are not models
    }
    # a family whose table is positive but slot-biased: SYM must fail
    table = [1.2, 1.2, 0.3, 0.3]
    node = {"name": "ldgm", "eta": 0.25, "dspec": 2, "kspec": 2}
    # go through the assumptions checker via a hand-built family instead
    from factorcavity import assumptions
    from factorcavity.graphmodel import WeightFamily

    fam = WeightFamily(q=2, tables={2: (np.asarray(table).reshape(2, 2),)},
                       masses={2: [1.0]})
    rep = assumptions.check_sym(fam)
    assert not rep.passed

    # the CLI surface: an assortative model fails POS and exits 1
    rc = run_cli(["check", "--model", "sbm", "--q", "2", "--beta", "1.0",
                  "--d", "3", "--assortative", "--pos-trials", "10000"])
    out = capsys.readouterr().out
    assert rc == 1
    assert "POS: FAIL" in out
    assert "witness" in out


def test_check_negative_table_is_runtime_error(tmp_path, capsys):
    bad = {"model": {"name": "ldgm", "eta": -0.5, "dspec": 2, "kspec": 2}}
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(bad))
    rc = run_cli(["check", "--config", str(path)])
    assert rc == 2


def test_sample_round_trips_through_exact(tmp_path, capsys):
    rc = run_cli(["sample", "--model", "ldgm", "--eta", "0.2", "--dspec", "2",
                  "--kspec", "2", "--n", "6", "--seed", "3",
                  "--out", str(tmp_path / "g")])
    assert rc == 0
    text = (tmp_path / "g.graph.txt").read_text()
    model = models.ldgm(0.2, DegreeSpec.constant(2), DegreeSpec.constant(2))
    g = FactorGraph.from_text(text, model.family)
    assert g.n == 6 and g.m == 6

    rc = run_cli(["exact", "--model", "ldgm", "--eta", "0.2", "--dspec", "2",
                  "--kspec", "2", "--n", "6", "--seed", "3",
                  "--graph", str(tmp_path / "g.graph.txt"),
                  "--out", str(tmp_path / "res")])
    assert rc == 0
    payload = json.loads((tmp_path / "res.json").read_text())
    assert payload["log_z"] == pytest.approx(exact.partition_function(g).log_z)


def test_sample_planted_records_ground_truth(tmp_path):
    rc = run_cli(["sample", "--model", "sbm", "--q", "2", "--beta", "0.7",
                  "--d", "3", "--n", "4", "--kind", "planted",
                  "--theta", "1", "--seed", "5", "--out", str(tmp_path / "p")])
    assert rc == 0
    manifest = json.loads((tmp_path / "p.manifest.json").read_text())
    assert len(manifest["sigma"]) == 4


def test_bp_command(tmp_path):
    rc = run_cli(["bp", "--model", "sbm", "--q", "2", "--beta", "0.5", "--d", "3",
                  "--n", "6", "--seed", "1", "--damping", "0.0",
                  "--out", str(tmp_path / "bp")])
    assert rc == 0
    payload = json.loads((tmp_path / "bp.json").read_text())
    assert "bethe" in payload and "marginal_error" in payload


def test_bethe_command(tmp_path):
    rc = run_cli(["bethe", "--model", "ldgm", "--eta", "0.5", "--dspec", "2",
                  "--kspec", "2", "--restarts", "1", "--pop-size", "150",
                  "--sweeps", "5", "--samples", "2000",
                  "--out", str(tmp_path / "b")])
    assert rc == 0
    payload = json.loads((tmp_path / "b.json").read_text())
    assert payload["heuristic_sup"] is True
    assert payload["sup"] == pytest.approx(float(np.log(2)), abs=1e-12)


def _mi_scan_config(tmp_path):
    cfg = {
        "model": {"name": "ldgm", "dspec": 2, "kspec": 2},
        "grid": {"param": "eta", "values": [0.35, 0.5]},
        "seed": 11,
        "budget": {"restarts": 1, "pop_size": 150, "sweeps": 5,
                   "samples": 2000, "pos_trials": 30},
    }
    path = tmp_path / "scan.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_mi_scan_deterministic_and_sane(tmp_path):
    path = _mi_scan_config(tmp_path)
    rc = run_cli(["mi-scan", "--config", str(path), "--out", str(tmp_path / "a")])
    assert rc == 0
    body_a = (tmp_path / "a.csv").read_text()
    rc = run_cli(["mi-scan", "--config", str(path), "--out", str(tmp_path / "b")])
    assert rc == 0
    body_b = (tmp_path / "b.csv").read_text()
    assert body_a == body_b
    assert body_a.splitlines()[0] == io.CSV_SCHEMA

    rows = body_a.splitlines()[2:]
    last = rows[-1].split(",")
    mi, stderr = float(last[1]), float(last[2])
    assert abs(mi) <= max(3 * stderr, 1e-10)  # eta = 1/2 row


def test_mi_scan_workers_match_serial(tmp_path):
    path = _mi_scan_config(tmp_path)
    rc = run_cli(["mi-scan", "--config", str(path), "--workers", "2",
                  "--out", str(tmp_path / "w")])
    assert rc == 0
    rc = run_cli(["mi-scan", "--config", str(path), "--workers", "1",
                  "--out", str(tmp_path / "s")])
    assert rc == 0
    assert (tmp_path / "w.csv").read_text() == (tmp_path / "s.csv").read_text()


def test_threshold_command_no_crossing(tmp_path):
    cfg = {
        "model": {"name": "sbm", "q": 2, "d": 3},
        "grid": {"param": "beta", "values": [0.0, 0.2]},
        "seed": 3,
        "budget": {"restarts": 1, "pop_size": 150, "sweeps": 5, "samples": 2000},
    }
    path = tmp_path / "th.yaml"
    path.write_text(yaml.safe_dump(cfg))
    rc = run_cli(["threshold", "--config", str(path), "--out", str(tmp_path / "t")])
    assert rc == 2
    manifest = json.loads((tmp_path / "t.manifest.json").read_text())
    assert manifest["error"]["type"] == "NoCrossing"
    body = (tmp_path / "t.csv").read_text()
    assert "B_pd_planted_init" in body.splitlines()[1]


def test_threshold_command_finds_crossing(tmp_path):
    cfg = {
        "model": {"name": "sbm", "q": 2, "d": 3},
        "grid": {"param": "beta", "values": [0.5, 3.5]},
        "seed": 3,
        "budget": {"restarts": 1, "pop_size": 600, "sweeps": 40, "samples": 8000},
    }
    path = tmp_path / "th.yaml"
    path.write_text(yaml.safe_dump(cfg))
    rc = run_cli(["threshold", "--config", str(path), "--out", str(tmp_path / "t")])
    assert rc == 0
    payload = json.loads((tmp_path / "t.json").read_text())
    assert payload["bracket"] == [0.5, 3.5]


def test_worker_cap_env(monkeypatch):
    monkeypatch.setenv(cli.WORKER_ENV, "2")
    assert cli._worker_cap(8) == 2
    assert cli._worker_cap(1) == 1
    monkeypatch.delenv(cli.WORKER_ENV)
    assert cli._worker_cap(8) == 8
    assert cli._worker_cap(None) == 1


def test_config_validation_errors(tmp_path):
    cfg = {"model": {"name": "nope"}, "grid": {"param": "eta", "values": [0.1]}}
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(cfg))
    rc = run_cli(["mi-scan", "--config", str(path)])
    assert rc == 2
