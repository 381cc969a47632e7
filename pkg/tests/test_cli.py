import csv
import io
import json

import numpy as np
import pytest

from psc import PipelineConfig, estimate, fit_pipeline
from psc.cli import main, read_config_file
from psc.data import parse_dataset, write_dataset
from psc.errors import ConfigError


@pytest.fixture(scope="module")
def data_file(tmp_path_factory, small_data):
    path = tmp_path_factory.mktemp("cli") / "d.csv"
    write_dataset(small_data, path)
    return path


def _run(capsys, argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_estimate_json_report(capsys, data_file):
    code, out, _ = _run(capsys, ["estimate", "--data", data_file, "--rho", "0", "--basis", "1,s1,s0",
                                 "--estimator", "eif", "--bootstrap", 6, "--seed", 7,
                                 "--grid-nodes", 24])
    assert code == 0
    rep = json.loads(out)
    assert rep["status"] == "ok"
    assert set(rep["results"]["eif"]) == {"arm1", "arm0", "tau"}
    for body in rep["results"]["eif"].values():
        assert {"eta_hat", "se", "ci", "diagnostics"} <= set(body)
        assert body["diagnostics"]["config"]["grid_nodes"] == 24
        assert body["diagnostics"]["config"]["clamp"] == 0.01
        assert body["diagnostics"]["interval"] == "percentile bootstrap"
        assert list(body["eta_hat"]) == ["1", "s1", "s0"]


def test_estimate_is_byte_identical(tmp_path, data_file):
    argv = ["estimate", "--data", str(data_file), "--bootstrap", "5", "--seed", "3",
            "--grid-nodes", "16", "--rho", "0.3"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_estimate_without_bootstrap_uses_plugin(capsys, data_file):
    code, out, _ = _run(capsys, ["estimate", "--data", data_file, "--bootstrap", 0,
                                 "--grid-nodes", 16, "--format", "csv"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    eif = [r for r in rows if r["estimator"] == "eif"]
    assert len(eif) == 9 and all(r["ci_lo"] for r in eif)
    assert all(r["ci_lo"] == "" for r in rows if r["estimator"] == "pd_om")


def test_roundtrip_matches_in_memory(data_file, small_data):
    cfg = PipelineConfig(rho=0.2, nodes=24)
    a = fit_pipeline(small_data, cfg)
    b = fit_pipeline(parse_dataset(data_file), cfg)
    for est in ("pd_om", "tp_pd", "eif"):
        for arm in (1, 0, "tau"):
            np.testing.assert_allclose(estimate(a, est, arm).eta_hat, estimate(b, est, arm).eta_hat,
                                       atol=1e-12, rtol=0)


def test_simulate_csv(capsys):
    code, out, _ = _run(capsys, ["simulate", "--regime", 1, "--n", 60, "--rho", 0, "--reps", 2,
                                 "--seed", 1, "--grid-nodes", 16])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["regime", "rho", "n", "estimator", "coefficient", "bias", "rmse",
                             "replicates", "failures", "sd"]
    assert len(rows) == 3 * 3


def test_sensitivity_rows(capsys, data_file):
    code, out, _ = _run(capsys, ["sensitivity", "--data", data_file, "--bootstrap", 0,
                                 "--grid-nodes", 16])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 3 * 3 * 3
    assert sorted({r["rho"] for r in rows}) == ["0.0", "0.2", "0.5"]
    assert list(rows[0]) == ["rho", "estimator", "coefficient", "estimate", "ci_lo", "ci_hi", "error"]


def test_sensitivity_bootstrap(capsys, data_file):
    code, out, _ = _run(capsys, ["sensitivity", "--data", data_file, "--rho-grid", "0,0.4",
                                 "--estimator", "tp_pd", "--bootstrap", 4, "--grid-nodes", 16])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 2 * 3
    assert all(float(r["ci_lo"]) <= float(r["ci_hi"]) for r in rows)


def test_config_errors_are_aggregated(capsys):
    code, _, err = _run(capsys, ["estimate", "--rho", 1.5, "--grid-nodes", 4, "--level", 2])
    assert code == 2
    assert err.count("psc: error") == 1
    for part in ("rho", "grid nodes", "--data", "level"):
        assert part in err


def test_config_file_and_override(tmp_path, capsys, data_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# run settings\ndata = {data_file}\ngrid-nodes = 16\nbootstrap = 0\n"
                   "estimator = pd_om\nrho = 0.3\n", encoding="utf-8")
    code, out, _ = _run(capsys, ["estimate", "--config", cfg, "--rho", "0.1"])
    assert code == 0
    echo = json.loads(out)["config"]
    assert echo["rho"] == 0.1 and echo["grid_nodes"] == 16 and echo["estimator"] == "pd_om"
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\nrho = x\nnonsense\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="unknown key 'colour'.*expects a number.*key = value"):
        read_config_file(bad)


def test_missing_file_and_bad_schema(tmp_path, capsys):
    code, _, err = _run(capsys, ["estimate", "--data", tmp_path / "nope.csv", "--bootstrap", 0])
    assert code == 1 and "nope.csv" in err
    f = tmp_path / "bad.csv"
    f.write_text("z,s\n1,0\n", encoding="utf-8")
    code, _, err = _run(capsys, ["estimate", "--data", f, "--bootstrap", 0])
    assert code == 1 and "'y'" in err


def test_estimation_failure_is_flagged(capsys, data_file):
    basis = ",".join(["1"] + [f"s1^{k}" for k in range(1, 16)])
    code, out, _ = _run(capsys, ["estimate", "--data", data_file, "--basis", basis,
                                 "--estimator", "pd_om", "--bootstrap", 0, "--grid-nodes", 16])
    assert code == 1
    rep = json.loads(out)
    assert rep["status"] == "failed"
    assert "error" in rep["results"]["pd_om"]["arm1"]
