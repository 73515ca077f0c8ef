import json
import subprocess
import sys

import numpy as np
import pytest

from isingmix.cli import main


def run_cli(*args):
    return main(list(args))


def test_identities_exit_zero(capsys):
    assert run_cli("identities", "--theta", "1", "--beta", "1.5") == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 6
    values = [float(line.split(":")[1]) for line in out]
    assert all(v < 1e-6 for v in values)


def test_estimate_requires_beta_for_mf(capsys):
    code = run_cli("estimate", "--method", "mf", "--in", "whatever.csv")
    assert code == 1
    assert "--beta" in capsys.readouterr().err


def test_missing_config_is_io_error(capsys):
    assert run_cli("simulate", "--config", "missing.json") == 3
    assert "missing.json" in capsys.readouterr().err


def test_unknown_flag_named(capsys):
    assert run_cli("identities", "--theta", "1", "--beta", "1", "--bogus") == 1
    assert "--bogus" in capsys.readouterr().err


def test_bad_vector_is_usage_error(capsys):
    assert run_cli("info", "--theta", "abc", "--beta", "0.5") == 1
    assert "--theta" in capsys.readouterr().err


def test_negative_beta_is_usage_error():
    assert run_cli("gen-labels", "--n", "5", "--beta", "-1", "--seed", "1",
                   "--out", "/tmp/zz.csv") == 1


def test_gen_labels_deterministic(tmp_path):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (p1, p2):
        assert run_cli("gen-labels", "--model", "cw", "--n", "50", "--beta", "1.2",
                       "--seed", "9", "--out", str(p)) == 0
    assert p1.read_bytes() == p2.read_bytes()


def test_full_pipeline(tmp_path):
    zpath = tmp_path / "z.csv"
    dpath = tmp_path / "d.csv"
    rpath = tmp_path / "r.json"
    assert run_cli("gen-labels", "--n", "60", "--beta", "1.5", "--seed", "3",
                   "--out", str(zpath)) == 0
    assert run_cli("gen-data", "--theta", "1", "--labels", str(zpath),
                   "--seed", "4", "--out", str(dpath)) == 0
    assert run_cli("estimate", "--method", "mf", "--beta", "1.5",
                   "--in", str(dpath), "--out", str(rpath)) == 0
    result = json.loads(rpath.read_text())
    assert result["estimator"] == "mf"
    assert result["converged"] is True
    assert abs(result["u_hat"]) <= 1.0
    assert run_cli("estimate", "--method", "mle", "--beta", "1.5",
                   "--in", str(dpath), "--out", str(rpath)) == 0
    assert json.loads(rpath.read_text())["estimator"] == "mle_cw"


def test_gen_labels_ising_model(tmp_path):
    import isingmix.coupling as C

    cpath = tmp_path / "c.csv"
    C.save_coupling_csv(C.make_matching(8), cpath)
    zpath = tmp_path / "z.csv"
    assert run_cli("gen-labels", "--model", "ising", "--coupling", str(cpath),
                   "--n", "8", "--beta", "0.7", "--seed", "5",
                   "--out", str(zpath)) == 0
    assert zpath.read_text().splitlines()[0] == "z"


def test_info_json(tmp_path):
    out = tmp_path / "info.json"
    assert run_cli("info", "--theta", "1,0.5", "--beta", "1.5",
                   "--out", str(out)) == 0
    rep = json.loads(out.read_text())
    assert rep["d"] == 2
    assert len(rep["i_beta"]) == 4
    assert rep["m"] == pytest.approx(0.8585596366401104)


def test_sweep_and_config_overrides(tmp_path):
    cfg = dict(seed=1, n=10, d=1, replications=1, theta0=[1.0],
               beta_grid=list(np.arange(0.0, 2.01, 0.5)), estimators=["iid"])
    cpath = tmp_path / "cfg.json"
    cpath.write_text(json.dumps(cfg))
    out = tmp_path / "sweep.csv"
    assert run_cli("sweep", "--config", str(cpath), "--out", str(out)) == 0
    header = [l for l in out.read_text().splitlines() if not l.startswith("#")][0]
    assert header == "beta,m,inv_I0_00,inv_Ibeta_00,amle_var_00"


def test_simulate_and_lan(tmp_path):
    cfg = dict(seed=2, n=200, d=1, replications=6, theta0=[1.0],
               beta_grid=[0.5], estimators=["iid"])
    cpath = tmp_path / "cfg.json"
    cpath.write_text(json.dumps(cfg))
    out = tmp_path / "mc.json"
    assert run_cli("simulate", "--config", str(cpath), "--out", str(out),
                   "--workers", "1") == 0
    summary = json.loads(out.read_text())
    assert summary["results"][0]["n_ok"] == 6
    assert summary["meta"]["rng"] == "philox4x64"

    lan_json = tmp_path / "lan.json"
    lan_csv = tmp_path / "lan.csv"
    assert run_cli("lan-check", "--config", str(cpath), "--h", "1",
                   "--out", str(lan_json), "--out-csv", str(lan_csv),
                   "--workers", "1") == 0
    rep = json.loads(lan_json.read_text())
    assert rep["replications"] == 6
    assert lan_csv.read_text().splitlines()[5] == "rep,llr,score_term,predicted"


def test_paired_info_cli(tmp_path):
    out = tmp_path / "pi.json"
    assert run_cli("paired-info", "--theta", "1", "--beta", "0.5",
                   "--draws", "100000", "--seed", "1", "--out", str(out)) == 0
    rep = json.loads(out.read_text())
    assert rep["draws"] == 100000
    assert len(rep["info"]) == 1


@pytest.mark.parametrize("sub", ["gen-labels", "gen-data", "estimate", "info",
                                 "identities", "sweep", "simulate", "lan-check",
                                 "paired-info"])
def test_help_documents_every_subcommand(sub):
    proc = subprocess.run([sys.executable, "-m", "isingmix.cli", sub, "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "--" in proc.stdout  # flags are listed


def test_gen_labels_n_validation(tmp_path, capsys):
    assert run_cli("gen-labels", "--model", "cw", "--beta", "0.5", "--seed", "1",
                   "--out", str(tmp_path / "z.csv")) == 1
    assert "--n" in capsys.readouterr().err
    import isingmix.coupling as C
    cpath = tmp_path / "c.csv"
    C.save_coupling_csv(C.make_matching(6), cpath)
    assert run_cli("gen-labels", "--model", "ising", "--coupling", str(cpath),
                   "--n", "8", "--beta", "0.5", "--seed", "1",
                   "--out", str(tmp_path / "z.csv")) == 1
    assert run_cli("gen-labels", "--model", "ising", "--coupling", str(cpath),
                   "--beta", "0.5", "--seed", "1",
                   "--out", str(tmp_path / "z.csv")) == 0
