import json
import math

import numpy as np
import pytest

from esnmemory.cli import main
from esnmemory.harness import (
    LowRankStructure, SparseStructure, TrialConfig, effective_matrix, read_pgm,
    run_trial, trial_config_to_dict, trial_instance,
)
from esnmemory.network import NetworkSpec


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def keyvals(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines())


@pytest.fixture
def trial_file(tmp_path):
    cfg = TrialConfig(NetworkSpec(24, 2, 8), SparseStructure("canonical", 2), master_seed=4)
    path = tmp_path / "trial.json"
    path.write_text(json.dumps(trial_config_to_dict(cfg)))
    return path, cfg


def test_simulate_matches_library(capsys, trial_file):
    path, cfg = trial_file
    code, out, _ = run(capsys, "simulate", "--config", path, "--trial-index", 2)
    assert code == 0
    rec = json.loads(out)
    assert rec["rmse"] == run_trial(cfg, 2).rmse
    assert rec["recovery"]["converged"] in (True, False)


def test_recover_sparse_json_and_npz(capsys, tmp_path, trial_file):
    _, cfg = trial_file
    inst = trial_instance(cfg, 0)
    A = effective_matrix(inst["operator"], inst["basis"])
    js = tmp_path / "inst.json"
    js.write_text(json.dumps({"A_eff": A.tolist(), "x": inst["x"].tolist(), "epsilon": 0.01}))
    code, out, _ = run(capsys, "recover-sparse", "--instance", js, "--oracle", 2)
    assert code == 0
    rec = json.loads(out)
    assert rec["residual_norm"] <= 0.0101
    assert sorted(rec["oracle_support"]) == sorted(np.flatnonzero(inst["coefficients"]).tolist())

    npz = tmp_path / "inst.npz"
    np.savez(npz, A_eff=A, x=inst["x"], epsilon=0.01)
    code, out2, _ = run(capsys, "recover-sparse", "--instance", npz)
    assert code == 0
    assert json.loads(out2)["estimate"] == rec["estimate"]


def test_recover_lowrank_with_network_key(capsys, tmp_path):
    cfg = TrialConfig(NetworkSpec(40, 3, 8, seed=5), LowRankStructure(1), noise_norm=0.0)
    inst = trial_instance(cfg, 0)
    spec = inst["network"].spec
    d = {"network": {"nodes": spec.nodes, "streams": spec.streams, "horizon": spec.horizon,
                     "seed": spec.seed, "mode": spec.mode},
         "x": inst["x"].tolist()}
    p = tmp_path / "lr.json"
    p.write_text(json.dumps(d))
    code, out, _ = run(capsys, "recover-lowrank", "--instance", p)
    assert code == 0
    est = np.array(json.loads(out)["estimate"])
    assert est.shape == (3, 8)

    # same instance given as an explicit matrix
    p2 = tmp_path / "lr2.json"
    p2.write_text(json.dumps({"A": inst["operator"].matrix.tolist(), "streams": 3, "horizon": 8,
                              "x": inst["x"].tolist()}))
    code, out2, _ = run(capsys, "recover-lowrank", "--instance", p2)
    assert code == 0
    np.testing.assert_allclose(np.array(json.loads(out2)["estimate"]), est, atol=1e-12)


def test_recover_lowrank_missing_operator(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"x": [1.0, 2.0]}))
    code, _, err = run(capsys, "recover-lowrank", "--instance", p)
    assert code == 1 and "network" in err


def test_phase_diagram_outputs(capsys, tmp_path, trial_file):
    _, cfg = trial_file
    grid = {"axis_M": [16, 24], "axis_dim": [1, 3], "trials_per_cell": 2,
            "base": trial_config_to_dict(cfg)}
    gpath = tmp_path / "grid.json"
    gpath.write_text(json.dumps(grid))
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "phase-diagram", "--config", gpath, "--out", out_dir)
    assert code == 0
    paths = keyvals(out)
    assert set(paths) == {"csv", "pgm", "png"}
    csv = (out_dir / "grid.csv").read_text().splitlines()
    assert csv[0] == "dim,M,rho,gamma,trials,mean_rmse,std_rmse,n_converged"
    assert len(csv) == 5
    assert read_pgm((out_dir / "grid.pgm").read_bytes()).shape == (2, 2)
    assert (out_dir / "grid.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    code, out, _ = run(capsys, "phase-diagram", "--config", gpath, "--out", tmp_path / "o2", "--no-figure")
    assert code == 0 and "png" not in keyvals(out)
    assert (tmp_path / "o2" / "grid.csv").read_text() == (out_dir / "grid.csv").read_text()


def test_coherence_outputs(capsys):
    code, out, _ = run(capsys, "coherence", "--basis", "canonical", "--n", 16)
    assert code == 0
    assert float(keyvals(out)["mu"]) == pytest.approx(1.0)
    code, out, _ = run(capsys, "coherence", "--basis", "haar", "--n", 64, "--streams", 3, "--json")
    assert code == 0
    assert json.loads(out)["mu_S"] == pytest.approx(8.0)


def test_rip_estimate_outputs(capsys):
    argv = ("rip-estimate", "--nodes", 32, "--streams", 2, "--horizon", 16, "--K", 2,
            "--samples", 10, "--json")
    code, out, _ = run(capsys, *argv)
    assert code == 0
    rec = json.loads(out)
    assert rec["support_samples"] == 10 and rec["delta_hat"] >= 0
    assert json.loads(run(capsys, *argv)[1]) == rec


def test_bounds_outputs(capsys):
    code, out, _ = run(capsys, "bounds", "--K", 5, "--N", 100, "--L", 40, "--R", 2, "--json")
    assert code == 0
    rec = json.loads(out)
    assert rec["required_nodes_sparse"] == pytest.approx(20 * math.log(4000) ** 5)
    assert rec["required_nodes_lowrank"] == pytest.approx(280 * math.log(4000) ** 3)
    code, out, _ = run(capsys, "bounds", "--L", 1, "--N", 64, "--tail", 0.0, "--epsilon", 0.1,
                       "--alpha", 2.0)
    kv = keyvals(out)
    assert float(kv["required_nodes_single"]) == pytest.approx(float(kv["required_nodes_sparse"]))
    assert float(kv["sparse_error_bound"]) == pytest.approx(0.2)


def test_exit_code_usage_errors(capsys, tmp_path):
    assert run(capsys, "coherence", "--basis", "haar", "--n", 12)[0] == 1
    assert run(capsys, "simulate", "--config", tmp_path / "missing.json")[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "simulate", "--config", bad)[0] == 1
    assert run(capsys, "bounds", "--eta", 0.9)[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1


def test_exit_code_numerical_failure(capsys, tmp_path, monkeypatch):
    import esnmemory.cli as cli

    p = tmp_path / "inst.json"
    p.write_text(json.dumps({"A_eff": [[1.0, 0.0], [0.0, 1.0]], "x": [1.0, 2.0]}))

    def boom(*a, **k):
        raise np.linalg.LinAlgError("SVD did not converge")

    monkeypatch.setattr(cli, "solve_l1", boom)
    assert run(capsys, "recover-sparse", "--instance", p)[0] == 2


def test_config_json_key_errors(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"network": {"nodes": 8, "streams": 1, "horizon": 4}}))
    assert run(capsys, "simulate", "--config", p)[0] == 1
