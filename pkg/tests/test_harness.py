import numpy as np
import pytest

from esnmemory.bases import joint_basis, make_basis
from esnmemory.harness import (
    CSV_COLUMNS, GridConfig, LowRankStructure, SparseStructure, TrialConfig, cell_config,
    derive_seed, effective_matrix, gen_lowrank_input, gen_sparse_input, grid_config_from_dict,
    grid_csv, grid_pgm, phase_diagram, read_pgm, rmse, run_trial, scaled_noise,
    trial_config_from_dict, trial_config_to_dict, trial_instance, write_phase_grid,
)
from esnmemory.network import NetworkSpec, evolve, stack_inputs, unstack_inputs
from esnmemory.solvers import brute_force_sparse


def sparse_cfg(M=48, L=4, N=32, K=3, basis="canonical", noise=0.01, seed=0, mode="spectral"):
    return TrialConfig(NetworkSpec(M, L, N, mode=mode), SparseStructure(basis, K),
                       noise_norm=noise, master_seed=seed)


# -- seeds -------------------------------------------------------------------

def test_derive_seed_reference_values():
    # SplitMix64 first output for state 0 is a published reference value
    assert derive_seed(0) == 0xE220A8397B1DCDAF
    assert derive_seed(0, 1) != derive_seed(0, 2)
    assert derive_seed(5, 1, 2) != derive_seed(5, 2, 1)
    assert all(0 <= derive_seed(s, 3) < 2**64 for s in (0, 1, 2**64 - 1))


# -- generators --------------------------------------------------------------

def test_gen_sparse_cases():
    psi = joint_basis(make_basis("dct", 8), 2)
    a, s = gen_sparse_input(psi, 0, seed=1)
    assert not a.any() and not s.any()
    a, s = gen_sparse_input(psi, 16, seed=1)
    assert np.count_nonzero(a) == 16
    a1, s1 = gen_sparse_input(psi, 5, seed=9)
    a2, s2 = gen_sparse_input(psi, 5, seed=9)
    assert np.array_equal(a1, a2) and np.array_equal(s1, s2)
    assert np.count_nonzero(a1) == 5
    np.testing.assert_allclose(s1, psi.matrix @ a1)
    with pytest.raises(ValueError):
        gen_sparse_input(psi, 17, seed=0)


@pytest.mark.parametrize("kind", ["gaussian", "canonical", "dct", "haar"])
def test_gen_lowrank_rank_bound(kind):
    S = gen_lowrank_input(6, 16, 2, kind, seed=3)
    assert S.shape == (6, 16)
    s = np.linalg.svd(S, compute_uv=False)
    assert s[2] <= 1e-10 * s[0]
    assert np.array_equal(S, gen_lowrank_input(6, 16, 2, kind, seed=3))


def test_gen_lowrank_canonical_rank_one_single_column():
    S = gen_lowrank_input(5, 12, 1, "canonical", seed=4)
    assert np.count_nonzero(np.any(S != 0, axis=0)) == 1


def test_gen_lowrank_errors():
    with pytest.raises(ValueError):
        gen_lowrank_input(4, 12, 1, "haar", seed=0)
    with pytest.raises(ValueError):
        gen_lowrank_input(4, 16, 5, "gaussian", seed=0)


def test_scaled_noise():
    assert not scaled_noise(7, 0.0, seed=1).any()
    for M in (1, 2, 17, 1000):
        assert abs(np.linalg.norm(scaled_noise(M, 0.01, seed=M)) - 0.01) <= 1e-15
    u = scaled_noise(30, 1.0, seed=5)
    v = scaled_noise(30, 3.0, seed=5)
    np.testing.assert_allclose(v, 3 * u, rtol=1e-14)
    with pytest.raises(ValueError):
        scaled_noise(3, -1.0, seed=0)


def test_rmse_cases():
    s = np.random.default_rng(0).standard_normal(20)
    assert rmse(s, s) == 0.0
    assert rmse(np.zeros(20), s) == pytest.approx(1.0)
    assert rmse(2 * s, s) == pytest.approx(1.0)
    for c in (-1.0, 0.3, 1.5, 4.0):
        assert rmse(c * s, s) == pytest.approx((c - 1) ** 2, rel=1e-12)
    with pytest.raises(ValueError):
        rmse(s, np.zeros(20))


# -- trials ------------------------------------------------------------------

def test_trial_config_validation():
    with pytest.raises(ValueError):
        sparse_cfg(K=200)
    with pytest.raises(ValueError):
        sparse_cfg(N=24, basis="haar")
    with pytest.raises(ValueError):
        TrialConfig(NetworkSpec(10, 2, 8), LowRankStructure(3))
    with pytest.raises(ValueError):
        sparse_cfg(noise=-0.1)


def test_run_trial_noiseless_canonical():
    cfg = sparse_cfg(noise=0.0)
    res = run_trial(cfg, 0)
    assert res.rmse <= 1e-4

    # exhaustive check on a reduced copy: true support plus 29 other columns
    inst = trial_instance(cfg, 0)
    A = effective_matrix(inst["operator"], inst["basis"])
    a = inst["coefficients"]
    support = np.flatnonzero(a)
    others = [c for c in range(A.shape[1]) if c not in support][:29]
    cols = np.sort(np.concatenate([support, others]))
    oracle = brute_force_sparse(A[:, cols], inst["x"], 3)
    assert set(cols[np.flatnonzero(oracle.estimate)]) == set(support)
    np.testing.assert_allclose(oracle.estimate[np.isin(cols, support)], a[support], atol=1e-8)


def test_run_trial_dct_half_sampling_stays_unrecovered():
    # gamma = 128/256 = 0.5, K/M = 13/128 ~ 0.1
    cfg = sparse_cfg(M=128, L=8, N=32, K=13, basis="dct", mode="orthogonalized-gaussian")
    assert run_trial(cfg, 0).rmse >= 0.5


def test_run_trial_determinism():
    cfg = sparse_cfg(K=4, seed=12)
    a, b = run_trial(cfg, 3), run_trial(cfg, 3)
    assert a.rmse == b.rmse and a.recovery == b.recovery and a.error_norm == b.error_norm
    cfg_lr = TrialConfig(NetworkSpec(40, 4, 8), LowRankStructure(1, "dct"), master_seed=1)
    assert run_trial(cfg_lr, 0).rmse == run_trial(cfg_lr, 0).rmse
    assert run_trial(cfg, 4).rmse != a.rmse


@pytest.mark.parametrize("basis", ["canonical", "dct", "haar"])
def test_sparse_measurement_identity(basis):
    cfg = sparse_cfg(M=24, L=3, N=16, K=5, basis=basis)
    inst = trial_instance(cfg, 2)
    S = unstack_inputs(inst["truth"], 3, 16)
    via_recursion = evolve(inst["network"], S, noise=inst["noise"]).final
    x = inst["x"]
    assert np.linalg.norm(x - via_recursion) <= 1e-10 * np.linalg.norm(x)


def test_lowrank_vector_and_matrix_operators_agree():
    cfg = TrialConfig(NetworkSpec(30, 4, 8), LowRankStructure(2), master_seed=3)
    inst = trial_instance(cfg, 0)
    op, S = inst["operator"], inst["truth"]
    assert np.array_equal(op.matrix @ stack_inputs(S), op.forward_matrix(S))


def test_trial_result_to_dict():
    d = run_trial(sparse_cfg(K=2), 0).to_dict()
    assert {"rmse", "recovery", "wall_time"} <= set(d)
    assert {"residual_norm", "iterations_used", "converged", "objective_value"} <= set(d["recovery"])


# -- config round trip -------------------------------------------------------

def test_config_round_trip():
    cfg = TrialConfig(NetworkSpec(20, 2, 8, mode="orthogonalized-gaussian"),
                      LowRankStructure(2, "haar"), noise_norm=0.02, master_seed=7)
    assert trial_config_from_dict(trial_config_to_dict(cfg)) == cfg
    with pytest.raises(ValueError):
        trial_config_from_dict({**trial_config_to_dict(cfg), "bogus": 1})
    bad = trial_config_to_dict(cfg)
    bad["structure"]["type"] = "dense"
    with pytest.raises(ValueError):
        trial_config_from_dict(bad)


# -- grids -------------------------------------------------------------------

def small_grid(trials=2, **kw):
    base = sparse_cfg(L=2, N=8, K=1, seed=kw.pop("seed", 0))
    return GridConfig(axis_M=kw.pop("axis_M", (8, 12)), axis_dim=kw.pop("axis_dim", (1, 2, 3)),
                      base=base, trials_per_cell=trials)


def test_grid_validation():
    with pytest.raises(ValueError):
        small_grid(axis_M=(7,))
    with pytest.raises(ValueError):
        small_grid(axis_dim=(17,))
    with pytest.raises(ValueError):
        small_grid(trials=0)
    g = small_grid(axis_M=(12, 8, 12))
    assert g.axis_M == (8, 12)


def test_one_by_one_grid_matches_run_trial():
    g = small_grid(trials=1, axis_M=(10,), axis_dim=(2,))
    pg = phase_diagram(g)
    assert len(pg.cells) == 1
    assert pg.cells[0].mean_rmse == run_trial(cell_config(g, 0, 0), 0).rmse
    assert pg.cells[0].std_rmse == 0.0


def test_grid_shape_and_derived_columns():
    g = small_grid()
    pg = phase_diagram(g)
    assert pg.mean_matrix().shape == (3, 2)
    c = pg.cell(2, 1)
    assert (c.dim, c.M, c.trials) == (3, 12, 2)
    assert c.rho == 3 / 12 and c.gamma == 12 / 16
    assert c.mean_rmse == pytest.approx(np.mean(pg.rmse[5]))


def test_csv_format(tmp_path):
    pg = phase_diagram(small_grid())
    text = grid_csv(pg)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 6
    row = lines[1].split(",")
    assert float(row[5]) == pg.cells[0].mean_rmse  # 17 digits round-trip
    paths = write_phase_grid(pg, tmp_path / "out")
    assert paths["csv"].read_text() == text


def test_pgm_format():
    pg = phase_diagram(small_grid())
    data = grid_pgm(pg)
    assert data.startswith(b"P5\n2 3\n255\n")
    px = read_pgm(data)
    expected = np.round(255 * np.minimum(pg.mean_matrix(), 1.0)).astype(np.uint8)
    np.testing.assert_array_equal(px, expected)


def test_grid_independent_of_workers():
    g = small_grid(seed=11)
    assert grid_csv(phase_diagram(g, workers=1)) == grid_csv(phase_diagram(g, workers=2))


def test_grid_config_from_dict():
    d = {"axis_M": [8, 12], "axis_dim": [1], "trials_per_cell": 3,
         "base": trial_config_to_dict(sparse_cfg(L=2, N=8, K=1))}
    g = grid_config_from_dict(d)
    assert g.trials_per_cell == 3 and g.axis_M == (8, 12)
    with pytest.raises(ValueError):
        grid_config_from_dict({**d, "extra": 0})


def test_canonical_rmse_improves_with_nodes():
    base = sparse_cfg(L=8, N=32, K=8, mode="orthogonalized-gaussian")
    g = GridConfig(axis_M=(32, 64, 96, 128, 192, 256), axis_dim=(8,), base=base, trials_per_cell=20)
    means = phase_diagram(g).mean_matrix()[0]
    inversions = int(np.sum(np.diff(means) > 0))
    assert inversions <= 1


def test_shipped_configs_parse():
    import json
    from pathlib import Path

    files = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert files
    for f in files:
        d = json.loads(f.read_text())
        (grid_config_from_dict if "axis_M" in d else trial_config_from_dict)(d)
