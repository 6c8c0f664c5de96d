"""Trials and phase diagrams: generate inputs, encode, recover, score.

Seeds
-----
Every random draw descends from one 64-bit master seed through
:func:`derive_seed`, a chained SplitMix64 finalizer::

    h = mix(master)
    for w in words: h = mix(h ^ w)
    mix(z): z += 0x9E3779B97F4A7C15
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
            return z ^ (z >> 31)          (all mod 2**64)

A trial with index ``i`` uses ``trial_seed = derive_seed(master, i)`` and
then ``derive_seed(trial_seed, 0|1|2)`` for the network, the input and the
noise. Grid cell ``(row, col)`` runs trials of a config whose master seed
is ``derive_seed(master, row, col)``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Union

import numpy as np

from .bases import BASIS_KINDS, JointBasis, joint_basis, make_basis
from .network import NetworkSpec, build_network, build_operator, stack_inputs
from .solvers import SolverOptions, solve_l1, solve_nuclear

_MASK = (1 << 64) - 1
LOWRANK_KINDS = ("gaussian",) + BASIS_KINDS


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *words: int) -> int:
    h = _splitmix64(int(master) & _MASK)
    for w in words:
        h = _splitmix64(h ^ (int(w) & _MASK))
    return h


@dataclass(frozen=True)
class SparseStructure:
    basis: str = "canonical"
    K: int = 1

    def __post_init__(self):
        if self.basis not in BASIS_KINDS:
            raise ValueError(f"unknown sparsity basis {self.basis!r}")
        if self.K < 0:
            raise ValueError("K must be nonnegative")

    @property
    def dim(self) -> int:
        return self.K

    def with_dim(self, dim: int) -> "SparseStructure":
        return replace(self, K=int(dim))


@dataclass(frozen=True)
class LowRankStructure:
    R: int = 1
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in LOWRANK_KINDS:
            raise ValueError(f"unknown right-singular-vector kind {self.kind!r}")
        if self.R < 1:
            raise ValueError("R must be positive")

    @property
    def dim(self) -> int:
        return self.R

    def with_dim(self, dim: int) -> "LowRankStructure":
        return replace(self, R=int(dim))


Structure = Union[SparseStructure, LowRankStructure]


@dataclass(frozen=True)
class TrialConfig:
    network: NetworkSpec
    structure: Structure
    noise_norm: float = 0.01
    solver: SolverOptions = field(default_factory=SolverOptions)
    master_seed: int = 0

    def __post_init__(self):
        L, N = self.network.streams, self.network.horizon
        s = self.structure
        if isinstance(s, SparseStructure):
            if s.K > N * L:
                raise ValueError(f"K = {s.K} exceeds N*L = {N * L}")
            if s.basis == "haar" and N & (N - 1):
                raise ValueError(f"haar basis needs horizon a power of two, got {N}")
        else:
            if s.R > min(L, N):
                raise ValueError(f"R = {s.R} exceeds min(L, N) = {min(L, N)}")
            if s.kind == "haar" and N & (N - 1):
                raise ValueError(f"haar basis needs horizon a power of two, got {N}")
        if not self.noise_norm >= 0:
            raise ValueError("noise_norm must be nonnegative")


@dataclass(frozen=True, eq=False)
class TrialResult:
    rmse: float
    recovery: dict
    wall_time: float
    error_norm: float = 0.0
    truth_norm: float = 0.0

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "error_norm": self.error_norm,
                "truth_norm": self.truth_norm, "recovery": self.recovery,
                "wall_time": self.wall_time}


@dataclass(frozen=True)
class GridConfig:
    axis_M: tuple
    axis_dim: tuple
    base: TrialConfig
    trials_per_cell: int = 20

    def __post_init__(self):
        axis_M = tuple(sorted(set(int(m) for m in self.axis_M)))
        axis_dim = tuple(sorted(set(int(d) for d in self.axis_dim)))
        object.__setattr__(self, "axis_M", axis_M)
        object.__setattr__(self, "axis_dim", axis_dim)
        if not axis_M or not axis_dim:
            raise ValueError("grid axes must be non-empty")
        if any(m < 2 or m % 2 for m in axis_M):
            raise ValueError(f"every M must be an even integer >= 2, got {axis_M}")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be positive")
        for row in range(len(axis_dim)):
            cell_config(self, row, 0)  # validates each dim against the template


@dataclass(frozen=True)
class Cell:
    dim: int
    M: int
    rho: float
    gamma: float
    trials: int
    mean_rmse: float
    std_rmse: float
    n_converged: int

    @property
    def flagged(self) -> bool:
        """True when no trial in the cell converged."""
        return self.n_converged == 0


@dataclass(frozen=True)
class PhaseGrid:
    axis_dim: tuple
    axis_M: tuple
    cells: tuple  # row-major: rows follow axis_dim, columns follow axis_M
    rmse: tuple = ()  # per-cell tuples of trial rmse values, same order as cells

    def cell(self, row: int, col: int) -> Cell:
        return self.cells[row * len(self.axis_M) + col]

    def mean_matrix(self) -> np.ndarray:
        return np.array([c.mean_rmse for c in self.cells]).reshape(
            len(self.axis_dim), len(self.axis_M))


def gen_sparse_input(psi: JointBasis, K: int, seed: int):
    """Return ``(a, s)``: K-sparse coefficients and the stacked input ``psi @ a``."""
    n = psi.matrix.shape[1]
    if not 0 <= K <= n:
        raise ValueError(f"K = {K} must lie in [0, N*L = {n}]")
    rng = np.random.default_rng(seed)
    a = np.zeros(n)
    support = rng.choice(n, size=K, replace=False)
    a[support] = rng.standard_normal(K)
    return a, psi.matrix @ a


def gen_lowrank_input(L: int, N: int, R: int, kind: str, seed: int) -> np.ndarray:
    """``S = Q V^T`` with Gaussian ``Q`` (L x R) and structured ``V`` (N x R)."""
    if not 1 <= R <= min(L, N):
        raise ValueError(f"R = {R} must lie in [1, min(L, N) = {min(L, N)}]")
    if kind not in LOWRANK_KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {LOWRANK_KINDS}")
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((L, R))
    if kind == "gaussian":
        V = _orthonormal(rng, N, R)
    else:
        basis = make_basis(kind, N).matrix
        V = basis[:, rng.choice(N, size=R, replace=False)]
    return Q @ V.T


def _orthonormal(rng, N, R):
    q, r = np.linalg.qr(rng.standard_normal((N, R)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def scaled_noise(M: int, target_norm: float, seed: int) -> np.ndarray:
    if target_norm < 0:
        raise ValueError("target_norm must be nonnegative")
    g = np.random.default_rng(seed).standard_normal(M)
    if target_norm == 0:
        return np.zeros(M)
    return g * (target_norm / np.linalg.norm(g))


def rmse(estimate, truth) -> float:
    """Relative squared error ``||est - truth||^2 / ||truth||^2``."""
    truth = np.asarray(truth, dtype=float)
    denom = float(np.vdot(truth, truth))
    if denom == 0:
        raise ValueError("truth has zero norm; relative error undefined")
    d = np.asarray(estimate, dtype=float) - truth
    return float(np.vdot(d, d)) / denom


def trial_instance(cfg: TrialConfig, trial_index: int):
    """Everything a trial sees before solving: network, operator, truth, x.

    Returns a dict; exposed so consistency checks can inspect the exact
    measurement handed to the solver.
    """
    seed = derive_seed(cfg.master_seed, trial_index)
    spec = replace(cfg.network, seed=derive_seed(seed, 0))
    net = build_network(spec)
    op = build_operator(net)
    L, N, M = spec.streams, spec.horizon, spec.nodes
    noise = scaled_noise(M, cfg.noise_norm, derive_seed(seed, 2))
    s = cfg.structure
    inst = {"network": net, "operator": op, "noise": noise}
    if isinstance(s, SparseStructure):
        psi = joint_basis(make_basis(s.basis, N), L)
        a, stacked = gen_sparse_input(psi, s.K, derive_seed(seed, 1))
        inst.update(basis=psi, coefficients=a, truth=stacked)
        inst["x"] = op.matrix @ stacked + noise
    else:
        S = gen_lowrank_input(L, N, s.R, s.kind, derive_seed(seed, 1))
        inst.update(truth=S)
        inst["x"] = op.matrix @ stack_inputs(S) + noise
    return inst


def effective_matrix(op, psi: JointBasis) -> np.ndarray:
    """``A @ Psi``, exploiting block-diagonal structure when present."""
    if not psi.block_diagonal:
        return op.matrix @ psi.matrix
    N = psi.horizon
    A = op.matrix
    out = np.empty_like(A)
    for l in range(psi.streams):
        out[:, l * N:(l + 1) * N] = A[:, l * N:(l + 1) * N] @ psi.base.matrix
    return out


def run_trial(cfg: TrialConfig, trial_index: int) -> TrialResult:
    start = time.perf_counter()
    inst = trial_instance(cfg, trial_index)
    opts = cfg.solver.with_target(cfg.noise_norm)
    op, x, truth = inst["operator"], inst["x"], inst["truth"]
    if isinstance(cfg.structure, SparseStructure):
        result = solve_l1(effective_matrix(op, inst["basis"]), x, opts)
        estimate = inst["basis"].matrix @ result.estimate
    else:
        result = solve_nuclear(op.forward_matrix, op.adjoint_matrix, x, opts)
        estimate = result.estimate
    if np.count_nonzero(truth) == 0:
        err = 0.0 if not np.any(estimate) else math.inf
    else:
        err = rmse(estimate, truth)
    return TrialResult(
        rmse=err,
        recovery=result.summary(),
        wall_time=time.perf_counter() - start,
        error_norm=float(np.linalg.norm(estimate - truth)),
        truth_norm=float(np.linalg.norm(truth)),
    )


def cell_config(grid: GridConfig, row: int, col: int) -> TrialConfig:
    base = grid.base
    return replace(
        base,
        network=replace(base.network, nodes=grid.axis_M[col]),
        structure=base.structure.with_dim(grid.axis_dim[row]),
        master_seed=derive_seed(base.master_seed, row, col),
    )


def _cell_job(args):
    grid, row, col = args
    cfg = cell_config(grid, row, col)
    return [run_trial(cfg, t) for t in range(grid.trials_per_cell)]


def phase_diagram(grid: GridConfig, workers: int = 1, progress=None) -> PhaseGrid:
    """Run every cell of ``grid``; results do not depend on ``workers``.

    ``progress``, if given, is called with ``(row, col)`` as cells finish.
    """
    jobs = [(grid, r, c) for r in range(len(grid.axis_dim)) for c in range(len(grid.axis_M))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_cell_job, jobs))
    else:
        outcomes = []
        for job in jobs:
            outcomes.append(_cell_job(job))
            if progress is not None:
                progress(job[1], job[2])
    NL = grid.base.network.horizon * grid.base.network.streams
    cells, raw = [], []
    for (_, r, c), results in zip(jobs, outcomes):
        values = np.array([t.rmse for t in results])
        dim, M = grid.axis_dim[r], grid.axis_M[c]
        cells.append(Cell(
            dim=dim, M=M, rho=dim / M, gamma=M / NL, trials=len(results),
            mean_rmse=float(values.mean()), std_rmse=float(values.std()),
            n_converged=sum(bool(t.recovery["converged"]) for t in results),
        ))
        raw.append(tuple(float(v) for v in values))
    return PhaseGrid(grid.axis_dim, grid.axis_M, tuple(cells), tuple(raw))


# -- persistence -------------------------------------------------------------

CSV_COLUMNS = ("dim", "M", "rho", "gamma", "trials", "mean_rmse", "std_rmse", "n_converged")


def _g17(v: float) -> str:
    return format(v, ".17g")


def grid_csv(pg: PhaseGrid) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for c in pg.cells:
        lines.append(",".join([
            str(c.dim), str(c.M), _g17(c.rho), _g17(c.gamma), str(c.trials),
            _g17(c.mean_rmse), _g17(c.std_rmse), str(c.n_converged),
        ]))
    return "\n".join(lines) + "\n"


def grid_pgm(pg: PhaseGrid) -> bytes:
    """8-bit binary PGM, one pixel per cell, first row = smallest dim."""
    means = pg.mean_matrix()
    order = np.argsort(pg.axis_dim, kind="stable")
    pixels = np.round(255 * np.minimum(means[order], 1.0)).astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def write_phase_grid(pg: PhaseGrid, out_dir) -> dict:
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "grid.csv", "pgm": out / "grid.pgm"}
    paths["csv"].write_text(grid_csv(pg), encoding="ascii", newline="\n")
    paths["pgm"].write_bytes(grid_pgm(pg))
    return paths


# -- config files ------------------------------------------------------------

def _structure_from_dict(d: dict) -> Structure:
    d = dict(d)
    kind = d.pop("type", None)
    if kind == "sparse":
        return SparseStructure(**d)
    if kind == "lowrank":
        return LowRankStructure(**d)
    raise ValueError(f"structure.type must be 'sparse' or 'lowrank', got {kind!r}")


def trial_config_from_dict(d: dict) -> TrialConfig:
    known = {"network", "structure", "noise_norm", "solver", "master_seed"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown trial config keys: {sorted(unknown)}")
    return TrialConfig(
        network=NetworkSpec(**d["network"]),
        structure=_structure_from_dict(d["structure"]),
        noise_norm=float(d.get("noise_norm", 0.01)),
        solver=SolverOptions(**d.get("solver", {})),
        master_seed=int(d.get("master_seed", 0)),
    )


def grid_config_from_dict(d: dict) -> GridConfig:
    known = {"axis_M", "axis_dim", "trials_per_cell", "base"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown grid config keys: {sorted(unknown)}")
    return GridConfig(
        axis_M=tuple(d["axis_M"]),
        axis_dim=tuple(d["axis_dim"]),
        base=trial_config_from_dict(d["base"]),
        trials_per_cell=int(d.get("trials_per_cell", 20)),
    )


def trial_config_to_dict(cfg: TrialConfig) -> dict:
    s = cfg.structure
    structure = {"type": "sparse" if isinstance(s, SparseStructure) else "lowrank", **asdict(s)}
    return {
        "network": asdict(cfg.network),
        "structure": structure,
        "noise_norm": cfg.noise_norm,
        "solver": asdict(cfg.solver),
        "master_seed": cfg.master_seed,
    }
