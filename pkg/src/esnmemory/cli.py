"""Command-line entry point: ``esnmemory <subcommand> ...``.

Exit codes: 0 success, 1 usage or config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, bases, harness
from .network import NetworkSpec, build_network, build_operator, stack_inputs, unstack_inputs
from .solvers import SolverOptions, brute_force_sparse, solve_l1, solve_nuclear

log = logging.getLogger("esnmemory")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _load_instance(path) -> dict:
    """Instance files are JSON objects or ``.npz`` archives with the same keys."""
    if str(path).endswith(".npz"):
        try:
            with np.load(path) as data:
                return {k: data[k] for k in data.files}
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read {path}: {exc}") from exc
    return _load_json(path)


def _emit(record: dict, as_json: bool):
    if as_json:
        print(json.dumps(record, indent=2, default=_jsonable))
        return
    for key, value in record.items():
        if isinstance(value, (list, tuple, np.ndarray)):
            value = json.dumps(_jsonable(value))
        print(f"{key}={value}")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (list, tuple)):
        return [_jsonable(o) for o in obj]
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _solver_options(d: dict, eps) -> SolverOptions:
    opts = SolverOptions(**d.get("solver", {}))
    return opts.with_target(float(eps if eps is not None else d.get("epsilon", 0.0)))


def _result_record(res) -> dict:
    rec = res.summary()
    rec["estimate"] = np.asarray(res.estimate).tolist()
    return rec


# -- subcommands -------------------------------------------------------------

def cmd_simulate(args):
    cfg = harness.trial_config_from_dict(_load_json(args.config))
    result = harness.run_trial(cfg, args.trial_index)
    print(json.dumps(result.to_dict(), indent=2))


def cmd_recover_sparse(args):
    d = _load_instance(args.instance)
    if "A_eff" not in d or "x" not in d:
        raise UsageError("sparse instance needs keys 'A_eff' and 'x'")
    A = np.asarray(d["A_eff"], dtype=float)
    x = np.asarray(d["x"], dtype=float)
    res = solve_l1(A, x, _solver_options(d, args.epsilon))
    rec = _result_record(res)
    if args.oracle is not None:
        oracle = brute_force_sparse(A, x, args.oracle)
        rec["oracle_residual_norm"] = oracle.residual_norm
        rec["oracle_support"] = np.flatnonzero(oracle.estimate).tolist()
    print(json.dumps(rec, indent=2))


def cmd_recover_lowrank(args):
    d = _load_instance(args.instance)
    if "x" not in d:
        raise UsageError("low-rank instance needs key 'x'")
    if "network" in d:
        op = build_operator(build_network(NetworkSpec(**d["network"])))
        A, L, N = op.matrix, op.streams, op.horizon
    elif {"A", "streams", "horizon"} <= set(d):
        A = np.asarray(d["A"], dtype=float)
        L, N = int(d["streams"]), int(d["horizon"])
    else:
        raise UsageError("low-rank instance needs 'network' or 'A' with 'streams' and 'horizon'")
    if A.shape[1] != L * N:
        raise UsageError(f"A has {A.shape[1]} columns, expected streams*horizon = {L * N}")
    x = np.asarray(d["x"], dtype=float)
    res = solve_nuclear(lambda S: A @ stack_inputs(S), lambda y: unstack_inputs(A.T @ y, L, N),
                        x, _solver_options(d, args.epsilon))
    print(json.dumps(_result_record(res), indent=2))


def cmd_phase_diagram(args):
    grid = harness.grid_config_from_dict(_load_json(args.config))
    total = len(grid.axis_M) * len(grid.axis_dim)
    done = [0]

    def progress(row, col):
        done[0] += 1
        log.info("cell %d/%d (dim=%d, M=%d)", done[0], total, grid.axis_dim[row], grid.axis_M[col])

    pg = harness.phase_diagram(grid, workers=args.workers, progress=progress)
    paths = harness.write_phase_grid(pg, args.out)
    if not args.no_figure:
        from .plotting import plot_phase_grid

        s = grid.base.structure
        label = "K" if isinstance(s, harness.SparseStructure) else "R"
        kind = getattr(s, "basis", None) or getattr(s, "kind", "")
        paths["png"] = plot_phase_grid(pg, Path(args.out) / "grid.png",
                                       title=f"{label} vs M ({kind})", dim_label=label)
    for c in pg.cells:
        if c.flagged:
            log.warning("cell dim=%d M=%d: no trial converged", c.dim, c.M)
    for kind, path in paths.items():
        print(f"{kind}={path}")


def cmd_coherence(args):
    base = bases.make_basis(args.basis, args.n)
    if args.streams > 1:
        rep = bases.coherence_joint(bases.joint_basis(base, args.streams), args.oversample)
        name = "mu_S"
    else:
        rep = bases.coherence_single(base, args.oversample)
        name = "mu"
    _emit({
        "basis": args.basis, "n": args.n, "streams": args.streams, name: rep.value,
        "argmax_frequency": rep.argmax_frequency, "argmax_column": rep.column,
        "oversample": rep.oversample,
    }, args.json)


def cmd_rip_estimate(args):
    spec = NetworkSpec(args.nodes, args.streams, args.horizon, args.seed, args.mode)
    op = build_operator(build_network(spec))
    psi = bases.joint_basis(bases.make_basis(args.basis, args.horizon), args.streams)
    est = analysis.estimate_rip_delta(harness.effective_matrix(op, psi), args.K,
                                      args.samples, args.sample_seed)
    _emit({
        "M": args.nodes, "L": args.streams, "N": args.horizon, "K": est.K,
        "support_samples": est.support_samples, "delta_hat": est.delta_hat, "C": est.C,
        "sigma2_max": est.sigma2_max, "sigma2_min": est.sigma2_min,
    }, args.json)


def cmd_bounds(args):
    b = analysis.BoundInputs(
        K=args.K, R=args.R, N=args.N, L=args.L, M=args.M, delta=args.delta, eta=args.eta,
        mu=args.mu, mu_S=args.mu_S, mu_L=args.mu_L, C=args.C, c=args.c, beta=args.beta,
    )
    rec = {"N": b.N, "L": b.L, "M": b.M}
    rec["required_nodes_sparse"] = analysis.required_nodes_sparse(b)
    if b.L == 1:
        rec["required_nodes_single"] = analysis.required_nodes_single(b.K, b.delta, b.mu, b.N, b.eta, b.C)
    rec["required_nodes_lowrank"] = analysis.required_nodes_lowrank(b)
    rec["lowrank_error_bound"] = analysis.lowrank_error_bound(b.N, b.L, b.M, args.epsilon)
    if args.tail is not None:
        rec["sparse_error_bound"] = analysis.sparse_error_bound(
            args.alpha, b.beta, args.epsilon, args.tail, b.K)
    _emit(rec, args.json)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="esnmemory", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one trial and print it as JSON")
    s.add_argument("--config", required=True)
    s.add_argument("--trial-index", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    for name, fn in (("recover-sparse", cmd_recover_sparse), ("recover-lowrank", cmd_recover_lowrank)):
        s = sub.add_parser(name, help="run the solver on an instance file (JSON or .npz)")
        s.add_argument("--instance", required=True)
        s.add_argument("--epsilon", type=float, default=None,
                       help="residual bound; overrides the instance's 'epsilon'")
        if name == "recover-sparse":
            s.add_argument("--oracle", type=int, default=None, metavar="K",
                           help="also run the exhaustive K-sparse oracle")
        s.set_defaults(func=fn)

    s = sub.add_parser("phase-diagram", help="run a grid; write grid.csv, grid.pgm, grid.png")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--no-figure", action="store_true", help="skip the PNG heatmap")
    s.set_defaults(func=cmd_phase_diagram)

    s = sub.add_parser("coherence", help="coherence of a sparsity basis with Fourier vectors")
    s.add_argument("--basis", required=True, choices=bases.BASIS_KINDS)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--oversample", type=int, default=bases.DEFAULT_OVERSAMPLE)
    s.add_argument("--streams", type=int, default=1, help="L > 1 reports the block coherence")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_coherence)

    s = sub.add_parser("rip-estimate", help="sampled RIP constant of a network's operator")
    s.add_argument("--nodes", type=int, required=True)
    s.add_argument("--streams", type=int, required=True)
    s.add_argument("--horizon", type=int, required=True)
    s.add_argument("--K", type=int, required=True)
    s.add_argument("--samples", type=int, default=50)
    s.add_argument("--seed", type=int, default=0, help="network seed")
    s.add_argument("--sample-seed", type=int, default=0, help="support sampling seed")
    s.add_argument("--mode", choices=("spectral", "orthogonalized-gaussian"), default="spectral")
    s.add_argument("--basis", choices=bases.BASIS_KINDS, default="canonical")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_rip_estimate)

    s = sub.add_parser("bounds", help="node-count and error bound calculators")
    for flag, typ, default in (
        ("--K", int, 1), ("--R", int, 1), ("--N", int, 100), ("--L", int, 1), ("--M", int, 1),
        ("--delta", float, 0.5), ("--eta", float, 1 / math.e), ("--mu", float, 1.0),
        ("--mu-S", float, 1.0), ("--mu-L", float, 1.0), ("--C", float, 1.0), ("--c", float, 1.0),
        ("--beta", float, 1.0), ("--alpha", float, 1.0), ("--epsilon", float, 0.01),
        ("--tail", float, None),
    ):
        s.add_argument(flag, type=typ, default=default)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"esnmemory: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, TypeError, KeyError) as exc:
        print(f"esnmemory: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
