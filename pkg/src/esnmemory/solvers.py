"""Convex recovery of sparse vectors and low-rank matrices from x[N].

Both constrained programs

    min ||a||_1  s.t. ||x - A a||_2 <= eps
    min ||S||_*  s.t. ||x - A(S)||_2 <= eps

are solved through their Lagrangian ``lam * penalty + 0.5 * ||x - A(.)||^2``
with monotone FISTA. ``lam`` is decreased geometrically from the smallest
value at which zero is optimal, then bisected until the residual lands in
``[0.9 eps, 1.01 eps]``. Each stage is warm-started from the previous one.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

# lam at the last continuation stage, relative to lam0
_LAM_FLOOR = 1e-10
_BISECTION_STEPS = 30


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by :func:`solve_l1` and :func:`solve_nuclear`.

    ``max_iterations`` caps each FISTA stage, not the whole solve.
    """

    max_iterations: int = 2000
    relative_change_tolerance: float = 1e-8
    residual_target: float = 0.0
    continuation_steps: int = 10
    step_size_safety: float = 0.95

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.relative_change_tolerance > 0:
            raise ValueError("relative_change_tolerance must be positive")
        if not (self.residual_target >= 0 and math.isfinite(self.residual_target)):
            raise ValueError("residual_target must be a finite nonnegative number")
        if self.continuation_steps < 1:
            raise ValueError("continuation_steps must be positive")
        if not 0 < self.step_size_safety <= 1:
            raise ValueError("step_size_safety must lie in (0, 1]")

    def with_target(self, eps: float) -> "SolverOptions":
        return SolverOptions(
            self.max_iterations, self.relative_change_tolerance, float(eps),
            self.continuation_steps, self.step_size_safety,
        )


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    """Solver output.

    ``history`` is filled only when the solver is asked to record it: one
    ``(lam, objectives)`` pair per FISTA stage, where ``objectives`` is the
    Lagrangian value after every inner iteration.
    """

    estimate: np.ndarray
    residual_norm: float
    iterations_used: int
    converged: bool
    objective_value: float
    lam: float = 0.0
    history: tuple = ()

    def summary(self) -> dict:
        return {
            "residual_norm": self.residual_norm,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "objective_value": self.objective_value,
            "lam": self.lam,
        }


def soft_threshold(v, tau: float) -> np.ndarray:
    """Entrywise ``sign(v) * max(|v| - tau, 0)``; the prox of ``tau * ||.||_1``."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def svt(Y, tau: float) -> np.ndarray:
    """Singular value thresholding; the prox of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    U, s, Vt = np.linalg.svd(np.asarray(Y, dtype=float), full_matrices=False)
    return (U * np.maximum(s - tau, 0.0)) @ Vt


def nuclear_norm(Y) -> float:
    return float(np.linalg.svd(Y, compute_uv=False).sum())


def operator_norm(apply: Callable, adjoint: Callable, dims, max_iterations: int = 200,
                  tol: float = 1e-10) -> float:
    """Largest singular value of a linear map by power iteration.

    Starts from the normalized all-ones element of shape ``dims`` so the
    estimate is deterministic. Returns 0 for the zero operator.
    """
    dims = (dims,) if np.isscalar(dims) else tuple(dims)
    v = np.ones(dims) / math.sqrt(math.prod(dims))
    est = 0.0
    for _ in range(max_iterations):
        u = apply(v)
        new = float(np.linalg.norm(u))
        w = adjoint(u)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return new
        v = w / nw
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    # ||A^T A v|| with v a converged unit vector is sigma^2
    return max(est, math.sqrt(nw))


def _mfista(forward, adjoint, x, prox, penalty, lam, step, start, start_image,
            max_iter, tol, trace=None):
    """Monotone FISTA on ``lam * penalty(a) + 0.5 * ||x - forward(a)||^2``.

    Forward images are carried along linearly, so each iteration costs one
    forward and one adjoint application.
    """

    def objective(v, Av):
        r = x - Av
        return lam * penalty(v) + 0.5 * float(np.vdot(r, r))

    xk, Axk = start, start_image
    Fx = objective(xk, Axk)
    y, Ay = xk, Axk
    t = 1.0
    done = False
    it = 0
    for it in range(1, max_iter + 1):
        z = prox(y - step * adjoint(Ay - x), step * lam)
        Az = forward(z)
        Fz = objective(z, Az)
        done = np.linalg.norm(z - y) <= tol * np.linalg.norm(z)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if Fz <= Fx:
            x_new, Ax_new, Fx = z, Az, Fz
        else:
            x_new, Ax_new = xk, Axk
        c1, c2 = t / t_next, (t - 1.0) / t_next
        y = x_new + c1 * (z - x_new) + c2 * (x_new - xk)
        Ay = Ax_new + c1 * (Az - Ax_new) + c2 * (Ax_new - Axk)
        xk, Axk, t = x_new, Ax_new, t_next
        if trace is not None:
            trace.append(Fx)
        if done:
            break
    return xk, it, bool(done)


def _solve_constrained(forward, adjoint, x, prox, penalty, dual_norm, opts, record):
    eps = opts.residual_target
    x_norm = float(np.linalg.norm(x))
    corr = adjoint(x)
    shape = np.shape(corr)
    zero = np.zeros(shape)
    lam0 = dual_norm(corr)
    if lam0 == 0.0 or x_norm <= eps:
        ok = x_norm <= 1.01 * eps if eps > 0 else x_norm == 0.0
        return RecoveryResult(zero, x_norm, 0, bool(ok), 0.0, lam0)

    sigma = operator_norm(forward, adjoint, shape)
    step = opts.step_size_safety / sigma**2
    history = []
    total = 0

    def run(lam, start):
        nonlocal total
        trace = [] if record else None
        est, it, ok = _mfista(
            forward, adjoint, x, prox, penalty, lam, step, start, forward(start),
            opts.max_iterations, opts.relative_change_tolerance, trace,
        )
        total += it
        if record:
            history.append((lam, np.array(trace)))
        return est, float(np.linalg.norm(x - forward(est))), ok

    def finish(lam, est, res, ok):
        if eps > 0:
            conv = ok and res <= 1.01 * eps
        else:
            conv = ok and res <= opts.relative_change_tolerance * x_norm
        return RecoveryResult(est, res, total, bool(conv), float(penalty(est)), lam,
                              tuple(history))

    ratio = _LAM_FLOOR ** (1.0 / opts.continuation_steps)
    est = zero
    hi = lo = None
    for k in range(1, opts.continuation_steps + 1):
        lam = lam0 * ratio**k
        est, res, ok = run(lam, est)
        if eps == 0:
            continue
        if 0.9 * eps <= res <= 1.01 * eps:
            return finish(lam, est, res, ok)
        if res < 0.9 * eps:
            lo = (lam, est, res, ok)
            break
        hi = (lam, est, res, ok)
    if eps == 0 or lo is None:
        return finish(lam, est, res, ok)

    hi_lam = hi[0] if hi is not None else lam0
    for _ in range(_BISECTION_STEPS):
        if hi_lam <= lo[0] * (1 + 1e-12):
            break
        lam = math.sqrt(hi_lam * lo[0])
        est, res, ok = run(lam, est)
        if 0.9 * eps <= res <= 1.01 * eps:
            return finish(lam, est, res, ok)
        if res < 0.9 * eps:
            lo = (lam, est, res, ok)
        else:
            hi_lam = lam
    return finish(*lo)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("inputs must be finite")


def solve_l1(A_eff, x, opts: SolverOptions = SolverOptions(), record: bool = False) -> RecoveryResult:
    """Approximately solve ``min ||a||_1 s.t. ||x - A_eff a||_2 <= eps``.

    ``eps`` is ``opts.residual_target``; with ``eps == 0`` the last stage runs
    at ``lam = 1e-10 * lam0``.
    """
    A = np.asarray(A_eff, dtype=float)
    x = np.asarray(x, dtype=float)
    if A.ndim != 2 or x.shape != (A.shape[0],):
        raise ValueError(f"dimension mismatch: A_eff {A.shape}, x {x.shape}")
    _check_finite(A, x)
    return _solve_constrained(
        lambda v: A @ v, lambda r: A.T @ r, x, soft_threshold,
        lambda v: float(np.abs(v).sum()), lambda c: float(np.abs(c).max()),
        opts, record,
    )


def solve_nuclear(forward: Callable, adjoint: Callable, x, opts: SolverOptions = SolverOptions(),
                  record: bool = False) -> RecoveryResult:
    """Approximately solve ``min ||S||_* s.t. ||x - forward(S)||_2 <= eps``.

    ``forward`` maps ``L x N`` matrices to length-M vectors and ``adjoint`` is
    its transpose; the estimate's shape is taken from ``adjoint(x)``.
    """
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    return _solve_constrained(
        forward, adjoint, x, svt, nuclear_norm,
        lambda c: float(np.linalg.norm(c, 2)) if np.size(c) else 0.0,
        opts, record,
    )


def brute_force_sparse(A_eff, x, K: int, limit: int = 10**6) -> RecoveryResult:
    """Best K-term least-squares fit by exhaustive search over supports.

    Supports are visited in lexicographic order and a later one replaces the
    incumbent only if its residual is smaller by more than 1e-12 (relative to
    ``||x||``), so ties go to the lexicographically smallest support.
    """
    A = np.asarray(A_eff, dtype=float)
    x = np.asarray(x, dtype=float)
    n = A.shape[1]
    if x.shape != (A.shape[0],):
        raise ValueError(f"dimension mismatch: A_eff {A.shape}, x {x.shape}")
    if not 0 <= K <= n:
        raise ValueError(f"K must lie in [0, {n}], got {K}")
    count = math.comb(n, K)
    if count > limit:
        raise ValueError(f"binomial({n}, {K}) = {count} exceeds the enumeration limit {limit}")
    x_norm = float(np.linalg.norm(x))
    best = np.zeros(n)
    best_res = x_norm
    if K > 0:
        slack = 1e-12 * max(x_norm, 1.0)
        best_res = math.inf
        for supp in itertools.combinations(range(n), K):
            cols = A[:, supp]
            coef = np.linalg.lstsq(cols, x, rcond=None)[0]
            res = float(np.linalg.norm(x - cols @ coef))
            if res < best_res - slack:
                best_res = res
                best = np.zeros(n)
                best[list(supp)] = coef
    return RecoveryResult(best, best_res, count, True, float(np.abs(best).sum()))
