"""Capacity bounds, empirical RIP estimates and tangent-space diagnostics.

All logarithms are natural. Universal constants that the theory only proves
to exist (``C``, ``c``, ``beta``) are caller-supplied and default to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class RipEstimate:
    """Sampled (not certified) restricted-isometry constant.

    ``delta_hat`` is a lower bound on the true constant at scale ``C``.
    """

    delta_hat: float
    support_samples: int
    K: int
    C: float
    sigma2_max: float
    sigma2_min: float


@dataclass(frozen=True)
class BoundInputs:
    K: int = 1
    R: int = 1
    N: int = 1
    L: int = 1
    M: int = 1
    delta: float = 0.5
    eta: float = 1 / math.e
    mu: float = 1.0
    mu_S: float = 1.0
    mu_L: float = 1.0
    C: float = 1.0
    c: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("K", "R", "N", "L", "M"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("mu", "mu_S", "mu_L"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("C", "c", "beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class TangentSpace:
    """Span of matrices sharing a column space with Q or a row space with V."""

    Q: np.ndarray  # L x R
    V: np.ndarray  # N x R

    def __post_init__(self):
        Q, V = np.asarray(self.Q, float), np.asarray(self.V, float)
        if Q.ndim != 2 or V.ndim != 2 or Q.shape[1] != V.shape[1]:
            raise ValueError(f"Q {Q.shape} and V {V.shape} must be 2-D with equal rank")
        R = Q.shape[1]
        for name, X in (("Q", Q), ("V", V)):
            if R and np.max(np.abs(X.T @ X - np.eye(R))) > 1e-8:
                raise ValueError(f"{name} must have orthonormal columns")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "V", V)

    @property
    def rank(self) -> int:
        return self.Q.shape[1]

    @property
    def shape(self):
        return (self.Q.shape[0], self.V.shape[0])

    @classmethod
    def random(cls, L: int, N: int, R: int, seed: int) -> "TangentSpace":
        rng = np.random.default_rng(seed)
        Q = np.linalg.qr(rng.standard_normal((L, R)))[0]
        V = np.linalg.qr(rng.standard_normal((N, R)))[0]
        return cls(Q, V)


def estimate_rip_delta(A_eff, K: int, support_samples: int, seed: int) -> RipEstimate:
    """Monte Carlo estimate of the RIP(2K) constant of ``A_eff``.

    Draws ``support_samples`` supports of size 2K and records the extreme
    squared singular values of each column submatrix. The scale ``C`` is the
    midrange of the pooled extremes, which makes ``delta_hat`` the smallest
    constant consistent with the sampled supports; adding samples can only
    raise it.
    """
    A = np.asarray(A_eff, dtype=float)
    M, n = A.shape
    if K < 1 or 2 * K > n:
        raise ValueError(f"2K = {2 * K} must lie in [2, {n}] (number of columns)")
    if support_samples < 1:
        raise ValueError("support_samples must be >= 1")
    rng = np.random.default_rng(seed)
    hi, lo = 0.0, math.inf
    for _ in range(support_samples):
        supp = rng.choice(n, size=2 * K, replace=False)
        s = np.linalg.svd(A[:, supp], compute_uv=False)
        smin = s[-1] if 2 * K <= M else 0.0
        hi = max(hi, s[0] ** 2)
        lo = min(lo, smin**2)
    C = 0.5 * (hi + lo)
    delta = (hi - lo) / (hi + lo) if C > 0 else 0.0
    return RipEstimate(float(delta), support_samples, K, float(C), float(hi), float(lo))


def _check_eta(eta: float, size: int):
    # lower end (size)^(-ln^4 size) underflows, so compare logarithms
    if not eta > 0 or eta > 1 / math.e or math.log(eta) < -math.log(size) ** 5:
        raise ValueError(
            f"eta = {eta} outside [{size}^(-ln^4 {size}), 1/e] required by the bound"
        )


def required_nodes_single(K: int, delta: float, mu: float, N: int, eta: float,
                          C: float = 1.0) -> float:
    """Single-stream node count ``C K mu^2 ln^5(N) ln(1/eta) / delta^2``."""
    _check_eta(eta, N)
    return C * (K / delta**2) * mu**2 * math.log(N) ** 5 * math.log(1 / eta)


def required_nodes_sparse(b: BoundInputs) -> float:
    """Nodes sufficient for RIP(2K, delta) with L jointly sparse streams."""
    NL = b.N * b.L
    _check_eta(b.eta, NL)
    return b.C * (b.K / b.delta**2) * b.mu_S**2 * math.log(NL) ** 5 * math.log(1 / b.eta)


def required_nodes_lowrank(b: BoundInputs) -> float:
    """Nodes sufficient for nuclear-norm recovery of a rank-R input."""
    return b.c * b.R * (b.N + b.mu_L**2 * b.L) * math.log(b.L * b.N) ** 3


def lowrank_error_bound(N: int, L: int, M: int, eps: float) -> float:
    if min(N, L, M) < 1:
        raise ValueError("N, L, M must be positive")
    return (4 * math.sqrt(min(N, L) * (2 * N * L + M) / M) + 2) * eps


def sparse_error_bound(alpha: float, beta: float, eps: float, tail: float, K: int) -> float:
    """``alpha * eps + beta * tail / sqrt(K)``; ``tail`` is the l1 norm of the
    coefficients outside the best K-term approximation."""
    if not (alpha > 0 and beta > 0 and K > 0):
        raise ValueError("alpha, beta and K must be positive")
    return alpha * eps + beta * tail / math.sqrt(K)


def project_tangent(T: TangentSpace, W, perp: bool = False) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.shape != T.shape:
        raise ValueError(f"W must have shape {T.shape}, got {W.shape}")
    QtW = T.Q.T @ W
    WV = W @ T.V
    if perp:
        return W - T.Q @ QtW - WV @ T.V.T + T.Q @ (QtW @ T.V) @ T.V.T
    return T.Q @ QtW + WV @ T.V.T - T.Q @ (QtW @ T.V) @ T.V.T


def tangent_conditioning(forward: Callable, adjoint: Callable, T: TangentSpace, M: int,
                         kappa: float = 1.0, iterations: int = 200) -> float:
    """Spectral norm of ``W -> kappa P_T A*A P_T W - P_T W`` by power iteration.

    ``kappa`` is the scale at which ``kappa * A*A`` is an isometry in
    expectation. For a network whose feed-forward entries have variance
    ``1/M`` the columns of the operator already have unit expected norm, so
    the whole-operator case uses ``kappa = 1``.
    """
    if T.rank == 0:
        return 0.0

    def op(W):
        PW = project_tangent(T, W)
        y = forward(PW)
        if np.shape(y) != (M,):
            raise ValueError(f"forward must return length-{M} vectors, got {np.shape(y)}")
        return kappa * project_tangent(T, adjoint(y)) - PW

    v = project_tangent(T, np.ones(T.shape))
    nv = np.linalg.norm(v)
    if nv == 0:
        v = project_tangent(T, T.Q @ T.V.T)
        nv = np.linalg.norm(v)
    v = v / nv
    est = 0.0
    for _ in range(iterations):
        w = op(v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def dual_certificate_check(Y, T: TangentSpace, gamma: float) -> tuple[bool, bool]:
    """Evaluate the two inexact dual-certificate conditions for ``Y``.

    Returns ``(||P_T Y - Q V^T||_F <= 1/(2 sqrt(2) gamma), ||P_T-perp Y|| <= 1/2)``.
    """
    Y = np.asarray(Y, dtype=float)
    target = T.Q @ T.V.T
    first = np.linalg.norm(project_tangent(T, Y) - target) <= 1 / (2 * math.sqrt(2) * gamma)
    perp = project_tangent(T, Y, perp=True)
    second = (np.linalg.norm(perp, 2) if perp.size else 0.0) <= 0.5
    return bool(first), bool(second)
