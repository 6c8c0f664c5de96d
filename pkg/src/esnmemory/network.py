"""Linear echo-state networks and their equivalent measurement operator.

A network with ``M`` nodes driven by ``L`` input streams evolves as

    x[n] = W x[n-1] + Z s[n],        n = 1..N,  x[0] = 0

so the final state is a linear function of the whole input history,
``x[N] = A @ stack(S)``. The columns of ``A`` are ordered stream-major and
age-minor: column ``l * N + a`` equals ``W**a @ Z[:, l]`` and multiplies the
input of stream ``l`` that arrived ``a`` steps before the end (age 0 is the
most recent sample).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

Mode = Literal["spectral", "orthogonalized-gaussian"]
MODES = ("spectral", "orthogonalized-gaussian")


@dataclass(frozen=True)
class NetworkSpec:
    """Everything needed to regenerate a network bit-for-bit.

    Attributes
    ----------
    nodes : int
        Number of nodes ``M``; must be even so eigenvalues pair up as
        complex conjugates.
    streams : int
        Number of input streams ``L``.
    horizon : int
        Number of time steps ``N`` stored in the operator.
    seed : int
        64-bit unsigned seed; the only source of randomness.
    mode : {"spectral", "orthogonalized-gaussian"}
        ``spectral`` draws unit-circle eigen-phases and mixes them with a
        random orthogonal basis; ``orthogonalized-gaussian`` orthogonalizes
        an i.i.d. Gaussian matrix.
    """

    nodes: int
    streams: int
    horizon: int
    seed: int = 0
    mode: Mode = "spectral"

    def __post_init__(self):
        for name in ("nodes", "streams", "horizon"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.nodes < 2 or self.nodes % 2:
            raise ValueError(
                f"nodes must be an even integer >= 2 (eigenvalues come in "
                f"conjugate pairs), got {self.nodes}"
            )
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True, eq=False)
class EsnNetwork:
    """A built network. Immutable; regenerate from ``spec`` rather than saving.

    ``phases`` and ``mixing`` are only populated in spectral mode, where
    ``W = mixing @ blockdiag(rot(phases)) @ mixing.T``.
    """

    spec: NetworkSpec
    W: np.ndarray
    Z: np.ndarray
    phases: Optional[np.ndarray] = None
    mixing: Optional[np.ndarray] = None

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``W``; exact conjugate pairs in spectral mode."""
        if self.phases is not None:
            e = np.exp(1j * self.phases)
            return np.concatenate([e, e.conj()])
        return np.linalg.eigvals(self.W)


@dataclass(frozen=True)
class StateTrajectory:
    states: np.ndarray  # (N + 1, M); states[0] is the initial state
    final: np.ndarray


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    """Dense ``M x (N*L)`` matrix mapping a stacked input history to x[N]."""

    matrix: np.ndarray
    streams: int
    horizon: int

    @property
    def shape(self):
        return self.matrix.shape

    def column_index(self, stream: int, age: int) -> int:
        return stream * self.horizon + age

    def forward_matrix(self, S: np.ndarray) -> np.ndarray:
        """Apply the operator to an ``L x N`` input matrix (oldest column first)."""
        return self.matrix @ stack_inputs(S)

    def adjoint_matrix(self, x: np.ndarray) -> np.ndarray:
        """Transpose of :meth:`forward_matrix`; returns an ``L x N`` matrix."""
        return unstack_inputs(self.matrix.T @ x, self.streams, self.horizon)


def stack_inputs(S: np.ndarray) -> np.ndarray:
    """Flatten an ``L x N`` input matrix into the operator's column order.

    Columns of ``S`` are time steps with the oldest first; the stacked vector
    lists each stream newest-first, so ``out[l*N + a] == S[l, N-1-a]``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2:
        raise ValueError(f"input matrix must be 2-D, got shape {S.shape}")
    return S[:, ::-1].reshape(-1)


def unstack_inputs(v: np.ndarray, streams: int, horizon: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (streams * horizon,):
        raise ValueError(
            f"stacked vector must have length {streams * horizon}, got {v.shape}"
        )
    return np.ascontiguousarray(v.reshape(streams, horizon)[:, ::-1])


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """QR of an i.i.d. Gaussian matrix with the sign of diag(R) forced positive.

    The sign fix makes the factorization unique, so the result is Haar
    distributed and a deterministic function of the generator state.
    """
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def _rotation_blocks(phases: np.ndarray) -> np.ndarray:
    m = 2 * phases.size
    G = np.zeros((m, m))
    c, s = np.cos(phases), np.sin(phases)
    idx = np.arange(0, m, 2)
    G[idx, idx] = c
    G[idx, idx + 1] = -s
    G[idx + 1, idx] = s
    G[idx + 1, idx + 1] = c
    return G


def build_network(spec: NetworkSpec) -> EsnNetwork:
    """Sample ``W`` and ``Z`` for ``spec``. Deterministic given ``spec.seed``."""
    M, L = spec.nodes, spec.streams
    rng = np.random.default_rng(int(spec.seed))
    if spec.mode == "spectral":
        phases = rng.uniform(0.0, 2 * np.pi, size=M // 2)
        mixing = random_orthogonal(M, rng)
        W = mixing @ _rotation_blocks(phases) @ mixing.T
    else:
        phases = mixing = None
        W = random_orthogonal(M, rng)
    Z = rng.standard_normal((M, L)) / np.sqrt(M)
    for arr in (W, Z, phases, mixing):
        if arr is not None:
            arr.setflags(write=False)
    return EsnNetwork(spec=spec, W=W, Z=Z, phases=phases, mixing=mixing)


def evolve(
    net: EsnNetwork, S: np.ndarray, noise: Optional[np.ndarray] = None
) -> StateTrajectory:
    """Run the recursion on inputs ``S`` (``L x N``, column 0 is the oldest).

    ``noise``, if given, is added once to the final state only.
    """
    spec = net.spec
    S = np.asarray(S, dtype=float)
    if S.shape != (spec.streams, spec.horizon):
        raise ValueError(
            f"inputs must have shape {(spec.streams, spec.horizon)}, got {S.shape}"
        )
    states = np.zeros((spec.horizon + 1, spec.nodes))
    for n in range(1, spec.horizon + 1):
        states[n] = net.W @ states[n - 1] + net.Z @ S[:, n - 1]
    final = states[-1].copy()
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != (spec.nodes,):
            raise ValueError(f"noise must have length {spec.nodes}, got {noise.shape}")
        final = final + noise
    return StateTrajectory(states=states, final=final)


def build_operator(net: EsnNetwork) -> MeasurementOperator:
    """Materialize ``A = [W^a z_l]`` in stream-major, age-minor column order."""
    spec = net.spec
    M, L, N = spec.nodes, spec.streams, spec.horizon
    blocks = np.empty((M, L, N))
    if net.phases is not None:
        # rotate the eigen-coordinates of each z_l by a * w_m, then mix back
        y = (net.mixing.T @ net.Z).reshape(M // 2, 2, L)
        angles = np.outer(net.phases, np.arange(N))  # (M/2, N)
        c, s = np.cos(angles)[:, None, :], np.sin(angles)[:, None, :]
        y0, y1 = y[:, 0, :, None], y[:, 1, :, None]
        rotated = np.stack([c * y0 - s * y1, s * y0 + c * y1], axis=1)
        blocks = (net.mixing @ rotated.reshape(M, L * N)).reshape(M, L, N)
        blocks[:, :, 0] = net.Z
    else:
        B = np.array(net.Z)
        for a in range(N):
            blocks[:, :, a] = B
            B = net.W @ B
    A = blocks.reshape(M, L * N)
    A.setflags(write=False)
    return MeasurementOperator(matrix=A, streams=L, horizon=N)


def apply_forward(op: MeasurementOperator, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (op.matrix.shape[1],):
        raise ValueError(
            f"stacked input must have length {op.matrix.shape[1]}, got {s.shape}"
        )
    return op.matrix @ s


def adjoint(op: MeasurementOperator, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (op.matrix.shape[0],):
        raise ValueError(f"state must have length {op.matrix.shape[0]}, got {x.shape}")
    return op.matrix.T @ x
