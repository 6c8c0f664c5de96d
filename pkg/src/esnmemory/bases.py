"""Orthonormal sparsity bases and their coherence with Fourier vectors.

Every coherence here is the peak modulus of a trigonometric polynomial,
``max_t |sum_m psi[m] exp(-1j*t*m)|``. The supremum over ``t`` is taken on a
uniform grid of ``oversample * n`` points in ``[0, 2*pi)``, evaluated with a
zero-padded FFT. Finer grids can only raise the reported value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

BasisKind = Literal["canonical", "haar", "dct"]
BASIS_KINDS = ("canonical", "haar", "dct")
DEFAULT_OVERSAMPLE = 8

# bound on the complex scratch array used by the gridded FFT (entries)
_FFT_CHUNK = 1 << 22


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    kind: str
    matrix: np.ndarray  # columns are the atoms

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class JointBasis:
    """``(N*L) x (N*L)`` orthonormal basis for the stacked input vector.

    Rows and columns follow the operator's stream-major order, so block
    ``(l, k)`` couples coefficients of stream ``k`` into samples of stream
    ``l``.
    """

    matrix: np.ndarray
    streams: int
    horizon: int
    base: OrthonormalBasis | None = None

    def block(self, l: int, k: int) -> np.ndarray:
        N = self.horizon
        return self.matrix[l * N:(l + 1) * N, k * N:(k + 1) * N]

    @property
    def block_diagonal(self) -> bool:
        return self.base is not None


@dataclass(frozen=True)
class CoherenceReport:
    value: float
    argmax_frequency: float
    oversample: int
    column: int
    block: tuple[int, int] | None = None


def _haar_matrix(n: int) -> np.ndarray:
    # rows are the analysis functions: scaling row first, then coarse to fine
    H = np.ones((1, 1))
    while H.shape[0] < n:
        m = H.shape[0]
        top = np.kron(H, [1.0, 1.0])
        bottom = np.kron(np.eye(m), [1.0, -1.0])
        H = np.vstack([top, bottom]) / np.sqrt(2.0)
    return H


def _dct_matrix(n: int) -> np.ndarray:
    m = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    psi = np.sqrt(2.0 / n) * np.cos(np.pi * (m + 0.5) * k / n)
    psi[:, 0] /= np.sqrt(2.0)
    return psi


def make_basis(kind: str, n: int) -> OrthonormalBasis:
    """Build an ``n x n`` orthonormal basis whose columns are the atoms.

    ``dct`` is the orthonormal DCT-II; ``haar`` is the dyadic Haar wavelet
    basis (scaling function plus all wavelets) and needs ``n`` a power of two.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if kind == "canonical":
        psi = np.eye(n)
    elif kind == "dct":
        psi = _dct_matrix(n)
    elif kind == "haar":
        if n & (n - 1):
            raise ValueError(f"haar basis: n must be a power of two, got {n}")
        psi = _haar_matrix(n).T.copy()
    else:
        raise ValueError(f"unknown basis kind {kind!r}; expected one of {BASIS_KINDS}")
    psi.setflags(write=False)
    return OrthonormalBasis(kind=kind, matrix=psi)


def joint_basis(base: OrthonormalBasis, L: int) -> JointBasis:
    """Block-diagonal basis applying ``base`` to every stream independently."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    big = np.kron(np.eye(L), base.matrix)
    big.setflags(write=False)
    return JointBasis(matrix=big, streams=L, horizon=base.size, base=base)


def _grid_peak(columns: np.ndarray, oversample: int, weights=None):
    """Peak of ``|DTFT|`` per column on the grid; returns (peak, argmax_t) arrays.

    ``weights`` divides each column's modulus (used for normalized coherence).
    """
    n, ncols = columns.shape
    size = oversample * n
    peaks = np.empty(ncols)
    where = np.empty(ncols, dtype=int)
    step = max(1, _FFT_CHUNK // size)
    for start in range(0, ncols, step):
        spec = np.abs(np.fft.fft(columns[:, start:start + step], n=size, axis=0))
        where[start:start + step] = np.argmax(spec, axis=0)
        peaks[start:start + step] = spec.max(axis=0)
    if weights is not None:
        peaks = peaks / weights
    return peaks, 2 * np.pi * where / size


def _check_oversample(oversample):
    if int(oversample) != oversample or oversample < 1:
        raise ValueError(f"oversample must be a positive integer, got {oversample}")


def coherence_single(base: OrthonormalBasis, oversample: int = DEFAULT_OVERSAMPLE) -> CoherenceReport:
    _check_oversample(oversample)
    peaks, freqs = _grid_peak(base.matrix, int(oversample))
    col = int(np.argmax(peaks))
    return CoherenceReport(float(peaks[col]), float(freqs[col]), int(oversample), col)


def coherence_joint(jb: JointBasis, oversample: int = DEFAULT_OVERSAMPLE) -> CoherenceReport:
    """Block-normalized coherence over every ``N x N`` block of the joint basis.

    Each block column is divided by its own l2 norm; columns whose norm inside
    the block is below 1e-12 (e.g. off-diagonal blocks of a block-diagonal
    basis) are skipped.
    """
    _check_oversample(oversample)
    best = None
    L = jb.streams
    for l in range(L):
        for k in range(L):
            block = jb.block(l, k)
            norms = np.linalg.norm(block, axis=0)
            keep = np.flatnonzero(norms >= 1e-12)
            if keep.size == 0:
                continue
            peaks, freqs = _grid_peak(block[:, keep], int(oversample), norms[keep])
            i = int(np.argmax(peaks))
            if best is None or peaks[i] > best.value:
                best = CoherenceReport(
                    float(peaks[i]), float(freqs[i]), int(oversample),
                    int(k * jb.horizon + keep[i]), (l, k),
                )
    if best is None:
        return CoherenceReport(0.0, 0.0, int(oversample), 0, None)
    return best


def coherence_lowrank(V: np.ndarray, oversample: int = DEFAULT_OVERSAMPLE) -> CoherenceReport:
    """``mu_L`` for right singular vectors ``V`` (``N x R``, orthonormal columns).

    ``mu_L**2 = max_w ||V^T f_w||^2 / R`` with ``f_w`` the length-N Fourier
    vector at frequency ``w``. The report holds ``mu_L`` itself, not its square.
    """
    _check_oversample(oversample)
    V = np.asarray(V, dtype=float)
    if V.ndim != 2:
        raise ValueError(f"V must be 2-D, got shape {V.shape}")
    N, R = V.shape
    if R == 0:
        return CoherenceReport(0.0, 0.0, int(oversample), 0)
    gram_err = np.max(np.abs(V.T @ V - np.eye(R)))
    if gram_err > 1e-8:
        raise ValueError(f"V must have orthonormal columns (max |V^T V - I| = {gram_err:.3g})")
    size = int(oversample) * N
    energy = np.sum(np.abs(np.fft.fft(V, n=size, axis=0)) ** 2, axis=1)
    i = int(np.argmax(energy))
    return CoherenceReport(float(np.sqrt(energy[i] / R)), 2 * np.pi * i / size, int(oversample), 0)
