"""Dense linear algebra, seeded sampling and finite-difference helpers.

Matrices are plain 2-D ``float64`` numpy arrays throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    InvalidBox,
    NotPositiveDefinite,
)

JITTER_START = 1e-12


@dataclass(frozen=True)
class CholeskyFactor:
    lower: np.ndarray
    jitter_applied: float = 0.0

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def matrix(self) -> np.ndarray:
        """Reconstruct the factored matrix (input plus jitter)."""
        return self.lower @ self.lower.T


class SeededRng:
    """Reproducible random stream backed by numpy's PCG64 bit generator.

    PCG64 output is specified bit-for-bit by numpy, so a given seed yields the
    same stream on every platform. A generator is single-owner; hand each
    worker its own instance (see :meth:`spawn`).
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def spawn(self, key: int) -> "SeededRng":
        """Derive an independent generator from this seed and an integer key."""
        seq = np.random.SeedSequence([self.seed, int(key)])
        return SeededRng(int(seq.generate_state(1, dtype=np.uint64)[0]))


def cholesky(A: np.ndarray, max_jitter: float = 1e-6) -> CholeskyFactor:
    """Cholesky factorization with escalating diagonal jitter.

    Tries the plain factorization first; on failure adds ``1e-12 * I`` and
    multiplies the jitter by 10 until it exceeds ``max_jitter``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    scale = max(1.0, float(np.max(np.abs(A)))) if n else 1.0
    if n and np.max(np.abs(A - A.T)) > 1e-12 * scale:
        raise DimensionMismatch("matrix is not symmetric")

    jitter = 0.0
    while True:
        try:
            M = A if jitter == 0.0 else A + jitter * np.eye(n)
            L = np.linalg.cholesky(M)
            if np.all(np.diag(L) > 0):
                return CholeskyFactor(L, jitter)
        except np.linalg.LinAlgError:
            pass
        jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
        # float round-off in the *10 chain must not skip the last level
        if jitter > max_jitter * (1 + 1e-9):
            raise NotPositiveDefinite(
                f"factorization failed with jitter up to {max_jitter:g}"
            )


def solve_spd(factor: CholeskyFactor, B: np.ndarray) -> np.ndarray:
    """Solve ``(L L^T) X = B`` for one or several right-hand sides."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != factor.n:
        raise DimensionMismatch(
            f"factor has dimension {factor.n}, right-hand side has {B.shape[0]} rows"
        )
    if factor.n == 0:
        return B.copy()
    Y = solve_triangular(factor.lower, B, lower=True, check_finite=False)
    return solve_triangular(factor.lower.T, Y, lower=False, check_finite=False)


def inverse_diagonal(factor: CholeskyFactor) -> np.ndarray:
    """Diagonal of ``A^{-1}`` from the triangular factor.

    With ``A = L L^T`` we have ``A^{-1} = L^{-T} L^{-1}``, hence
    ``(A^{-1})_jj`` is the squared norm of column ``j`` of ``L^{-1}``.
    """
    n = factor.n
    Linv = solve_triangular(factor.lower, np.eye(n), lower=True, check_finite=False)
    return np.einsum("ij,ij->j", Linv, Linv)


def truncated_svd(Z: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Leading ``r`` left singular vectors and singular values of ``Z``.

    Works on the smaller Gram matrix (``Z^T Z`` for tall ``Z``), which is the
    only tractable route when ``Z`` has millions of rows and few columns.
    """
    Z = np.asarray(Z, dtype=float)
    rows, cols = Z.shape
    if r > min(rows, cols) or r < 0:
        raise DimensionMismatch(f"rank {r} exceeds min{Z.shape}")
    tall = rows >= cols
    G = Z.T @ Z if tall else Z @ Z.T
    try:
        evals, evecs = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(evals)[::-1][:r]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    sigma = np.sqrt(evals)
    if not tall:
        return evecs, sigma

    U = Z @ evecs
    for j in range(r):
        nrm = np.linalg.norm(U[:, j])
        if nrm > 0:
            U[:, j] /= nrm
    # one Gram-Schmidt sweep recovers orthonormality lost to the squared spectrum
    U, R = np.linalg.qr(U)
    U = U * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))
    return U, sigma


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    flat = grad.reshape(-1)
    for i in range(theta.size):
        e = np.zeros(theta.size)
        e[i] = h
        e = e.reshape(theta.shape)
        flat[i] = (f(theta + e) - f(theta - e)) / (2.0 * h)
    return grad


def sample_uniform(rng: SeededRng, low, high, n: int) -> np.ndarray:
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    if low.shape != high.shape or np.any(low >= high):
        raise InvalidBox(f"invalid box low={low}, high={high}")
    if n == 0:
        return np.zeros((0, low.size))
    return rng.uniform(low, high, size=(n, low.size))
