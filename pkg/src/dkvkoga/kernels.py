"""Radial basis function kernels and Gram matrix assembly.

Matrix-valued kernels of the form ``I_m * k`` are never built explicitly;
callers solve against the scalar Gram matrix with ``m`` right-hand sides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

FAMILIES = ("gaussian", "matern1", "matern2")

_ALIASES = {
    "gaussian": "gaussian",
    "gauss": "gaussian",
    "matern1": "matern1",
    "maternlinear": "matern1",
    "linear_matern": "matern1",
    "matern2": "matern2",
    "maternquadratic": "matern2",
    "quadratic_matern": "matern2",
}

# bound on the size of the pairwise-difference buffer built per chunk
_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True)
class ScalarKernelSpec:
    family: str
    epsilon: float

    def __post_init__(self):
        fam = _ALIASES.get(str(self.family).lower())
        if fam is None:
            raise ValueError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        object.__setattr__(self, "epsilon", float(self.epsilon))

    def profile(self, r: np.ndarray) -> np.ndarray:
        """Radial profile ``psi(r)`` with ``k(x, y) = psi(||x - y||)``."""
        eps = self.epsilon
        if self.family == "gaussian":
            return np.exp(-(eps * r) ** 2)
        er = eps * r
        if self.family == "matern1":
            return (1.0 + er) * np.exp(-er)
        return (1.0 + er + er * er / 3.0) * np.exp(-er)

    def profile_from_sq(self, r2: np.ndarray) -> np.ndarray:
        if self.family == "gaussian":
            return np.exp(-(self.epsilon**2) * r2)
        return self.profile(_safe_sqrt(r2))

    def radial_slope(self, r: np.ndarray) -> np.ndarray:
        """``psi'(r) / r``, finite at ``r = 0`` for all three families.

        The gradient of ``k`` with respect to ``x`` is ``(x - y) * radial_slope``.
        """
        eps = self.epsilon
        if self.family == "gaussian":
            return -2.0 * eps**2 * np.exp(-(eps * r) ** 2)
        er = eps * r
        if self.family == "matern1":
            return -(eps**2) * np.exp(-er)
        return -(eps**2 / 3.0) * (1.0 + er) * np.exp(-er)

    def profile_and_slope(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(psi(r), psi'(r) / r)`` sharing one exponential evaluation."""
        eps = self.epsilon
        if self.family == "gaussian":
            e = np.exp(-(eps * r) ** 2)
            return e, -2.0 * eps**2 * e
        er = eps * r
        e = np.exp(-er)
        if self.family == "matern1":
            return (1.0 + er) * e, -(eps**2) * e
        return (1.0 + er + er * er / 3.0) * e, -(eps**2 / 3.0) * (1.0 + er) * e

    def to_dict(self) -> dict:
        return {"family": self.family, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalarKernelSpec":
        return cls(d["family"], float(d["epsilon"]))


def _safe_sqrt(r2):
    return np.sqrt(np.maximum(r2, 0.0))


def eval_scalar(spec: ScalarKernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise DimensionMismatch(f"{x.shape} vs {y.shape}")
    diff = x - y
    return float(spec.profile_from_sq(np.dot(diff, diff)))


def sq_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise squared distances from explicit differences.

    Differences (rather than the ``|x|^2 - 2xy + |y|^2`` expansion) keep the
    result exactly symmetric and translation invariant up to round-off.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"dimension {X.shape[1]} vs {Y.shape[1]}")
    n, p = X.shape[0], Y.shape[0]
    out = np.empty((n, p))
    step = max(1, _CHUNK_ELEMS // max(1, p * X.shape[1]))
    for s in range(0, n, step):
        diff = X[s : s + step, None, :] - Y[None, :, :]
        out[s : s + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def gram(spec: ScalarKernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return spec.profile_from_sq(sq_distances(X, Y))
