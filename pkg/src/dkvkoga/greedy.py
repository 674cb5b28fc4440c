"""f-greedy center selection (VKOGA) over a fixed shallow or trained deep kernel."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.linalg import solve_triangular

from .deepkernel import DeepKernelArchitecture, DeepKernelParams, features
from .errors import DegenerateKernel, DimensionMismatch, EmptyTrainingSet
from .kernels import ScalarKernelSpec, gram


@dataclass(frozen=True)
class DeepKernel:
    arch: DeepKernelArchitecture
    params: DeepKernelParams

    @property
    def outer(self) -> ScalarKernelSpec:
        return self.arch.outer

    def features(self, X: np.ndarray) -> np.ndarray:
        return features(self.arch, self.params, X)


Kernel = Union[ScalarKernelSpec, DeepKernel]


def outer_spec(kernel: Kernel) -> ScalarKernelSpec:
    return kernel if isinstance(kernel, ScalarKernelSpec) else kernel.outer


def kernel_features(kernel: Kernel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(kernel, ScalarKernelSpec):
        return X
    return kernel.features(X)


@dataclass
class GreedyConfig:
    n_max: int = 50
    f_tol: float = 0.0
    stability_tol: float = 1e-10
    gamma: float = 0.0

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.f_tol < 0 or self.gamma < 0 or self.stability_tol <= 0:
            raise ValueError("invalid greedy tolerances")


@dataclass
class SurrogateModel:
    kernel: Kernel
    centers: np.ndarray
    coefficients: np.ndarray
    gamma: float = 0.0
    out_dim: int = 1
    selected_indices: list[int] = field(default_factory=list)

    def __post_init__(self):
        # C order keeps predict bit-identical across save/load (BLAS rounding depends on layout)
        self.centers = np.ascontiguousarray(self.centers, dtype=float)
        self.coefficients = np.ascontiguousarray(self.coefficients, dtype=float)

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]

    @property
    def d_in(self) -> int:
        return self.centers.shape[1]


def predict(model: SurrogateModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.d_in:
        raise DimensionMismatch(f"inputs have dim {X.shape[1]}, model expects {model.d_in}")
    if model.n_centers == 0:
        return np.zeros((X.shape[0], model.out_dim))
    FX = kernel_features(model.kernel, X)
    FC = kernel_features(model.kernel, model.centers)
    return gram(outer_spec(model.kernel), FX, FC) @ model.coefficients


def residual_norms(model: SurrogateModel, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != np.atleast_2d(X).shape[0] or Y.shape[1] != model.out_dim:
        raise DimensionMismatch(f"targets {Y.shape} do not match inputs/model")
    return np.linalg.norm(Y - predict(model, X), axis=1)


@dataclass
class GreedyResult:
    model: SurrogateModel
    residual_history: list[float]
    stop_reason: str


def fit_greedy(kernel: Kernel, X_train: np.ndarray, Y_train: np.ndarray, cfg: GreedyConfig) -> tuple[SurrogateModel, list[float]]:
    """Select up to ``cfg.n_max`` centers by the f-greedy rule.

    Newton-basis values on all candidates are stored column by column; the
    rows belonging to selected points form the Cholesky factor of the
    (regularized) center Gram matrix, bordered by one row per step.
    """
    res = fit_greedy_detailed(kernel, X_train, Y_train, cfg)
    return res.model, res.residual_history


def fit_greedy_detailed(kernel: Kernel, X_train, Y_train, cfg: GreedyConfig) -> GreedyResult:
    X = np.atleast_2d(np.asarray(X_train, dtype=float))
    Y = np.asarray(Y_train, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    N = X.shape[0]
    if N == 0 or X.size == 0:
        raise EmptyTrainingSet("no training candidates")
    if Y.shape[0] != N:
        raise DimensionMismatch(f"{N} inputs vs {Y.shape[0]} targets")
    m = Y.shape[1]
    spec = outer_spec(kernel)
    feats = kernel_features(kernel, X)  # propagated once, reused every step
    gamma = cfg.gamma
    n_max = min(cfg.n_max, N)

    V = np.zeros((N, n_max))  # Newton basis evaluated at every candidate
    # squared power function of k + gamma*delta; its value at a candidate is the
    # Cholesky pivot (before the square root) that candidate would produce
    power2 = np.full(N, 1.0 + gamma)
    resid = Y.copy()
    beta = np.zeros((n_max, m))
    available = np.ones(N, dtype=bool)
    selected: list[int] = []
    history: list[float] = []
    stop = "n_max"

    while len(selected) < n_max:
        norms = np.linalg.norm(resid, axis=1)
        norms_masked = np.where(available, norms, -np.inf)
        if not available.any():
            stop = "exhausted"
            break
        max_res = float(norms_masked.max())
        if max_res < cfg.f_tol or (cfg.f_tol == 0 and max_res == 0.0):
            stop = "f_tol"
            break
        n = len(selected)
        # best admissible candidate; argmax picks the lowest index among ties
        while True:
            idx = int(np.argmax(norms_masked))
            if not np.isfinite(norms_masked[idx]):
                idx = -1
                break
            if power2[idx] > cfg.stability_tol:
                break
            available[idx] = False
            norms_masked[idx] = -np.inf
        if idx < 0:
            if n == 0:
                raise DegenerateKernel("first pivot below stability tolerance")
            stop = "stability"
            break
        pivot = np.sqrt(power2[idx])
        kcol = gram(spec, feats, feats[idx : idx + 1])[:, 0]
        kcol[idx] += gamma
        col = (kcol - V[:, :n] @ V[idx, :n]) / pivot
        col[idx] = pivot
        V[:, n] = col
        beta[n] = resid[idx] / pivot
        resid = resid - np.outer(col, beta[n])
        power2 = power2 - col * col
        history.append(max_res)
        selected.append(idx)
        available[idx] = False

    n = len(selected)
    L = V[selected, :n]
    if n:
        coeffs = solve_triangular(L.T, beta[:n], lower=False, check_finite=False)
    else:
        coeffs = np.zeros((0, m))
    model = SurrogateModel(kernel, X[selected].copy(), coeffs, gamma, m, list(selected))
    return GreedyResult(model, history, stop)
