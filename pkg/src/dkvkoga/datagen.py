"""Datasets for the three benchmark families.

* closed-form model problems ``f2``, ``f3``, ``f4`` on the unit cube,
* Lotka-Volterra and Brusselator trajectories in discrete-time (parameter ->
  whole trajectory) and continuous-time ((t, parameter) -> value) layouts,
* a synthetic voxel-geometry / breakthrough-curve generator with a PCA
  feature map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DimensionMismatch, StepSizeUnderflow
from .numerics import SeededRng, sample_uniform, truncated_svd


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        if self.X.shape[0] != self.Y.shape[0]:
            raise DimensionMismatch(f"{self.X.shape[0]} inputs vs {self.Y.shape[0]} targets")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self):
        return self.X.shape[0]

    @property
    def d_in(self) -> int:
        return self.X.shape[1]

    @property
    def d_out(self) -> int:
        return self.Y.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], dict(self.meta))

    def save(self, csv_path: str | Path) -> None:
        """CSV with header ``x_0..,y_0..`` plus a ``.json`` sidecar holding meta."""
        csv_path = Path(csv_path)
        header = [f"x_{i}" for i in range(self.d_in)] + [f"y_{i}" for i in range(self.d_out)]
        body = np.hstack([self.X, self.Y])
        np.savetxt(csv_path, body, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
        meta = dict(self.meta, d_in=self.d_in, d_out=self.d_out)
        csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=2, default=_jsonable))

    @classmethod
    def load(cls, csv_path: str | Path) -> "Dataset":
        csv_path = Path(csv_path)
        meta = json.loads(csv_path.with_suffix(".json").read_text())
        body = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        d_in = int(meta["d_in"])
        return cls(body[:, :d_in], body[:, d_in:], meta)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


# -- model problems ---------------------------------------------------------

MODEL_DIMS = {"f2": 2, "f3": 3, "f4": 4}


def _model_rows(name: str, X: np.ndarray) -> np.ndarray:
    bump = np.exp(-4.0 * np.sum((X - 0.5) ** 2, axis=1))
    if name == "f2":
        return bump
    if name == "f3":
        return bump + 2.0 * np.abs(X[:, 0] - 0.5)
    if name == "f4":
        return bump + np.exp(-9.0 * np.sum((X[:, :2] - 0.3) ** 2, axis=1))
    raise ValueError(f"unknown model problem {name!r}")


def eval_model_problem(name: str, x) -> float | np.ndarray:
    """Evaluate f2/f3/f4 at a point (returns float) or at the rows of a matrix."""
    if name not in MODEL_DIMS:
        raise ValueError(f"unknown model problem {name!r}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != MODEL_DIMS[name]:
        raise DimensionMismatch(f"{name} takes {MODEL_DIMS[name]} inputs, got {X.shape[1]}")
    out = _model_rows(name, X)
    return float(out[0]) if single else out


def model_problem_dataset(name: str, n: int, seed: int) -> Dataset:
    d = MODEL_DIMS[name]
    X = sample_uniform(SeededRng(seed), np.zeros(d), np.ones(d), n)
    Y = _model_rows(name, X)[:, None] if n else np.zeros((0, 1))
    return Dataset(X, Y, {"generator": name, "seed": seed, "low": [0.0] * d, "high": [1.0] * d})


# -- parametrized ODEs ------------------------------------------------------

LV_DOMAIN = (np.array([0.8, 0.8]), np.array([1.2, 1.2]))
BRUSS_DOMAIN = (np.array([0.0]), np.array([5.0]))
T_END = 30.0
N_TIMES = 301


@dataclass(frozen=True)
class TimeGrid:
    t: np.ndarray

    @classmethod
    def default(cls) -> "TimeGrid":
        # integer multiples rather than accumulated sums keep every node exact to 1 ulp
        return cls(np.arange(N_TIMES) * 0.1)

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class OdeSpec:
    system: str
    mu: tuple[float, ...]

    def __post_init__(self):
        sys_ = self.system.lower().replace("-", "").replace("_", "")
        if sys_ in ("lv", "lotkavolterra"):
            object.__setattr__(self, "system", "lotka_volterra")
            need = 2
        elif sys_ in ("brusselator", "bruss"):
            object.__setattr__(self, "system", "brusselator")
            need = 1
        else:
            raise ValueError(f"unknown ODE system {self.system!r}")
        mu = tuple(float(v) for v in np.atleast_1d(self.mu))
        if len(mu) != need:
            raise DimensionMismatch(f"{self.system} takes {need} parameters")
        object.__setattr__(self, "mu", mu)

    @property
    def y0(self) -> np.ndarray:
        return np.array([2.0, 4.0]) if self.system == "lotka_volterra" else np.array([1.0, 1.0])

    @property
    def t_span(self) -> tuple[float, float]:
        return (0.0, T_END)


def parameter_domain(system: str) -> tuple[np.ndarray, np.ndarray]:
    return LV_DOMAIN if _is_lv(system) else BRUSS_DOMAIN


def ode_rhs(spec: OdeSpec, t: float, u: np.ndarray) -> np.ndarray:
    u1, u2 = u
    if spec.system == "lotka_volterra":
        m1, m2 = spec.mu
        return np.array([m1 * u1 - u1 * u2, -m2 * u2 + u1 * u2])
    (mu,) = spec.mu
    return np.array([1.0 + u1 * (u1 * u2 - 1.0 - mu), u1 * (mu - u1 * u2)])


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def dopri5(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_nodes: np.ndarray,
    rtol: float,
    atol: float,
    h_min: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """Adaptive Dormand-Prince integration that lands on every ``t_nodes`` entry.

    Returns all accepted step times and states (nodes included).
    """
    t = float(t_nodes[0])
    y = np.array(y0, dtype=float)
    ts, ys = [t], [y.copy()]
    k1 = np.asarray(rhs(t, y), dtype=float)
    d0, d1 = np.linalg.norm(y), np.linalg.norm(k1)
    h = 0.01 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(h, float(t_nodes[-1] - t_nodes[0]) or 1.0)
    K = np.empty((7, y.size))
    for target in t_nodes[1:]:
        target = float(target)
        while t < target:
            h_step = min(h, target - t)
            last = t + h_step >= target
            K[0] = k1
            for s in range(1, 7):
                K[s] = rhs(t + _C[s] * h_step, y + h_step * np.dot(_A[s], K[:s]))
            y_new = y + h_step * np.dot(_B5, K)
            err = h_step * np.dot(_E, K)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = np.sqrt(np.mean((err / scale) ** 2))
            if err_norm <= 1.0:
                t = target if last else t + h_step
                y = y_new
                k1 = K[6].copy()  # first-same-as-last
                ts.append(t)
                ys.append(y.copy())
                fac = 5.0 if err_norm == 0 else min(5.0, 0.9 * err_norm ** -0.2)
                # a step shortened to hit a node must not shrink the next proposal
                h = max(h, h_step * fac) if last else h_step * fac
            else:
                h = h_step * max(0.2, 0.9 * err_norm ** -0.2)
            if h < h_min:
                raise StepSizeUnderflow(f"step size {h:g} underflow at t={t:g}")
    return np.array(ts), np.array(ys)


def integrate(spec: OdeSpec, grid: TimeGrid | None = None, rtol: float = 1e-8, atol: float = 1e-10) -> np.ndarray:
    """Trajectory on the time grid, shape ``(len(grid), 2)``.

    Grid times are forced to be step nodes, so the linear interpolation
    onto the grid reproduces the accepted RK states.
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    grid = grid or TimeGrid.default()
    ts, ys = dopri5(lambda t, u: ode_rhs(spec, t, u), spec.y0, grid.t, rtol, atol)
    out = np.column_stack([np.interp(grid.t, ts, ys[:, j]) for j in range(ys.shape[1])])
    out[0] = spec.y0
    return out


def parameter_grid(system: str, n: int) -> np.ndarray:
    """Equidistant training parameters: a sqrt(n) x sqrt(n) grid for LV, n points for Brusselator."""
    if _is_lv(system):
        k = int(round(np.sqrt(n)))
        if k * k != n:
            raise ValueError(f"Lotka-Volterra grid needs a square count, got {n}")
        g = np.linspace(0.8, 1.2, k)
        m1, m2 = np.meshgrid(g, g, indexing="ij")
        return np.column_stack([m1.ravel(), m2.ravel()])
    return np.linspace(0.0, 5.0, n)[:, None]


def _is_lv(system: str) -> bool:
    return system.lower().replace("-", "").replace("_", "") in ("lv", "lotkavolterra")


def parameter_samples(system: str, n: int, seed: int) -> np.ndarray:
    low, high = parameter_domain(system)
    return sample_uniform(SeededRng(seed), low, high, n)


def solve_many(system: str, mu_grid: np.ndarray, grid: TimeGrid | None = None, rtol=1e-8, atol=1e-10) -> np.ndarray:
    """Trajectories for every parameter row, shape ``(N_mu, len(grid), 2)``."""
    grid = grid or TimeGrid.default()
    mu_grid = np.atleast_2d(np.asarray(mu_grid, dtype=float))
    return np.stack([integrate(OdeSpec(system, tuple(mu)), grid, rtol, atol) for mu in mu_grid])


def _check_domain(system: str, mu_grid: np.ndarray) -> None:
    low, high = parameter_domain(system)
    if np.any(mu_grid < low - 1e-12) or np.any(mu_grid > high + 1e-12):
        raise ValueError("parameter outside the system's domain")


def build_dt_dataset(system: str, mu_grid: np.ndarray, grid: TimeGrid | None = None, trajectories: np.ndarray | None = None) -> tuple[Dataset, Dataset]:
    """Per-equation datasets mapping a parameter to the whole trajectory."""
    grid = grid or TimeGrid.default()
    mu_grid = np.atleast_2d(np.asarray(mu_grid, dtype=float))
    _check_domain(system, mu_grid)
    U = solve_many(system, mu_grid, grid) if trajectories is None else trajectories
    meta = {"generator": f"{system}_dt", "n_mu": mu_grid.shape[0]}
    return tuple(Dataset(mu_grid, U[:, :, j], dict(meta, equation=j + 1)) for j in range(2))


def build_ct_dataset(system: str, mu_grid: np.ndarray, grid: TimeGrid | None = None, trajectories: np.ndarray | None = None) -> tuple[Dataset, Dataset]:
    """Per-equation datasets mapping ``(t, mu)`` to a scalar; rows ordered by mu, then t."""
    grid = grid or TimeGrid.default()
    mu_grid = np.atleast_2d(np.asarray(mu_grid, dtype=float))
    _check_domain(system, mu_grid)
    U = solve_many(system, mu_grid, grid) if trajectories is None else trajectories
    nt = len(grid)
    X = np.column_stack([np.tile(grid.t, mu_grid.shape[0]), np.repeat(mu_grid, nt, axis=0)])
    meta = {"generator": f"{system}_ct", "n_mu": mu_grid.shape[0], "n_t": nt}
    return tuple(Dataset(X, U[:, :, j].reshape(-1), dict(meta, equation=j + 1)) for j in range(2))


# -- synthetic breakthrough curves -----------------------------------------

N_CURVE = 500


def synthetic_voxel_sample(rng: SeededRng, n: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """One boolean geometry (2 channels of ``n**3`` voxels, flattened) and its curve.

    A smoothed Gaussian random field is thresholded at two random quantiles:
    voxels below the lower one are pore space (channel 0), voxels between the
    two are washcoat (channel 1), the rest is solid. The curve is a logistic
    profile on 500 uniform times in [0, 1]; its onset moves earlier with
    increasing porosity and its steepness grows with the washcoat fraction.
    """
    if n < 4:
        raise ValueError("voxel resolution must be at least 4")
    field_ = gaussian_filter(rng.normal(size=(n, n, n)), sigma=max(1.0, n / 10), mode="wrap")
    target_porosity = rng.uniform(0.2, 0.6)
    washcoat_share = rng.uniform(0.05, 0.25)
    lo = np.quantile(field_, target_porosity)
    hi = np.quantile(field_, min(0.95, target_porosity + washcoat_share))
    pore = field_ < lo
    wash = (field_ >= lo) & (field_ < hi)
    geometry = np.concatenate([pore.ravel(), wash.ravel()])
    return geometry, breakthrough_curve(pore.mean(), wash.mean())


def breakthrough_curve(porosity: float, washcoat: float) -> np.ndarray:
    """Monotone saturating profile in (0, 1) on 500 uniform times."""
    t = np.linspace(0.0, 1.0, N_CURVE)
    onset = 0.8 - porosity
    steepness = 8.0 + 40.0 * washcoat
    return 1.0 / (1.0 + np.exp(-steepness * (t - onset)))


def synthetic_breakthrough_data(n_samples: int, n: int = 30, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Geometry matrix ``(n_samples, 2 n^3)`` (0/1 floats) and curves ``(n_samples, 500)``."""
    rng = SeededRng(seed)
    geo, curves = [], []
    for _ in range(n_samples):
        g, c = synthetic_voxel_sample(rng, n)
        geo.append(g.astype(float))
        curves.append(c)
    return np.array(geo), np.array(curves)


@dataclass
class PCAFeatureMap:
    """``x -> U_r^T x`` with ``U_r`` the leading left singular vectors of the sample matrix."""

    U: np.ndarray
    sigma: np.ndarray

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ self.U if x.ndim == 2 else self.U.T @ x

    __call__ = transform

    def reconstruct(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        return features @ self.U.T if features.ndim == 2 else self.U @ features


def pca_feature_map(samples, r: int = 6) -> PCAFeatureMap:
    """Fit the map on flattened samples (one per row / list entry)."""
    S = np.asarray(samples, dtype=float)
    if S.ndim != 2 or S.shape[0] < r:
        raise ValueError(f"need at least {r} samples")
    U, sigma = truncated_svd(S.T, r)  # columns of Z are the samples
    return PCAFeatureMap(U, sigma)
