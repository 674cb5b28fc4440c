"""Multilayer kernels built from linear and componentwise kernel layers.

Layer ``l`` (1-based) is a linear map ``z -> W_l z`` for odd ``l`` and a
componentwise kernel expansion with coefficient matrix ``A_l`` for even
``l < L``. The outer kernel is a radial kernel on the full feature vector
produced by layers ``1 .. L-1``. Activation-layer centers are the images of
the fixed first-layer centers ``Z1`` under the preceding layers and are
recomputed from the current weights on every call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch, TooFewTrainingPoints
from .kernels import ScalarKernelSpec, eval_scalar, gram
from .numerics import SeededRng


@dataclass(frozen=True)
class DeepKernelArchitecture:
    n_layers: int
    dims: tuple[int, ...]
    n_centers: int
    activation: ScalarKernelSpec
    outer: ScalarKernelSpec
    out_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        L = self.n_layers
        if L < 1 or (L != 1 and L % 2):
            raise ValueError(f"layer count must be 1 or even, got {L}")
        if len(self.dims) != L:
            raise ValueError(f"expected {L} dims (d_0..d_(L-1)), got {len(self.dims)}")
        if min(self.dims) < 1 or self.out_dim < 1:
            raise ValueError("all dimensions must be positive")
        if L > 1 and self.n_centers < 1:
            raise ValueError("need at least one first-layer center")
        for l in range(2, L, 2):
            if self.dims[l] != self.dims[l - 1]:
                raise ValueError(f"activation layer {l} must keep width {self.dims[l - 1]}")

    @classmethod
    def build(
        cls,
        n_layers: int,
        d_in: int,
        width: int,
        activation: ScalarKernelSpec,
        outer: ScalarKernelSpec,
        n_centers: int = 50,
        out_dim: int = 1,
    ) -> "DeepKernelArchitecture":
        """Uniform-width architecture: ``dims = (d_in, width, ..., width)``."""
        dims = (d_in,) + (width,) * (n_layers - 1)
        return cls(n_layers, dims, n_centers, activation, outer, out_dim)

    @property
    def shallow(self) -> bool:
        return self.n_layers == 1

    @property
    def d_in(self) -> int:
        return self.dims[0]

    @property
    def feature_dim(self) -> int:
        return self.dims[-1]

    def layer_kinds(self) -> list[str]:
        return ["linear" if l % 2 else "activation" for l in range(1, self.n_layers)]

    def param_shapes(self) -> list[tuple[int, int]]:
        """Shapes of the trainable matrices in layer order (W_1, A_2, W_3, ...)."""
        shapes = []
        for l in range(1, self.n_layers):
            if l % 2:
                shapes.append((self.dims[l], self.dims[l - 1]))
            else:
                shapes.append((self.dims[l], self.n_centers))
        return shapes

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "dims": list(self.dims),
            "n_centers": self.n_centers,
            "activation": self.activation.to_dict(),
            "outer": self.outer.to_dict(),
            "out_dim": self.out_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeepKernelArchitecture":
        return cls(
            int(d["n_layers"]),
            tuple(d["dims"]),
            int(d["n_centers"]),
            ScalarKernelSpec.from_dict(d["activation"]),
            ScalarKernelSpec.from_dict(d["outer"]),
            int(d.get("out_dim", 1)),
        )


@dataclass
class DeepKernelParams:
    W: list[np.ndarray]
    A: list[np.ndarray]
    Z1: np.ndarray

    def trainable(self) -> list[np.ndarray]:
        """Trainable matrices interleaved in layer order."""
        out = []
        for i in range(len(self.W) + len(self.A)):
            out.append(self.W[i // 2] if i % 2 == 0 else self.A[i // 2])
        return out

    def with_trainable(self, mats: Sequence[np.ndarray]) -> "DeepKernelParams":
        mats = [np.asarray(m, dtype=float) for m in mats]
        return DeepKernelParams(list(mats[0::2]), list(mats[1::2]), self.Z1)

    def copy(self) -> "DeepKernelParams":
        return DeepKernelParams(
            [w.copy() for w in self.W], [a.copy() for a in self.A], self.Z1.copy()
        )

    def validate(self, arch: DeepKernelArchitecture) -> None:
        got = [m.shape for m in self.trainable()]
        if got != arch.param_shapes():
            raise DimensionMismatch(f"param shapes {got} != {arch.param_shapes()}")
        if not arch.shallow and self.Z1.shape != (arch.n_centers, arch.d_in):
            raise DimensionMismatch(f"Z1 shape {self.Z1.shape}")

    def to_dict(self) -> dict:
        return {
            "W": [w.tolist() for w in self.W],
            "A": [a.tolist() for a in self.A],
            "Z1": self.Z1.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, arch: DeepKernelArchitecture) -> "DeepKernelParams":
        W = [np.asarray(w, dtype=float).reshape(-1, arch.dims[2 * i]) for i, w in enumerate(d["W"])]
        A = [np.asarray(a, dtype=float).reshape(-1, arch.n_centers) for a in d["A"]]
        Z1 = np.asarray(d["Z1"], dtype=float).reshape(-1, arch.d_in)
        p = cls(W, A, Z1)
        p.validate(arch)
        return p


def empty_params(arch: DeepKernelArchitecture) -> DeepKernelParams:
    return DeepKernelParams([], [], np.zeros((0, arch.d_in)))


def init_params(
    arch: DeepKernelArchitecture, train_inputs: np.ndarray, rng: SeededRng
) -> DeepKernelParams:
    if arch.shallow:
        return empty_params(arch)
    X = np.asarray(train_inputs, dtype=float)
    if X.shape[0] < arch.n_centers:
        raise TooFewTrainingPoints(
            f"{X.shape[0]} training inputs for {arch.n_centers} centers"
        )
    if X.shape[1] != arch.d_in:
        raise DimensionMismatch(f"inputs have dim {X.shape[1]}, expected {arch.d_in}")
    Z1 = X[rng.choice(X.shape[0], arch.n_centers, replace=False)].copy()
    mats = []
    for l, shape in enumerate(arch.param_shapes(), start=1):
        fan_in = arch.dims[l - 1] if l % 2 else arch.n_centers
        a = np.sqrt(1.0 / fan_in)
        mats.append(rng.uniform(-a, a, size=shape))
    return DeepKernelParams(mats[0::2], mats[1::2], Z1)


@dataclass
class Propagation:
    features: np.ndarray
    layer_outputs: list[np.ndarray] = field(default_factory=list)
    centers_per_layer: list[np.ndarray] = field(default_factory=list)


def propagate(
    arch: DeepKernelArchitecture, params: DeepKernelParams, X: np.ndarray
) -> Propagation:
    """Push inputs (and the first-layer centers) through layers ``1 .. L-1``.

    ``centers_per_layer[l - 1]`` holds the centers used by layer ``l``.
    """
    H = np.atleast_2d(np.asarray(X, dtype=float))
    if H.shape[1] != arch.d_in:
        raise DimensionMismatch(f"inputs have dim {H.shape[1]}, expected {arch.d_in}")
    if arch.shallow:
        return Propagation(H, [], [])
    C = params.Z1
    outputs, centers = [], []
    for l in range(1, arch.n_layers):
        centers.append(C)
        if l % 2:
            W = params.W[l // 2]
            H, C = ad.linear_forward(H, W), ad.linear_forward(C, W)
        else:
            A = params.A[l // 2 - 1]
            H, C = (
                ad.activation_forward(arch.activation, H, C, A),
                ad.activation_forward(arch.activation, C, C, A),
            )
        outputs.append(H)
    return Propagation(H, outputs, centers)


def features(arch: DeepKernelArchitecture, params: DeepKernelParams, X: np.ndarray) -> np.ndarray:
    return propagate(arch, params, X).features


def propagate_tape(arch: DeepKernelArchitecture, theta: Sequence[ad.Var], Z1: np.ndarray, X: np.ndarray) -> ad.Var:
    """Tape version of :func:`propagate`; returns the feature variable only."""
    H = ad.Var(np.asarray(X, dtype=float), op="const")
    if arch.shallow:
        return H
    C = ad.Var(Z1, op="const")
    for l in range(1, arch.n_layers):
        P = theta[l - 1]
        if l % 2:
            H, C = ad.linear_layer(H, P), ad.linear_layer(C, P)
        else:
            H, C = ad.activation(arch.activation, H, C, P), ad.activation(arch.activation, C, C, P)
    return H


def deep_kernel_eval(arch: DeepKernelArchitecture, params: DeepKernelParams, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (arch.d_in,) or y.shape != (arch.d_in,):
        raise DimensionMismatch(f"expected vectors of length {arch.d_in}")
    F = features(arch, params, np.vstack([x, y]))
    return eval_scalar(arch.outer, F[0], F[1])


def deep_gram(arch: DeepKernelArchitecture, params: DeepKernelParams, X, Y=None) -> np.ndarray:
    FX = features(arch, params, X)
    FY = FX if Y is None else features(arch, params, Y)
    return gram(arch.outer, FX, FY)


LossFn = Callable[[ad.Var, Sequence[ad.Var]], ad.Var]


def loss_gradient(
    arch: DeepKernelArchitecture,
    params: DeepKernelParams,
    X_batch: np.ndarray,
    loss: LossFn,
) -> tuple[float, list[np.ndarray]]:
    """Exact reverse-mode gradient of ``loss(features, theta)``.

    ``loss`` receives the batch feature variable and the list of trainable
    variables (W_1, A_2, W_3, ...). Returns the loss value and the gradients
    in the same order as :meth:`DeepKernelParams.trainable`.
    """

    def fn(*theta):
        F = propagate_tape(arch, theta, params.Z1, X_batch)
        return loss(F, theta)

    return ad.grad(fn, params.trainable())
