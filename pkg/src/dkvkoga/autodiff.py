"""Minimal define-by-run reverse-mode differentiation over numpy arrays.

Only the operations needed for deep-kernel losses are provided: products,
broadcasting arithmetic, reductions, kernel Gram assembly, the componentwise
kernel activation, and SPD solves / inverse diagonals carrying their analytic
adjoints. Anything else raises :class:`GraphConstructionError`.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import numerics
from .errors import GraphConstructionError
from .kernels import ScalarKernelSpec, sq_distances


class Var:
    __array_priority__ = 1000

    def __init__(self, value, parents=(), op: str = "leaf"):
        self.value = np.asarray(value, dtype=float)
        self.parents: tuple[tuple["Var", Callable[[np.ndarray], np.ndarray]], ...] = tuple(parents)
        self.op = op
        self.grad: np.ndarray | None = None
        self._factor: numerics.CholeskyFactor | None = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(op={self.op}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        if isinstance(p, Var):
            raise GraphConstructionError("variable exponents are not supported")
        if p == 2:
            return mul(self, self)
        raise GraphConstructionError(f"only squaring is supported, got power {p!r}")

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(_lift(other), self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)

    def backward(self) -> None:
        if self.value.size != 1:
            raise GraphConstructionError("backward() needs a scalar output")
        order = _toposort(self)
        for v in order:
            v.grad = None
        self.grad = np.ones_like(self.value)
        for v in reversed(order):
            if v.grad is None:
                continue
            for parent, fn in v.parents:
                g = fn(v.grad)
                parent.grad = g if parent.grad is None else parent.grad + g


def _toposort(root: Var) -> list[Var]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _lift(x) -> Var:
    if isinstance(x, Var):
        return x
    if isinstance(x, (int, float, np.floating, np.integer, np.ndarray)):
        return Var(x, op="const")
    raise GraphConstructionError(f"cannot place {type(x).__name__} on the tape")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    return Var(
        a.value + b.value,
        [(a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(g, b.shape))],
        "add",
    )


def neg(a) -> Var:
    a = _lift(a)
    return Var(-a.value, [(a, lambda g: -g)], "neg")


def mul(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    return Var(
        a.value * b.value,
        [
            (a, lambda g: _unbroadcast(g * b.value, a.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.shape)),
        ],
        "mul",
    )


def div(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    out = a.value / b.value
    return Var(
        out,
        [
            (a, lambda g: _unbroadcast(g / b.value, a.shape)),
            (b, lambda g: _unbroadcast(-g * out / b.value, b.shape)),
        ],
        "div",
    )


def matmul(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise GraphConstructionError("matmul expects 2-D operands")
    return Var(
        a.value @ b.value,
        [(a, lambda g: g @ b.value.T), (b, lambda g: a.value.T @ g)],
        "matmul",
    )


def transpose(a) -> Var:
    a = _lift(a)
    return Var(a.value.T, [(a, lambda g: g.T)], "transpose")


def getitem(a, idx) -> Var:
    a = _lift(a)

    def back(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return out

    return Var(a.value[idx], [(a, back)], "getitem")


def vsum(a) -> Var:
    a = _lift(a)
    return Var(a.value.sum(), [(a, lambda g: np.full(a.shape, float(g)))], "sum")


def linear_layer(H, W) -> Var:
    """``H @ W.T`` evaluated with the same kernel as :func:`linear_forward`."""
    H, W = _lift(H), _lift(W)
    return Var(
        linear_forward(H.value, W.value),
        [(H, lambda g: g @ W.value), (W, lambda g: g.T @ H.value)],
        "linear",
    )


def linear_forward(H: np.ndarray, W: np.ndarray) -> np.ndarray:
    # einsum keeps every output entry an independent dot product, so a row's
    # value does not depend on which other rows are in the batch
    return np.einsum("nk,dk->nd", H, W)


def activation_forward(
    spec: ScalarKernelSpec, H: np.ndarray, C: np.ndarray, A: np.ndarray
) -> np.ndarray:
    """``out[n, j] = sum_i k_s(H[n, j], C[i, j]) * A[j, i]``."""
    out = np.empty((H.shape[0], C.shape[1]))
    step = max(1, (1 << 21) // max(1, C.size))
    for s in range(0, H.shape[0], step):
        delta = H[s : s + step, None, :] - C[None, :, :]
        out[s : s + step] = np.einsum("nmd,dm->nd", spec.profile(np.abs(delta)), A)
    return out


def activation(spec: ScalarKernelSpec, H, C, A) -> Var:
    H, C, A = _lift(H), _lift(C), _lift(A)
    delta = H.value[:, None, :] - C.value[None, :, :]
    K, S = spec.profile_and_slope(np.abs(delta))
    out = np.einsum("nmd,dm->nd", K, A.value)
    # dK[n, m, j] = d k_s(h_nj - c_mj) / d h_nj, contracted with A up front
    dKA = delta * S * A.value.T[None, :, :]

    def back_h(g):
        return g * dKA.sum(axis=1)

    def back_c(g):
        return -np.einsum("nd,nmd->md", g, dKA)

    def back_a(g):
        return np.einsum("nd,nmd->dm", g, K)

    return Var(out, [(H, back_h), (C, back_c), (A, back_a)], "activation")


def gram(spec: ScalarKernelSpec, F, G=None) -> Var:
    """Scalar-kernel Gram matrix ``K[i, j] = k(F_i, G_j)``; ``G=None`` means ``F``."""
    F = _lift(F)
    same = G is None
    G = F if same else _lift(G)
    r = np.sqrt(np.maximum(sq_distances(F.value, G.value), 0.0))
    K = spec.profile(r)
    S = spec.radial_slope(r)

    def back_f(g):
        W = g * S
        return W.sum(axis=1)[:, None] * F.value - W @ G.value

    def back_g(g):
        W = g * S
        return W.sum(axis=0)[:, None] * G.value - W.T @ F.value

    if same:
        return Var(K, [(F, lambda g: back_f(g) + back_g(g))], "gram")
    return Var(K, [(F, back_f), (G, back_g)], "gram")


def add_diagonal(K, gamma: float) -> Var:
    K = _lift(K)
    return Var(K.value + gamma * np.eye(K.shape[0]), [(K, lambda g: g)], "add_diag")


def _factor_of(A: Var, max_jitter: float) -> numerics.CholeskyFactor:
    if A._factor is None:
        A._factor = numerics.cholesky(A.value, max_jitter=max_jitter)
    return A._factor


def solve_spd(A, B, max_jitter: float = 1e-6) -> Var:
    """``X = A^{-1} B`` with adjoint ``B_bar = A^{-1} X_bar``, ``A_bar = -B_bar X^T``."""
    A, B = _lift(A), _lift(B)
    fac = _factor_of(A, max_jitter)
    X = numerics.solve_spd(fac, B.value)
    cache = {}

    def b_bar(g):
        key = id(g)
        if key not in cache:
            cache.clear()
            cache[key] = numerics.solve_spd(fac, g)
        return cache[key]

    def back_a(g):
        Bb = b_bar(g)
        Ab = -Bb @ X.T
        return 0.5 * (Ab + Ab.T)

    return Var(X, [(A, back_a), (B, b_bar)], "solve_spd")


def inverse_diagonal(A, max_jitter: float = 1e-6) -> Var:
    """``q = diag(A^{-1})`` with adjoint ``A_bar = -A^{-1} diag(q_bar) A^{-1}``."""
    A = _lift(A)
    fac = _factor_of(A, max_jitter)
    q = numerics.inverse_diagonal(fac)

    def back(g):
        Ainv = numerics.solve_spd(fac, np.eye(fac.n))
        return -(Ainv * g[None, :]) @ Ainv

    return Var(q, [(A, back)], "inverse_diagonal")


def grad(fn: Callable[..., Var], arrays: Sequence[np.ndarray]) -> tuple[float, list[np.ndarray]]:
    """Value and gradient of a scalar tape function w.r.t. each input array."""
    leaves = [Var(np.array(a, dtype=float, copy=True)) for a in arrays]
    out = fn(*leaves)
    if isinstance(out, (int, float, np.floating, np.integer)):
        return float(out), [np.zeros_like(v.value) for v in leaves]
    if not isinstance(out, Var):
        raise GraphConstructionError("loss function must return a tape variable")
    out.backward()
    grads = [np.zeros_like(v.value) if v.grad is None else v.grad for v in leaves]
    return float(out.value), grads
