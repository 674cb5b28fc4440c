"""Kernel training on mini-batches with the leave-one-out (Rippa) loss and Adam."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import numerics
from .deepkernel import (
    DeepKernelArchitecture,
    DeepKernelParams,
    init_params,
    loss_gradient,
)
from .errors import DimensionMismatch
from .kernels import ScalarKernelSpec, gram

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 100
    gamma_rippa: float = 1e-3
    lr: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.adam_eps <= 0 or self.lr <= 0:
            raise ValueError("lr and adam_eps must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.gamma_rippa < 0 or self.epochs < 0:
            raise ValueError("gamma_rippa and epochs must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossHistory:
    epoch_losses: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.epoch_losses)

    def to_csv(self) -> str:
        lines = ["epoch,mean_loss"]
        lines += [f"{i},{v!r}" for i, v in enumerate(self.epoch_losses, start=1)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "LossHistory":
        rows = [r for r in text.strip().splitlines()[1:] if r]
        return cls([float(r.split(",")[1]) for r in rows])


def _check_batch(features: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    F = np.atleast_2d(np.asarray(features, dtype=float))
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if F.shape[0] != Y.shape[0]:
        raise DimensionMismatch(f"{F.shape[0]} feature rows vs {Y.shape[0]} target rows")
    if F.shape[0] < 2:
        raise ValueError("leave-one-out needs at least two points")
    return F, Y


def rippa_loss(
    features: np.ndarray, targets: np.ndarray, outer: ScalarKernelSpec, gamma: float
) -> tuple[float, np.ndarray]:
    """Mean squared leave-one-out residual from a single factorization.

    With ``a = K_g^{-1} Y`` and ``q = diag(K_g^{-1})`` the leave-one-out
    residual at point ``j`` (prediction minus target) is ``-a_j / q_j``.
    """
    F, Y = _check_batch(features, targets)
    K = gram(outer, F, F) + gamma * np.eye(F.shape[0])
    fac = numerics.cholesky(K)
    a = numerics.solve_spd(fac, Y)
    q = numerics.inverse_diagonal(fac)
    errors = -a / q[:, None]
    return float(np.sum(errors * errors) / F.shape[0]), errors


def loo_brute_force(
    features: np.ndarray, targets: np.ndarray, outer: ScalarKernelSpec, gamma: float
) -> tuple[float, np.ndarray]:
    """Leave-one-out residuals by refitting on every sub-batch."""
    F, Y = _check_batch(features, targets)
    B = F.shape[0]
    errors = np.empty_like(Y)
    for j in range(B):
        keep = np.arange(B) != j
        K = gram(outer, F[keep], F[keep]) + gamma * np.eye(B - 1)
        coeff = np.linalg.solve(K, Y[keep])
        errors[j] = gram(outer, F[j : j + 1], F[keep]) @ coeff - Y[j]
    return float(np.sum(errors * errors) / B), errors


def rippa_objective(F: ad.Var, Y: np.ndarray, outer: ScalarKernelSpec, gamma: float) -> ad.Var:
    """Tape version of :func:`rippa_loss`, used for gradients."""
    K = ad.add_diagonal(ad.gram(outer, F), gamma)
    a = ad.solve_spd(K, Y)
    q = ad.inverse_diagonal(K)
    e = -a / q[:, None]
    return ad.vsum(e * e) / F.shape[0]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new arrays and a new state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionMismatch("params, grads and optimizer state differ in length")
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p.append(p - config.lr * m_hat / (np.sqrt(v_hat) + config.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


def make_batches(n: int, batch_size: int, rng: numerics.SeededRng) -> list[np.ndarray]:
    """Shuffle ``0..n-1`` into disjoint batches; a final batch of one is merged."""
    perm = rng.permutation(n)
    batches = [perm[s : s + batch_size] for s in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def train_deep_kernel(
    data,
    arch: DeepKernelArchitecture,
    config: TrainConfig,
    params: DeepKernelParams | None = None,
) -> tuple[DeepKernelParams, LossHistory]:
    """Optimize the trainable matrices of ``arch`` on ``data`` (X, Y pairs).

    ``data`` is anything with ``X`` and ``Y`` array attributes. If ``params``
    is omitted, they are initialized from the seeded generator first.
    """
    X = np.asarray(data.X, dtype=float)
    Y = np.asarray(data.Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] < config.batch_size:
        raise ValueError(f"{X.shape[0]} samples is fewer than batch size {config.batch_size}")
    rng = numerics.SeededRng(config.seed)
    if params is None:
        params = init_params(arch, X, rng)
    history = LossHistory()
    if arch.shallow or config.epochs == 0:
        return params, history

    theta = [m.copy() for m in params.trainable()]
    state = AdamState.zeros_like(theta)
    outer, gamma = arch.outer, config.gamma_rippa
    for epoch in range(config.epochs):
        losses = []
        for idx in make_batches(X.shape[0], config.batch_size, rng):
            Yb = Y[idx]
            value, grads = loss_gradient(
                arch,
                params.with_trainable(theta),
                X[idx],
                lambda F, _t: rippa_objective(F, Yb, outer, gamma),
            )
            theta, state = adam_step(theta, grads, state, config)
            losses.append(value)
        history.epoch_losses.append(float(np.mean(losses)))
        if epoch % 50 == 0 or epoch == config.epochs - 1:
            log.debug("epoch %d mean loss %.4e", epoch + 1, history.epoch_losses[-1])
    return params.with_trainable(theta), history
