import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dkvkoga import autodiff as ad
from dkvkoga.deepkernel import (
    DeepKernelArchitecture,
    DeepKernelParams,
    deep_gram,
    deep_kernel_eval,
    features,
    init_params,
    loss_gradient,
    propagate,
)
from dkvkoga.errors import DimensionMismatch, GraphConstructionError, TooFewTrainingPoints
from dkvkoga.kernels import FAMILIES, ScalarKernelSpec, eval_scalar, gram
from dkvkoga.numerics import SeededRng, finite_diff_gradient
from dkvkoga.training import rippa_objective

GAUSS1 = ScalarKernelSpec("gaussian", 1.0)
MAT1 = ScalarKernelSpec("matern1", 1.0)


def arch_of(L, d_in=3, width=4, M=5, act=MAT1, outer=MAT1, out_dim=1):
    return DeepKernelArchitecture.build(L, d_in, width, act, outer, n_centers=M, out_dim=out_dim)


def random_params(arch, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    mats = [rng.uniform(-scale, scale, size=s) for s in arch.param_shapes()]
    Z1 = rng.uniform(size=(arch.n_centers, arch.d_in))
    return DeepKernelParams(mats[0::2], mats[1::2], Z1)


class TestArchitecture:
    def test_layer_count_validation(self):
        with pytest.raises(ValueError):
            arch_of(3)
        with pytest.raises(ValueError):
            DeepKernelArchitecture(4, (3, 4, 5, 5), 5, MAT1, MAT1)

    def test_shapes(self):
        a = arch_of(6, d_in=3, width=4, M=5)
        assert a.param_shapes() == [(4, 3), (4, 5), (4, 4), (4, 5), (4, 4)]
        assert a.feature_dim == 4
        assert DeepKernelArchitecture.from_dict(a.to_dict()) == a

    def test_shallow(self):
        a = arch_of(1)
        assert a.shallow and a.param_shapes() == []
        X = np.random.default_rng(0).normal(size=(4, 3))
        np.testing.assert_array_equal(features(a, init_params(a, X, SeededRng(0)), X), X)


class TestInit:
    def test_all_inputs_as_centers_is_permutation(self):
        X = np.random.default_rng(0).uniform(size=(5, 3))
        p = init_params(arch_of(2, M=5), X, SeededRng(1))
        assert sorted(map(tuple, p.Z1)) == sorted(map(tuple, X))

    def test_deterministic(self):
        X = np.random.default_rng(0).uniform(size=(20, 3))
        a = arch_of(4)
        p, q = init_params(a, X, SeededRng(3)), init_params(a, X, SeededRng(3))
        for m1, m2 in zip(p.trainable(), q.trainable()):
            np.testing.assert_array_equal(m1, m2)
        np.testing.assert_array_equal(p.Z1, q.Z1)

    def test_scalar_bound(self):
        a = DeepKernelArchitecture(2, (1, 1), 3, MAT1, MAT1)
        p = init_params(a, np.arange(5.0)[:, None], SeededRng(0))
        assert p.W[0].shape == (1, 1) and abs(p.W[0][0, 0]) <= 1

    def test_fan_in_bounds(self):
        a = arch_of(4, d_in=3, width=6, M=9)
        p = init_params(a, np.random.default_rng(0).uniform(size=(30, 3)), SeededRng(0))
        assert np.abs(p.W[0]).max() <= np.sqrt(1 / 3)
        assert np.abs(p.A[0]).max() <= np.sqrt(1 / 9)

    def test_too_few_points(self):
        with pytest.raises(TooFewTrainingPoints):
            init_params(arch_of(2, M=10), np.zeros((4, 3)), SeededRng(0))


class TestPropagation:
    def test_two_layer_is_linear(self):
        a = arch_of(2)
        p = random_params(a, 0)
        X = np.random.default_rng(1).normal(size=(7, 3))
        np.testing.assert_allclose(features(a, p, X), X @ p.W[0].T, rtol=1e-14)

    def test_zero_activation_coefficients(self):
        a = arch_of(4)
        p = random_params(a, 0)
        p.A[0][:] = 0.0
        prop = propagate(a, p, np.random.default_rng(1).normal(size=(6, 3)))
        assert np.all(prop.layer_outputs[1] == 0) and np.all(prop.features == 0)

    def test_one_dimensional_hand_trace(self):
        a = DeepKernelArchitecture(4, (1, 1, 1, 1), 1, GAUSS1, MAT1)
        w1, a2, w3, z1, x = 0.7, -1.3, 2.1, 0.2, 0.9
        p = DeepKernelParams([np.array([[w1]]), np.array([[w3]])], [np.array([[a2]])], np.array([[z1]]))
        expected = w3 * np.exp(-((w1 * x - w1 * z1) ** 2)) * a2
        assert abs(features(a, p, np.array([[x]]))[0, 0] - expected) < 1e-14

    def test_centers_are_propagated_images(self):
        a = arch_of(6)
        p = random_params(a, 4)
        prop = propagate(a, p, p.Z1)
        for l in range(2, a.n_layers):
            assert np.array_equal(prop.centers_per_layer[l - 1], prop.layer_outputs[l - 2])

    def test_row_independence(self):
        # a point's features do not depend on what else is in the batch
        a = arch_of(6)
        p = random_params(a, 5)
        X = np.random.default_rng(6).uniform(size=(40, 3))
        full = features(a, p, X)
        for i in (0, 17, 39):
            assert np.array_equal(features(a, p, X[i : i + 1])[0], full[i])

    def test_dimension_check(self):
        a = arch_of(2)
        with pytest.raises(DimensionMismatch):
            features(a, random_params(a, 0), np.zeros((2, 4)))


class TestDeepKernel:
    def test_unit_diagonal(self):
        a = arch_of(4)
        p = random_params(a, 1)
        x = np.array([0.1, 0.5, -0.3])
        assert deep_kernel_eval(a, p, x, x) == 1.0

    @pytest.mark.parametrize("eps", [0.3, 1.0, 2.5])
    def test_two_layer_reduction(self, eps):
        rng = np.random.default_rng(0)
        for d in (1, 3):
            a = DeepKernelArchitecture(2, (d, d), 1, MAT1, GAUSS1)
            p = DeepKernelParams([eps * np.eye(d)], [], np.zeros((1, d)))
            shallow = ScalarKernelSpec("gaussian", eps)
            for _ in range(20):
                x, y = rng.normal(size=(2, d))
                assert abs(deep_kernel_eval(a, p, x, y) - eval_scalar(shallow, x, y)) < 1e-14

    def test_symmetry(self):
        a = arch_of(4)
        p = random_params(a, 2)
        rng = np.random.default_rng(3)
        for _ in range(10):
            x, y = rng.normal(size=(2, 3))
            assert deep_kernel_eval(a, p, x, y) == deep_kernel_eval(a, p, y, x)

    @settings(max_examples=25, deadline=None)
    @given(L=st.sampled_from([2, 4, 6]), fam=st.sampled_from(FAMILIES), n=st.integers(2, 8), seed=st.integers(0, 999))
    def test_positive_semidefinite(self, L, fam, n, seed):
        spec = ScalarKernelSpec(fam, 1.0)
        a = arch_of(L, act=spec, outer=spec)
        p = random_params(a, seed)
        X = np.random.default_rng(seed + 1).uniform(size=(n, 3))
        assert np.linalg.eigvalsh(deep_gram(a, p, X)).min() >= -1e-9

    def test_duplicate_component_degeneracy(self):
        # the activation kernel acts per component; two points sharing one
        # coordinate give a singular Gram block in that coordinate
        z = np.array([[0.3, 1.0], [0.3, -2.0]])
        for j, singular in ((0, True), (1, False)):
            block = gram(MAT1, z[:, j : j + 1], z[:, j : j + 1])
            lam = np.linalg.eigvalsh(block).min()
            assert (abs(lam) < 1e-15) == singular


def _rippa_fd_check(L, fam, d, M, B, seed, scale):
    spec = ScalarKernelSpec(fam, 1.0)
    a = arch_of(L, d_in=d, width=d, M=M, act=spec, outer=spec)
    p = random_params(a, seed, scale)
    rng = np.random.default_rng(seed + 100)
    X, Y = rng.uniform(size=(B, d)), rng.normal(size=(B, 2))
    value, grads = loss_gradient(a, p, X, lambda F, _t: rippa_objective(F, Y, spec, 1e-3))
    flat = np.concatenate([g.ravel() for g in grads])
    shapes = [m.shape for m in p.trainable()]

    def f(theta):
        mats, k = [], 0
        for s in shapes:
            n = int(np.prod(s))
            mats.append(theta[k : k + n].reshape(s))
            k += n
        F = features(a, p.with_trainable(mats), X)
        return float(rippa_objective(ad.Var(F), Y, spec, 1e-3).value)

    theta0 = np.concatenate([m.ravel() for m in p.trainable()])
    assert value == pytest.approx(f(theta0), rel=1e-12)
    fd = finite_diff_gradient(f, theta0, 1e-5)
    return np.linalg.norm(flat - fd) / np.linalg.norm(fd)


class TestLossGradient:
    def test_constant_loss(self):
        a = arch_of(4)
        p = random_params(a, 0)
        _, grads = loss_gradient(a, p, np.zeros((3, 3)), lambda F, t: 3.0)
        assert all(np.all(g == 0) for g in grads)

    def test_quadratic_in_weights(self):
        a = arch_of(4)
        p = random_params(a, 0)
        val, grads = loss_gradient(a, p, np.zeros((3, 3)), lambda F, t: ad.vsum(t[0] * t[0]))
        np.testing.assert_allclose(grads[0], 2 * p.W[0], rtol=1e-15)
        assert all(np.all(g == 0) for g in grads[1:])
        assert val == pytest.approx(np.sum(p.W[0] ** 2))

    def test_four_layer_rippa_fd(self):
        assert _rippa_fd_check(4, "matern1", 3, 5, 8, 0, 1.0) < 1e-4

    @pytest.mark.parametrize("L", [2, 4, 6])
    @pytest.mark.parametrize("fam", FAMILIES)
    def test_rippa_fd_all(self, L, fam):
        assert _rippa_fd_check(L, fam, 3, 6, 9, 11 * L, 2.0) < 1e-4

    def test_tape_rejects_unsupported(self):
        v = ad.Var(np.ones(2))
        with pytest.raises(GraphConstructionError):
            v ** 3
        with pytest.raises(GraphConstructionError):
            ad.vsum(v) + "x"
        with pytest.raises(GraphConstructionError):
            ad.grad(lambda x: np.ones(2), [np.ones(2)])
