import numpy as np
import pytest

from dkvkoga.datagen import eval_model_problem, model_problem_dataset
from dkvkoga.deepkernel import DeepKernelArchitecture, DeepKernelParams
from dkvkoga.errors import DegenerateKernel, DimensionMismatch, EmptyTrainingSet
from dkvkoga.greedy import (
    DeepKernel,
    GreedyConfig,
    SurrogateModel,
    fit_greedy,
    fit_greedy_detailed,
    predict,
    residual_norms,
)
from dkvkoga.kernels import ScalarKernelSpec, gram

GAUSS1 = ScalarKernelSpec("gaussian", 1.0)
MAT1 = ScalarKernelSpec("matern1", 1.0)


def replay_selection(kernel_spec, X, Y, selected, gamma):
    """Refit from scratch after every step and check each pick was a maximal residual."""
    for n, idx in enumerate(selected):
        if n == 0:
            resid = np.linalg.norm(Y, axis=1)
        else:
            C = selected[:n]
            K = gram(kernel_spec, X[C], X[C]) + gamma * np.eye(n)
            coef = np.linalg.solve(K, Y[C])
            resid = np.linalg.norm(Y - gram(kernel_spec, X, X[C]) @ coef, axis=1)
        others = np.setdiff1d(np.arange(len(X)), selected[:n])
        assert resid[idx] >= resid[others].max() * (1 - 1e-9) - 1e-12, n


def test_zero_target_stops_immediately():
    X = np.random.default_rng(0).uniform(size=(10, 2))
    model, hist = fit_greedy(GAUSS1, X, np.zeros(10), GreedyConfig(n_max=5, f_tol=1e-6))
    assert model.n_centers == 0 and hist == []
    np.testing.assert_array_equal(predict(model, X), np.zeros((10, 1)))


def test_first_center_is_f2_peak():
    g = np.linspace(0, 1, 11)
    X = np.array([(a, b) for a in g for b in g])
    Y = eval_model_problem("f2", X)
    model, _ = fit_greedy(GAUSS1, X, Y, GreedyConfig(n_max=3))
    np.testing.assert_array_equal(model.centers[0], [0.5, 0.5])


def test_full_interpolation_three_points():
    X = np.array([[0.0, 0.0], [1.0, 0.3], [0.2, 0.9]])
    Y = np.array([[1.0, -1.0], [0.5, 2.0], [-0.3, 0.1]])
    model, _ = fit_greedy(MAT1, X, Y, GreedyConfig(n_max=3))
    assert model.n_centers == 3
    assert residual_norms(model, X, Y).max() < 1e-8


def test_predict_examples():
    empty = SurrogateModel(GAUSS1, np.zeros((0, 2)), np.zeros((0, 2)), 0.0, 2)
    np.testing.assert_array_equal(predict(empty, np.ones((4, 2))), np.zeros((4, 2)))
    Y = np.array([[1.0, 2.0], [3.0, -4.0]])
    np.testing.assert_allclose(residual_norms(empty, np.ones((2, 2)), Y), [np.sqrt(5), 5.0])
    c = np.array([[0.3, 0.7]])
    single = SurrogateModel(MAT1, c, np.array([[2.5, -1.0]]), 0.0, 2)
    np.testing.assert_array_equal(predict(single, c), [[2.5, -1.0]])
    X = np.random.default_rng(0).uniform(size=(5, 2))
    assert np.all(residual_norms(single, X, predict(single, X)) == 0)
    with pytest.raises(DimensionMismatch):
        predict(single, np.ones((2, 3)))


def test_two_layer_matches_shallow_gaussian():
    eps = 2.0
    data = model_problem_dataset("f2", 200, 1)
    arch = DeepKernelArchitecture(2, (2, 2), 1, MAT1, GAUSS1)
    deep = DeepKernel(arch, DeepKernelParams([eps * np.eye(2)], [], data.X[:1].copy()))
    cfg = GreedyConfig(n_max=30)
    m_deep, _ = fit_greedy(deep, data.X, data.Y, cfg)
    m_flat, _ = fit_greedy(ScalarKernelSpec("gaussian", eps), data.X, data.Y, cfg)
    assert m_deep.selected_indices == m_flat.selected_indices
    Xt = np.random.default_rng(2).uniform(size=(100, 2))
    assert np.max(np.abs(predict(m_deep, Xt) - predict(m_flat, Xt))) < 1e-12


@pytest.mark.parametrize("gamma", [0.0, 1e-3])
def test_selection_optimality_and_exactness(gamma):
    data = model_problem_dataset("f3", 300, 4)
    res = fit_greedy_detailed(MAT1, data.X, data.Y, GreedyConfig(n_max=40, gamma=gamma))
    sel = res.model.selected_indices
    assert len(set(sel)) == len(sel) == 40
    assert len(np.unique(res.model.centers, axis=0)) == 40
    replay_selection(MAT1, data.X, data.Y, sel, gamma)
    if gamma == 0.0:
        r = residual_norms(res.model, res.model.centers, data.Y[sel])
        assert r.max() < 1e-8 * max(1.0, np.abs(data.Y).max())


@pytest.mark.parametrize("gamma", [0.0, 1e-3])
def test_coefficients_match_direct_solve(gamma):
    data = model_problem_dataset("f4", 250, 3)
    Y = np.hstack([data.Y, np.sin(data.X[:, :1])])
    model, _ = fit_greedy(MAT1, data.X, Y, GreedyConfig(n_max=25, gamma=gamma))
    C = model.centers
    direct = np.linalg.solve(gram(MAT1, C, C) + gamma * np.eye(len(C)), Y[model.selected_indices])
    assert np.linalg.norm(model.coefficients - direct) <= 1e-9 * np.linalg.norm(direct)


def test_span_target_converges():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(150, 2))
    Y = gram(MAT1, X, X[:6]) @ rng.normal(size=(6, 1))
    res = fit_greedy_detailed(MAT1, X, Y, GreedyConfig(n_max=150, f_tol=1e-6))
    assert res.stop_reason == "f_tol"
    assert residual_norms(res.model, X, Y).max() < 1e-6


def test_history_is_max_residual_before_each_step():
    data = model_problem_dataset("f2", 100, 0)
    model, hist = fit_greedy(GAUSS1, data.X, data.Y, GreedyConfig(n_max=10))
    assert len(hist) == model.n_centers == 10
    assert hist[0] == pytest.approx(np.abs(data.Y).max())


def test_stability_guard_skips_duplicates():
    X = np.array([[0.0], [0.0], [1.0]])
    Y = np.array([1.0, 1.0, 0.5])
    res = fit_greedy_detailed(GAUSS1, X, Y, GreedyConfig(n_max=3))
    assert res.model.n_centers == 2
    assert res.stop_reason in ("stability", "f_tol", "exhausted")
    assert np.all(np.isfinite(res.model.coefficients))


def test_degenerate_first_pivot():
    with pytest.raises(DegenerateKernel):
        fit_greedy(GAUSS1, np.zeros((2, 1)), np.ones(2), GreedyConfig(stability_tol=2.0))


def test_errors():
    with pytest.raises(EmptyTrainingSet):
        fit_greedy(GAUSS1, np.zeros((0, 2)), np.zeros((0, 1)), GreedyConfig())
    with pytest.raises(DimensionMismatch):
        fit_greedy(GAUSS1, np.zeros((3, 2)), np.zeros((2, 1)), GreedyConfig())
    with pytest.raises(ValueError):
        GreedyConfig(n_max=0)
