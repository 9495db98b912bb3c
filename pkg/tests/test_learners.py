import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridband.errors import ConfigError
from gridband.learners import (
    POINT_KINDS,
    fit_point,
    fit_qrf,
    kkt_gradients,
    load_model,
    predict_point,
    qrf_quantile,
    qrf_quantile_many,
    qrf_weights,
    save_model,
)
from gridband.quantile import empirical_quantile
from tests.conftest import make_design


class TestRegistry:
    def test_unknown_kind(self, linear_data):
        with pytest.raises(ConfigError):
            fit_point("svm", linear_data, None, 0)

    def test_empty_design(self):
        dm = make_design(np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(ConfigError):
            fit_point("lear", dm, None, 0)

    @pytest.mark.parametrize("kind", POINT_KINDS)
    def test_every_kind_beats_the_mean_on_train(self, kind, rng):
        X = rng.normal(size=(200, 3))
        y = X @ np.array([2.0, -1.0, 0.5]) + 0.1 * rng.normal(size=200)
        dm = make_design(X, y)
        model = fit_point(kind, dm, {}, seed=5)
        pred = predict_point(model, dm.rows)
        mse = float(np.mean((pred - y) ** 2))
        baseline = float(np.var(y))
        assert mse < baseline

    @pytest.mark.parametrize("kind", POINT_KINDS)
    def test_save_load_round_trip(self, kind, rng, tmp_path):
        X = rng.normal(size=(60, 3))
        y = rng.normal(size=60)
        model = fit_point(kind, make_design(X, y), {}, seed=3)
        path = tmp_path / f"{kind}.npz"
        save_model(model, path)
        back = load_model(path)
        Q = rng.normal(size=(15, 3))
        assert np.array_equal(predict_point(model, Q), predict_point(back, Q))


class TestLear:
    def test_zero_penalty_recovers_exact_line(self, linear_data):
        model = fit_point("lear", linear_data, {"lambda": 0.0}, 0)
        assert np.allclose(model.coef, [3.0, -1.0, 0.5], atol=1e-6)
        assert model.intercept == pytest.approx(2.0, abs=1e-6)

    def test_huge_penalty_collapses_to_mean(self, linear_data):
        model = fit_point("lear", linear_data, {"lambda": 1e9}, 0)
        assert np.allclose(model.coef, 0.0)
        pred = predict_point(model, linear_data.rows)
        assert np.allclose(pred, np.mean(linear_data.targets))

    def test_kkt_conditions_hold(self, rng):
        X = rng.normal(size=(120, 5))
        y = X @ np.array([3.0, 0.0, -2.0, 0.0, 1.0]) + 0.5 * rng.normal(size=120)
        dm = make_design(X, y)
        lam = 5.0
        model = fit_point("lear", dm, {"lambda": lam}, 0)
        g = kkt_gradients(model, dm.rows, dm.targets)
        # standardized coefs drive the subgradient test
        sd = dm.rows.std(axis=0)
        beta_std = model.coef * sd
        tol = 1e-6 * max(1.0, float(np.abs(g).max()))
        for j in range(5):
            if abs(beta_std[j]) > 1e-10:
                assert abs(g[j] + lam * np.sign(beta_std[j])) < tol
            else:
                assert abs(g[j]) <= lam + tol

    def test_grid_selection_runs(self, rng):
        X = rng.normal(size=(100, 4))
        y = X @ np.array([1.0, 0.0, 0.0, 2.0]) + 0.1 * rng.normal(size=100)
        model = fit_point("lear", make_design(X, y), {}, 0)
        assert model.lam > 0

    def test_zero_variance_column_gets_zero_coef(self, rng):
        X = rng.normal(size=(50, 2))
        X[:, 1] = 7.0
        y = 2.0 * X[:, 0] + 1.0
        model = fit_point("lear", make_design(X, y), {"lambda": 0.0}, 0)
        assert model.coef[1] == 0.0
        assert model.coef[0] == pytest.approx(2.0, abs=1e-6)


class TestKnn:
    def test_k1_memorizes(self, rng):
        X = rng.normal(size=(40, 2))
        y = rng.normal(size=40)
        model = fit_point("knn", make_design(X, y), {"k": 1}, 0)
        assert np.array_equal(predict_point(model, X), y)

    def test_k_equals_n_predicts_global_mean(self, rng):
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = fit_point("knn", make_design(X, y), {"k": 30}, 0)
        pred = predict_point(model, rng.normal(size=(7, 2)))
        assert np.allclose(pred, np.mean(y), rtol=1e-12)

    def test_k_bounds(self, linear_data):
        with pytest.raises(ConfigError):
            fit_point("knn", linear_data, {"k": 0}, 0)
        with pytest.raises(ConfigError):
            fit_point("knn", linear_data, {"k": 10_000}, 0)

    def test_interior_query_uses_local_neighbours(self):
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        y = np.array([0.0, 1.0, 10.0, 11.0])
        model = fit_point("knn", make_design(X, y), {"k": 2}, 0)
        assert predict_point(model, np.array([[0.4]]))[0] == pytest.approx(0.5)
        assert predict_point(model, np.array([[10.6]]))[0] == pytest.approx(10.5)


class TestForest:
    def test_depth_zero_without_bootstrap_is_the_mean(self, rng):
        X = rng.normal(size=(50, 2))
        y = rng.normal(size=50)
        dm = make_design(X, y)
        model = fit_point(
            "forest", dm, {"trees": 3, "depth": 0, "bootstrap": False}, seed=1
        )
        pred = predict_point(model, X)
        assert np.allclose(pred, np.mean(y), rtol=1e-12)

    def test_same_seed_same_forest(self, rng):
        X = rng.normal(size=(80, 3))
        y = rng.normal(size=80)
        dm = make_design(X, y)
        a = fit_point("forest", dm, {"trees": 10, "depth": 4}, seed=9)
        b = fit_point("forest", dm, {"trees": 10, "depth": 4}, seed=9)
        Q = rng.normal(size=(20, 3))
        assert np.array_equal(predict_point(a, Q), predict_point(b, Q))

    def test_different_seed_differs(self, rng):
        X = rng.normal(size=(80, 3))
        y = rng.normal(size=80)
        dm = make_design(X, y)
        a = fit_point("forest", dm, {"trees": 10, "depth": 4}, seed=1)
        b = fit_point("forest", dm, {"trees": 10, "depth": 4}, seed=2)
        Q = rng.normal(size=(20, 3))
        assert not np.array_equal(predict_point(a, Q), predict_point(b, Q))


class TestBoost:
    def test_zero_rate_predicts_the_mean(self, rng):
        X = rng.normal(size=(60, 2))
        y = rng.normal(size=60)
        dm = make_design(X, y)
        model = fit_point("boost", dm, {"trees": 5, "rate": 0.0}, seed=0)
        assert np.allclose(predict_point(model, X), np.mean(y), rtol=1e-12)

    def test_single_full_tree_memorizes(self, rng):
        X = rng.normal(size=(32, 2))
        y = rng.normal(size=32)
        dm = make_design(X, y)
        # depth must cover the worst case of peeling one row per level,
        # since the split criterion does not promise balanced trees
        model = fit_point(
            "boost", dm, {"trees": 1, "rate": 1.0, "depth": 32, "min_leaf": 1}, seed=0
        )
        assert np.allclose(predict_point(model, X), y, atol=1e-9)

    def test_more_rounds_reduce_train_error(self, rng):
        X = rng.normal(size=(150, 3))
        y = np.sin(X[:, 0]) + 0.5 * X[:, 1]
        dm = make_design(X, y)
        short = fit_point("boost", dm, {"trees": 5}, seed=0)
        long = fit_point("boost", dm, {"trees": 80}, seed=0)
        err_short = np.mean((predict_point(short, X) - y) ** 2)
        err_long = np.mean((predict_point(long, X) - y) ** 2)
        assert err_long < err_short


class TestQrf:
    def test_constant_target(self, rng):
        X = rng.normal(size=(40, 2))
        y = np.full(40, 3.5)
        model = fit_qrf(make_design(X, y), {"trees": 5, "depth": 3}, 0)
        q = qrf_quantile_many(model, X[:5], [0.1, 0.5, 0.9])
        assert np.array_equal(q, np.full((5, 3), 3.5))

    def test_single_stump_equals_empirical_quantile(self, rng):
        # one depth-0 tree on the full sample puts every row in one leaf with
        # equal weight, so the forest quantile is the plain empirical one
        X = rng.normal(size=(25, 2))
        y = rng.normal(size=25)
        model = fit_qrf(
            make_design(X, y), {"trees": 1, "depth": 0, "subsample": 1.0}, 0
        )
        for p in (0.1, 0.5, 0.9):
            got = qrf_quantile(model, X[:3], p, "conformal")
            want = empirical_quantile(y, p, "conformal")
            assert np.array_equal(got, np.full(3, want))

    def test_weights_rowsum_to_one(self, rng):
        X = rng.normal(size=(60, 3))
        y = rng.normal(size=60)
        model = fit_qrf(make_design(X, y), {"trees": 10, "depth": 4}, 1)
        W = qrf_weights(model, X[:8])
        assert np.allclose(W.sum(axis=1), 1.0)
        assert np.all(W >= 0)

    def test_levels_are_monotone(self, rng):
        X = rng.normal(size=(80, 3))
        y = rng.normal(size=80)
        model = fit_qrf(make_design(X, y), {"trees": 15, "depth": 5}, 2)
        q = qrf_quantile_many(model, rng.normal(size=(10, 3)), np.linspace(0.1, 0.9, 9))
        assert np.all(np.diff(q, axis=1) >= 0)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_monotone_for_any_seed(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = fit_qrf(make_design(X, y), {"trees": 4, "depth": 3}, seed)
        q = qrf_quantile_many(model, X[:4], [0.2, 0.5, 0.8])
        assert np.all(np.diff(q, axis=1) >= 0)

    def test_min_leaf_larger_than_sample_rejected(self, rng):
        X = rng.normal(size=(10, 2))
        y = rng.normal(size=10)
        with pytest.raises(ConfigError):
            fit_qrf(make_design(X, y), {"min_leaf": 11}, 0)

    def test_save_load_round_trip(self, rng, tmp_path):
        X = rng.normal(size=(50, 2))
        y = rng.normal(size=50)
        model = fit_qrf(make_design(X, y), {"trees": 6, "depth": 4}, 7)
        save_model(model, tmp_path / "qrf.npz")
        back = load_model(tmp_path / "qrf.npz")
        Q = rng.normal(size=(9, 2))
        assert np.array_equal(
            qrf_quantile_many(model, Q, [0.1, 0.5, 0.9]),
            qrf_quantile_many(back, Q, [0.1, 0.5, 0.9]),
        )

    def test_learns_conditional_location(self, rng):
        # two clusters with different centers: quantiles must follow the cluster
        n = 200
        x = np.concatenate([np.zeros(n // 2), np.ones(n // 2)])
        y = np.concatenate(
            [rng.normal(0.0, 0.1, n // 2), rng.normal(10.0, 0.1, n // 2)]
        )
        X = x[:, None]
        model = fit_qrf(make_design(X, y), {"trees": 20, "depth": 3}, 0)
        lo = qrf_quantile(model, np.array([[0.0]]), 0.5)[0]
        hi = qrf_quantile(model, np.array([[1.0]]), 0.5)[0]
        assert lo == pytest.approx(0.0, abs=0.5)
        assert hi == pytest.approx(10.0, abs=0.5)
