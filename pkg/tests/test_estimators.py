from __future__ import annotations

import numpy as np
import pytest

from bmm2d import (
    AdditiveGaussian,
    ArParams,
    ContaminationSpec,
    DegenerateInputError,
    DomainError,
    GaussianNoise,
    Grid2D,
    OptimizerConfig,
    bmm_stages,
    contaminate,
    estimate,
    estimate_bmm,
    estimate_gm,
    estimate_ls,
    estimate_m,
    gm_weights,
    is_feasible,
    minimize_feasible,
    rho2,
    ar_residuals,
    simulate_ar2d,
)


@pytest.fixture(scope="module")
def field57(std_params):
    return simulate_ar2d(std_params, 57, 57, GaussianNoise(), 50, seed=404)


@pytest.fixture(scope="module")
def dirty57(field57):
    spec = ContaminationSpec(alpha=0.10, kind=AdditiveGaussian(50.0))
    return contaminate(field57, spec, seed=405).z


class TestOptimizerConfig:
    def test_validation(self):
        with pytest.raises(DomainError):
            OptimizerConfig(restarts=0)
        with pytest.raises(DomainError):
            OptimizerConfig(max_evals=0)
        with pytest.raises(DomainError):
            OptimizerConfig(tolerance=0.0)
        with pytest.raises(DomainError):
            OptimizerConfig(zeta=1.5)


class TestMinimizeFeasible:
    def test_interior_quadratic(self):
        target = np.array([0.2, -0.1, 0.15])

        def obj(p: ArParams) -> float:
            return float(np.sum((p.as_array() - target) ** 2))

        best = minimize_feasible(obj, ArParams(0.0, 0.0, 0.0), OptimizerConfig(tolerance=1e-8))
        np.testing.assert_allclose(best.as_array(), target, atol=1e-4)

    def test_exterior_target_lands_on_boundary(self):
        target = np.array([1.0, 1.0, 1.0])

        def obj(p: ArParams) -> float:
            return float(np.sum((p.as_array() - target) ** 2))

        best = minimize_feasible(obj, ArParams(0.0, 0.0, 0.0), OptimizerConfig(tolerance=1e-8))
        assert is_feasible(best)
        assert best.l1() == pytest.approx(0.99, abs=1e-3)

    def test_result_always_feasible(self):
        def obj(p: ArParams) -> float:
            return -p.l1()  # pushes outward

        best = minimize_feasible(obj, ArParams(0.3, 0.3, 0.3))
        assert is_feasible(best)


class TestLs:
    def test_matches_lstsq_oracle(self, field57):
        v = field57.values
        t = v[1:, 1:].ravel()
        a = np.column_stack(
            [v[:-1, 1:].ravel(), v[1:, :-1].ravel(), v[:-1, :-1].ravel()]
        )
        oracle, *_ = np.linalg.lstsq(a, t, rcond=None)
        res = estimate_ls(field57)
        np.testing.assert_allclose(res.params.as_array(), oracle, atol=1e-10)
        resid = t - a @ oracle
        assert res.objective == pytest.approx(float(np.mean(resid**2)), rel=1e-12)
        assert res.scale == pytest.approx(float(np.std(resid)), rel=1e-12)

    def test_recovers_truth_on_clean_field(self, std_params):
        y = simulate_ar2d(std_params, 150, 150, GaussianNoise(), 50, seed=7)
        res = estimate_ls(y)
        np.testing.assert_allclose(res.params.as_array(), std_params.as_array(), atol=0.03)
        assert res.branch == "na"
        assert res.warning is None

    def test_constant_field_degenerate(self):
        with pytest.raises(DegenerateInputError):
            estimate_ls(Grid2D(np.full((20, 20), 3.7)))

    def test_two_by_two_degenerate(self):
        with pytest.raises(DegenerateInputError):
            estimate_ls(Grid2D(np.array([[1.0, 2.0], [3.0, 4.0]])))

    def test_infeasible_estimate_warns_unprojected(self):
        rng = np.random.default_rng(55)
        rows = np.cumsum(0.02 * rng.standard_normal((40, 40)), axis=0) + 10.0
        res = estimate_ls(Grid2D(rows))
        assert res.warning is not None
        assert not is_feasible(res.params)


class TestM:
    def test_close_to_truth_on_clean_field(self, field57, std_params, light_config):
        res = estimate_m(field57, light_config)
        np.testing.assert_allclose(res.params.as_array(), std_params.as_array(), atol=0.08)
        assert res.method == "m"

    def test_objective_is_mean_bounded_loss(self, field57, light_config):
        res = estimate_m(field57, light_config)
        eps = ar_residuals(field57, res.params).values
        direct = float(np.mean(rho2(eps / res.scale)))
        assert res.objective == pytest.approx(direct, rel=1e-10)

    def test_no_worse_than_truth(self, field57, std_params):
        res = estimate_m(field57, OptimizerConfig(restarts=3, max_evals=600, tolerance=1e-8))
        eps_true = ar_residuals(field57, std_params).values
        at_truth = float(np.mean(rho2(eps_true / res.scale)))
        assert res.objective <= at_truth + 1e-9

    def test_budget_exhaustion_warns(self, field57):
        res = estimate_m(field57, OptimizerConfig(restarts=1, max_evals=2, tolerance=1e-12))
        assert res.warning == "optimizer budget exhausted"

    def test_constant_field_degenerate(self, light_config):
        with pytest.raises(DegenerateInputError):
            estimate_m(Grid2D(np.full((12, 12), 1.0)), light_config)


class TestGm:
    def test_weights_shape_and_range(self, field57):
        w = gm_weights(field57, 1.0)
        assert w.shape == (field57.rows - 1, field57.cols - 1)
        assert np.all((w > 0) & (w <= 1.0))

    def test_weights_downweight_large_neighbors(self):
        v = np.ones((5, 5))
        v[2, 2] = 50.0
        w = gm_weights(Grid2D(v), 1.0)
        # w[i,j] guards prediction cell (i+1,j+1) with neighbors
        # v[i,j+1], v[i+1,j], v[i,j]; the spike sits in exactly three
        assert w[2, 2] < 0.01 and w[2, 1] < 0.01 and w[1, 2] < 0.01
        # cells that never see the spike keep full weight
        assert w[3, 3] == 1.0 and w[0, 0] == 1.0

    def test_zero_neighbors_weight_one(self):
        v = np.zeros((4, 4))
        v[3, 3] = 1.0
        w = gm_weights(Grid2D(v), 1.0)
        assert w[2, 2] == 1.0

    def test_sigma_validation(self, field57):
        with pytest.raises(DomainError):
            gm_weights(field57, 0.0)

    def test_close_to_truth_on_clean_field(self, field57, std_params, light_config):
        res = estimate_gm(field57, light_config)
        np.testing.assert_allclose(res.params.as_array(), std_params.as_array(), atol=0.08)
        assert res.method == "gm"


class TestBmm:
    def test_close_to_truth_on_clean_field(self, field57, std_params, light_config):
        res = estimate_bmm(field57, light_config)
        np.testing.assert_allclose(res.params.as_array(), std_params.as_array(), atol=0.08)
        assert res.method == "bmm"
        assert res.branch in ("ar", "bip")

    def test_stages_are_consistent(self, field57, light_config):
        st = bmm_stages(field57, light_config)
        assert st.scale_star == pytest.approx(min(st.scale_ar, st.scale_bip))
        assert st.scale_star > 0
        if st.branch == "ar":
            assert st.criterion_ar <= st.criterion_bip
        else:
            assert st.criterion_bip < st.criterion_ar
        res = estimate_bmm(field57, light_config)
        chosen = st.refined_ar if st.branch == "ar" else st.refined_bip
        np.testing.assert_allclose(res.params.as_array(), chosen.as_array(), atol=1e-12)

    def test_robust_under_additive_outliers(self, dirty57, std_params, light_config):
        ls = estimate_ls(dirty57)
        bmm = estimate_bmm(dirty57, light_config)
        err_ls = np.abs(ls.params.as_array() - std_params.as_array()).max()
        err_bmm = np.abs(bmm.params.as_array() - std_params.as_array()).max()
        assert err_bmm < err_ls / 2
        assert err_bmm < 0.08

    def test_constant_field_degenerate(self, light_config):
        with pytest.raises(DegenerateInputError):
            estimate_bmm(Grid2D(np.full((12, 12), 2.0)), light_config)

    def test_deterministic(self, dirty57, light_config):
        a = estimate_bmm(dirty57, light_config)
        b = estimate_bmm(dirty57, light_config)
        assert a.params == b.params
        assert a.objective == b.objective


class TestDispatch:
    def test_all_methods(self, field57, light_config):
        for method in ("ls", "m", "gm", "bmm"):
            res = estimate(field57, method, light_config)
            assert res.method == method
            assert is_feasible(res.params) or method == "ls"

    def test_unknown_method(self, field57):
        with pytest.raises(DomainError):
            estimate(field57, "huber")
