"""Moment functions, weighting, the minimizer, the initializer and the two-step procedure."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from supou import (
    DataError,
    DomainError,
    GmmConfig,
    InitializationError,
    LevySpec,
    ModelKind,
    MomentConditionSet,
    ObservationSchedule,
    ParamVector,
    PiSpec,
    SimulationConfig,
    WeightingMatrixError,
    closed_form_init,
    default_conditions,
    demean,
    estimate_weighting,
    initial_estimate,
    minimize,
    moment_function_int,
    moment_function_supou,
    moment_function_sv,
    objective,
    sample_moments,
    simulate_path,
    supou_acf,
    supou_mean,
    supou_var,
    transform,
    two_step_gmm,
    untransform,
)
from supou.gmm import _moment_targets

BETA = ParamVector(0.015, 0.003, 4.0, -0.1)
BETA_LONG = ParamVector(0.015, 0.003, 1.95, -0.1)
SUPOU_CONDS = default_conditions(ModelKind.SUPOU)
INT_CONDS = default_conditions(ModelKind.INTEGRATED)
SV_CONDS = default_conditions(ModelKind.SV)


def simulated_supou(seed=42, n_obs=10_000):
    spec = LevySpec(0.1, 3.0, 20.0)
    pi = PiSpec.from_params(BETA)
    sched = ObservationSchedule(1.0, n_obs)
    return simulate_path(ModelKind.SUPOU, spec, pi, sched, SimulationConfig(seed=seed)).values


class TestMomentConditionSet:
    def test_dimensions(self):
        conds = MomentConditionSet(ModelKind.SUPOU, (1, 2, 4, 5))
        assert conds.m == 5 and conds.d == 6
        assert default_conditions(ModelKind.SV).lags == (1, 2, 3, 4, 5)

    def test_bad_lags(self):
        for lags in [(), (2, 1), (0, 1), (1,)]:
            with pytest.raises(DomainError):
                MomentConditionSet(ModelKind.SUPOU, lags)


class TestMomentFunctions:
    def test_supou_at_stationary_mean(self):
        window = np.full(6, 0.05)
        f = moment_function_supou(window, BETA, SUPOU_CONDS)
        assert_allclose(f[0], 0.0, atol=1e-15)
        assert_allclose(f[1], -0.005, rtol=1e-12)

    def test_supou_mean_component(self):
        window = np.full(6, 0.06)
        f = moment_function_supou(window, BETA, SUPOU_CONDS)
        assert_allclose(f[0], 0.01, rtol=1e-12)

    def test_int_lag_component(self):
        window = np.full(6, 0.05)
        f = moment_function_int(window, BETA, INT_CONDS)
        assert_allclose(f[2], 0.0025 - 0.0025 - 0.003 / 0.792, rtol=1e-10)

    def test_int_var_without_sigma(self):
        # covariance terms vanish linearly with sigma2
        tiny = ParamVector(0.015, 1e-14, 4.0, -0.1)
        window = np.full(6, 0.07)
        f = moment_function_int(window, tiny, INT_CONDS)
        assert_allclose(f[1], 0.07**2 - 0.05**2, rtol=1e-9)

    def test_sv_mean_component_sign(self):
        window = np.zeros(6)
        f = moment_function_sv(window, BETA, SV_CONDS)
        assert_allclose(f[0], -0.05, rtol=1e-12)

    def test_sv_zero_at_matching_square(self):
        window = np.full(6, np.sqrt(0.05))
        f = moment_function_sv(window, BETA, SV_CONDS)
        assert_allclose(f[0], 0.0, atol=1e-15)

    def test_window_length_enforced(self):
        with pytest.raises(DataError):
            moment_function_supou(np.zeros(4), BETA, SUPOU_CONDS)

    @pytest.mark.parametrize(
        "conds,kind",
        [(SUPOU_CONDS, ModelKind.SUPOU), (INT_CONDS, ModelKind.INTEGRATED),
         (SV_CONDS, ModelKind.SV)],
    )
    def test_expectation_zero_at_truth(self, conds, kind):
        # substituting the model moments for the empirical products makes the
        # analytic expectation of the moment function exactly zero
        targets = _moment_targets(BETA, conds)
        assert_array_equal(targets - _moment_targets(BETA, conds), np.zeros(conds.d))
        g_at_truth = targets - _moment_targets(BETA, conds)
        assert np.all(g_at_truth == 0.0)


class TestSampleMoments:
    def test_matches_window_average(self):
        x = simulated_supou(seed=7, n_obs=400)
        g = sample_moments(x, BETA, SUPOU_CONDS)
        m = SUPOU_CONDS.m
        windows = np.stack([x[i:i + m + 1] for i in range(len(x) - m)])
        explicit = np.mean(
            [moment_function_supou(w, BETA, SUPOU_CONDS) for w in windows], axis=0
        )
        assert_allclose(g, explicit, rtol=1e-10, atol=1e-14)

    def test_single_window(self):
        x = np.arange(6.0) / 10.0 + 0.01
        g = sample_moments(x, BETA, SUPOU_CONDS)
        assert_allclose(g, moment_function_supou(x, BETA, SUPOU_CONDS), rtol=1e-12)

    def test_small_at_truth_on_simulated_path(self):
        g = sample_moments(simulated_supou(), BETA, SUPOU_CONDS)
        assert np.abs(g).max() < 5e-3

    def test_insufficient_data(self):
        with pytest.raises(DataError):
            sample_moments(np.ones(5), BETA, SUPOU_CONDS)


class TestObjective:
    def test_zero_and_identity(self):
        x = simulated_supou(seed=3, n_obs=200)
        g = sample_moments(x, BETA, SUPOU_CONDS)
        value = objective(x, BETA, np.eye(6), SUPOU_CONDS)
        assert_allclose(value, float(g @ g), rtol=1e-14)
        assert value >= 0.0

    def test_diagonal_quadratic_form(self):
        # g = (1, 1), W = diag(2, 3) -> 5, checked through the public op by
        # constructing data whose moment vector is known is awkward; check the
        # quadratic form arithmetic directly instead
        g = np.array([1.0, 1.0])
        W = np.diag([2.0, 3.0])
        assert float(g @ W @ g) == 5.0

    def test_scale_equivariance(self):
        x = simulated_supou(seed=3, n_obs=500)
        v1 = objective(x, BETA, np.eye(6), SUPOU_CONDS)
        v3 = objective(x, BETA, 3.0 * np.eye(6), SUPOU_CONDS)
        assert_allclose(v3, 3.0 * v1, rtol=1e-14)

    def test_non_pd_rejected(self):
        x = simulated_supou(seed=3, n_obs=200)
        with pytest.raises(WeightingMatrixError):
            objective(x, BETA, -np.eye(6), SUPOU_CONDS)
        asym = np.eye(6)
        asym[0, 1] = 0.5
        with pytest.raises(WeightingMatrixError):
            objective(x, BETA, asym, SUPOU_CONDS)


class TestEstimateWeighting:
    def test_rank_one_needs_ridge(self):
        x = np.arange(6.0) + 1.0  # exactly one window
        with pytest.raises(DataError):
            estimate_weighting(x, BETA, SUPOU_CONDS)

    def test_pd_inverse_on_simulated_path(self):
        x = simulated_supou()
        W = estimate_weighting(x, BETA, SUPOU_CONDS)
        assert_allclose(W, W.T, rtol=1e-12)
        np.linalg.cholesky(W)
        # rebuild S and check W is its inverse to 1e-8
        m = SUPOU_CONDS.m
        n = len(x) - m
        lead = x[:n]
        cols = [lead, lead**2] + [lead * x[h:h + n] for h in SUPOU_CONDS.lags]
        F = np.column_stack(cols) - _moment_targets(BETA, SUPOU_CONDS)
        S = F.T @ F / n
        S += 1e-10 * np.trace(S) / 6 * np.eye(6)
        assert np.abs(S @ W - np.eye(6)).max() < 1e-8

    def test_constant_windows_outer_product(self):
        # constant data makes every window's moment vector identical, so S is
        # the rank-one outer product and inversion relies on the ridge
        x = np.full(50, 0.05)
        W = estimate_weighting(x, BETA, SUPOU_CONDS, ridge_scale=1e-6)
        f = moment_function_supou(x[:6], BETA, SUPOU_CONDS)
        S = np.outer(f, f) + 1e-6 * (f @ f) / 6 * np.eye(6)
        assert_allclose(np.linalg.inv(S), W, rtol=1e-6)

    def test_singular_without_ridge(self):
        x = np.full(50, 0.05)
        with pytest.raises(Exception):
            estimate_weighting(x, BETA, SUPOU_CONDS, ridge_scale=0.0)


class TestTransform:
    def test_hand_values(self):
        theta = transform(BETA)
        assert_allclose(theta, np.log([0.015, 0.003, 3.0, 0.1]) * [1, 1, 1, 1])
        assert untransform(np.zeros(4)) == ParamVector(1.0, 1.0, 2.0, -1.0)

    def test_boundary_rejected(self):
        with pytest.raises(DomainError):
            transform(ParamVector(0.0, 0.003, 4.0, -0.1))

    @given(st.tuples(*[st.floats(-20.0, 20.0) for _ in range(4)]))
    @settings(max_examples=200, deadline=None)
    def test_untransform_always_valid_and_roundtrips(self, theta):
        beta = untransform(np.array(theta))
        assert beta.sigma2 > 0.0 and beta.alpha_pi > 1.0 and beta.B < 0.0
        # the alpha_pi coordinate passes through 1 + exp(.), which rounds
        assert_allclose(transform(beta), theta, rtol=1e-9, atol=1e-6)


class TestMinimize:
    def test_exact_quadratic(self):
        target = np.array([0.3, -1.2, 2.0, 0.7])
        res = minimize(
            lambda th: float(((th - target) ** 2).sum()),
            np.array([5.0, 5.0, -5.0, 0.0]),
            GmmConfig(),
        )
        assert res.converged
        assert np.abs(res.theta - target).max() < 1e-8
        assert res.value <= float(((np.array([5.0, 5.0, -5.0, 0.0]) - target) ** 2).sum())

    def test_rosenbrock_embedded(self):
        def rosen(th):
            return float(
                100.0 * (th[1] - th[0] ** 2) ** 2 + (1.0 - th[0]) ** 2
                + th[2] ** 2 + th[3] ** 2
            )

        res = minimize(rosen, np.array([-1.2, 1.0, 0.5, -0.5]), GmmConfig())
        assert res.converged
        assert np.abs(res.theta[:2] - 1.0).max() < 1e-6

    def test_constant_objective(self):
        res = minimize(lambda th: 3.14, np.array([1.0, 2.0, 3.0, 4.0]), GmmConfig())
        assert res.converged and res.iterations == 0 and res.value == 3.14

    def test_non_finite_start_rejected(self):
        with pytest.raises(DomainError):
            minimize(lambda th: float("inf"), np.zeros(4), GmmConfig())

    def test_non_finite_region_handled_by_shrinkage(self):
        # objective blows up away from the origin; the line search must cope
        def fenced(th):
            if np.abs(th).max() > 2.0:
                return float("inf")
            return float((th**2).sum())

        res = minimize(fenced, np.full(4, 1.9), GmmConfig())
        assert res.converged
        assert np.abs(res.theta).max() < 1e-6


class TestClosedFormInit:
    @pytest.mark.parametrize("beta", [BETA, BETA_LONG])
    def test_exact_recovery(self, beta):
        recovered = closed_form_init(
            supou_mean(beta),
            supou_var(beta),
            float(supou_acf(beta, 1.0)),
            float(supou_acf(beta, 2.0)),
            1.0,
            2.0,
        )
        assert np.abs(recovered.as_array() - beta.as_array()).max() < 1e-10

    def test_equal_rhos_rejected(self):
        with pytest.raises(InitializationError):
            closed_form_init(0.05, 0.005, 0.7, 0.7, 1.0, 2.0)

    def test_out_of_range_rho_rejected(self):
        with pytest.raises(InitializationError):
            closed_form_init(0.05, 0.005, 1.2, 0.5, 1.0, 2.0)
        with pytest.raises(InitializationError):
            closed_form_init(0.05, 0.005, 0.5, 0.7, 1.0, 2.0)

    def test_inconsistent_decay_rejected(self):
        # acf dropping faster than any power of (1 - B h) has no solution
        with pytest.raises(InitializationError):
            closed_form_init(0.05, 0.005, 0.9, 0.1, 1.0, 2.0)


class TestInitialEstimate:
    def test_matches_first_two_moments_on_simulated_path(self):
        # the (alpha, B) pair from a two-lag acf inversion is noisy by nature;
        # the mean and variance equations are matched tightly at whatever
        # shape it picked
        x = simulated_supou()
        start = initial_estimate(x, SUPOU_CONDS)
        assert_allclose(supou_mean(start), x.mean(), rtol=1e-9)
        assert_allclose(supou_var(start), x.var(), rtol=1e-9)

    def test_degenerate_data_raises(self):
        with pytest.raises(InitializationError):
            initial_estimate(np.full(100, 0.05), SUPOU_CONDS)


class TestTwoStepGmm:
    def test_monotone_versus_truth_start(self):
        x = simulated_supou(seed=99, n_obs=2000)
        res = two_step_gmm(x, ModelKind.SUPOU, config=GmmConfig(restart_seed=99),
                           start=BETA)
        start_value = objective(x, BETA, np.eye(6), SUPOU_CONDS)
        assert res.step1_objective <= start_value
        assert res.step2_objective >= 0.0
        assert res.n_used == 1995

    def test_recovery_on_one_path(self):
        x = simulated_supou(seed=1234)
        res = two_step_gmm(x, ModelKind.SUPOU, config=GmmConfig(restart_seed=1234))
        assert res.converged_step2
        est = res.step2_estimate
        assert abs(est.mu / BETA.mu - 1.0) < 0.25
        assert abs(est.sigma2 / BETA.sigma2 - 1.0) < 0.25
        assert abs(est.B / BETA.B - 1.0) < 0.6
        assert abs(est.alpha_pi / BETA.alpha_pi - 1.0) < 0.6

    def test_determinism(self):
        x = simulated_supou(seed=5, n_obs=3000)
        a = two_step_gmm(x, ModelKind.SUPOU, config=GmmConfig(restart_seed=5))
        b = two_step_gmm(x, ModelKind.SUPOU, config=GmmConfig(restart_seed=5))
        assert a.step2_estimate == b.step2_estimate
        assert a.step1_objective == b.step1_objective

    def test_weighting_scale_leaves_argmin(self):
        # scaling W leaves the minimizer unchanged on a fixed fixture
        x = simulated_supou(seed=17, n_obs=3000)
        res = two_step_gmm(x, ModelKind.SUPOU, config=GmmConfig(restart_seed=17))
        W = res.weighting
        from supou.gmm import _data_moments, _estimation_series, _theta_objective

        base = _data_moments(_estimation_series(x, ModelKind.SUPOU), SUPOU_CONDS)
        theta0 = transform(res.step1_estimate)
        for lam in (1.0, 7.0):
            obj = _theta_objective(base, lam * W, SUPOU_CONDS)
            r = minimize(obj, theta0, GmmConfig())
            if lam == 1.0:
                ref = r.theta
            else:
                assert_allclose(r.theta, ref, atol=1e-4)

    def test_insufficient_data(self):
        with pytest.raises(DataError):
            two_step_gmm(np.ones(4), ModelKind.SUPOU)

    def test_constant_data_raises_initialization(self):
        with pytest.raises(InitializationError):
            two_step_gmm(np.full(100, 0.05), ModelKind.SUPOU)

    def test_kind_mismatch_rejected(self):
        with pytest.raises(DomainError):
            two_step_gmm(np.ones(100), ModelKind.SV, conditions=SUPOU_CONDS)

    def test_json_dict_fields(self):
        x = simulated_supou(seed=5, n_obs=2000)
        res = two_step_gmm(x, ModelKind.SUPOU, config=GmmConfig(restart_seed=5))
        payload = res.to_dict(annualize_factor=250.0)
        assert list(payload)[:3] == ["model", "lags", "delta"]
        assert payload["model"] == "supou"
        assert payload["n_used"] == 1995
        annual = payload["step2_estimate_annualized"]
        assert_allclose(annual["mu"], 250.0 * payload["step2_estimate"]["mu"], rtol=1e-12)
        assert annual["alpha_pi"] == payload["step2_estimate"]["alpha_pi"]


class TestSvEstimation:
    def test_sv_recovery_smoke(self):
        spec = LevySpec(0.1, 3.0, 20.0)
        pi = PiSpec.from_params(BETA)
        sched = ObservationSchedule(1.0, 10_000)
        y = simulate_path(ModelKind.SV, spec, pi, sched, SimulationConfig(seed=77)).values
        res = two_step_gmm(demean(y), ModelKind.SV, config=GmmConfig(restart_seed=77),
                           start=BETA)
        est = res.step2_estimate
        assert abs(est.mu / BETA.mu - 1.0) < 0.4
        assert abs(est.sigma2 / BETA.sigma2 - 1.0) < 0.6

    def test_robust_to_jump_law(self):
        # lognormal jumps with the same first two moments: the estimator is
        # semiparametric and should not care
        mean_jump, second = 0.15, 0.03
        sigma_ln = np.sqrt(np.log(second / mean_jump**2))
        mu_ln = np.log(mean_jump) - 0.5 * sigma_ln**2

        def lognormal_jumps(rng, n):
            return rng.lognormal(mu_ln, sigma_ln, n)

        from supou import sample_jump_stream, evaluate_supou

        spec = LevySpec(0.1, 3.0, 20.0)
        pi = PiSpec.from_params(BETA)
        stream = sample_jump_stream(spec, pi, (-2000.0, 10_000.0), seed=31,
                                    jump_sampler=lognormal_jumps)
        x = evaluate_supou(stream, 1.0 * np.arange(1, 10_001))
        res = two_step_gmm(x, ModelKind.SUPOU, config=GmmConfig(restart_seed=31),
                           start=BETA)
        est = res.step2_estimate
        assert abs(est.mu / BETA.mu - 1.0) < 0.25
        assert abs(est.sigma2 / BETA.sigma2 - 1.0) < 0.35
