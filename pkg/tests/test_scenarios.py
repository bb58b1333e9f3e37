import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import solve_discrete_are
from scipy.optimize import minimize

from cogmask.core.exceptions import ScenarioError
from cogmask.domain.problem import MaskingProblem
from cogmask.domain.strategy import StrategyRole, cobb_douglas, linear_budget, quadratic_sum, sqrt_sum
from cogmask.schemas.configs import SolverConfig
from cogmask.services.mask_determ import mask_utility
from cogmask.services.projections import project_norm_ball
from cogmask.services.scenarios import (
    LinearGaussianSystem,
    MisspecModel,
    are_solve,
    asymptotic_precision,
    generate_experiment,
    kalman_filter_step,
    misspec_bound,
    naive_beam,
    naive_waveform,
    predicted_precision_probe,
    riccati_map,
    waveform_precision_check,
)


class TestRiccati:
    def test_no_dynamics_gives_process_noise(self):
        system = LinearGaussianSystem(A=0.0, C=1.0, Q=2.0, R=3.0)
        assert_allclose(are_solve(system), [[2.0]])

    def test_scalar_root(self):
        system = LinearGaussianSystem(A=0.9, C=1.0, Q=1.0, R=1.0)
        # sigma = 0.81 sigma / (sigma + 1) + 1  <=>  sigma^2 - 0.81 sigma - 1 = 0
        root = (0.81 + np.sqrt(0.81 ** 2 + 4.0)) / 2.0
        assert_allclose(are_solve(system), [[root]], rtol=1e-8)

    def test_matches_scipy_on_matrix_system(self):
        A = np.array([[1.0, 0.1], [0.0, 0.95]])
        C = np.eye(2)
        system = LinearGaussianSystem.from_probe_response(A, C, alpha=[0.5, 1.5], beta=[2.0, 0.7])
        expected = solve_discrete_are(A.T, C.T, system.Q, system.R)
        assert_allclose(are_solve(system), expected, rtol=1e-7, atol=1e-9)

    def test_fixed_point_of_map(self):
        system = LinearGaussianSystem(A=0.9, C=1.0, Q=1.0, R=1.0)
        sigma = are_solve(system)
        assert_allclose(riccati_map(system, sigma), sigma, atol=1e-9)
        _, predicted = kalman_filter_step(system, sigma)
        assert_allclose(predicted, sigma, atol=1e-9)

    def test_bad_covariance_rejected(self):
        with pytest.raises(ScenarioError):
            LinearGaussianSystem(A=0.5, C=1.0, Q=-1.0, R=1.0)

    def test_precision_grows_with_response(self):
        A = np.diag([0.9, 0.5])
        assert waveform_precision_check(A, np.eye(2), [1.0, 1.0], [0.5, 0.5], np.random.default_rng(0), trials=5)
        low = asymptotic_precision(LinearGaussianSystem.from_probe_response(A, np.eye(2), [1.0, 1.0], [0.5, 0.5]))
        high = asymptotic_precision(LinearGaussianSystem.from_probe_response(A, np.eye(2), [1.0, 1.0], [1.5, 0.5]))
        assert high > low


class TestBeamProbe:
    def test_static_target(self):
        assert_allclose(predicted_precision_probe([0.0], [2.0]), [0.5])

    def test_geometric_series(self):
        assert_allclose(predicted_precision_probe([0.5], [1.0]), [0.75])

    def test_finite_horizon_converges(self):
        finite = predicted_precision_probe([0.5], [1.0], horizon=200)
        assert_allclose(finite, [0.75], rtol=1e-10)

    def test_unstable_needs_horizon(self):
        with pytest.raises(ScenarioError):
            predicted_precision_probe([1.2], [1.0])


class TestNaiveResponses:
    def test_sqrt_symmetric(self):
        assert_allclose(naive_waveform(sqrt_sum(), np.array([1.0, 1.0])), [0.5, 0.5])

    def test_sqrt_closed_form(self):
        beta = naive_waveform(sqrt_sum(), np.array([1.0, 2.0]))
        assert_allclose(beta, [2.0 / 3.0, 1.0 / 6.0])
        assert np.array([1.0, 2.0]) @ beta == pytest.approx(1.0)

    def test_sqrt_against_grid_search(self):
        grid = np.linspace(0.0, 1.0, 10001)
        values = np.sqrt(grid) + np.sqrt((1.0 - grid) / 2.0)
        best = grid[np.argmax(values)]
        assert naive_waveform(sqrt_sum(), np.array([1.0, 2.0]))[0] == pytest.approx(best, abs=1e-4)

    def test_quadratic_vertex(self):
        assert_allclose(naive_waveform(quadratic_sum(), np.array([1.0, 2.0])), [1.0, 0.0])

    def test_cobb_douglas(self):
        beta = naive_waveform(cobb_douglas([0.25, 0.75]), np.array([1.0, 3.0]))
        assert_allclose(beta, [0.25, 0.25])

    def test_beam_symmetric(self):
        assert_allclose(naive_beam(np.array([0.5, 0.5]), 2.0, 1.0), [1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_beam_closed_form(self):
        assert_allclose(naive_beam(np.array([0.2, 0.6, 0.2]), 2.0, 1.0), np.sqrt([0.2, 0.6, 0.2]))


def _stable_system(rng):
    n = int(rng.integers(1, 4))
    A = rng.normal(size=(n, n))
    A *= rng.uniform(0.1, 0.95) / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
    C = np.eye(n) + 0.3 * rng.normal(size=(n, n))
    return LinearGaussianSystem.from_probe_response(A, C, rng.uniform(0.2, 2.5, n), rng.uniform(0.2, 2.5, n))


class TestRiccatiAgainstScipy:
    def test_random_stable_systems(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            system = _stable_system(rng)
            sigma = are_solve(system)
            expected = solve_discrete_are(system.A.T, system.C.T, system.Q, system.R)
            assert_allclose(sigma, expected, rtol=1e-7, atol=1e-9)
            assert np.linalg.norm(riccati_map(system, sigma) - sigma) <= 1e-9


def _slsqp_sqrt(alpha):
    def objective(x):
        return -np.sum(np.sqrt(np.maximum(x, 0.0)))

    def gradient(x):
        return -0.5 / np.sqrt(np.maximum(x, 1e-12))

    start = 1.0 / (alpha.size * alpha)
    result = minimize(
        objective,
        start,
        jac=gradient,
        method="SLSQP",
        bounds=[(1e-12, None)] * alpha.size,
        constraints=[{"type": "ineq", "fun": lambda x: 1.0 - alpha @ x, "jac": lambda x: -alpha}],
        options={"ftol": 1e-14, "maxiter": 500},
    )
    return -result.fun


def _projected_gradient_beam(alpha, gamma, iterations=4000, step=0.05):
    utility = cobb_douglas(alpha / alpha.sum())
    x = np.full(alpha.size, gamma / np.sqrt(alpha.size))
    for _ in range(iterations):
        x = project_norm_ball(x + step * utility.gradient(x), 2.0, gamma)
    return utility.value(x)


class TestNaiveResponseOracles:
    def test_sqrt_against_slsqp(self):
        rng = np.random.default_rng(5)
        u = sqrt_sum()
        for _ in range(50):
            alpha = rng.uniform(0.2, 2.5, size=4)
            closed = u.value(naive_waveform(u, alpha))
            oracle = _slsqp_sqrt(alpha)
            assert closed >= oracle - 1e-9
            assert closed - oracle <= 1e-6

    def test_quadratic_against_vertices(self):
        rng = np.random.default_rng(6)
        u = quadratic_sum()
        for _ in range(50):
            alpha = rng.uniform(0.2, 2.5, size=4)
            beta = naive_waveform(u, alpha)
            # a convex objective peaks at a vertex of the budget simplex
            vertices = np.diag(1.0 / alpha)
            assert_allclose(u.value(beta), max(u.value(v) for v in vertices), rtol=1e-12)
            assert alpha @ beta == pytest.approx(1.0)

    def test_beam_against_projected_gradient(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            alpha = rng.uniform(0.1, 0.7, size=4)
            gamma = rng.uniform(0.5, 2.0)
            beta = naive_beam(alpha, 2.0, gamma)
            closed = cobb_douglas(alpha / alpha.sum()).value(beta)
            oracle = _projected_gradient_beam(alpha, gamma)
            assert np.linalg.norm(beta) == pytest.approx(gamma)
            assert closed >= oracle - 1e-9
            assert closed - oracle <= 1e-6


class TestGenerateExperiment:
    def test_waveform_support(self):
        bundle = generate_experiment("waveform-u1", seed=1, horizon=50, dim=4)
        probes = bundle.dataset.probes
        assert probes.shape == (50, 4)
        assert probes.min() >= 0.2 and probes.max() <= 2.5

    def test_beam_is_boundary_tight(self):
        bundle = generate_experiment("beam", seed=2, horizon=10, dim=4)
        assert_allclose(np.linalg.norm(bundle.dataset.responses, axis=1), bundle.dataset.budgets)

    def test_same_seed_same_dataset(self):
        first = generate_experiment("waveform-u2", seed=9, horizon=8, dim=3).dataset
        second = generate_experiment("waveform-u2", seed=9, horizon=8, dim=3).dataset
        assert np.array_equal(first.probes, second.probes)
        assert np.array_equal(first.responses, second.responses)

    def test_unknown_scenario(self):
        with pytest.raises(ScenarioError):
            generate_experiment("sonar", seed=0)


class TestMisspecification:
    @pytest.fixture
    def masked(self):
        bundle = generate_experiment("waveform-u1", seed=3, horizon=4, dim=2)
        problem = MaskingProblem(bundle.strategy, bundle.dataset, 0.5, SolverConfig(multi_starts=3, seed=0))
        return bundle, mask_utility(problem)

    def test_zero_perturbation_is_exact(self, masked):
        bundle, report = masked
        result = misspec_bound(bundle.strategy, bundle.dataset, report.masked_responses, MisspecModel.zeros(4, 2), 0.5)
        assert result.d1 == 0.0 and result.d2 == 0.0
        assert result.gradient_spread == (0.0, 0.0)
        assert_allclose(result.eta_eff, result.eta_realized, rtol=0, atol=1e-12)
        assert_allclose(result.lower_bound, min(0.5, result.eta_realized), rtol=0, atol=1e-12)
        assert result.margins["naive"] == pytest.approx(report.margin_before)
        assert result.holds

    def test_zero_perturbation_reproduces_eta(self, two_point_sqrt):
        u = linear_budget([1.0, 1.0], role=StrategyRole.UTILITY)
        masked = 0.5 * two_point_sqrt.responses
        result = misspec_bound(u, two_point_sqrt, masked, MisspecModel.zeros(2, 2), 0.5)
        assert result.margins["naive"] == pytest.approx(5.0 / 24.0)
        assert_allclose([result.eta_eff, result.lower_bound], [0.5, 0.5], rtol=0, atol=1e-12)

    def test_constant_shift_under_linear_utility(self, two_point_sqrt):
        u = linear_budget([1.0, 1.0], role=StrategyRole.UTILITY)
        masked = 0.5 * two_point_sqrt.responses
        zeta = MisspecModel(np.full((2, 2), 0.01), 0.02)
        result = misspec_bound(u, two_point_sqrt, masked, zeta, 0.5)
        # a common shift leaves every linear slack where it was
        assert_allclose([result.d1, result.d2], [0.0, 0.0], atol=1e-12)
        assert_allclose(result.gradient_spread, [0.02, 0.02], rtol=1e-12)
        assert_allclose(result.lower_bound, 0.5, atol=1e-12)
        assert_allclose(result.eta_eff, 0.5, atol=1e-12)
        assert result.holds

    def test_bound_holds_on_blended_masks(self):
        informative = 0
        for seed in range(25):
            bundle = generate_experiment("waveform-u1", seed, 10, 4)
            rng = np.random.default_rng(1000 + seed)
            naive = bundle.dataset.responses
            weight = rng.uniform(0.2, 0.9)
            masked = (1.0 - weight) * naive + weight * naive.mean(axis=0)
            zeta = MisspecModel.sample(rng, 10, 4, 0.01)
            result = misspec_bound(bundle.strategy, bundle.dataset, masked, zeta, 0.8)
            assert result.holds, (seed, result.eta_eff, result.lower_bound)
            informative += not result.vacuous
        assert informative > 0

    @pytest.mark.slow
    def test_bound_holds_on_masked_instances(self):
        informative = 0
        for seed in range(200):
            bundle = generate_experiment("waveform-u1", seed, 10, 4)
            problem = MaskingProblem(bundle.strategy, bundle.dataset, 0.8, SolverConfig(multi_starts=2, seed=seed))
            report = mask_utility(problem)
            zeta = MisspecModel.sample(np.random.default_rng(seed), 10, 4, 0.01)
            result = misspec_bound(bundle.strategy, bundle.dataset, report.masked_responses, zeta, 0.8)
            assert result.holds, (seed, result.eta_eff, result.lower_bound)
            informative += not result.vacuous
        assert informative > 100

    def test_sampled_perturbations_respect_bound(self):
        zeta = MisspecModel.sample(np.random.default_rng(0), 10, 4, 0.01)
        assert np.all(np.linalg.norm(zeta.perturbations, axis=1) <= 0.01)
