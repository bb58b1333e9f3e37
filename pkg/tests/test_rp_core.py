import numpy as np
import pytest
from numpy.testing import assert_allclose

from cogmask.core.config import settings
from cogmask.core.exceptions import EnumerationOverflowError, InfeasibleCertificateError
from cogmask.domain.dataset import DatasetKind, ProbeResponseDataset
from cogmask.domain.strategy import cobb_douglas, custom, linear_budget, probe_budget, sqrt_sum
from cogmask.services.margins import kkt_multipliers
from cogmask.services.rp_core import (
    build_afriat_system,
    check_constraint_rationalizable,
    check_multiconstraint_rationalizable,
    check_rationalizable,
    check_utility_rationalizable,
    degenerate_multipliers,
    enumerate_active_sets,
    project_strategy,
    reconstruct_strategy,
    relative_optimality_check,
)
from cogmask.services.scenarios import generate_experiment, naive_waveform


class TestAfriatSystem:
    def test_single_observation_is_trivial(self):
        ds = ProbeResponseDataset([[1.0, 1.0]], [[0.3, 0.2]])
        system = build_afriat_system(ds)
        assert system.trivial
        assert system.n_rows == 0
        assert check_utility_rationalizable(ds).feasible

    def test_cross_budget_terms(self, garp_dataset):
        system = build_afriat_system(garp_dataset)
        assert system.pairs == ((0, 1), (1, 0))
        # lambda column carries -(alpha_t'beta_s - alpha_t'beta_t) = 0.5
        assert_allclose(system.coefficients[:, 2:], [[0.0, 0.5], [0.5, 0.0]])
        assert_allclose(system.coefficients[:, :2], [[1.0, -1.0], [-1.0, 1.0]])

    def test_three_epochs_size(self, waveform_bundle):
        ds = ProbeResponseDataset(waveform_bundle.dataset.probes[:3], waveform_bundle.dataset.responses[:3])
        system = build_afriat_system(ds)
        assert system.coefficients.shape == (6, 6)


class TestFeasibility:
    def test_garp_cycle_is_infeasible(self, garp_dataset):
        cert = check_rationalizable(garp_dataset)
        assert not cert.feasible
        assert not cert.solver_failed

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_sqrt_maximizer_data_is_rationalizable(self, seed):
        bundle = generate_experiment("waveform-u1", seed=seed, horizon=10, dim=4)
        cert = check_utility_rationalizable(bundle.dataset)
        assert cert.feasible
        assert np.all(cert.theta >= 1.0 - 1e-9)
        assert relative_optimality_check(reconstruct_strategy(cert, bundle.dataset), bundle.dataset)

    def test_beam_data_is_constraint_rationalizable(self):
        bundle = generate_experiment("beam", seed=4, horizon=10, dim=4)
        cert = check_constraint_rationalizable(bundle.dataset)
        assert cert.feasible
        reconstruction = reconstruct_strategy(cert, bundle.dataset)
        assert reconstruction.combiner.value == "max"
        assert relative_optimality_check(reconstruction, bundle.dataset)

    def test_wrong_kind_rejected(self, garp_dataset):
        with pytest.raises(ValueError):
            check_constraint_rationalizable(garp_dataset)

    def test_reconstruction_needs_feasible_certificate(self, garp_dataset):
        with pytest.raises(InfeasibleCertificateError):
            reconstruct_strategy(check_rationalizable(garp_dataset), garp_dataset)

    def test_single_point_reconstruction_is_constant_offset(self):
        ds = ProbeResponseDataset([[1.0, 2.0]], [[0.2, 0.3]])
        piecewise = reconstruct_strategy(check_rationalizable(ds), ds)
        assert piecewise.n_pieces == 1
        assert piecewise.value(np.array([0.2, 0.3])) == pytest.approx(1.0)


class TestMultiConstraint:
    def test_single_linear_constraint_matches_utility_test(self, waveform_bundle, garp_dataset):
        for ds in (waveform_bundle.dataset, garp_dataset):
            multi = check_multiconstraint_rationalizable(ds, [probe_budget()])
            assert multi.feasible == check_utility_rationalizable(ds).feasible

    def test_branch_and_bound_agrees_with_enumeration(self, waveform_bundle):
        ds = ProbeResponseDataset(waveform_bundle.dataset.probes[:4], waveform_bundle.dataset.responses[:4])
        constraints = [probe_budget(), linear_budget(np.ones(ds.dim), offset=-2.0)]
        bnb = check_multiconstraint_rationalizable(ds, constraints)
        oracle = enumerate_active_sets(ds, constraints)
        assert bnb.feasible == oracle.feasible
        if bnb.feasible:
            assert np.all(np.any(bnb.active_flags, axis=1))

    def test_enumeration_overflow(self):
        bundle = generate_experiment("waveform-u1", seed=0, horizon=13, dim=2)
        with pytest.raises(EnumerationOverflowError):
            enumerate_active_sets(bundle.dataset, [probe_budget(), probe_budget(-2.0)])


class TestProjection:
    def test_multiplier_at_exact_optimum(self, two_point_sqrt):
        theta = project_strategy(sqrt_sum(), two_point_sqrt)
        grad = 0.5 / np.sqrt(0.5)
        assert_allclose(theta[2], grad)
        # beta_2 = (2/3, 1/6) under alpha = (1, 2): both ratios equal 0.5 / sqrt(2/3)
        assert_allclose(theta[3], 0.5 / np.sqrt(2.0 / 3.0))

    def test_median_of_unequal_ratios(self):
        ds = ProbeResponseDataset([[1.0, 1.0], [1.0, 1.0]], [[0.25, 0.5], [0.5, 0.5]])
        theta = project_strategy(sqrt_sum(), ds)
        assert_allclose(theta[2], 0.5 * (1.0 + 0.5 / np.sqrt(0.5)))

    def test_constant_utility_flags_degenerate_multipliers(self, two_point_sqrt):
        flat = custom(lambda x: (1.0, np.zeros_like(x)))
        theta = project_strategy(flat, two_point_sqrt)
        assert_allclose(theta[2:], 0.0)
        assert degenerate_multipliers(theta, 2).tolist() == [0, 1]

    def test_true_utility_is_relatively_optimal(self, waveform_bundle):
        assert relative_optimality_check(sqrt_sum(), waveform_bundle.dataset)

    def test_utility_known_kind_flag(self, beam_bundle):
        assert beam_bundle.dataset.kind is DatasetKind.UTILITY_KNOWN


def _rescaled(dataset, factor):
    """Same data in other response units: alpha'beta and every verdict must survive."""
    if dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
        return ProbeResponseDataset(dataset.probes / factor, dataset.responses * factor, dataset.kind)
    return ProbeResponseDataset(
        dataset.probes, dataset.responses * factor, dataset.kind, budgets=dataset.budgets * factor
    )


class TestUnitInvariance:
    @pytest.mark.parametrize("factor", [1e-3, 1e3])
    def test_verdict_unchanged(self, factor, garp_dataset, waveform_bundle, beam_bundle):
        for ds in (garp_dataset, waveform_bundle.dataset, beam_bundle.dataset):
            base = check_rationalizable(ds)
            scaled = check_rationalizable(_rescaled(ds, factor))
            assert scaled.status is base.status

    @pytest.mark.parametrize("factor", [1e-3, 1e3])
    def test_certificate_solves_rescaled_system(self, factor, waveform_bundle, beam_bundle):
        for ds in (waveform_bundle.dataset, beam_bundle.dataset):
            scaled = _rescaled(ds, factor)
            cert = check_rationalizable(scaled)
            assert cert.feasible
            assert cert.lp_residual <= settings.FEASIBILITY_TOL
            assert np.all(cert.theta >= 1.0 - 1e-9)
            rows = build_afriat_system(scaled).upper_bound_form()
            assert np.max(rows @ cert.theta) <= 1e-6 * np.max(np.abs(cert.theta))
            assert relative_optimality_check(reconstruct_strategy(cert, scaled), scaled)


def _waveform_dataset(utility_name, seed):
    rng = np.random.default_rng(seed)
    K, m = 2 + seed % 14, 4
    probes = rng.uniform(0.2, 2.5, size=(K, m))
    utility = sqrt_sum() if utility_name == "sqrt" else cobb_douglas(rng.uniform(0.5, 2.0, size=m))
    responses = np.array([naive_waveform(utility, a) for a in probes])
    return utility, ProbeResponseDataset(probes, responses)


class TestNecessityAndSufficiency:
    @pytest.mark.parametrize("utility_name", ["sqrt", "cobb-douglas"])
    def test_maximizer_data_passes_and_reconstructs(self, utility_name):
        for seed in range(50):
            utility, ds = _waveform_dataset(utility_name, seed)
            assert relative_optimality_check(utility, ds), seed
            cert = check_utility_rationalizable(ds)
            assert cert.feasible, seed
            assert relative_optimality_check(reconstruct_strategy(cert, ds), ds), seed


def _random_budget_dataset(rng, K, m):
    probes = rng.uniform(0.2, 2.5, size=(K, m))
    raw = rng.uniform(0.0, 1.0, size=(K, m))
    spend = rng.uniform(0.3, 1.0, size=K)
    responses = raw * (spend / np.einsum("tm,tm->t", probes, raw))[:, None]
    return ProbeResponseDataset(probes, responses)


class TestMultiConstraintOracle:
    def test_branch_and_bound_matches_enumeration_on_random_data(self):
        rng = np.random.default_rng(2024)
        verdicts = []
        for _ in range(50):
            K, I = int(rng.integers(2, 6)), int(rng.integers(1, 3))
            ds = _random_budget_dataset(rng, K, 2)
            constraints = [probe_budget(), linear_budget([1.0, 0.0], offset=-0.5)][:I]
            bnb = check_multiconstraint_rationalizable(ds, constraints)
            oracle = enumerate_active_sets(ds, constraints)
            assert bnb.feasible == oracle.feasible
            assert not bnb.solver_failed
            if bnb.feasible:
                assert np.all(np.any(bnb.active_flags, axis=1))
            verdicts.append(bnb.feasible)
        assert set(verdicts) == {True, False}

    def test_two_active_constraints(self):
        # sqrt utility under alpha'beta <= 1 and beta_1 <= 0.2; the cap binds at every probe
        probes = np.array([[1.0, 2.0], [1.0, 1.0], [1.5, 1.0], [2.0, 3.0]])
        responses = np.column_stack([np.full(4, 0.2), (1.0 - 0.2 * probes[:, 0]) / probes[:, 1]])
        ds = ProbeResponseDataset(probes, responses)
        constraints = [probe_budget(), linear_budget([1.0, 0.0], offset=-0.2)]
        mu, _ = kkt_multipliers(sqrt_sum(), ds, constraints)
        assert np.all(mu > 0.0)
        cert = check_multiconstraint_rationalizable(ds, constraints)
        assert cert.feasible
        assert cert.multipliers(4).shape == (4, 2)
        assert enumerate_active_sets(ds, constraints).feasible
