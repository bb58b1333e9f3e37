import numpy as np
import pytest
from numpy.testing import assert_allclose

from cogmask.core.exceptions import ProjectionError
from cogmask.domain.strategy import k_norm, linear_budget, sqrt_sum
from cogmask.services.projections import (
    constraint_projector,
    project_budget,
    project_budget_set,
    project_intersection,
    project_norm_ball,
)


class TestBudgetProjection:
    def test_clips_to_vertex(self):
        assert_allclose(project_budget(np.array([2.0, 0.0]), np.array([1.0, 1.0])), [1.0, 0.0])

    def test_point_on_simplex_is_fixed(self):
        assert_allclose(project_budget(np.array([0.5, 0.5]), np.array([1.0, 1.0])), [0.5, 0.5])

    def test_random_points_land_on_hyperplane(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            alpha = rng.uniform(0.2, 2.5, size=4)
            x = rng.normal(size=4)
            y = project_budget(x, alpha)
            assert np.all(y >= 0)
            assert alpha @ y == pytest.approx(1.0)

    def test_matches_kkt_characterization(self):
        alpha = np.array([1.0, 2.0, 0.5])
        x = np.array([0.9, -0.3, 1.4])
        y = project_budget(x, alpha)
        # y = max(x - tau * alpha, 0) with one tau for the whole vector
        support = y > 0
        tau = (x[support] - y[support]) / alpha[support]
        assert_allclose(tau, tau[0])
        assert np.all(x[~support] - tau[0] * alpha[~support] <= 1e-12)

    def test_nonpositive_weights_rejected(self):
        with pytest.raises(ProjectionError):
            project_budget(np.ones(2), np.array([1.0, 0.0]))

    def test_budget_set_keeps_interior_points(self):
        assert_allclose(project_budget_set(np.array([0.1, 0.2]), np.array([1.0, 1.0])), [0.1, 0.2])
        assert_allclose(project_budget_set(np.array([-0.1, 0.2]), np.array([1.0, 1.0])), [0.0, 0.2])


class TestNormBall:
    def test_scales_back_to_sphere(self):
        y = project_norm_ball(np.array([3.0, 4.0]), 2.0, 1.0)
        assert_allclose(y, [0.6, 0.8])

    def test_clips_orthant_first(self):
        assert_allclose(project_norm_ball(np.array([-1.0, 0.5]), 2.0, 1.0), [0.0, 0.5])


class TestConstraintProjector:
    def test_families(self):
        assert_allclose(constraint_projector(k_norm(2.0), level=2.0)(np.array([3.0, 4.0])), [1.2, 1.6])
        budget = constraint_projector(linear_budget(np.array([1.0, 1.0]), offset=-1.0))
        assert_allclose(budget(np.array([2.0, 0.0])), [1.0, 0.0])

    def test_unsupported_family(self):
        with pytest.raises(ProjectionError):
            constraint_projector(sqrt_sum())

    def test_intersection_satisfies_both_sets(self):
        ball = constraint_projector(k_norm(2.0), level=0.8)
        budget = constraint_projector(linear_budget(np.array([1.0, 2.0]), offset=-1.0))
        y = project_intersection(np.array([2.0, 2.0]), [ball, budget])
        assert np.linalg.norm(y) <= 0.8 + 1e-8
        assert np.array([1.0, 2.0]) @ y <= 1.0 + 1e-8
        assert np.all(y >= -1e-12)
