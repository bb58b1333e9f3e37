"""
Shared fixtures: small hand-made datasets and generated scenario bundles
"""
import numpy as np
import pytest

from cogmask.domain.dataset import DatasetKind, ProbeResponseDataset
from cogmask.domain.problem import MaskingProblem
from cogmask.schemas.configs import SolverConfig
from cogmask.services.scenarios import generate_experiment


@pytest.fixture
def garp_dataset():
    """Each response is strictly affordable at the other's budget."""
    probes = np.array([[2.0, 1.0], [1.0, 2.0]])
    responses = np.array([[0.5, 0.0], [0.0, 0.5]])
    return ProbeResponseDataset(probes, responses, DatasetKind.CONSTRAINT_KNOWN)


@pytest.fixture
def two_point_sqrt():
    probes = np.array([[1.0, 1.0], [1.0, 2.0]])
    responses = np.array([[0.5, 0.5], [2.0 / 3.0, 1.0 / 6.0]])
    return ProbeResponseDataset(probes, responses, DatasetKind.CONSTRAINT_KNOWN)


@pytest.fixture
def waveform_bundle():
    return generate_experiment("waveform-u1", seed=7, horizon=5, dim=3)


@pytest.fixture
def beam_bundle():
    return generate_experiment("beam", seed=11, horizon=4, dim=3)


@pytest.fixture
def small_solver():
    return SolverConfig(multi_starts=3, max_iterations=60, max_penalty_rounds=8, seed=3)


@pytest.fixture
def waveform_problem(small_solver):
    bundle = generate_experiment("waveform-u1", seed=5, horizon=4, dim=2)
    return MaskingProblem(bundle.strategy, bundle.dataset, 0.0, small_solver)
