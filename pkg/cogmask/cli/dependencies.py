"""
Shared argument validation and loaders for the CLI commands
"""
from pathlib import Path

from cogmask.core.exceptions import ConfigError
from cogmask.domain.dataset import DatasetKind, ProbeResponseDataset
from cogmask.domain.strategy import Strategy, k_norm, strategy_from_name
from cogmask.services.dataset_io import load_dataset


def get_dataset(path: str) -> ProbeResponseDataset:
    """Load a dataset file, raising FileNotFoundError for a missing path"""
    target = Path(path)
    if not target.is_file():
        raise FileNotFoundError(f"dataset file '{path}' not found")
    return load_dataset(target)


def get_strategy(dataset: ProbeResponseDataset, utility: str, kappa: float) -> Strategy:
    """The strategy the radar is assumed to hold: a utility for constraint-known data, a kappa-norm otherwise"""
    if dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
        return strategy_from_name(utility, dataset.dim)
    return k_norm(kappa)


def validate_eta(eta: float) -> float:
    """
    Validate a masking extent

    Raises:
        ConfigError: if eta is outside [0, 1]
    """
    if not 0.0 <= eta <= 1.0:
        raise ConfigError(f"--eta must lie in [0, 1], got {eta}")
    return eta


def validate_gamma(gamma: float) -> float:
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"--gamma must lie in (0, 1), got {gamma}")
    return gamma


def validate_sigma2(sigma2: float) -> float:
    if sigma2 < 0:
        raise ConfigError(f"--sigma2 must be nonnegative, got {sigma2}")
    return sigma2
