"""Measurement noise laws for the adversary's response sensor."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from cogmask.core.exceptions import DatasetValidationError

Sampler = Callable[[np.random.Generator, Tuple[int, ...]], NDArray[np.float64]]


class NoiseLaw(str, enum.Enum):
    GAUSSIAN_IID = "gaussian-iid"
    DEGENERATE = "degenerate"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Additive noise omega_t on each m-dimensional response.

    Sampling always goes through an explicit ``numpy.random.Generator`` so that
    every draw is reproducible from a seed.
    """

    law: NoiseLaw
    dim: int
    variance: float = 0.0
    sampler: Optional[Sampler] = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise DatasetValidationError("noise dimension must be positive")
        if self.law is NoiseLaw.GAUSSIAN_IID and self.variance < 0:
            raise DatasetValidationError("noise variance must be nonnegative")
        if self.law is NoiseLaw.CUSTOM and not callable(self.sampler):
            raise DatasetValidationError("custom noise needs a sampler")

    @property
    def is_degenerate(self) -> bool:
        return self.law is NoiseLaw.DEGENERATE or (
            self.law is NoiseLaw.GAUSSIAN_IID and self.variance == 0.0
        )

    def sample(self, rng: np.random.Generator, shape: Union[int, Tuple[int, ...]] = ()) -> NDArray[np.float64]:
        """Draw noise of shape (*shape, dim)."""
        lead = (shape,) if isinstance(shape, int) else tuple(shape)
        full = lead + (self.dim,)
        if self.law is NoiseLaw.DEGENERATE:
            return np.zeros(full)
        if self.law is NoiseLaw.GAUSSIAN_IID:
            return rng.normal(0.0, np.sqrt(self.variance), size=full)
        out = np.asarray(self.sampler(rng, full), dtype=float)
        if out.shape != full:
            raise DatasetValidationError(f"custom sampler returned shape {out.shape}, expected {full}")
        return out


def gaussian_noise(dim: int, variance: float) -> NoiseModel:
    return NoiseModel(NoiseLaw.GAUSSIAN_IID, dim, variance=float(variance))


def degenerate_noise(dim: int) -> NoiseModel:
    return NoiseModel(NoiseLaw.DEGENERATE, dim)


def make_rng(seed: Union[int, np.random.SeedSequence, np.random.Generator]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
