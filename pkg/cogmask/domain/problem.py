"""Masking problem definition shared by the deterministic and SPSA maskers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from cogmask.core.exceptions import DatasetValidationError
from cogmask.domain.dataset import DatasetKind, ProbeResponseDataset
from cogmask.domain.strategy import Strategy
from cogmask.schemas.configs import SolverConfig


@dataclass(frozen=True, eq=False)
class MaskingProblem:
    """The strategy to hide, what the adversary already knows, and how hard to hide it.

    For constraint-known datasets ``strategy`` is the radar's utility; for
    utility-known datasets it is the radar's constraint g, with the per-t
    Cobb-Douglas utilities and budgets gamma_t carried by ``dataset``.
    ``constraints`` lists the g_i of the multi-constraint variant.
    """

    strategy: Strategy
    dataset: ProbeResponseDataset
    eta: float = 0.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    constraints: Optional[Tuple[Strategy, ...]] = None

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise DatasetValidationError(f"eta must lie in [0, 1], got {self.eta}")
        if self.dataset.kind is DatasetKind.CONSTRAINT_KNOWN and self.constraints is None:
            if np.any(self.dataset.probes <= 0):
                raise DatasetValidationError("constraint-known masking needs strictly positive probes")
        if self.dataset.kind is DatasetKind.UTILITY_KNOWN and self.dataset.budgets is None:
            raise DatasetValidationError("utility-known masking needs budgets gamma_t")
        if self.constraints is not None:
            object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def horizon(self) -> int:
        return self.dataset.horizon

    def with_eta(self, eta: float) -> "MaskingProblem":
        return MaskingProblem(self.strategy, self.dataset, eta, self.solver, self.constraints)

    def with_responses(self, responses: NDArray[np.float64]) -> "MaskingProblem":
        return MaskingProblem(
            self.strategy, self.dataset.with_responses(responses), self.eta, self.solver, self.constraints
        )
