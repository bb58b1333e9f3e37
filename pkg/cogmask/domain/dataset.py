"""Probe/response datasets observed by the adversary."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from numpy.typing import NDArray

from cogmask.core.config import settings
from cogmask.core.exceptions import DatasetValidationError
from cogmask.domain.strategy import Strategy, StrategyRole, cobb_douglas, linear_budget


class DatasetKind(str, enum.Enum):
    """Which side of the radar the adversary already knows."""

    CONSTRAINT_KNOWN = "constraint-known"  # linear budgets alpha_t' beta <= 1, utility unknown
    UTILITY_KNOWN = "utility-known"  # per-t utilities u_t, constraint unknown


@dataclass(frozen=True, eq=False)
class ProbeResponseDataset:
    """K probe/response pairs with optional budgets.

    ``noisy`` datasets hold adversary measurements beta_t + omega_t, which may
    leave the orthant and break budget feasibility; their invariants are relaxed
    accordingly.
    """

    probes: NDArray[np.float64]
    responses: NDArray[np.float64]
    kind: DatasetKind = DatasetKind.CONSTRAINT_KNOWN
    budgets: Optional[NDArray[np.float64]] = None
    noisy: bool = False

    def __post_init__(self):
        probes = np.atleast_2d(np.asarray(self.probes, dtype=float))
        responses = np.atleast_2d(np.asarray(self.responses, dtype=float))
        object.__setattr__(self, "probes", probes)
        object.__setattr__(self, "responses", responses)
        if self.budgets is not None:
            object.__setattr__(self, "budgets", np.asarray(self.budgets, dtype=float).ravel())
        self._validate()

    def _validate(self) -> None:
        K, m = self.probes.shape
        if K < 1 or m < 1:
            raise DatasetValidationError("dataset needs K >= 1 and m >= 1")
        if self.responses.shape != (K, m):
            raise DatasetValidationError(
                f"responses shape {self.responses.shape} does not match probes {self.probes.shape}"
            )
        if not (np.all(np.isfinite(self.probes)) and np.all(np.isfinite(self.responses))):
            raise DatasetValidationError("probes and responses must be finite")
        if np.any(self.probes < 0):
            raise DatasetValidationError("probe entries must be nonnegative")
        if not self.noisy and np.any(self.responses < 0):
            raise DatasetValidationError("response entries must be nonnegative")
        if self.budgets is not None:
            if self.budgets.shape != (K,):
                raise DatasetValidationError(f"expected {K} budgets, got {self.budgets.shape}")
            if np.any(self.budgets <= 0):
                raise DatasetValidationError("budgets must be positive")
        if self.kind is DatasetKind.CONSTRAINT_KNOWN and not self.noisy:
            spend = np.einsum("ij,ij->i", self.probes, self.responses)
            over = np.nonzero(spend > 1.0 + settings.BUDGET_TOL)[0]
            if over.size:
                raise DatasetValidationError(
                    f"responses exceed the unit budget at t={over.tolist()} (alpha'beta={spend[over].tolist()})"
                )

    @property
    def horizon(self) -> int:
        return int(self.probes.shape[0])

    @property
    def dim(self) -> int:
        return int(self.probes.shape[1])

    def with_responses(self, responses: NDArray[np.float64], noisy: Optional[bool] = None) -> "ProbeResponseDataset":
        return ProbeResponseDataset(
            probes=self.probes,
            responses=responses,
            kind=self.kind,
            budgets=self.budgets,
            noisy=self.noisy if noisy is None else noisy,
        )

    def cross_spend(self) -> NDArray[np.float64]:
        """Matrix S[t, s] = alpha_t' beta_s."""
        return self.probes @ self.responses.T

    def normalized(self) -> "ProbeResponseDataset":
        """Rescale response units so the largest entry is 1.

        Constraint-known probes scale inversely so alpha'beta is unchanged.
        Utility-known probes are Cobb-Douglas exponents and stay as they are:
        rescaling beta multiplies each u_t by a positive constant, which the
        multipliers absorb.
        """
        scale = float(np.max(np.abs(self.responses)))
        if scale <= 0.0:
            return self
        probes = self.probes * scale if self.kind is DatasetKind.CONSTRAINT_KNOWN else self.probes
        return ProbeResponseDataset(
            probes=probes,
            responses=self.responses / scale,
            kind=self.kind,
            budgets=None if self.budgets is None else self.budgets / scale,
            noisy=self.noisy,
        )


def anchor_utilities(dataset: ProbeResponseDataset) -> List[Strategy]:
    """Per-t utilities of a utility-known dataset: Cobb-Douglas with exponents alpha_t.

    Exponents are rescaled to sum to one. That is a monotone transform of the
    raw product, so the maximizer is unchanged, and it keeps every u_t concave,
    which the reversed inequality system relies on.
    """
    utilities = []
    for alpha in dataset.probes:
        total = float(np.sum(alpha))
        if total <= 0.0:
            raise DatasetValidationError("Cobb-Douglas exponents must not all be zero")
        utilities.append(cobb_douglas(alpha / total, StrategyRole.UTILITY))
    return utilities


def budget_constraints(dataset: ProbeResponseDataset) -> List[Strategy]:
    """Per-t constraints g_t(beta) = alpha_t' beta - 1 of a constraint-known dataset."""
    return [linear_budget(alpha, offset=-1.0) for alpha in dataset.probes]
