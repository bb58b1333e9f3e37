"""Result containers returned by the IRL, margin, masking and detector services."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from cogmask.core.constants import ETA_CONVENTION, SPSA_SIGN_CONVENTION
from cogmask.domain.strategy import Strategy

Pair = Tuple[int, int]


class InequalitySense(str, enum.Enum):
    LE = "<=0"  # utility reconstruction, Afriat form
    GE = ">=0"  # constraint reconstruction, reversed form


@dataclass(frozen=True, eq=False)
class InequalitySystem:
    """Homogeneous linear inequalities ``coefficients @ theta (sense) 0``.

    Row k belongs to the ordered pair ``pairs[k] = (s, t)``. ``trivial`` marks
    the empty K = 1 system, feasible by convention.
    """

    coefficients: NDArray[np.float64]
    pairs: Tuple[Pair, ...]
    sense: InequalitySense
    n_theta: int
    trivial: bool = False

    @property
    def n_rows(self) -> int:
        return len(self.pairs)

    def upper_bound_form(self) -> NDArray[np.float64]:
        """Coefficients oriented so that every row reads ``row @ theta <= 0``."""
        if self.sense is InequalitySense.GE:
            return -self.coefficients
        return self.coefficients

    def residuals(self, theta: NDArray[np.float64]) -> NDArray[np.float64]:
        """Residual per row, nonpositive when satisfied."""
        if self.trivial:
            return np.zeros(0)
        return self.upper_bound_form() @ np.asarray(theta, dtype=float)


class CertificateStatus(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    SOLVER_FAILURE = "solver-failure"


@dataclass(frozen=True, eq=False)
class FeasibilityCertificate:
    """Outcome of an IRL feasibility test.

    ``theta`` holds K offsets followed by the multipliers: K of them for a
    single constraint, K*I (block I per t) for the multi-constraint test. The
    LP returns one feasible vertex; other feasible theta generally exist.
    """

    status: CertificateStatus
    theta: Optional[NDArray[np.float64]] = None
    active_flags: Optional[NDArray[np.bool_]] = None
    lp_residual: float = 0.0
    flagged_trivial: bool = False
    n_constraints: int = 1
    constraints: Optional[Tuple[Strategy, ...]] = field(default=None, repr=False)
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status is CertificateStatus.FEASIBLE

    @property
    def solver_failed(self) -> bool:
        return self.status is CertificateStatus.SOLVER_FAILURE

    def offsets(self, horizon: int) -> NDArray[np.float64]:
        return self.theta[:horizon]

    def multipliers(self, horizon: int) -> NDArray[np.float64]:
        """Multipliers reshaped to (K, I)."""
        return self.theta[horizon:].reshape(horizon, self.n_constraints)


class Combiner(str, enum.Enum):
    MIN = "min"  # reconstructed utility
    MAX = "max"  # reconstructed constraint


@dataclass(frozen=True, eq=False)
class PiecewiseStrategy:
    """Pointwise min (or max) of K shifted, scaled anchor functions.

    Piece t evaluates ``offsets[t] + sum_i slopes[t, i] * (anchors[t][i](beta) - anchors[t][i](anchor_responses[t]))``.
    """

    offsets: NDArray[np.float64]
    slopes: NDArray[np.float64]
    anchors: Tuple[Tuple[Strategy, ...], ...]
    anchor_responses: NDArray[np.float64]
    combiner: Combiner

    def __post_init__(self):
        base = np.array([[g.value(self.anchor_responses[t]) for g in row] for t, row in enumerate(self.anchors)])
        object.__setattr__(self, "_baseline", base)

    @property
    def n_pieces(self) -> int:
        return int(self.offsets.shape[0])

    @property
    def pieces(self) -> List[Tuple[float, NDArray[np.float64], Tuple[Strategy, ...], NDArray[np.float64]]]:
        return [
            (float(self.offsets[t]), self.slopes[t], self.anchors[t], self.anchor_responses[t])
            for t in range(self.n_pieces)
        ]

    def piece_values(self, beta: NDArray[np.float64]) -> NDArray[np.float64]:
        current = np.array([[g.value(beta) for g in row] for row in self.anchors])
        return self.offsets + np.sum(self.slopes * (current - self._baseline), axis=1)

    def value(self, beta: NDArray[np.float64]) -> float:
        pv = self.piece_values(beta)
        return float(np.min(pv) if self.combiner is Combiner.MIN else np.max(pv))

    def values(self, betas: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.array([self.value(b) for b in np.atleast_2d(betas)])


@dataclass(frozen=True)
class MarginResult:
    """Feasibility margin with the inequality that attains it.

    ``binding_pair`` is None for an empty system or an opaque evaluator;
    ``binding_index`` is the flat residual index in that case.
    """

    epsilon: float
    binding_pair: Optional[Pair]
    theta_used: Optional[NDArray[np.float64]] = None
    binding_index: Optional[int] = None


@dataclass
class MaskingReport:
    naive_responses: NDArray[np.float64]
    masked_responses: NDArray[np.float64]
    loss: float
    margin_before: float
    margin_after: float
    eta: float
    cap: float
    iterations: int = 0
    restarts: int = 0
    best_penalty_residual: float = 0.0
    penalty_weight: float = 0.0
    strategy_name: str = ""
    eta_convention: str = ETA_CONVENTION

    def summary(self) -> Dict[str, Any]:
        return {
            "eta": self.eta,
            "loss": self.loss,
            "margin_before": self.margin_before,
            "margin_after": self.margin_after,
            "cap": self.cap,
            "iterations": self.iterations,
            "solver_restarts": self.restarts,
            "best_penalty_residual": self.best_penalty_residual,
            "eta_convention": self.eta_convention,
        }


class Decision(str, enum.Enum):
    H0_COGNITIVE = "H0_cognitive"
    H1_NOT_COGNITIVE = "H1_not_cognitive"


@dataclass(frozen=True)
class DetectionOutcome:
    statistic: float
    threshold: float
    decision: Decision

    @property
    def rejects(self) -> bool:
        return self.decision is Decision.H1_NOT_COGNITIVE


@dataclass(frozen=True)
class RateEstimate:
    """Binomial rate with its standard error."""

    rate: float
    stderr: float
    trials: int
    gamma: float = float("nan")

    @classmethod
    def from_counts(cls, hits: int, trials: int, gamma: float = float("nan")) -> "RateEstimate":
        rate = hits / trials if trials else 0.0
        stderr = float(np.sqrt(rate * (1.0 - rate) / trials)) if trials else 0.0
        return cls(rate=rate, stderr=stderr, trials=trials, gamma=gamma)

    def within_bound(self, gamma: float, sigmas: float = 3.0) -> bool:
        return self.rate <= gamma + sigmas * self.stderr


@dataclass
class SpsaTrace:
    """History and outcome of one SPSA masking run."""

    lam: float
    objective_history: NDArray[np.float64]
    history_iterations: NDArray[np.int64]
    history_loss: NDArray[np.float64]
    history_probability: NDArray[np.float64]
    final_responses: NDArray[np.float64]
    final_loss: float
    final_type1: float
    best_objective: float
    iterations: int
    halvings: int = 0
    aborted: bool = False
    sign_convention: str = SPSA_SIGN_CONVENTION
    candidates: List[Tuple[float, float, NDArray[np.float64]]] = field(default_factory=list, repr=False)

    def trace_rows(self) -> List[Dict[str, Any]]:
        return [
            {"iteration": int(i), "objective": float(j), "loss": float(l), "probability": float(p)}
            for i, j, l, p in zip(
                self.history_iterations, self.objective_history, self.history_loss, self.history_probability
            )
        ]

