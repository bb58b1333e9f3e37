"""
Margin-capped cognition masking.

Every variant minimizes the utility loss sum_t u_t(b*_t) - u_t(b_t) over
feasible responses subject to margin(b) <= (1 - eta) * margin(b*). The solver
is an exact penalty loss + rho * max(0, margin - cap) driven by projected
gradient steps with Armijo backtracking; rho grows until the cap holds.
"""
import enum
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from cogmask.core.config import settings
from cogmask.core.exceptions import MaskingInfeasibleError
from cogmask.domain.dataset import DatasetKind, anchor_utilities
from cogmask.domain.noise import make_rng
from cogmask.domain.problem import MaskingProblem
from cogmask.domain.results import MaskingReport, Pair
from cogmask.domain.strategy import Strategy, StrategyFamily
from cogmask.services import margins
from cogmask.services.projections import (
    Projector,
    constraint_projector,
    project_budget_set,
    project_intersection,
)
from cogmask.services.rp_core import ordered_pairs
from cogmask.services.scenarios import maximize_on_set, naive_beam, naive_waveform

logger = logging.getLogger(__name__)

BLEND_BISECTIONS = 60


class MaskingKind(str, enum.Enum):
    UTILITY = "utility"
    CONSTRAINT = "constraint"
    MULTI = "multi"
    GENERIC = "generic"


Candidate = Tuple[float, float, NDArray[np.float64]]


class CandidatePool:
    """Pareto front of feasible iterates over (loss, margin)."""

    def __init__(self, items: Iterable[Candidate] = ()):
        self._items: List[Candidate] = []
        for loss, margin, responses in items:
            self.add(loss, margin, responses)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, loss: float, margin: float, responses: NDArray[np.float64]) -> None:
        for other_loss, other_margin, _ in self._items:
            if other_loss <= loss and other_margin <= margin:
                return
        self._items = [c for c in self._items if not (loss <= c[0] and margin <= c[1])]
        self._items.append((float(loss), float(margin), np.array(responses, dtype=float)))

    def merge(self, other: "CandidatePool") -> None:
        for candidate in other._items:
            self.add(*candidate)

    def best_under(self, cap: float) -> Optional[Candidate]:
        """Lowest-loss candidate with margin <= cap; ties go to the smaller margin."""
        eligible = [c for c in self._items if c[1] <= cap]
        if not eligible:
            return None
        return min(eligible, key=lambda c: (c[0], c[1]))


# -- problem landscape ----------------------------------------------------------


@dataclass(eq=False)
class _Landscape:
    """Loss, margin and feasible set of one masking problem as functions of the (K, m) responses."""

    problem: MaskingProblem
    kind: MaskingKind
    naive: NDArray[np.float64]
    utilities: List[Strategy]
    projectors: List[Projector]
    slacks: Callable[[NDArray[np.float64]], NDArray[np.float64]]
    pairs: Optional[List[Pair]]

    def __post_init__(self):
        self._naive_values = np.array([u.value(b) for u, b in zip(self.utilities, self.naive)])

    def loss(self, responses: NDArray[np.float64]) -> float:
        current = np.array([u.value(b) for u, b in zip(self.utilities, responses)])
        return float(np.sum(self._naive_values - current))

    def loss_gradient(self, responses: NDArray[np.float64]) -> NDArray[np.float64]:
        return -np.array([u.gradient(b) for u, b in zip(self.utilities, responses)])

    def margin(self, responses: NDArray[np.float64]) -> Tuple[float, Optional[int]]:
        values = self.slacks(responses)
        if values.size == 0:
            return 0.0, None
        k = int(np.argmax(values))
        return float(max(0.0, values[k])), k

    def margin_gradient(self, responses: NDArray[np.float64], k: int) -> NDArray[np.float64]:
        """Forward differences of the binding slack; pairwise systems only move rows s and t."""
        h = settings.GRADIENT_FD_STEP
        rows = sorted(set(self.pairs[k])) if self.pairs is not None else range(responses.shape[0])
        base = self.slacks(responses)[k]
        grad = np.zeros_like(responses)
        for r in rows:
            for i in range(responses.shape[1]):
                bumped = responses.copy()
                bumped[r, i] += h
                grad[r, i] = (self.slacks(bumped)[k] - base) / h
        return grad

    def project(self, responses: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.array([p(b) for p, b in zip(self.projectors, responses)])


def _working_dataset(problem: MaskingProblem, responses: NDArray[np.float64]):
    # noisy=True skips the budget check, so finite-difference bumps on tight rows stay legal
    return problem.dataset.with_responses(responses, noisy=True)


def _row_projectors(problem: MaskingProblem, kind: MaskingKind) -> List[Projector]:
    dataset = problem.dataset
    if kind is MaskingKind.MULTI:
        return [
            (lambda x, ps=[constraint_projector(c.bind(alpha)) for c in problem.constraints]: project_intersection(x, ps))
            for alpha in dataset.probes
        ]
    if dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
        return [(lambda x, a=alpha: project_budget_set(x, a, 1.0)) for alpha in dataset.probes]
    return [constraint_projector(problem.strategy, level=gamma) for gamma in dataset.budgets]


def _landscape(
    problem: MaskingProblem, kind: MaskingKind, evaluator: Optional[margins.Evaluator] = None
) -> _Landscape:
    dataset = problem.dataset
    naive = solve_naive(problem)
    strategy = problem.strategy
    K = dataset.horizon
    if dataset.kind is DatasetKind.UTILITY_KNOWN and kind is not MaskingKind.MULTI:
        utilities = anchor_utilities(dataset)
    else:
        utilities = [strategy] * K
    pairs: Optional[List[Pair]] = ordered_pairs(K)
    off = ~np.eye(K, dtype=bool)

    if K < 2:
        slacks = lambda b: np.zeros(0)  # noqa: E731
    elif kind is MaskingKind.MULTI:
        constraints = list(problem.constraints)
        slacks = lambda b: margins.multi_slack_matrix(strategy, _working_dataset(problem, b), constraints)[0][off]  # noqa: E731
    elif kind is MaskingKind.GENERIC:
        slacks = lambda b: -np.asarray(evaluator(strategy, _working_dataset(problem, b)), dtype=float).ravel()  # noqa: E731
        pairs = None
    else:
        slacks = lambda b: margins.slack_matrix(strategy, _working_dataset(problem, b))[0][off]  # noqa: E731
    return _Landscape(problem, kind, naive, utilities, _row_projectors(problem, kind), slacks, pairs)


# -- naive responses ------------------------------------------------------------


def solve_naive(problem: MaskingProblem) -> NDArray[np.float64]:
    """Per-epoch maximizer; closed forms where the family has one, projected ascent otherwise.

    Raises:
        ConvergenceError: ascent failed from every start (best iterate attached)
    """
    dataset, strategy = problem.dataset, problem.strategy
    rng = make_rng(problem.solver.seed)
    starts = lambda: [np.full(dataset.dim, 1e-3)] + list(  # noqa: E731
        rng.uniform(0.0, 1.0, size=(problem.solver.multi_starts - 1, dataset.dim))
    )
    if problem.constraints is not None:
        constraints = problem.constraints
        if len(constraints) == 1 and constraints[0].probe_weighted and constraints[0].offset == -1.0:
            return np.array([naive_waveform(strategy, a, rng) for a in dataset.probes])
        out = []
        for alpha in dataset.probes:
            projectors = [constraint_projector(c.bind(alpha)) for c in constraints]
            out.append(maximize_on_set(strategy, lambda x, ps=projectors: project_intersection(x, ps), starts()))
        return np.array(out)
    if dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
        return np.array([naive_waveform(strategy, a, rng) for a in dataset.probes])
    if strategy.family is StrategyFamily.K_NORM and strategy.offset == 0.0:
        return np.array([naive_beam(a, strategy.kappa, g) for a, g in zip(dataset.probes, dataset.budgets)])
    return np.array([
        maximize_on_set(u, constraint_projector(strategy, level=g), starts())
        for u, g in zip(anchor_utilities(dataset), dataset.budgets)
    ])


# -- solver ---------------------------------------------------------------------


class _PenaltySolver:
    def __init__(self, landscape: _Landscape, cap: float):
        self.land = landscape
        self.cap = cap
        self.config = landscape.problem.solver
        self.pool = CandidatePool()
        self.lowest_margin: Tuple[float, Optional[NDArray[np.float64]]] = (np.inf, None)
        self.iterations = 0
        self.rho = self.config.penalty_initial

    def _feasible(self, margin: float) -> bool:
        return margin <= self.cap + self.config.cap_tolerance

    def _record(self, responses, loss: float, margin: float) -> None:
        if margin < self.lowest_margin[0]:
            self.lowest_margin = (margin, responses.copy())
        if self._feasible(margin):
            self.pool.add(loss, margin, responses)

    def _evaluate(self, responses, rho: float):
        loss = self.land.loss(responses)
        margin, k = self.land.margin(responses)
        self._record(responses, loss, margin)
        return loss + rho * max(0.0, margin - self.cap), margin, k

    def blend_toward_constant(self, responses: NDArray[np.float64]) -> NDArray[np.float64]:
        """Shortest blend toward the componentwise-min profile that meets the cap.

        The constant profile has zero margin and is feasible for every epoch
        whenever the constraints are monotone.
        """
        target = np.broadcast_to(np.min(self.land.naive, axis=0), responses.shape)
        blend = lambda tau: (1.0 - tau) * responses + tau * target  # noqa: E731
        hi_point = blend(1.0)
        if not self._feasible(self.land.margin(hi_point)[0]):
            return responses
        lo, hi = 0.0, 1.0
        for _ in range(BLEND_BISECTIONS):
            mid = 0.5 * (lo + hi)
            if self._feasible(self.land.margin(blend(mid))[0]):
                hi = mid
            else:
                lo = mid
        point = blend(hi)
        self._evaluate(point, 0.0)
        return point

    def descend(self, responses: NDArray[np.float64], rho: float) -> NDArray[np.float64]:
        cfg = self.config
        step = cfg.initial_step
        f, margin, k = self._evaluate(responses, rho)
        for _ in range(cfg.max_iterations):
            self.iterations += 1
            grad = self.land.loss_gradient(responses)
            if margin > self.cap and k is not None:
                grad = grad + rho * self.land.margin_gradient(responses, k)
            while step >= cfg.min_step:
                trial = self.land.project(responses - step * grad)
                f_trial, m_trial, k_trial = self._evaluate(trial, rho)
                if f_trial <= f - cfg.armijo * float(np.sum((trial - responses) ** 2)) / step:
                    break
                step *= 0.5
            else:
                break
            moved = float(np.linalg.norm(trial - responses))
            responses, f, margin, k = trial, f_trial, m_trial, k_trial
            step = min(2.0 * step, cfg.initial_step)
            if moved <= cfg.tolerance:
                break
        return responses

    def run_start(self, start: NDArray[np.float64]) -> None:
        cfg = self.config
        responses = self.land.project(start)
        rho = cfg.penalty_initial
        for round_ in range(cfg.max_penalty_rounds):
            responses = self.descend(responses, rho)
            if self._feasible(self.land.margin(responses)[0]):
                break
            rho *= cfg.penalty_growth
            logger.debug("penalty raised to %.3g (round %d)", rho, round_ + 1)
        if not self._feasible(self.land.margin(responses)[0]):
            self.blend_toward_constant(responses)
        self.rho = rho

    def starts(self) -> List[NDArray[np.float64]]:
        cfg = self.config
        naive = self.land.naive
        out = [naive, self.blend_toward_constant(naive)]
        rng = make_rng(cfg.seed)
        scale = cfg.dither_scale * float(np.mean(np.abs(naive)) or 1.0)
        for _ in range(max(0, cfg.multi_starts - 2)):
            out.append(naive + scale * rng.normal(size=naive.shape))
        return out[: cfg.multi_starts]


def _solve(
    landscape: _Landscape, eta: float, warm_starts: Sequence[NDArray[np.float64]] = ()
) -> Tuple[MaskingReport, CandidatePool]:
    naive = landscape.naive
    margin_before, _ = landscape.margin(naive)
    cap = (1.0 - eta) * margin_before
    solver = _PenaltySolver(landscape, cap)
    solver.pool.add(0.0, margin_before, naive)
    name = landscape.problem.strategy.name

    def report(candidate: Candidate, restarts: int, rho: float) -> MaskingReport:
        loss, margin_after, responses = candidate
        return MaskingReport(
            naive_responses=naive,
            masked_responses=responses,
            loss=loss,
            margin_before=margin_before,
            margin_after=margin_after,
            eta=eta,
            cap=cap,
            iterations=solver.iterations,
            restarts=restarts,
            best_penalty_residual=max(0.0, margin_after - cap),
            penalty_weight=rho,
            strategy_name=name,
        )

    if solver._feasible(margin_before):
        return report((0.0, margin_before, naive), 0, 0.0), solver.pool

    starts = solver.starts() + [np.asarray(s, dtype=float) for s in warm_starts]
    for start in starts:
        solver.run_start(start)
    best = solver.pool.best_under(cap + solver.config.cap_tolerance)
    if best is None:
        margin, responses = solver.lowest_margin
        raise MaskingInfeasibleError(
            f"no response sequence met the cap {cap:.3g} (best margin {margin:.3g})",
            best_iterate=responses,
            best_margin=margin,
        )
    logger.debug("eta=%.3g loss=%.6g margin %.6g -> %.6g", eta, best[0], margin_before, best[1])
    return report(best, len(starts), solver.rho), solver.pool


# -- public variants ------------------------------------------------------------


def mask_utility(problem: MaskingProblem) -> MaskingReport:
    """Hide a utility behind linear budgets (constraint-known adversary)."""
    if problem.dataset.kind is not DatasetKind.CONSTRAINT_KNOWN:
        raise ValueError("mask_utility needs a constraint-known dataset")
    return _solve(_landscape(problem, MaskingKind.UTILITY), problem.eta)[0]


def mask_constraint(problem: MaskingProblem) -> MaskingReport:
    """Hide the constraint g behind per-epoch Cobb-Douglas utilities (utility-known adversary)."""
    if problem.dataset.kind is not DatasetKind.UTILITY_KNOWN:
        raise ValueError("mask_constraint needs a utility-known dataset")
    return _solve(_landscape(problem, MaskingKind.CONSTRAINT), problem.eta)[0]


def mask_utility_multi(problem: MaskingProblem, constraints: Optional[Sequence[Strategy]] = None) -> MaskingReport:
    if constraints is not None:
        problem = MaskingProblem(problem.strategy, problem.dataset, problem.eta, problem.solver, tuple(constraints))
    if not problem.constraints:
        raise ValueError("mask_utility_multi needs at least one constraint")
    return _solve(_landscape(problem, MaskingKind.MULTI), problem.eta)[0]


def mask_generic(
    problem: MaskingProblem,
    evaluator: margins.Evaluator,
    warm_starts: Sequence[NDArray[np.float64]] = (),
) -> MaskingReport:
    """Mask against an arbitrary inequality-residual evaluator.

    ``warm_starts`` are extra (K, m) response sequences descended from after the
    default starts; a start that already meets the cap stays in the candidate pool.
    """
    return _solve(_landscape(problem, MaskingKind.GENERIC, evaluator), problem.eta, warm_starts)[0]


def default_kind(problem: MaskingProblem) -> MaskingKind:
    if problem.constraints:
        return MaskingKind.MULTI
    if problem.dataset.kind is DatasetKind.UTILITY_KNOWN:
        return MaskingKind.CONSTRAINT
    return MaskingKind.UTILITY


def mask_eta_sweep(
    problem: MaskingProblem,
    etas: Sequence[float],
    kind: Optional[MaskingKind] = None,
    evaluator: Optional[margins.Evaluator] = None,
    mapper: Callable = map,
) -> List[MaskingReport]:
    """Solve every eta, then let each grid point take the best pooled candidate under its own cap.

    Caps shrink as eta grows, so the reported loss is nondecreasing in eta.
    ``mapper`` may be an executor's ``map``; every solve reuses the same seed.
    """
    landscape = _landscape(problem, kind or default_kind(problem), evaluator)
    results = list(mapper(lambda eta: _solve(landscape, eta), list(etas)))
    pool = CandidatePool()
    for _, own in results:
        pool.merge(own)
    tol = problem.solver.cap_tolerance
    reports = []
    for report, _ in results:
        best = pool.best_under(report.cap + tol)
        if best is not None and best[0] < report.loss:
            report.loss, report.margin_after, report.masked_responses = best[0], best[1], best[2]
            report.best_penalty_residual = max(0.0, best[1] - report.cap)
        reports.append(report)
    return reports
