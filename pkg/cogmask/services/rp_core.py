"""
Revealed-preference feasibility tests, reconstructions and projections.

The Afriat-type systems are homogeneous in theta, so a strictly positive
solution exists iff one exists with every offset and multiplier >= 1. The LPs
use that unit floor; the returned certificates therefore clear the
``settings.DELTA_POS`` floor with room to spare. Single-constraint datasets
are normalized to unit response scale before solving, so the verdict and the
``settings.FEASIBILITY_TOL`` residual check do not depend on units.
"""
import itertools
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linprog

from cogmask.core.config import settings
from cogmask.core.exceptions import (
    EnumerationOverflowError,
    InfeasibleCertificateError,
    ProjectionError,
    SolverFailureError,
)
from cogmask.domain.dataset import DatasetKind, ProbeResponseDataset, anchor_utilities, budget_constraints
from cogmask.domain.results import (
    CertificateStatus,
    Combiner,
    FeasibilityCertificate,
    InequalitySense,
    InequalitySystem,
    Pair,
    PiecewiseStrategy,
)
from cogmask.domain.strategy import Strategy

logger = logging.getLogger(__name__)

LP_FLOOR = 1.0
INFEASIBLE_STATUS = 2


def ordered_pairs(horizon: int) -> List[Pair]:
    """All (s, t) with s != t, row-major."""
    return [(s, t) for s in range(horizon) for t in range(horizon) if s != t]


def anchor_differences(dataset: ProbeResponseDataset) -> NDArray[np.float64]:
    """D[s, t] = f_t(beta_s) - f_t(beta_t) for the known anchor f_t (budget or utility)."""
    if dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
        spend = dataset.cross_spend()  # spend[t, s] = alpha_t' beta_s
        return (spend - np.diag(spend)[:, None]).T
    values = np.array([u.values(dataset.responses) for u in anchor_utilities(dataset)])  # values[t, s]
    return (values - np.diag(values)[:, None]).T


def build_afriat_system(dataset: ProbeResponseDataset) -> InequalitySystem:
    """Rows theta_s - theta_t - theta_{K+t} * D[s, t] over theta in R^{2K}."""
    K = dataset.horizon
    sense = InequalitySense.LE if dataset.kind is DatasetKind.CONSTRAINT_KNOWN else InequalitySense.GE
    if K < 2:
        return InequalitySystem(np.zeros((0, 2 * K)), (), sense, 2 * K, trivial=True)
    diffs = anchor_differences(dataset)
    pairs = ordered_pairs(K)
    coefficients = np.zeros((len(pairs), 2 * K))
    for row, (s, t) in enumerate(pairs):
        coefficients[row, s] += 1.0
        coefficients[row, t] -= 1.0
        coefficients[row, K + t] = -diffs[s, t]
    return InequalitySystem(coefficients, tuple(pairs), sense, 2 * K)


def solve_feasibility(
    a_ub: NDArray[np.float64],
    b_ub: NDArray[np.float64],
    bounds: Sequence[Tuple[Optional[float], Optional[float]]],
) -> Optional[NDArray[np.float64]]:
    """Feasible point of {a_ub x <= b_ub, bounds}, or None when infeasible.

    Raises:
        SolverFailureError: the backend stopped for any reason other than a verdict
    """
    n = len(bounds)
    res = linprog(
        np.zeros(n),
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=bounds,
        method=settings.LP_METHOD,
        options={"primal_feasibility_tolerance": settings.FEASIBILITY_TOL},
    )
    if res.status == 0:
        return res.x
    if res.status == INFEASIBLE_STATUS:
        return None
    raise SolverFailureError(f"LP backend failed: {res.message}", status=res.status)


def _residual(a_ub, b_ub, x) -> float:
    """Worst row violation with x scaled to unit max entry; the rows are homogeneous in x."""
    if a_ub.shape[0] == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(x))))
    return float(max(0.0, np.max(a_ub @ x - b_ub))) / scale


def _trivial_certificate(n_constraints: int = 1, constraints=None) -> FeasibilityCertificate:
    theta = np.ones(1 + n_constraints)
    return FeasibilityCertificate(
        CertificateStatus.FEASIBLE,
        theta=theta,
        active_flags=np.ones((1, n_constraints), dtype=bool),
        flagged_trivial=True,
        n_constraints=n_constraints,
        constraints=constraints,
        message="single observation: no pairwise inequalities",
    )


def _in_dataset_units(theta: NDArray[np.float64], dataset: ProbeResponseDataset) -> NDArray[np.float64]:
    """Map a certificate of ``dataset.normalized()`` back to the units of ``dataset``.

    Constraint-known spends alpha'beta are unchanged by normalizing. Utility-known
    anchors are degree-one homogeneous, so every row shrinks by the response scale
    and the offsets grow back by it. The result is rescaled so every entry keeps
    the unit floor.
    """
    scale = float(np.max(np.abs(dataset.responses)))
    if dataset.kind is DatasetKind.CONSTRAINT_KNOWN or scale <= 0.0:
        return theta
    K = dataset.horizon
    return np.concatenate([theta[:K] * scale, theta[K:]]) * max(1.0, 1.0 / scale)


def _check_single(dataset: ProbeResponseDataset) -> FeasibilityCertificate:
    system = build_afriat_system(dataset.normalized())
    if system.trivial:
        return _trivial_certificate()
    a_ub = system.upper_bound_form()
    b_ub = np.zeros(system.n_rows)
    bounds = [(LP_FLOOR, None)] * system.n_theta
    try:
        theta = solve_feasibility(a_ub, b_ub, bounds)
    except SolverFailureError as e:
        logger.warning("feasibility LP failed: %s", e)
        return FeasibilityCertificate(CertificateStatus.SOLVER_FAILURE, message=str(e))
    if theta is None:
        return FeasibilityCertificate(CertificateStatus.INFEASIBLE, message="no positive theta satisfies the system")
    residual = _residual(a_ub, b_ub, theta)
    if residual > settings.FEASIBILITY_TOL:
        logger.warning("LP point violates the system by %.3g", residual)
        return FeasibilityCertificate(
            CertificateStatus.SOLVER_FAILURE,
            lp_residual=residual,
            message=f"LP point violates the system by {residual:.3g} (tolerance {settings.FEASIBILITY_TOL:g})",
        )
    return FeasibilityCertificate(
        CertificateStatus.FEASIBLE,
        theta=_in_dataset_units(theta, dataset),
        lp_residual=residual,
    )


def check_utility_rationalizable(dataset: ProbeResponseDataset) -> FeasibilityCertificate:
    """Is there a concave monotone utility under whose budgets the responses are optimal?"""
    if dataset.kind is not DatasetKind.CONSTRAINT_KNOWN:
        raise ValueError("utility reconstruction needs a constraint-known dataset")
    return _check_single(dataset)


def check_constraint_rationalizable(dataset: ProbeResponseDataset) -> FeasibilityCertificate:
    """Is there a convex monotone constraint under which the responses maximize the known u_t?"""
    if dataset.kind is not DatasetKind.UTILITY_KNOWN:
        raise ValueError("constraint reconstruction needs a utility-known dataset")
    return _check_single(dataset)


def check_rationalizable(dataset: ProbeResponseDataset) -> FeasibilityCertificate:
    if dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
        return check_utility_rationalizable(dataset)
    return check_constraint_rationalizable(dataset)


# -- multiple constraints ------------------------------------------------------


def constraint_values(dataset: ProbeResponseDataset, constraints: Sequence[Strategy]) -> NDArray[np.float64]:
    """G[s, t, i] = g_i(alpha_s, beta_t)."""
    K, I = dataset.horizon, len(constraints)
    out = np.empty((K, K, I))
    for s, alpha in enumerate(dataset.probes):
        for i, g in enumerate(constraints):
            out[s, :, i] = g.bind(alpha).values(dataset.responses)
    return out


def _multi_rows(dataset: ProbeResponseDataset, constraints: Sequence[Strategy], n_vars: int) -> NDArray[np.float64]:
    """theta_t - theta_s - sum_i mu_{s,i} g_i(alpha_s, beta_t) <= 0 for s != t."""
    K, I = dataset.horizon, len(constraints)
    G = constraint_values(dataset, constraints)
    rows = np.zeros((K * (K - 1), n_vars))
    for row, (s, t) in enumerate(ordered_pairs(K)):
        rows[row, t] += 1.0
        rows[row, s] -= 1.0
        rows[row, K + s * I:K + (s + 1) * I] = -G[s, t, :]
    return rows


def _multi_certificate(theta, flags, a_ub, b_ub, I, constraints) -> FeasibilityCertificate:
    return FeasibilityCertificate(
        CertificateStatus.FEASIBLE,
        theta=theta,
        active_flags=flags,
        lp_residual=_residual(a_ub, b_ub, theta),
        n_constraints=I,
        constraints=tuple(constraints),
    )


def check_multiconstraint_rationalizable(
    dataset: ProbeResponseDataset,
    constraints: Sequence[Strategy],
    n_constraints: Optional[int] = None,
) -> FeasibilityCertificate:
    """Mixed-integer test with at least one active constraint per t.

    Depth-first branch-and-bound over the selectors z_{s,i} in
    mu_{s,i} >= floor * z_{s,i}, sum_i z_{s,i} >= 1, with the HiGHS LP as
    relaxation. The rows are homogeneous in theta, which makes the relaxation
    integral after scaling: any relaxed point has sum_i mu_{s,i} >= floor in
    every block, so multiplying it by I lifts the largest mu_{s,i} of each block
    to the floor. A feasible root relaxation is therefore already a certificate
    and in exact arithmetic the search never branches; an infeasible root settles
    the verdict. Branching only happens when a relaxed point misses the floor by
    the LP feasibility tolerance.
    """
    constraints = list(constraints)
    I = len(constraints) if n_constraints is None else n_constraints
    if I < 1 or I != len(constraints):
        raise ValueError(f"expected {I} constraints, got {len(constraints)}")
    K = dataset.horizon
    if K < 2:
        return _trivial_certificate(I, tuple(constraints))

    n_theta = K + K * I
    n_vars = n_theta + K * I
    afriat = _multi_rows(dataset, constraints, n_vars)
    link = np.zeros((K * I, n_vars))
    cover = np.zeros((K, n_vars))
    for s in range(K):
        for i in range(I):
            k = s * I + i
            link[k, K + k] = -1.0
            link[k, n_theta + k] = LP_FLOOR
            cover[s, n_theta + k] = -1.0
    a_ub = np.vstack([afriat, link, cover])
    b_ub = np.concatenate([np.zeros(afriat.shape[0] + K * I), -np.ones(K)])
    base_bounds = [(LP_FLOOR, None)] * K + [(0.0, None)] * (K * I)

    stack = [(np.zeros(K * I), np.ones(K * I))]
    nodes = 0
    while stack:
        lo, hi = stack.pop()
        nodes += 1
        if nodes > settings.MILP_MAX_NODES:
            return FeasibilityCertificate(
                CertificateStatus.SOLVER_FAILURE, n_constraints=I, message="branch-and-bound node limit reached"
            )
        bounds = base_bounds + list(zip(lo, hi))
        try:
            x = solve_feasibility(a_ub, b_ub, bounds)
        except SolverFailureError as e:
            logger.warning("MILP relaxation failed at node %d: %s", nodes, e)
            return FeasibilityCertificate(CertificateStatus.SOLVER_FAILURE, n_constraints=I, message=str(e))
        if x is None:
            continue
        theta = x[:n_theta]
        mu = theta[K:].reshape(K, I)
        if np.any(np.max(mu, axis=1) < LP_FLOOR * (1.0 - 1e-9)):
            theta = theta * (I * (1.0 + 1e-9))
            mu = theta[K:].reshape(K, I)
        flags = mu >= LP_FLOOR * (1.0 - 1e-9)
        if np.all(np.any(flags, axis=1)):
            logger.debug("multi-constraint test feasible after %d nodes", nodes)
            rows = a_ub[: afriat.shape[0], :n_theta]
            return _multi_certificate(theta, flags, rows, np.zeros(rows.shape[0]), I, constraints)
        z = x[n_theta:]
        frac = np.abs(z - np.round(z))
        j = int(np.argmax(frac))
        down_lo, down_hi = lo.copy(), hi.copy()
        down_hi[j] = 0.0
        up_lo, up_hi = lo.copy(), hi.copy()
        up_lo[j] = 1.0
        stack.append((down_lo, down_hi))
        stack.append((up_lo, up_hi))
    return FeasibilityCertificate(CertificateStatus.INFEASIBLE, n_constraints=I, message="no active-set pattern is feasible")


def enumerate_active_sets(dataset: ProbeResponseDataset, constraints: Sequence[Strategy]) -> FeasibilityCertificate:
    """Exhaustive oracle: one LP per choice of a designated active constraint for every t."""
    constraints = list(constraints)
    K, I = dataset.horizon, len(constraints)
    if K < 2:
        return _trivial_certificate(I, tuple(constraints))
    n_patterns = I ** K
    if n_patterns > settings.ENUMERATION_MAX_PATTERNS:
        raise EnumerationOverflowError(
            f"{I}^{K} = {n_patterns} patterns exceed the limit of {settings.ENUMERATION_MAX_PATTERNS}"
        )
    n_theta = K + K * I
    a_ub = _multi_rows(dataset, constraints, n_theta)
    b_ub = np.zeros(a_ub.shape[0])
    for pattern in itertools.product(range(I), repeat=K):
        bounds = [(LP_FLOOR, None)] * K + [(0.0, None)] * (K * I)
        for s, i in enumerate(pattern):
            bounds[K + s * I + i] = (LP_FLOOR, None)
        theta = solve_feasibility(a_ub, b_ub, bounds)
        if theta is not None:
            flags = theta[K:].reshape(K, I) >= LP_FLOOR * (1.0 - 1e-9)
            return _multi_certificate(theta, flags, a_ub, b_ub, I, constraints)
    return FeasibilityCertificate(CertificateStatus.INFEASIBLE, n_constraints=I, message="all patterns infeasible")


# -- reconstruction and projection ---------------------------------------------


def reconstruct_strategy(cert: FeasibilityCertificate, dataset: ProbeResponseDataset) -> PiecewiseStrategy:
    """Min-of-pieces utility (constraint-known) or max-of-pieces constraint (utility-known)."""
    if not cert.feasible:
        raise InfeasibleCertificateError(f"cannot reconstruct from a {cert.status.value} certificate")
    K = dataset.horizon
    offsets = cert.offsets(K)
    slopes = cert.multipliers(K)
    if cert.constraints is not None:
        anchors = tuple(tuple(g.bind(alpha) for g in cert.constraints) for alpha in dataset.probes)
        combiner = Combiner.MIN
    elif dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
        anchors = tuple((g,) for g in budget_constraints(dataset))
        combiner = Combiner.MIN
    else:
        anchors = tuple((u,) for u in anchor_utilities(dataset))
        combiner = Combiner.MAX
    return PiecewiseStrategy(offsets, slopes, anchors, dataset.responses, combiner)


def _anchor_gradients(dataset: ProbeResponseDataset) -> NDArray[np.float64]:
    if dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
        return dataset.probes.copy()
    return np.array([u.gradient(b) for u, b in zip(anchor_utilities(dataset), dataset.responses)])


def project_strategy(strategy: Strategy, dataset: ProbeResponseDataset) -> NDArray[np.float64]:
    """Finite-dimensional projection theta = (s(beta_t), multiplier_t) of a strategy onto a dataset.

    The multiplier is the median over components of grad s / grad anchor; at a
    KKT point all components agree and the median is the Lagrange multiplier.

    Raises:
        ProjectionError: the anchor gradient vanishes at some beta_t
    """
    K = dataset.horizon
    offsets = strategy.values(dataset.responses)
    grads = np.array([strategy.gradient(b) for b in dataset.responses])
    anchors = _anchor_gradients(dataset)
    multipliers = np.empty(K)
    for t in range(K):
        usable = anchors[t] != 0.0
        if not np.any(usable):
            raise ProjectionError(f"anchor gradient vanishes at beta_{t}")
        multipliers[t] = float(np.median(grads[t, usable] / anchors[t, usable]))
    return np.concatenate([offsets, multipliers])


def degenerate_multipliers(theta: NDArray[np.float64], horizon: int) -> NDArray[np.int64]:
    """Indices t whose projected multiplier falls below the positivity floor."""
    return np.nonzero(theta[horizon:2 * horizon] < settings.DELTA_POS)[0]


def relative_optimality_violations(strategy, dataset: ProbeResponseDataset, tol: float = 1e-7) -> List[Pair]:
    """Pairs (s, t) where beta_s was available at t yet the strategy ranks it strictly better.

    Constraint-known: alpha_t'beta_s <= alpha_t'beta_t must imply v(beta_t) >= v(beta_s) - tol.
    Utility-known: u_t(beta_s) >= u_t(beta_t) must imply v(beta_s) >= v(beta_t) - tol.
    """
    K = dataset.horizon
    values = np.array([strategy.value(b) for b in dataset.responses])
    diffs = anchor_differences(dataset)
    violations = []
    for s, t in ordered_pairs(K):
        if dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
            if diffs[s, t] <= 0.0 and values[t] < values[s] - tol:
                violations.append((s, t))
        elif diffs[s, t] >= 0.0 and values[s] < values[t] - tol:
            violations.append((s, t))
    return violations


def relative_optimality_check(strategy, dataset: ProbeResponseDataset, tol: float = 1e-7) -> bool:
    return not relative_optimality_violations(strategy, dataset, tol)
