"""
Euclidean projections onto the radar's feasible response sets
"""
import logging
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from cogmask.core.exceptions import ProjectionError
from cogmask.domain.strategy import Strategy, StrategyFamily

logger = logging.getLogger(__name__)

Projector = Callable[[NDArray[np.float64]], NDArray[np.float64]]


def project_budget(x: NDArray[np.float64], alpha: NDArray[np.float64], level: float = 1.0) -> NDArray[np.float64]:
    """Project onto the weighted simplex {beta >= 0, alpha'beta = level}.

    Sorted-threshold method: the solution is max(x - tau*alpha, 0), with tau
    fixed by the largest support (in decreasing x_i/alpha_i order) whose
    threshold stays below the ratios it keeps.
    """
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ProjectionError(f"budget weights must be strictly positive, got {alpha}")
    ratio = x / alpha
    order = np.argsort(-ratio, kind="stable")
    a = alpha[order]
    tau = (np.cumsum(a * x[order]) - level) / np.cumsum(a * a)
    support = np.nonzero(ratio[order] > tau)[0]
    k = support[-1] if support.size else 0
    return np.maximum(x - tau[k] * alpha, 0.0)


def project_budget_set(x: NDArray[np.float64], alpha: NDArray[np.float64], level: float = 1.0) -> NDArray[np.float64]:
    """Project onto {beta >= 0, alpha'beta <= level}; zero weights leave their coordinate free."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    clipped = np.maximum(x, 0.0)
    if float(alpha @ clipped) <= level:
        return clipped
    if level <= 0:
        raise ProjectionError(f"budget level must be positive, got {level}")
    out = clipped.copy()
    active = alpha > 0
    out[active] = project_budget(x[active], alpha[active], level)
    return out


def project_norm_ball(x: NDArray[np.float64], kappa: float, radius: float) -> NDArray[np.float64]:
    """Clip to the orthant, then scale back to the kappa-norm sphere if outside (exact for kappa = 2)."""
    if radius <= 0:
        raise ProjectionError(f"norm radius must be positive, got {radius}")
    clipped = np.maximum(np.asarray(x, dtype=float), 0.0)
    norm = float(np.sum(clipped ** kappa) ** (1.0 / kappa))
    if norm <= radius:
        return clipped
    return clipped * (radius / norm)


def constraint_projector(constraint: Strategy, level: float = 0.0) -> Projector:
    """Projector onto {beta >= 0, constraint(beta) <= level} for the families that admit one."""
    if constraint.family is StrategyFamily.LINEAR_BUDGET and constraint.weights is not None:
        weights, bound = constraint.weights, level - constraint.offset
        return lambda x: project_budget_set(x, weights, bound)
    if constraint.family is StrategyFamily.K_NORM:
        kappa, radius = constraint.kappa, level - constraint.offset
        return lambda x: project_norm_ball(x, kappa, radius)
    raise ProjectionError(f"no projection available for constraint family '{constraint.name}'")


def project_intersection(
    x: NDArray[np.float64],
    projectors: Sequence[Projector],
    max_iter: int = 500,
    tol: float = 1e-12,
) -> NDArray[np.float64]:
    """Dykstra's alternating projections onto the intersection of convex sets."""
    if len(projectors) == 1:
        return projectors[0](x)
    y = np.asarray(x, dtype=float).copy()
    increments = [np.zeros_like(y) for _ in projectors]
    for _ in range(max_iter):
        previous = y
        for i, project in enumerate(projectors):
            z = project(y + increments[i])
            increments[i] = y + increments[i] - z
            y = z
        if np.linalg.norm(y - previous) <= tol:
            break
    else:
        logger.debug("Dykstra stopped after %d sweeps", max_iter)
    return y
