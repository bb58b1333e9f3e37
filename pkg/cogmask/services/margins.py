"""
Feasibility margins of a candidate strategy against a dataset.

Slacks are oriented so that a satisfied inequality has slack >= 0; the margin
is the largest slack clipped at zero, i.e. the uniform shift after which the
projected system stops holding.
"""
import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import nnls

from cogmask.core.exceptions import KKTRecoveryError
from cogmask.domain.dataset import DatasetKind, ProbeResponseDataset
from cogmask.domain.results import MarginResult, Pair
from cogmask.domain.strategy import Strategy
from cogmask.services.rp_core import anchor_differences, degenerate_multipliers, ordered_pairs, project_strategy

logger = logging.getLogger(__name__)

Evaluator = Callable[[Strategy, ProbeResponseDataset], NDArray[np.float64]]


def slack_matrix(strategy: Strategy, dataset: ProbeResponseDataset) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Pairwise slacks of the projected single-constraint system, with the theta used.

    Constraint-known: slack[s, t] = u(b_t) - u(b_s) + lambda_t * alpha_t'(b_s - b_t).
    Utility-known:    slack[s, t] = g(b_s) - g(b_t) - lambda_t * (u_t(b_s) - u_t(b_t)).
    The diagonal is zero and carries no inequality.
    """
    K = dataset.horizon
    theta = project_strategy(strategy, dataset)
    if degenerate_multipliers(theta, K).size:
        logger.debug("degenerate multipliers at t=%s", degenerate_multipliers(theta, K).tolist())
    offsets, multipliers = theta[:K], theta[K:]
    diffs = anchor_differences(dataset)
    core = offsets[None, :] - offsets[:, None] + multipliers[None, :] * diffs
    if dataset.kind is DatasetKind.UTILITY_KNOWN:
        core = -core
    return core, theta


def _off_diagonal(matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    return matrix[~np.eye(matrix.shape[0], dtype=bool)]


def _from_slacks(slacks: NDArray[np.float64], pairs: Sequence[Pair], theta=None) -> MarginResult:
    if slacks.size == 0:
        return MarginResult(0.0, None, theta_used=theta)
    k = int(np.argmax(slacks))
    return MarginResult(float(max(0.0, slacks[k])), tuple(pairs[k]), theta_used=theta, binding_index=k)


def _margin_single(strategy: Strategy, dataset: ProbeResponseDataset) -> MarginResult:
    if dataset.horizon < 2:
        return MarginResult(0.0, None)
    matrix, theta = slack_matrix(strategy, dataset)
    return _from_slacks(_off_diagonal(matrix), ordered_pairs(dataset.horizon), theta)


def margin_utility(u: Strategy, dataset: ProbeResponseDataset) -> MarginResult:
    if dataset.kind is not DatasetKind.CONSTRAINT_KNOWN:
        raise ValueError("margin_utility needs a constraint-known dataset")
    return _margin_single(u, dataset)


def margin_constraint(g: Strategy, dataset: ProbeResponseDataset) -> MarginResult:
    if dataset.kind is not DatasetKind.UTILITY_KNOWN:
        raise ValueError("margin_constraint needs a utility-known dataset")
    return _margin_single(g, dataset)


# -- multiple constraints ------------------------------------------------------


def kkt_multipliers(
    u: Strategy, dataset: ProbeResponseDataset, constraints: Sequence[Strategy]
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Nonnegative multipliers mu (K, I) with grad u(b_t) ~ sum_i mu_{t,i} grad g_i(alpha_t, b_t).

    Also returns the constraint gradients, shape (K, I, m). A single constraint
    uses the median component ratio, matching ``project_strategy``.
    """
    K, I = dataset.horizon, len(constraints)
    grads = np.empty((K, I, dataset.dim))
    mu = np.zeros((K, I))
    for t, (alpha, beta) in enumerate(zip(dataset.probes, dataset.responses)):
        grad_u = u.gradient(beta)
        for i, g in enumerate(constraints):
            grads[t, i] = g.bind(alpha).gradient(beta)
        if I == 1:
            usable = grads[t, 0] != 0.0
            if not np.any(usable):
                raise KKTRecoveryError(f"constraint gradient vanishes at beta_{t}")
            mu[t, 0] = float(np.median(grad_u[usable] / grads[t, 0, usable]))
            continue
        mu[t], residual = nnls(grads[t].T, grad_u)
        if not np.any(mu[t] > 0.0) and np.any(grad_u != 0.0):
            raise KKTRecoveryError(f"no nonnegative multipliers reproduce stationarity at t={t} (residual {residual:.3g})")
    return mu, grads


def multi_slack_matrix(
    u: Strategy, dataset: ProbeResponseDataset, constraints: Sequence[Strategy]
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """slack[s, t] = u(b_s) - u(b_t) + sum_i mu_{s,i} grad g_i(alpha_s, b_s)'(b_t - b_s)."""
    K = dataset.horizon
    values = u.values(dataset.responses)
    mu, grads = kkt_multipliers(u, dataset, constraints)
    weighted = np.einsum("si,sim->sm", mu, grads)
    # weighted[s]'(b_t - b_s)
    linear = weighted @ dataset.responses.T - np.einsum("sm,sm->s", weighted, dataset.responses)[:, None]
    matrix = values[:, None] - values[None, :] + linear
    return matrix, np.concatenate([values, mu.ravel()])


def margin_utility_multi(u: Strategy, dataset: ProbeResponseDataset, constraints: Sequence[Strategy]) -> MarginResult:
    if dataset.horizon < 2:
        return MarginResult(0.0, None)
    matrix, theta = multi_slack_matrix(u, dataset, list(constraints))
    return _from_slacks(_off_diagonal(matrix), ordered_pairs(dataset.horizon), theta)


# -- arbitrary inequality systems ----------------------------------------------


def afriat_evaluator(pairs: Optional[Sequence[Pair]] = None) -> Evaluator:
    """Residuals (<= 0 when satisfied) of the projected Afriat system, row-major over ``pairs``.

    ``pairs=None`` keeps every ordered pair; a subset gives a sub-sampled system.
    """
    keep = None if pairs is None else list(pairs)

    def evaluate(strategy: Strategy, dataset: ProbeResponseDataset) -> NDArray[np.float64]:
        if dataset.horizon < 2:
            return np.zeros(0)
        matrix, _ = slack_matrix(strategy, dataset)
        if keep is None:
            return -_off_diagonal(matrix)
        return -np.array([matrix[s, t] for s, t in keep])

    evaluate.pairs = keep
    return evaluate


def adjacent_pairs(horizon: int) -> list:
    """(t, t+1) and (t+1, t) for consecutive epochs."""
    out = []
    for t in range(horizon - 1):
        out.extend([(t, t + 1), (t + 1, t)])
    return out


def margin_generic(evaluator: Evaluator, strategy: Strategy, dataset: ProbeResponseDataset) -> MarginResult:
    """max(0, max(-residual)): the shift +eps*1 that makes every row nonnegative."""
    residuals = np.asarray(evaluator(strategy, dataset), dtype=float).ravel()
    if residuals.size == 0:
        return MarginResult(0.0, None)
    k = int(np.argmax(-residuals))
    pairs = getattr(evaluator, "pairs", None)
    if pairs is None and residuals.size == dataset.horizon * (dataset.horizon - 1):
        pairs = ordered_pairs(dataset.horizon)
    pair = tuple(pairs[k]) if pairs is not None and k < len(pairs) else None
    return MarginResult(float(max(0.0, -residuals[k])), pair, binding_index=k)
