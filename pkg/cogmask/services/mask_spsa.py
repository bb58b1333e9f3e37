"""
Simultaneous-perturbation masking against the noisy IRL detector.

Minimizes J(b) = sum_t u_t(b*_t) - u_t(b_t) - lambda * P(H1 | b) where P is the
empirical conditional Type-I error over noise realizations frozen for the run.
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from cogmask.core.exceptions import ConvergenceError
from cogmask.domain.dataset import DatasetKind, ProbeResponseDataset, anchor_utilities
from cogmask.domain.noise import NoiseModel, make_rng
from cogmask.domain.results import SpsaTrace
from cogmask.domain.strategy import Strategy
from cogmask.schemas.configs import DetectorConfig, SpsaConfig
from cogmask.services.detectors import FrozenNoise, conditional_type1_estimate, freeze_noise
from cogmask.services.projections import project_budget, project_norm_ball

logger = logging.getLogger(__name__)

Candidate = Tuple[float, float, NDArray[np.float64]]


class SpsaObjective:
    """Frozen-noise objective of one masking run.

    The naive dataset fixes the probes, the strategy to hide and the reference
    utilities; ``frozen`` makes the probability term a deterministic function
    of the responses.
    """

    def __init__(self, naive: ProbeResponseDataset, strategy: Strategy, frozen: FrozenNoise, kappa: Optional[float] = None):
        self.naive = naive
        self.strategy = strategy
        self.frozen = frozen
        self.kappa = kappa
        if naive.kind is DatasetKind.CONSTRAINT_KNOWN:
            self.utilities = [strategy] * naive.horizon
        else:
            self.utilities = anchor_utilities(naive)
        self._naive_values = np.array([u.value(b) for u, b in zip(self.utilities, naive.responses)])

    def project(self, responses: NDArray[np.float64]) -> NDArray[np.float64]:
        """Budget hyperplane (waveform) or kappa-ball in the orthant (beam), row by row."""
        if self.naive.kind is DatasetKind.CONSTRAINT_KNOWN:
            return np.array([project_budget(b, a) for b, a in zip(responses, self.naive.probes)])
        return np.array([project_norm_ball(b, self.kappa, g) for b, g in zip(responses, self.naive.budgets)])

    def loss(self, responses: NDArray[np.float64]) -> float:
        current = np.array([u.value(b) for u, b in zip(self.utilities, responses)])
        return float(np.sum(self._naive_values - current))

    def probability(self, responses: NDArray[np.float64]) -> float:
        return conditional_type1_estimate(self.naive, responses, self.strategy, self.frozen)

    def evaluate(self, responses: NDArray[np.float64], lam: float) -> Tuple[float, float, float]:
        loss = self.loss(responses)
        prob = self.probability(responses)
        return loss - lam * prob, loss, prob


def spsa_gradient(
    objective: SpsaObjective,
    responses: NDArray[np.float64],
    lam: float,
    delta: float,
    direction: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Two-sided estimate (J(b + delta D) - J(b - delta D)) / (2 delta) * D on projected points."""
    j_plus = objective.evaluate(objective.project(responses + delta * direction), lam)[0]
    j_minus = objective.evaluate(objective.project(responses - delta * direction), lam)[0]
    return (j_plus - j_minus) / (2.0 * delta) * direction


def spsa_mask(
    objective: SpsaObjective,
    config: SpsaConfig,
    start: Optional[NDArray[np.float64]] = None,
) -> SpsaTrace:
    """Two-sided SPSA with +-1 Bernoulli directions and projected descent steps.

    Returns the best-objective iterate seen, so lambda = 0 never leaves the
    naive responses.

    Raises:
        ConvergenceError: the objective kept worsening through every step halving;
            the partial trace is attached as ``best_iterate``
    """
    lam = config.lam
    rng = make_rng(config.seed)
    responses = objective.project(objective.naive.responses if start is None else start)
    j, loss, prob = objective.evaluate(responses, lam)
    best = (j, loss, prob, responses.copy())
    candidates: List[Candidate] = [(loss, prob, responses.copy())]
    history: Dict[str, list] = {"iteration": [0], "objective": [j], "loss": [loss], "probability": [prob]}
    delta = config.perturbation
    norm = float(np.sqrt(responses.size))  # ||Delta||_F for +-1 entries
    scale, worsening, halvings = 1.0, 0, 0

    def trace(aborted: bool = False) -> SpsaTrace:
        return SpsaTrace(
            lam=lam,
            objective_history=np.array(history["objective"]),
            history_iterations=np.array(history["iteration"], dtype=np.int64),
            history_loss=np.array(history["loss"]),
            history_probability=np.array(history["probability"]),
            final_responses=best[3],
            final_loss=best[1],
            final_type1=best[2],
            best_objective=best[0],
            iterations=iteration,
            halvings=halvings,
            aborted=aborted,
            candidates=candidates,
        )

    iteration = 0
    for iteration in range(1, config.iterations + 1):
        direction = rng.choice((-1.0, 1.0), size=responses.shape)
        gradient = spsa_gradient(objective, responses, lam, delta, direction)
        step = config.step_at(iteration - 1, scale)
        responses = objective.project(responses - step * gradient / norm)
        j_new, loss, prob = objective.evaluate(responses, lam)

        worsening = worsening + 1 if j_new > j else 0
        j = j_new
        if j < best[0]:
            best = (j, loss, prob, responses.copy())
        if iteration % config.trace_every == 0:
            history["iteration"].append(iteration)
            history["objective"].append(j)
            history["loss"].append(loss)
            history["probability"].append(prob)
            candidates.append((loss, prob, responses.copy()))
        if worsening >= config.patience:
            halvings += 1
            worsening = 0
            if halvings > config.max_halvings:
                raise ConvergenceError(
                    f"SPSA objective kept increasing after {config.max_halvings} step halvings", best_iterate=trace(True)
                )
            scale *= 0.5
            logger.debug("lambda=%g: step halved at iteration %d", lam, iteration)
    candidates.append((best[1], best[2], best[3]))
    return trace()


def make_objective(
    naive: ProbeResponseDataset,
    strategy: Strategy,
    noise: NoiseModel,
    detector: DetectorConfig,
    seed: int,
    kappa: Optional[float] = None,
) -> SpsaObjective:
    """Objective with R realizations and threshold frozen from ``seed``."""
    frozen = freeze_noise(naive, noise, detector, make_rng(seed))
    return SpsaObjective(naive, strategy, frozen, kappa=kappa)


def spsa_lambda_sweep(
    objective: SpsaObjective,
    lams: Sequence[float],
    config: SpsaConfig,
    mapper: Callable = map,
) -> List[SpsaTrace]:
    """Run every lambda on the same frozen noise, then let each lambda pick its best pooled candidate.

    With one shared candidate set, the minimizer of loss - lambda * P moves to
    larger loss and larger P as lambda grows.
    """
    configs = [config.model_copy(update={"lam": float(lam)}) for lam in lams]
    traces = list(mapper(lambda c: spsa_mask(objective, c), configs))
    pool = [c for t in traces for c in t.candidates]
    for t in traces:
        loss, prob, responses = min(pool, key=lambda c: (c[0] - t.lam * c[1], c[0]))
        t.final_loss, t.final_type1, t.final_responses = loss, prob, responses
        t.best_objective = loss - t.lam * prob
    return traces
