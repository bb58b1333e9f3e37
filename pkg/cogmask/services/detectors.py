"""
IRL detectors for noisy response measurements
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from cogmask.core.config import settings
from cogmask.core.exceptions import BracketError, ProjectionError, SolverFailureError
from cogmask.domain.dataset import DatasetKind, ProbeResponseDataset, anchor_utilities
from cogmask.domain.noise import NoiseModel, make_rng
from cogmask.domain.results import Decision, DetectionOutcome, InequalitySense, RateEstimate
from cogmask.domain.strategy import Strategy
from cogmask.schemas.configs import DetectorConfig
from cogmask.services.rp_core import LP_FLOOR, anchor_differences, build_afriat_system, project_strategy, solve_feasibility

logger = logging.getLogger(__name__)

QUANTILE_CHUNK = 4096


# -- test statistics ------------------------------------------------------------


def _relaxed_rows(dataset: ProbeResponseDataset, epsilon: float) -> NDArray[np.float64]:
    """Afriat rows with epsilon added to every data term, in <= 0 form.

    Constraint-known: theta_s - theta_t - lambda_t (D[s, t] + eps) <= 0.
    Utility-known:    theta_s - theta_t - lambda_t (D[s, t] - eps) >= 0.
    """
    system = build_afriat_system(dataset)
    coefficients = system.coefficients.copy()
    K = dataset.horizon
    sign = -1.0 if system.sense is InequalitySense.LE else 1.0
    for row, (_, t) in enumerate(system.pairs):
        coefficients[row, K + t] += sign * epsilon
    return -coefficients if system.sense is InequalitySense.GE else coefficients


def relaxed_feasible(dataset: ProbeResponseDataset, epsilon: float) -> bool:
    """Does the epsilon-relaxed system admit a positive theta?"""
    if dataset.horizon < 2:
        return True
    a_ub = _relaxed_rows(dataset, epsilon)
    bounds = [(LP_FLOOR, None)] * (2 * dataset.horizon)
    return solve_feasibility(a_ub, np.zeros(a_ub.shape[0]), bounds) is not None


def bisection_ceiling(dataset: ProbeResponseDataset) -> float:
    """Relaxation at which every pair's data term turns favourable, so equal offsets satisfy the system."""
    if dataset.horizon < 2:
        return 0.0
    diffs = anchor_differences(dataset)
    off = ~np.eye(dataset.horizon, dtype=bool)
    if dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
        return float(max(0.0, np.max(-diffs[off])))
    return float(max(0.0, np.max(diffs[off])))


def stat_phi(dataset: ProbeResponseDataset, tol: float = settings.BISECTION_TOL) -> float:
    """Smallest relaxation under which the noisy dataset passes the IRL test.

    Raises:
        BracketError: the system stays infeasible at ten times the analytic ceiling
    """
    if dataset.horizon < 2 or relaxed_feasible(dataset, 0.0):
        return 0.0
    hi = bisection_ceiling(dataset)
    if not relaxed_feasible(dataset, hi):
        hi *= 10.0
        if hi <= 0.0 or not relaxed_feasible(dataset, hi):
            raise BracketError(f"relaxed system infeasible at ceiling {hi:.6g}")
    lo = 0.0
    for _ in range(settings.BISECTION_MAX_ITER):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if relaxed_feasible(dataset, mid):
            hi = mid
        else:
            lo = mid
    return hi


def _projected_theta(strategy: Strategy, dataset: ProbeResponseDataset, transmitted: NDArray[np.float64]):
    K = dataset.horizon
    theta = project_strategy(strategy, dataset.with_responses(transmitted, noisy=True))
    offsets, multipliers = theta[:K], theta[K:]
    if np.any(multipliers <= 0.0):
        raise ProjectionError("conditional statistic needs positive multipliers at every epoch")
    return offsets, multipliers


def _conditional_from_diffs(kind: DatasetKind, offsets, multipliers, diffs: NDArray[np.float64]) -> NDArray[np.float64]:
    """Per-pair relaxation with theta fixed; ``diffs`` has shape (..., K, K) indexed [s, t]."""
    ratio = (offsets[:, None] - offsets[None, :]) / multipliers[None, :]  # (theta_s - theta_t) / lambda_t
    if kind is DatasetKind.CONSTRAINT_KNOWN:
        need = ratio - diffs
    else:
        need = diffs - ratio
    K = offsets.shape[0]
    off = ~np.eye(K, dtype=bool)
    flat = need[..., off]
    return np.maximum(0.0, np.max(flat, axis=-1))


def stat_phi_conditional(
    dataset: ProbeResponseDataset, strategy: Strategy, transmitted: Optional[NDArray[np.float64]] = None
) -> float:
    """Relaxation needed with theta fixed to the true strategy's projection; no LP.

    ``transmitted`` are the noise-free responses the radar sent (the dataset's
    own responses when omitted); only the data term sees the noisy ones.
    """
    if dataset.horizon < 2:
        return 0.0
    transmitted = dataset.responses if transmitted is None else np.asarray(transmitted, dtype=float)
    offsets, multipliers = _projected_theta(strategy, dataset, transmitted)
    return float(_conditional_from_diffs(dataset.kind, offsets, multipliers, anchor_differences(dataset)))


# -- noise statistics and thresholds ----------------------------------------------


def noise_statistic_g(probes: NDArray[np.float64], omega: NDArray[np.float64]) -> NDArray[np.float64]:
    """L_g = max_{s != t} alpha_t'(omega_t - omega_s) for noise of shape (N, K, m)."""
    proj = np.einsum("tm,nsm->nts", probes, omega)  # alpha_t' omega_s
    own = np.einsum("ntt->nt", proj)
    K = probes.shape[0]
    off = ~np.eye(K, dtype=bool)
    return np.maximum(0.0, np.max((own[:, :, None] - proj)[:, off], axis=-1))


def noise_statistic_u(
    utilities: Sequence[Strategy], observed: NDArray[np.float64], omega: NDArray[np.float64]
) -> NDArray[np.float64]:
    """L_u for noise of shape (N, K, m).

    L_u = max_{s != t} [u_t(b_s) - u_t(b_t)] - [u_t(b_s - w_s) - u_t(b_t - w_t)], which
    bounds the utility-known relaxation under H0 realization by realization.
    ``observed`` is either one (K, m) table shared by every draw or one table per draw.
    """
    K = omega.shape[1]
    observed = np.broadcast_to(observed, omega.shape)
    fixed = np.stack([u.values(observed) for u in utilities], axis=1)  # (N, t, s): u_t(b_s)
    clean = np.stack([u.values(observed - omega) for u in utilities], axis=1)
    fixed_diff = fixed - np.einsum("ntt->nt", fixed)[:, :, None]
    clean_diff = clean - np.einsum("ntt->nt", clean)[:, :, None]
    off = ~np.eye(K, dtype=bool)
    return np.maximum(0.0, np.max((fixed_diff - clean_diff)[:, off], axis=-1))


def sample_noise_statistic(
    dataset: ProbeResponseDataset,
    noise: NoiseModel,
    n_samples: int,
    rng: np.random.Generator,
    refresh_observed: bool = False,
) -> NDArray[np.float64]:
    """Fresh draws of L_g (constraint-known) or L_u (utility-known).

    L_u holds the dataset's responses as the observation unless ``refresh_observed``
    is set; then each draw observes the dataset's responses plus its own noise.
    """
    K = dataset.horizon
    if K < 2 or noise.is_degenerate:
        return np.zeros(n_samples)
    utilities = anchor_utilities(dataset) if dataset.kind is DatasetKind.UTILITY_KNOWN else None
    out = []
    for start in range(0, n_samples, QUANTILE_CHUNK):
        omega = noise.sample(rng, (min(QUANTILE_CHUNK, n_samples - start), K))
        if utilities is None:
            out.append(noise_statistic_g(dataset.probes, omega))
        else:
            observed = dataset.responses + omega if refresh_observed else dataset.responses
            out.append(noise_statistic_u(utilities, observed, omega))
    return np.concatenate(out)


def quantile_threshold(
    dataset: ProbeResponseDataset,
    noise: NoiseModel,
    gamma: float,
    n_samples: int = settings.QUANTILE_SAMPLES,
    rng: Optional[np.random.Generator] = None,
    refresh_observed: bool = False,
) -> float:
    """Empirical (1 - gamma) quantile of the noise statistic."""
    samples = sample_noise_statistic(dataset, noise, n_samples, rng or make_rng(0), refresh_observed)
    return float(np.quantile(samples, 1.0 - gamma))


# -- decisions ---------------------------------------------------------------------


def decide(statistic: float, threshold: float) -> DetectionOutcome:
    decision = Decision.H0_COGNITIVE if statistic <= threshold else Decision.H1_NOT_COGNITIVE
    return DetectionOutcome(statistic, threshold, decision)


def run_detector(
    dataset: ProbeResponseDataset,
    noise: NoiseModel,
    config: DetectorConfig,
    rng: Optional[np.random.Generator] = None,
    threshold: Optional[float] = None,
) -> DetectionOutcome:
    """Full statistic by bisection, compared with the noise quantile."""
    if threshold is None:
        threshold = quantile_threshold(
            dataset, noise, config.gamma, config.quantile_samples, rng, config.refresh_observed
        )
    return decide(stat_phi(dataset, config.epsilon_tolerance), threshold)


def rejects_at(dataset: ProbeResponseDataset, threshold: float) -> bool:
    """H1 iff the statistic exceeds ``threshold``: a single LP at the threshold."""
    return not relaxed_feasible(dataset, threshold)


@dataclass(frozen=True)
class DetectorTrial:
    trial: int
    gamma: float
    statistic: float
    threshold: float
    decision: Decision
    seed: int

    def to_row(self) -> dict:
        return {
            "trial": self.trial,
            "phi": self.statistic,
            "threshold": self.threshold,
            "decision": self.decision.value,
            "seed": self.seed,
        }


def estimate_type1(
    naive: ProbeResponseDataset,
    noise: NoiseModel,
    gammas: Sequence[float],
    trials: int,
    seed: int,
    config: Optional[DetectorConfig] = None,
    trace: Optional[List[DetectorTrial]] = None,
) -> List[RateEstimate]:
    """Empirical P(H1 | H0) per significance level on shared noise draws.

    ``naive`` holds the radar's exact responses; each trial adds fresh noise.
    Passing a list as ``trace`` collects one record per trial and level, with
    the statistic computed in full.
    """
    config = config or DetectorConfig()
    seq = np.random.SeedSequence(seed)
    threshold_seq, trial_seq = seq.spawn(2)
    # the threshold depends on the trial only through L_u's fixed observation
    kind_fixed = naive.kind is DatasetKind.CONSTRAINT_KNOWN or config.refresh_observed
    rng_thr = make_rng(threshold_seq)
    thresholds = {}
    if kind_fixed:
        samples = sample_noise_statistic(naive, noise, config.quantile_samples, rng_thr, config.refresh_observed)
        thresholds = {g: float(np.quantile(samples, 1.0 - g)) for g in gammas}
    rng = make_rng(trial_seq)
    hits = {g: 0 for g in gammas}
    for trial in range(trials):
        noisy = naive.with_responses(naive.responses + noise.sample(rng, naive.horizon), noisy=True)
        if not kind_fixed:
            samples = sample_noise_statistic(noisy, noise, config.quantile_samples, rng_thr)
            thresholds = {g: float(np.quantile(samples, 1.0 - g)) for g in gammas}
        statistic = stat_phi(noisy, config.epsilon_tolerance) if trace is not None else None
        for g in gammas:
            try:
                rejected = statistic > thresholds[g] if statistic is not None else rejects_at(noisy, thresholds[g])
            except SolverFailureError as e:
                logger.warning("trial %d: LP failed (%s); counted as H0", trial, e)
                rejected = False
            hits[g] += int(rejected)
            if trace is not None:
                outcome = decide(statistic, thresholds[g])
                trace.append(DetectorTrial(trial, g, statistic, thresholds[g], outcome.decision, seed))
    return [RateEstimate.from_counts(hits[g], trials, g) for g in gammas]


# -- conditional Type-I error ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrozenNoise:
    """R noise realizations and the detector threshold, fixed for a whole optimization run."""

    realizations: NDArray[np.float64]  # (R, K, m)
    threshold: float

    @property
    def replicates(self) -> int:
        return int(self.realizations.shape[0])


def freeze_noise(
    naive: ProbeResponseDataset, noise: NoiseModel, config: DetectorConfig, rng: np.random.Generator
) -> FrozenNoise:
    """Draw the R realizations and fix the threshold at the naive responses.

    Utility-known thresholds observe the first realization unless
    ``config.refresh_observed`` redraws the observation with every sample.
    """
    realizations = noise.sample(rng, (config.replicates, naive.horizon))
    observed = naive
    if naive.kind is DatasetKind.UTILITY_KNOWN and not config.refresh_observed:
        observed = naive.with_responses(naive.responses + realizations[0], noisy=True)
    samples = sample_noise_statistic(observed, noise, config.quantile_samples, rng, config.refresh_observed)
    return FrozenNoise(realizations, float(np.quantile(samples, 1.0 - config.gamma)))


def conditional_statistics(
    dataset: ProbeResponseDataset, responses: NDArray[np.float64], strategy: Strategy, realizations: NDArray[np.float64]
) -> NDArray[np.float64]:
    """stat_phi_conditional for every realization, vectorized over R."""
    K = dataset.horizon
    if K < 2:
        return np.zeros(realizations.shape[0])
    responses = np.asarray(responses, dtype=float)
    offsets, multipliers = _projected_theta(strategy, dataset, responses)
    observed = responses[None, :, :] + realizations  # (R, K, m)
    if dataset.kind is DatasetKind.CONSTRAINT_KNOWN:
        spend = np.einsum("tm,rsm->rts", dataset.probes, observed)  # alpha_t' b_s
    else:
        spend = np.stack([u.values(observed) for u in anchor_utilities(dataset)], axis=1)  # u_t(b_s)
    own = np.einsum("rtt->rt", spend)
    diffs = np.swapaxes(spend - own[:, :, None], 1, 2)  # [r, s, t]
    return _conditional_from_diffs(dataset.kind, offsets, multipliers, diffs)


def conditional_type1_estimate(
    dataset: ProbeResponseDataset, responses: NDArray[np.float64], strategy: Strategy, frozen: FrozenNoise
) -> float:
    """Fraction of the frozen realizations whose conditional statistic exceeds the threshold."""
    stats = conditional_statistics(dataset, responses, strategy, frozen.realizations)
    return float(np.mean(stats > frozen.threshold))
