"""
Radar scenarios: waveform adaptation, beam allocation and misspecification
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import solve_discrete_lyapunov

from cogmask.core.constants import (
    BEAM_BUDGET_RANGE,
    BEAM_KAPPA,
    BEAM_PROBE_RANGE,
    DEFAULT_DIM,
    FULL_HORIZON,
    SCENARIO_NAMES,
    WAVEFORM_PROBE_RANGE,
)
from cogmask.core.exceptions import ConvergenceError, DatasetValidationError, ScenarioError
from cogmask.domain.dataset import DatasetKind, ProbeResponseDataset
from cogmask.domain.noise import make_rng
from cogmask.domain.strategy import Strategy, StrategyFamily, k_norm, quadratic_sum, sqrt_sum
from cogmask.services.margins import Evaluator, afriat_evaluator
from cogmask.services.projections import Projector, project_budget_set

logger = logging.getLogger(__name__)

ARE_TOL = 1e-10
ARE_MAX_ITER = 20_000


# -- Kalman tracker ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearGaussianSystem:
    """x_{k+1} = A x_k + w_k, y_k = C x_k + v_k with w ~ N(0, Q) and v ~ N(0, R)."""

    A: NDArray[np.float64]
    C: NDArray[np.float64]
    Q: NDArray[np.float64]
    R: NDArray[np.float64]
    sigma0: Optional[NDArray[np.float64]] = None

    def __post_init__(self):
        for name in ("A", "C", "Q", "R"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.C.shape[1] != n or self.Q.shape != (n, n):
            raise ScenarioError("inconsistent system dimensions")
        if self.R.shape != (self.C.shape[0],) * 2:
            raise ScenarioError("R must match the observation dimension")
        for name in ("Q", "R"):
            mat = getattr(self, name)
            if not np.allclose(mat, mat.T) or np.min(np.linalg.eigvalsh(mat)) <= 0:
                raise ScenarioError(f"{name} must be symmetric positive definite")

    @classmethod
    def from_probe_response(cls, A, C, alpha, beta) -> "LinearGaussianSystem":
        """Q = diag(alpha) is the adversary's probe, R = diag(1 / beta) the radar's response."""
        alpha = np.asarray(alpha, dtype=float)
        beta = np.asarray(beta, dtype=float)
        if np.any(alpha <= 0) or np.any(beta <= 0):
            raise ScenarioError("probe and response eigenvalues must be positive")
        return cls(A=A, C=C, Q=np.diag(alpha), R=np.diag(1.0 / beta))

    @property
    def state_dim(self) -> int:
        return int(self.A.shape[0])

    def _unstable_modes(self):
        eig = np.linalg.eigvals(self.A)
        return eig[np.abs(eig) >= 1.0 - 1e-12]

    def is_detectable(self) -> bool:
        """PBH test on [A, C] over the modes outside the open unit disk."""
        n = self.state_dim
        return all(
            np.linalg.matrix_rank(np.vstack([self.A - lam * np.eye(n), self.C])) == n for lam in self._unstable_modes()
        )

    def is_stabilizable(self) -> bool:
        n = self.state_dim
        root_q = np.linalg.cholesky(self.Q)
        return all(
            np.linalg.matrix_rank(np.hstack([self.A - lam * np.eye(n), root_q])) == n for lam in self._unstable_modes()
        )


def riccati_map(system: LinearGaussianSystem, sigma: NDArray[np.float64]) -> NDArray[np.float64]:
    """One step of the predicted-covariance recursion."""
    A, C = system.A, system.C
    innovation = C @ sigma @ C.T + system.R
    gain_term = sigma @ C.T @ np.linalg.solve(innovation, C @ sigma)
    out = A @ (sigma - gain_term) @ A.T + system.Q
    return 0.5 * (out + out.T)


def kalman_filter_step(system: LinearGaussianSystem, predicted: NDArray[np.float64]):
    """Measurement update and time update of the covariance: returns (filtered, next predicted)."""
    C = system.C
    innovation = C @ predicted @ C.T + system.R
    gain = predicted @ C.T @ np.linalg.inv(innovation)
    filtered = (np.eye(system.state_dim) - gain @ C) @ predicted
    filtered = 0.5 * (filtered + filtered.T)
    return filtered, system.A @ filtered @ system.A.T + system.Q


def are_solve(system: LinearGaussianSystem, tol: float = ARE_TOL, max_iter: int = ARE_MAX_ITER) -> NDArray[np.float64]:
    """Stationary predicted covariance by damped fixed-point iteration from Sigma = Q.

    Raises:
        ScenarioError: the existence conditions fail
        ConvergenceError: residual above ``tol`` after ``max_iter`` steps
    """
    if not (system.is_detectable() and system.is_stabilizable()):
        raise ScenarioError("ARE needs [A, C] detectable and [A, sqrt(Q)] stabilizable")
    sigma = system.Q.copy()
    damping = 1.0
    residual = float(np.linalg.norm(riccati_map(system, sigma) - sigma))
    for iteration in range(max_iter):
        if residual <= tol:
            logger.debug("ARE converged in %d iterations", iteration)
            return sigma
        candidate = (1.0 - damping) * sigma + damping * riccati_map(system, sigma)
        new_residual = float(np.linalg.norm(riccati_map(system, candidate) - candidate))
        if new_residual > residual and damping > 1e-6:
            damping *= 0.5
            continue
        sigma, residual = candidate, new_residual
    raise ConvergenceError(f"ARE residual {residual:.3g} after {max_iter} iterations", best_iterate=sigma, residual=residual)


def asymptotic_precision(system: LinearGaussianSystem) -> float:
    """trace of the inverse stationary predicted covariance."""
    return float(np.trace(np.linalg.inv(are_solve(system))))


def waveform_precision_check(
    A, C, alpha, beta, rng: np.random.Generator, trials: int = 20, scale: float = 1.5
) -> bool:
    """Raising any response eigenvalue never lowers the asymptotic precision."""
    base = asymptotic_precision(LinearGaussianSystem.from_probe_response(A, C, alpha, beta))
    beta = np.asarray(beta, dtype=float)
    for _ in range(trials):
        i = int(rng.integers(beta.size))
        bumped = beta.copy()
        bumped[i] *= scale
        if asymptotic_precision(LinearGaussianSystem.from_probe_response(A, C, alpha, bumped)) < base - 1e-9:
            return False
    return True


def predicted_precision_probe(
    A_list: Sequence, Q_list: Sequence, horizon: Optional[int] = None, sigma0_list: Optional[Sequence] = None
) -> NDArray[np.float64]:
    """alpha(i) = trace(Sigma(i)^-1) of each target's predicted covariance.

    ``horizon=None`` uses the stationary covariance A Sigma A' + Q = Sigma; a
    finite horizon n uses A^n Sigma0 A'^n + sum_{k<n} A^k Q A'^k.
    """
    out = []
    for i, (A, Q) in enumerate(zip(A_list, Q_list)):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if horizon is None:
            if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
                raise ScenarioError(f"target {i}: unstable A has no stationary covariance, pass a finite horizon")
            sigma = solve_discrete_lyapunov(A, Q)
        else:
            sigma = np.atleast_2d(np.asarray(sigma0_list[i], dtype=float)) if sigma0_list is not None else Q.copy()
            for _ in range(horizon):
                sigma = A @ sigma @ A.T + Q
        out.append(float(np.trace(np.linalg.inv(sigma))))
    return np.array(out)


# -- naive responses -----------------------------------------------------------


def maximize_on_set(
    utility: Strategy,
    project: Projector,
    starts: Sequence[NDArray[np.float64]],
    max_iter: int = 2000,
    tol: float = 1e-12,
    initial_step: float = 0.5,
) -> NDArray[np.float64]:
    """Projected gradient ascent with backtracking from several starts; returns the best iterate.

    Raises:
        ConvergenceError: no start reached a stationary point
    """
    best, best_value, converged = None, -np.inf, False
    for start in starts:
        x = project(np.asarray(start, dtype=float))
        fx, step = utility.value(x), initial_step
        for _ in range(max_iter):
            grad = utility.gradient(x)
            while step >= 1e-14:
                y = project(x + step * grad)
                fy = utility.value(y)
                if fy >= fx + 1e-4 * float(np.sum((y - x) ** 2)) / step:
                    break
                step *= 0.5
            else:
                converged = True
                break
            moved = float(np.linalg.norm(y - x))
            x, fx, step = y, fy, min(2.0 * step, initial_step)
            if moved <= tol:
                converged = True
                break
        if fx > best_value:
            best, best_value = x, fx
    if not converged:
        raise ConvergenceError("projected ascent did not settle from any start", best_iterate=best)
    return best


def _ascent_starts(m: int, rng: Optional[np.random.Generator], n_starts: int) -> List[NDArray[np.float64]]:
    starts = [np.full(m, 1.0 / m)]
    rng = rng or make_rng(0)
    starts.extend(rng.uniform(0.0, 1.0, size=(n_starts - 1, m)))
    return starts


def naive_waveform(
    u: Strategy, alpha: NDArray[np.float64], rng: Optional[np.random.Generator] = None, n_starts: int = 8
) -> NDArray[np.float64]:
    """Maximizer of u over {beta >= 0, alpha'beta <= 1}."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise DatasetValidationError(f"waveform probes must be positive, got {alpha}")
    if u.family is StrategyFamily.SQRT_SUM:
        inv_sq = 1.0 / alpha ** 2
        return inv_sq / np.sum(1.0 / alpha)
    if u.family is StrategyFamily.QUADRATIC_SUM:
        j = int(np.argmin(alpha))
        out = np.zeros_like(alpha)
        out[j] = 1.0 / alpha[j]
        return out
    if u.family is StrategyFamily.COBB_DOUGLAS:
        share = u.exponents / np.sum(u.exponents)
        return share / alpha
    return maximize_on_set(u, lambda x: project_budget_set(x, alpha, 1.0), _ascent_starts(alpha.size, rng, n_starts))


def naive_beam(alpha: NDArray[np.float64], kappa: float, gamma: float) -> NDArray[np.float64]:
    """Cobb-Douglas(alpha) maximizer on the kappa-norm ball of radius gamma."""
    alpha = np.asarray(alpha, dtype=float)
    total = float(np.sum(alpha))
    if total <= 0.0:
        raise DatasetValidationError("beam exponents must not all be zero")
    return gamma * (alpha / total) ** (1.0 / kappa)


# -- experiment generation ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScenarioBundle:
    """A generated dataset of naive responses with the strategy that produced it."""

    name: str
    dataset: ProbeResponseDataset
    strategy: Strategy
    seed: int
    kappa: Optional[float] = None

    @property
    def naive_responses(self) -> NDArray[np.float64]:
        return self.dataset.responses


def generate_experiment(name: str, seed: int, horizon: int = FULL_HORIZON, dim: int = DEFAULT_DIM) -> ScenarioBundle:
    """Draw probes (and budgets) from the scenario's distributions and attach naive responses."""
    rng = make_rng(seed)
    if name in ("waveform-u1", "waveform-u2"):
        probes = rng.uniform(*WAVEFORM_PROBE_RANGE, size=(horizon, dim))
        utility = sqrt_sum() if name == "waveform-u1" else quadratic_sum()
        responses = np.array([naive_waveform(utility, a) for a in probes])
        dataset = ProbeResponseDataset(probes, responses, DatasetKind.CONSTRAINT_KNOWN)
        return ScenarioBundle(name, dataset, utility, seed)
    if name == "beam":
        probes = rng.uniform(*BEAM_PROBE_RANGE, size=(horizon, dim))
        budgets = rng.uniform(*BEAM_BUDGET_RANGE, size=horizon)
        responses = np.array([naive_beam(a, BEAM_KAPPA, g) for a, g in zip(probes, budgets)])
        dataset = ProbeResponseDataset(probes, responses, DatasetKind.UTILITY_KNOWN, budgets=budgets)
        return ScenarioBundle(name, dataset, k_norm(BEAM_KAPPA), seed, kappa=BEAM_KAPPA)
    raise ScenarioError(f"unknown scenario '{name}', expected one of {', '.join(SCENARIO_NAMES)}")


# -- misspecification -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MisspecModel:
    """Per-epoch response perturbations zeta_t with ||zeta_t||_2 <= bound."""

    perturbations: NDArray[np.float64]
    bound: float

    def __post_init__(self):
        zeta = np.atleast_2d(np.asarray(self.perturbations, dtype=float))
        object.__setattr__(self, "perturbations", zeta)
        norms = np.linalg.norm(zeta, axis=1)
        if np.any(norms > self.bound * (1.0 + 1e-12)):
            raise DatasetValidationError(f"misspecification norm {norms.max():.3g} exceeds bound {self.bound}")

    @classmethod
    def zeros(cls, horizon: int, dim: int) -> "MisspecModel":
        return cls(np.zeros((horizon, dim)), 0.0)

    @classmethod
    def sample(cls, rng: np.random.Generator, horizon: int, dim: int, bound: float) -> "MisspecModel":
        """Directions uniform on the sphere, radii uniform in [0, bound]."""
        direction = rng.normal(size=(horizon, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return cls(direction * rng.uniform(0.0, bound, size=(horizon, 1)), bound)


@dataclass(frozen=True)
class MisspecResult:
    """Masking extent on zeta-shifted responses against its guaranteed floor.

    ``d2`` is the largest drop and ``-d1`` the largest rise of any pairwise
    slack when zeta is added, taken over the naive and masked datasets.
    ``gradient_spread`` is the first-order estimate (min, max) of grad u(b_t)'zeta_t.
    """

    eta: float
    eta_eff: float
    lower_bound: float
    d1: float
    d2: float
    eta_realized: float = float("nan")
    gradient_spread: Tuple[float, float] = (0.0, 0.0)
    vacuous: bool = False
    margins: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.vacuous or self.eta_eff >= self.lower_bound - 1e-8


def _clipped_max(slacks: NDArray[np.float64]) -> float:
    return float(max(0.0, np.max(slacks))) if slacks.size else 0.0


def misspec_bound(
    strategy: Strategy,
    naive: ProbeResponseDataset,
    masked_responses: NDArray[np.float64],
    zeta: MisspecModel,
    eta: float,
    evaluator: Optional[Evaluator] = None,
) -> MisspecResult:
    """Effective masking extent on zeta-shifted responses and its guaranteed lower bound.

    With M the naive margin, M_bar the shifted margins and the slack moves d1 <= 0 <= d2,
    the shifted naive margin is at least M - d2 and the shifted masked margin at most
    M_masked - d1, so

        eta_eff >= (eta' * M - (d2 - d1)) / (M - d2),   eta' = min(eta, 1 - M_masked / M).

    The bound is vacuous when M <= d2. ``evaluator`` defaults to the full Afriat system.
    """
    evaluate = evaluator or afriat_evaluator()
    shift = zeta.perturbations
    masked = np.asarray(masked_responses, dtype=float)

    def slacks(responses: NDArray[np.float64]) -> NDArray[np.float64]:
        residuals = evaluate(strategy, naive.with_responses(responses, noisy=True))
        return -np.asarray(residuals, dtype=float).ravel()

    s_naive, s_masked = slacks(naive.responses), slacks(masked)
    s_naive_bar, s_masked_bar = slacks(naive.responses + shift), slacks(masked + shift)
    moves = np.concatenate([s_naive_bar - s_naive, s_masked_bar - s_masked])
    d2 = float(max(0.0, -np.min(moves))) if moves.size else 0.0
    d1 = float(min(0.0, -np.max(moves))) if moves.size else 0.0

    margins = {
        "naive": _clipped_max(s_naive),
        "masked": _clipped_max(s_masked),
        "naive_shifted": _clipped_max(s_naive_bar),
        "masked_shifted": _clipped_max(s_masked_bar),
    }
    m_naive = margins["naive"]
    eta_realized = 1.0 - margins["masked"] / m_naive if m_naive > 0 else float("nan")
    eta_eff = 1.0 - margins["masked_shifted"] / margins["naive_shifted"] if margins["naive_shifted"] > 0 else float("nan")
    grads = np.einsum("tm,tm->t", np.array([strategy.gradient(b) for b in naive.responses]), shift)
    spread = (float(np.min(grads)), float(np.max(grads)))

    denominator = m_naive - d2
    if denominator <= 0 or not (np.isfinite(eta_eff) and np.isfinite(eta_realized)):
        return MisspecResult(eta, eta_eff, float("nan"), d1, d2, eta_realized, spread, vacuous=True, margins=margins)
    bound = (min(eta, eta_realized) * m_naive - (d2 - d1)) / denominator
    return MisspecResult(eta, eta_eff, bound, d1, d2, eta_realized, spread, margins=margins)
