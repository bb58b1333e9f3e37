"""Parametric utility and constraint functions with gradient access.

A ``Strategy`` is either the radar's utility (monotone nondecreasing on the
nonnegative orthant) or its resource constraint (monotone increasing). The
families cover the functions used by the waveform and beam experiments; a
``custom`` strategy wraps any value-and-gradient evaluator.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from cogmask.core.config import settings
from cogmask.core.exceptions import DatasetValidationError

ValueAndGrad = Callable[[NDArray[np.float64]], Tuple[float, NDArray[np.float64]]]


class StrategyFamily(str, enum.Enum):
    SQRT_SUM = "sqrt-sum"
    QUADRATIC_SUM = "quadratic-sum"
    COBB_DOUGLAS = "cobb-douglas"
    LINEAR_BUDGET = "linear-budget"
    K_NORM = "k-norm"
    CUSTOM = "custom"


class StrategyRole(str, enum.Enum):
    UTILITY = "utility"
    CONSTRAINT = "constraint"


@dataclass(frozen=True, eq=False)
class Strategy:
    """A utility or constraint from a named parametric family.

    Attributes:
        family: parametric family
        role: whether the function plays the utility or the constraint
        exponents: Cobb-Douglas exponents (nonnegative m-vector)
        weights: linear budget weights (nonnegative m-vector)
        kappa: exponent of the k-norm (> 1)
        evaluator: value-and-gradient callable for custom strategies
        offset: constant added to the value (g(beta) - gamma style constraints)
        probe_weighted: linear budget whose weights are the probe alpha_t, bound per t
    """

    family: StrategyFamily
    role: StrategyRole = StrategyRole.UTILITY
    exponents: Optional[NDArray[np.float64]] = None
    weights: Optional[NDArray[np.float64]] = None
    kappa: Optional[float] = None
    evaluator: Optional[ValueAndGrad] = field(default=None, repr=False)
    offset: float = 0.0
    probe_weighted: bool = False

    @property
    def name(self) -> str:
        if self.family is StrategyFamily.K_NORM:
            return f"{self.family.value}({self.kappa:g})"
        if self.probe_weighted:
            return "probe-budget"
        return self.family.value

    def shifted(self, offset: float) -> "Strategy":
        """Same function plus a constant (used for g_i(alpha, beta) = w'beta - 1 style constraints)."""
        return replace(self, offset=self.offset + offset)

    def bind(self, alpha: NDArray[np.float64]) -> "Strategy":
        """The function g(alpha, .) for one probe; probe-independent strategies return themselves."""
        if not self.probe_weighted:
            return self
        return replace(self, weights=_as_vector(alpha, "probe"), probe_weighted=False)

    # -- evaluation --------------------------------------------------------

    def value(self, beta: NDArray[np.float64]) -> float:
        x = np.maximum(np.asarray(beta, dtype=float), 0.0)
        fam = self.family
        if fam is StrategyFamily.SQRT_SUM:
            v = float(np.sum(np.sqrt(x)))
        elif fam is StrategyFamily.QUADRATIC_SUM:
            v = float(np.sum(x * x))
        elif fam is StrategyFamily.COBB_DOUGLAS:
            v = float(np.prod(np.power(x, self.exponents)))
        elif fam is StrategyFamily.LINEAR_BUDGET:
            v = float(self.weights @ x)
        elif fam is StrategyFamily.K_NORM:
            v = float(np.sum(np.power(x, self.kappa)) ** (1.0 / self.kappa))
        else:
            v = float(self.evaluator(x)[0])
        return v + self.offset

    def values(self, betas: NDArray[np.float64]) -> NDArray[np.float64]:
        """Row-wise evaluation over a (..., m) array."""
        x = np.maximum(np.asarray(betas, dtype=float), 0.0)
        fam = self.family
        if fam is StrategyFamily.SQRT_SUM:
            v = np.sum(np.sqrt(x), axis=-1)
        elif fam is StrategyFamily.QUADRATIC_SUM:
            v = np.sum(x * x, axis=-1)
        elif fam is StrategyFamily.COBB_DOUGLAS:
            v = np.prod(np.power(x, self.exponents), axis=-1)
        elif fam is StrategyFamily.LINEAR_BUDGET:
            v = x @ self.weights
        elif fam is StrategyFamily.K_NORM:
            v = np.sum(np.power(x, self.kappa), axis=-1) ** (1.0 / self.kappa)
        else:
            flat = x.reshape(-1, x.shape[-1])
            v = np.array([self.evaluator(row)[0] for row in flat]).reshape(x.shape[:-1])
        return v + self.offset

    def gradient(self, beta: NDArray[np.float64]) -> NDArray[np.float64]:
        """Analytic gradient; coordinates where it is undefined fall back to one-sided differences."""
        x = np.maximum(np.asarray(beta, dtype=float), 0.0)
        fam = self.family
        with np.errstate(divide="ignore", invalid="ignore"):
            if fam is StrategyFamily.SQRT_SUM:
                g = 0.5 / np.sqrt(x)
            elif fam is StrategyFamily.QUADRATIC_SUM:
                g = 2.0 * x
            elif fam is StrategyFamily.COBB_DOUGLAS:
                g = self.value(x) * self.exponents / x
                # exponent 0 contributes nothing regardless of x
                g = np.where(self.exponents == 0.0, 0.0, g)
            elif fam is StrategyFamily.LINEAR_BUDGET:
                g = np.array(self.weights, dtype=float)
            elif fam is StrategyFamily.K_NORM:
                norm = np.sum(np.power(x, self.kappa)) ** (1.0 / self.kappa)
                g = np.power(x / norm, self.kappa - 1.0)
            else:
                g = np.asarray(self.evaluator(x)[1], dtype=float)
        bad = ~np.isfinite(g)
        if np.any(bad):
            g = np.where(bad, self._one_sided_difference(x), g)
        return g

    def _one_sided_difference(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        h = settings.GRADIENT_FD_STEP
        f0 = self.value(x)
        out = np.empty_like(x)
        for i in range(x.size):
            step = np.zeros_like(x)
            step[i] = h
            out[i] = (self.value(x + step) - f0) / h
        return out


def _as_vector(values, name: str) -> NDArray[np.float64]:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise DatasetValidationError(f"{name} must be nonempty")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DatasetValidationError(f"{name} must be finite and nonnegative, got {arr}")
    return arr


def sqrt_sum(role: StrategyRole = StrategyRole.UTILITY) -> Strategy:
    return Strategy(StrategyFamily.SQRT_SUM, role)


def quadratic_sum(role: StrategyRole = StrategyRole.UTILITY) -> Strategy:
    return Strategy(StrategyFamily.QUADRATIC_SUM, role)


def cobb_douglas(exponents, role: StrategyRole = StrategyRole.UTILITY) -> Strategy:
    return Strategy(StrategyFamily.COBB_DOUGLAS, role, exponents=_as_vector(exponents, "exponents"))


def linear_budget(weights, role: StrategyRole = StrategyRole.CONSTRAINT, offset: float = 0.0) -> Strategy:
    return Strategy(StrategyFamily.LINEAR_BUDGET, role, weights=_as_vector(weights, "weights"), offset=offset)


def k_norm(kappa: float, role: StrategyRole = StrategyRole.CONSTRAINT, offset: float = 0.0) -> Strategy:
    if not kappa > 1.0:
        raise DatasetValidationError(f"kappa must exceed 1, got {kappa}")
    return Strategy(StrategyFamily.K_NORM, role, kappa=float(kappa), offset=offset)


def custom(evaluator: ValueAndGrad, role: StrategyRole = StrategyRole.UTILITY) -> Strategy:
    if not callable(evaluator):
        raise TypeError(f"evaluator must be callable, got {evaluator!r}")
    return Strategy(StrategyFamily.CUSTOM, role, evaluator=evaluator)


def strategy_from_name(name: str, m: int) -> Strategy:
    """Utility by CLI name: 'sqrt', 'quadratic'."""
    key = name.strip().lower()
    if key in ("sqrt", "sqrt-sum", "u1"):
        return sqrt_sum()
    if key in ("quadratic", "quadratic-sum", "u2"):
        return quadratic_sum()
    if key in ("cobb-douglas", "cd"):
        return cobb_douglas(np.full(m, 1.0 / m))
    raise DatasetValidationError(f"unknown utility family '{name}'")


def probe_budget(offset: float = -1.0) -> Strategy:
    """g(alpha, beta) = alpha'beta + offset, the per-probe linear budget of the waveform scenario."""
    return Strategy(StrategyFamily.LINEAR_BUDGET, StrategyRole.CONSTRAINT, offset=offset, probe_weighted=True)
