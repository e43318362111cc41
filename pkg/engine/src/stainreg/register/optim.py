# src/stainreg/register/optim.py
import logging
import math
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from stainreg.errors import NumericError, OverlapError

_log = logging.getLogger(__name__)

INITIAL_DAMPING = 1e-8
MAX_DAMPING_TRIES = 12
CURVATURE_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Objective value, gradient, and (for Gauss-Newton) an approximate Hessian at one point."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray | None = None


Objective = Callable[[np.ndarray], Evaluation]


@dataclass(frozen=True)
class OptimizerSettings:
    max_iter: int = 100
    armijo_c: float = 1e-4
    max_backtracks: int = 30
    grad_tol: float = 1e-6
    step_tol: float = 1e-8
    memory: int = 10


@dataclass
class OptimizationResult:
    x: np.ndarray
    value: float
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    max_iter_hit: bool = False
    damped: bool = False
    stop_reason: str = ""


def _safe_evaluate(objective: Objective, x: np.ndarray) -> Evaluation | None:
    """Evaluation at a trial point; None when the point leaves no overlap or is not finite."""
    try:
        evaluation = objective(x)
    except OverlapError:
        return None
    if not math.isfinite(evaluation.value):
        return None
    return evaluation


def armijo_search(
    objective: Objective,
    x: np.ndarray,
    current: Evaluation,
    direction: np.ndarray,
    settings: OptimizerSettings,
    step: float = 1.0,
) -> tuple[float, Evaluation] | None:
    """
    Backtracking line search: halves `step` until
    f(x + step d) <= f(x) + c step g^T d, at most `max_backtracks` times.
    """
    slope = float(current.gradient @ direction)
    for _ in range(settings.max_backtracks + 1):
        trial = _safe_evaluate(objective, x + step * direction)
        if trial is not None and trial.value <= current.value + settings.armijo_c * step * slope:
            return step, trial
        step *= 0.5
    return None


def _initial_evaluation(objective: Objective, x0: np.ndarray) -> Evaluation:
    evaluation = objective(x0)
    if not (math.isfinite(evaluation.value) and np.all(np.isfinite(evaluation.gradient))):
        raise NumericError("objective at the initial point")
    return evaluation


def _damped_solve(hessian: np.ndarray, gradient: np.ndarray) -> tuple[np.ndarray, bool]:
    """Solves (H + lambda I) d = -g, growing lambda tenfold while the Cholesky factorization fails."""
    scale = max(1.0, float(np.abs(np.diag(hessian)).max()))
    damping = INITIAL_DAMPING * scale
    identity = np.eye(len(gradient))
    for attempt in range(MAX_DAMPING_TRIES):
        try:
            factor = linalg.cho_factor(hessian + damping * identity)
        except linalg.LinAlgError:
            damping *= 10.0
            continue
        return linalg.cho_solve(factor, -gradient), attempt > 0
    _log.warning("Gauss-Newton system stayed indefinite after damping; using steepest descent")
    return -gradient, True


def _finish(result: OptimizationResult, reason: str) -> OptimizationResult:
    result.stop_reason = reason
    result.converged = reason != "max_iter"
    result.max_iter_hit = reason == "max_iter"
    _log.debug("Optimizer stopped after %d iterations (%s), f = %.6g", result.iterations, reason, result.value)
    return result


def gauss_newton(objective: Objective, x0: np.ndarray, settings: OptimizerSettings) -> OptimizationResult:
    """
    Damped Gauss-Newton with Armijo backtracking.

    `objective` must return an Evaluation carrying a positive semi-definite
    Hessian approximation. The trace holds the initial value and every
    accepted value, so it never increases.
    """
    x = np.array(x0, dtype=np.float64)
    current = _initial_evaluation(objective, x)
    result = OptimizationResult(x=x, value=current.value, trace=[current.value])

    while True:
        if np.linalg.norm(current.gradient) < settings.grad_tol:
            return _finish(result, "gradient")
        if result.iterations >= settings.max_iter:
            return _finish(result, "max_iter")

        direction, damped = _damped_solve(current.hessian, current.gradient)
        result.damped |= damped
        if current.gradient @ direction >= 0:
            direction = -current.gradient

        found = armijo_search(objective, x, current, direction, settings)
        if found is None:
            return _finish(result, "line_search")
        step, current = found
        delta = step * direction
        x = x + delta
        result.iterations += 1
        result.x, result.value = x, current.value
        result.trace.append(current.value)
        _log.debug("GN iteration %d: f = %.8g, step = %.3g", result.iterations, current.value, step)
        if np.abs(delta).max() < settings.step_tol:
            return _finish(result, "step")


def _two_loop(gradient: np.ndarray, history: deque) -> np.ndarray:
    """L-BFGS two-loop recursion: approximate H^-1 g from the (s, y, 1/(y^T s)) history."""
    q = gradient.copy()
    alphas = []
    for s, y, rho in reversed(history):
        alpha = rho * (s @ q)
        alphas.append(alpha)
        q -= alpha * y
    s, y, _ = history[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), alpha in zip(history, reversed(alphas)):
        beta = rho * (y @ q)
        q += (alpha - beta) * s
    return q


def lbfgs(objective: Objective, x0: np.ndarray, settings: OptimizerSettings) -> OptimizationResult:
    """
    Limited-memory BFGS with Armijo backtracking.

    The first step (and any step after a history reset) is steepest descent
    scaled so its largest component is one unit.
    """
    x = np.array(x0, dtype=np.float64)
    current = _initial_evaluation(objective, x)
    result = OptimizationResult(x=x, value=current.value, trace=[current.value])
    history: deque = deque(maxlen=settings.memory)

    while True:
        gradient = current.gradient
        if np.linalg.norm(gradient) < settings.grad_tol:
            return _finish(result, "gradient")
        if result.iterations >= settings.max_iter:
            return _finish(result, "max_iter")

        if history:
            direction = -_two_loop(gradient, history)
            if gradient @ direction >= 0:
                _log.debug("L-BFGS direction is not a descent direction; resetting history")
                history.clear()
        if not history:
            direction = -gradient / np.abs(gradient).max()

        found = armijo_search(objective, x, current, direction, settings)
        if found is None:
            return _finish(result, "line_search")
        step, trial = found
        delta = step * direction
        change = trial.gradient - gradient
        curvature = float(delta @ change)
        if curvature > CURVATURE_EPS:
            history.append((delta, change, 1.0 / curvature))

        x = x + delta
        current = trial
        result.iterations += 1
        result.x, result.value = x, current.value
        result.trace.append(current.value)
        _log.debug("L-BFGS iteration %d: f = %.8g, step = %.3g", result.iterations, current.value, step)
        if np.abs(delta).max() < settings.step_tol:
            return _finish(result, "step")
