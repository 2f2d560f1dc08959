"""Trajectory correction: drive the arrival residual to zero with alpha_i frozen.

The free variables are ``z = (beta_i, tof)``.  The problem is a 2x2
bound-constrained nonlinear least-squares problem, solved with a
Levenberg-Marquardt iteration (Marquardt's diagonal scaling) whose trial
steps are projected onto the box.  The Jacobian comes from one variational
propagation per evaluation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Tuple, Union

import numpy as np

from selene.dynamics import PlanarState, PropagationOptions, propagate, vector_field
from selene.errors import CollisionError, IntegrationError, InvalidInputError
from selene.transfer import (
    ConstructionParams,
    OrbitSpec,
    departure_beta_partial,
    departure_state,
    psi_f,
    psi_f_state_jacobian,
)

if TYPE_CHECKING:
    from selene.search import Candidate

logger = logging.getLogger(__name__)

# Earth-collision event armed once r1 exceeds this multiple of the parking radius.
ARM_FACTOR = 1.05


@dataclass(frozen=True)
class CorrectionSettings:
    beta_bounds: Tuple[float, float] = (1.4, 1.414)
    tof_bounds: Tuple[float, float] = (math.pi / 50.0, 10.0 * math.pi)
    step_tolerance: float = 1e-8
    function_tolerance: float = 1e-8
    constraint_tolerance: float = 1e-8
    max_iterations: int = 500
    max_evaluations: int = 500
    acceptance: float = 1e-8
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    max_rejections: int = 20
    stall_window: int = 8
    stall_ratio: float = 0.9
    polish_steps: int = 6
    polish_tolerance: float = 1e-13

    def __post_init__(self) -> None:
        for name in ("step_tolerance", "function_tolerance", "constraint_tolerance", "acceptance", "initial_damping"):
            if not getattr(self, name) > 0.0:
                raise InvalidInputError(f"{name} must be positive")
        for name in ("beta_bounds", "tof_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise InvalidInputError(f"{name} must satisfy lower < upper, got {(lo, hi)!r}")
        if self.tof_bounds[0] <= 0.0:
            raise InvalidInputError("tof lower bound must be positive")
        if self.max_iterations < 0 or self.max_evaluations < 1 or self.max_rejections < 1:
            raise InvalidInputError("iteration and evaluation budgets must be positive")
        if self.stall_window < 1 or self.polish_steps < 0:
            raise InvalidInputError("stall_window must be positive and polish_steps non-negative")
        if not 0.0 < self.stall_ratio < 1.0:
            raise InvalidInputError(f"stall_ratio must lie in (0, 1), got {self.stall_ratio!r}")
        if not self.polish_tolerance >= 0.0:
            raise InvalidInputError("polish_tolerance must be non-negative")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.beta_bounds[0], self.tof_bounds[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.beta_bounds[1], self.tof_bounds[1]])

    def contains(self, params: ConstructionParams) -> bool:
        return (
            self.beta_bounds[0] <= params.beta <= self.beta_bounds[1]
            and self.tof_bounds[0] <= params.tof <= self.tof_bounds[1]
        )


class CorrectionStatus(str, Enum):
    CONVERGED = "converged"
    STALLED = "stalled"
    BOUND_LOCKED = "bound_locked"
    COLLIDED_DURING_ITERATION = "collided_during_iteration"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class CorrectionOutcome:
    status: CorrectionStatus
    params: ConstructionParams
    residual_norm: float
    iterations: int
    evaluations: int
    jacobian_condition_estimate: float
    final_state: Optional[PlanarState] = None
    history: Tuple[float, ...] = field(default=())

    @property
    def converged(self) -> bool:
        return self.status is CorrectionStatus.CONVERGED


@dataclass(frozen=True)
class _Evaluation:
    params: ConstructionParams
    psi: np.ndarray
    jacobian: np.ndarray
    final: PlanarState

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.psi))


def residual(params: ConstructionParams, orbit: OrbitSpec) -> Tuple[np.ndarray, np.ndarray]:
    """``(psi_f, d psi_f / d(beta, tof))`` at the end of the arc defined by *params*.

    Raises :class:`CollisionError` if the arc reaches the Earth or Moon surface.
    """
    ev = _evaluate(params, orbit)
    return ev.psi, ev.jacobian


def _evaluate(params: ConstructionParams, orbit: OrbitSpec) -> _Evaluation:
    s0 = departure_state(params, orbit)
    options = PropagationOptions(with_stm=True, arm_radius=ARM_FACTOR * orbit.r_i)
    result = propagate(s0, params.tof, orbit.constants, options)
    if not result.completed:
        body = "Earth" if result.terminated_by.value.startswith("earth") else "Moon"
        raise CollisionError(body, result.time)
    xf = result.final
    dpsi_dx = psi_f_state_jacobian(xf, orbit)
    d_beta = dpsi_dx @ (result.stm @ departure_beta_partial(params, orbit))
    d_tof = dpsi_dx @ vector_field(xf, orbit.mu)
    return _Evaluation(params, psi_f(xf, orbit), np.column_stack((d_beta, d_tof)), xf)


def _condition(jacobian: np.ndarray) -> float:
    with np.errstate(all="ignore"):
        value = float(np.linalg.cond(jacobian))
    return value if math.isfinite(value) else math.inf


def correct(
    guess: Union[ConstructionParams, "Candidate"],
    orbit: OrbitSpec,
    settings: Optional[CorrectionSettings] = None,
) -> CorrectionOutcome:
    """Correct *guess* so that ``|psi_f| < settings.acceptance``.

    *guess* is a search candidate or bare construction parameters.  alpha is
    never modified.  Every failure mode comes back as a status.

    A guess that is already accepted is returned untouched.  Once iteration
    crosses the acceptance threshold, up to ``polish_steps`` undamped
    Gauss-Newton steps are taken while the residual keeps falling, so the
    result sits on the solution rather than at the edge of its basin.  A run
    of ``stall_window`` accepted steps that each shrink the residual by less
    than ``1 - stall_ratio`` stops as stalled.
    """
    guess = getattr(guess, "params", guess)
    cfg = settings or CorrectionSettings()
    lower, upper = cfg.lower, cfg.upper
    width = upper - lower

    try:
        current = _evaluate(guess, orbit)
    except CollisionError:
        return CorrectionOutcome(CorrectionStatus.COLLIDED_DURING_ITERATION, guess, math.inf, 0, 1, math.inf)
    except IntegrationError as err:
        logger.debug("initial evaluation failed for %s: %s", guess, err.format())
        return CorrectionOutcome(CorrectionStatus.STALLED, guess, math.inf, 0, 1, math.inf)

    evaluations = 1
    iterations = 0
    damping = cfg.initial_damping
    rejections = 0
    collisions = 0
    slow_steps = 0
    history: List[float] = [current.norm]

    def outcome(status: CorrectionStatus) -> CorrectionOutcome:
        return CorrectionOutcome(
            status=status,
            params=current.params,
            residual_norm=current.norm,
            iterations=iterations,
            evaluations=evaluations,
            jacobian_condition_estimate=_condition(current.jacobian),
            final_state=current.final,
            history=tuple(history),
        )

    def polished() -> CorrectionOutcome:
        # Undamped Gauss-Newton steps past the acceptance threshold, kept while |psi_f| still drops.
        nonlocal current, iterations, evaluations
        for _ in range(cfg.polish_steps):
            if iterations >= cfg.max_iterations or evaluations >= cfg.max_evaluations:
                break
            z = np.array([current.params.beta, current.params.tof])
            step, *_ = np.linalg.lstsq(current.jacobian, -current.psi, rcond=None)
            trial_z = np.clip(z + step, lower, upper)
            if not np.max(np.abs(trial_z - z)) > cfg.polish_tolerance:
                break
            evaluations += 1
            try:
                trial = _evaluate(current.params.with_free(trial_z[0], trial_z[1]), orbit)
            except (CollisionError, IntegrationError):
                break
            if not (trial.norm < current.norm and _accepted(trial.psi, cfg)):
                break
            current = trial
            iterations += 1
            history.append(current.norm)
        return outcome(CorrectionStatus.CONVERGED)

    while True:
        if _accepted(current.psi, cfg):
            return outcome(CorrectionStatus.CONVERGED)
        if iterations >= cfg.max_iterations or evaluations >= cfg.max_evaluations:
            return outcome(CorrectionStatus.BUDGET_EXHAUSTED)
        iterations += 1

        z = np.array([current.params.beta, current.params.tof])
        J, r = current.jacobian, current.psi
        JtJ = J.T @ J
        g = J.T @ r
        scale = np.maximum(np.diag(JtJ), 1e-300)
        step, *_ = np.linalg.lstsq(JtJ + damping * np.diag(scale), -g, rcond=None)
        trial_z = np.clip(z + step, lower, upper)
        moved = trial_z - z

        if not np.any(moved):
            return outcome(_stop_status(current, lower, upper))

        try:
            trial = _evaluate(current.params.with_free(trial_z[0], trial_z[1]), orbit)
            failed = False
            collisions = 0
        except CollisionError:
            failed = True
            collisions += 1
        except IntegrationError:
            failed = True
            collisions = 0
        evaluations += 1

        if failed or trial.norm >= current.norm:
            rejections += 1
            damping *= cfg.damping_up
            if collisions >= cfg.max_rejections:
                return outcome(CorrectionStatus.COLLIDED_DURING_ITERATION)
            if rejections >= cfg.max_rejections:
                return outcome(_stop_status(current, lower, upper))
            continue

        decrease = current.norm - trial.norm
        slow_steps = slow_steps + 1 if trial.norm > cfg.stall_ratio * current.norm else 0
        previous = current
        current = trial
        history.append(current.norm)
        rejections = 0
        damping *= cfg.damping_down

        if _accepted(current.psi, cfg):
            return polished()
        if (
            np.max(np.abs(moved) / width) < cfg.step_tolerance
            or decrease < cfg.function_tolerance * previous.norm
            or slow_steps >= cfg.stall_window
        ):
            return outcome(_stop_status(current, lower, upper))


def _accepted(psi: np.ndarray, cfg: CorrectionSettings) -> bool:
    return float(np.linalg.norm(psi)) < cfg.acceptance and float(np.max(np.abs(psi))) <= cfg.constraint_tolerance


def _stop_status(current: _Evaluation, lower: np.ndarray, upper: np.ndarray) -> CorrectionStatus:
    """bound_locked when a variable sits on a bound the descent direction points through."""
    z = np.array([current.params.beta, current.params.tof])
    descent = -(current.jacobian.T @ current.psi)
    at_lower = (z <= lower) & (descent < 0.0)
    at_upper = (z >= upper) & (descent > 0.0)
    if np.any(at_lower | at_upper):
        return CorrectionStatus.BOUND_LOCKED
    return CorrectionStatus.STALLED
