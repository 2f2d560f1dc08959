"""Planar circular restricted three-body dynamics in the Earth-Moon rotating frame.

The Earth sits at (-mu, 0) and the Moon at (1 - mu, 0).  States are
``[x, y, u, v]`` in canonical units.  The numeric kernels take and return
numpy arrays so they can be handed straight to :func:`scipy.integrate.solve_ivp`;
:class:`PlanarState` is the typed wrapper used at module boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from selene.constants import EARTH_MOON, SystemConstants
from selene.errors import IntegrationError, InvalidInputError

DEFAULT_TOLERANCE = 1e-13

# Constant blocks of the variational matrix A = [[0, I], [Omega_XX, K]].
_IDENTITY = np.eye(2)
_CORIOLIS = np.array([[0.0, 2.0], [-2.0, 0.0]])


# ------------------------------------------------------------------
# States
# ------------------------------------------------------------------

@dataclass(frozen=True)
class PlanarState:
    """Position (LU) and velocity (LU/TU) in the rotating frame."""

    x: float
    y: float
    u: float
    v: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in (self.x, self.y, self.u, self.v)):
            raise InvalidInputError(f"state components must be finite: {self!r}")

    @classmethod
    def from_array(cls, values: Sequence[float]) -> PlanarState:
        x, y, u, v = (float(c) for c in values[:4])
        return cls(x, y, u, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.u, self.v])

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x, self.y, self.u, self.v)

    def mirrored(self) -> PlanarState:
        """Reflection across the Earth-Moon line: (x, -y, -u, v)."""
        return PlanarState(self.x, -self.y, -self.u, self.v)


@dataclass(frozen=True)
class AugmentedState:
    """A state together with its state transition matrix."""

    state: PlanarState
    stm: np.ndarray = field(default_factory=lambda: np.eye(4))

    @classmethod
    def from_array(cls, values: np.ndarray) -> AugmentedState:
        return cls(PlanarState.from_array(values[:4]), np.asarray(values[4:20]).reshape(4, 4).copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate((self.state.as_array(), np.asarray(self.stm, dtype=float).reshape(16)))


def primary_distances(state: np.ndarray, mu: float) -> Tuple[float, float]:
    x, y = float(state[0]), float(state[1])
    return math.hypot(x + mu, y), math.hypot(x + mu - 1.0, y)


# ------------------------------------------------------------------
# Vector fields
# ------------------------------------------------------------------

@njit(cache=True)
def _accelerations(x: float, y: float, u: float, v: float, mu: float) -> Tuple[float, float]:
    dx1 = x + mu
    dx2 = dx1 - 1.0
    r1sq = dx1 * dx1 + y * y
    r2sq = dx2 * dx2 + y * y
    k1 = (1.0 - mu) / (r1sq * math.sqrt(r1sq))
    k2 = mu / (r2sq * math.sqrt(r2sq))
    ax = 2.0 * v + x - k1 * dx1 - k2 * dx2
    ay = -2.0 * u + y - k1 * y - k2 * y
    return ax, ay


@njit(cache=True)
def _potential_hessian(x: float, y: float, mu: float) -> Tuple[float, float, float]:
    """``(Omega_xx, Omega_xy, Omega_yy)``."""
    dx1 = x + mu
    dx2 = dx1 - 1.0
    r1sq = dx1 * dx1 + y * y
    r2sq = dx2 * dx2 + y * y
    r1_3 = r1sq * math.sqrt(r1sq)
    r2_3 = r2sq * math.sqrt(r2sq)
    r1_5 = r1_3 * r1sq
    r2_5 = r2_3 * r2sq
    a = (1.0 - mu) / r1_3 + mu / r2_3
    b1 = 3.0 * (1.0 - mu) / r1_5
    b2 = 3.0 * mu / r2_5
    oxx = 1.0 - a + b1 * dx1 * dx1 + b2 * dx2 * dx2
    oyy = 1.0 - a + (b1 + b2) * y * y
    oxy = (b1 * dx1 + b2 * dx2) * y
    return oxx, oxy, oyy


@njit(cache=True)
def rhs(t: float, X: np.ndarray, mu: float) -> np.ndarray:
    """solve_ivp right-hand side of the planar equations of motion."""
    out = np.empty(4)
    ax, ay = _accelerations(X[0], X[1], X[2], X[3], mu)
    out[0] = X[2]
    out[1] = X[3]
    out[2] = ax
    out[3] = ay
    return out


@njit(cache=True)
def variational_rhs(t: float, X: np.ndarray, mu: float) -> np.ndarray:
    """solve_ivp right-hand side for the state plus its flattened 4x4 STM (row-major)."""
    out = np.empty(20)
    ax, ay = _accelerations(X[0], X[1], X[2], X[3], mu)
    oxx, oxy, oyy = _potential_hessian(X[0], X[1], mu)
    out[0] = X[2]
    out[1] = X[3]
    out[2] = ax
    out[3] = ay
    # A @ stm with A = [[0, I], [Omega_XX, K]]
    for j in range(4):
        s0, s1, s2, s3 = X[4 + j], X[8 + j], X[12 + j], X[16 + j]
        out[4 + j] = s2
        out[8 + j] = s3
        out[12 + j] = oxx * s0 + oxy * s1 + 2.0 * s3
        out[16 + j] = oxy * s0 + oyy * s1 - 2.0 * s2
    return out


def _check_regular(x: float, y: float, mu: float) -> None:
    if (x + mu == 0.0 or x + mu == 1.0) and y == 0.0:
        raise InvalidInputError("vector field is singular at a primary's centre")


def jacobian_matrix(X: np.ndarray, mu: float) -> np.ndarray:
    """The 4x4 Jacobian A of the vector field at X."""
    x, y = float(X[0]), float(X[1])
    _check_regular(x, y, mu)
    oxx, oxy, oyy = _potential_hessian(x, y, mu)
    A = np.zeros((4, 4))
    A[0:2, 2:4] = _IDENTITY
    A[2:4, 0:2] = ((oxx, oxy), (oxy, oyy))
    A[2:4, 2:4] = _CORIOLIS
    return A


def effective_potential(state: PlanarState, mu: float = EARTH_MOON.mu) -> float:
    r1, r2 = primary_distances(state.as_array(), mu)
    if r1 == 0.0 or r2 == 0.0:
        raise InvalidInputError("effective potential is singular at a primary's centre")
    return 0.5 * (state.x * state.x + state.y * state.y) + (1.0 - mu) / r1 + mu / r2


def vector_field(state: PlanarState, mu: float = EARTH_MOON.mu) -> np.ndarray:
    """Time derivative ``[u, v, 2v + Ox, -2u + Oy]`` of *state*."""
    _check_regular(state.x, state.y, mu)
    return rhs(0.0, state.as_array(), float(mu))


def jacobi_energy(state: PlanarState, mu: float = EARTH_MOON.mu) -> float:
    """``2*Omega - (u^2 + v^2)``; conserved along every arc."""
    return 2.0 * effective_potential(state, mu) - (state.u * state.u + state.v * state.v)


def variational_field(aug: AugmentedState, mu: float = EARTH_MOON.mu) -> Tuple[np.ndarray, np.ndarray]:
    """Derivatives ``(dX/dt, A(t) @ stm)`` of an augmented state."""
    d_state = vector_field(aug.state, mu)
    d_stm = jacobian_matrix(aug.state.as_array(), mu) @ np.asarray(aug.stm, dtype=float)
    return d_state, d_stm


def collinear_point(which: str = "L1", mu: float = EARTH_MOON.mu) -> float:
    """x coordinate of the L1/L2/L3 equilibrium on the Earth-Moon line."""

    def gradient(x: float) -> float:
        return x - (1.0 - mu) * (x + mu) / abs(x + mu) ** 3 - mu * (x + mu - 1.0) / abs(x + mu - 1.0) ** 3

    eps = 1e-9
    brackets = {
        "L1": (-mu + eps, 1.0 - mu - eps),
        "L2": (1.0 - mu + eps, 2.0),
        "L3": (-2.0, -mu - eps),
    }
    if which not in brackets:
        raise InvalidInputError(f"unknown collinear point {which!r}")
    lo, hi = brackets[which]
    return brentq(gradient, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


# ------------------------------------------------------------------
# Propagation
# ------------------------------------------------------------------

class Termination(str, Enum):
    COMPLETED = "completed"
    EARTH_COLLISION = "earth_collision"
    MOON_COLLISION = "moon_collision"


class _RadiusEvent:
    """Terminal event ``|r - centre| - radius`` for solve_ivp."""

    def __init__(self, name: str, centre_x: float, radius: float, direction: float, terminal: bool = True) -> None:
        self.name = name
        self.centre_x = centre_x
        self.radius = radius
        self.direction = direction
        self.terminal = terminal

    def __call__(self, t: float, X: np.ndarray, mu: float) -> float:
        return math.hypot(float(X[0]) - self.centre_x, float(X[1])) - self.radius


@dataclass(frozen=True)
class PropagationOptions:
    """Integrator and event settings for :func:`propagate`.

    ``arm_radius`` (LU, Earth-centred) delays the Earth-collision event until
    r1 first exceeds it, so arcs departing from a low parking orbit are not
    flagged at the start.
    """

    rtol: float = DEFAULT_TOLERANCE
    atol: float = DEFAULT_TOLERANCE
    collisions: bool = True
    arm_radius: Optional[float] = None
    with_stm: bool = False
    samples: int = 0
    dense: bool = False


@dataclass(frozen=True)
class PropagationResult:
    final: PlanarState
    time: float
    terminated_by: Termination
    stm: Optional[np.ndarray] = None
    dense_samples: Optional[List[Tuple[float, PlanarState]]] = None
    segments: Tuple[object, ...] = ()

    @property
    def completed(self) -> bool:
        return self.terminated_by is Termination.COMPLETED

    def state_at(self, t: float) -> PlanarState:
        """Dense-output state at time *t* (needs ``dense`` or ``samples`` in the options)."""
        lo, hi = sorted((0.0, self.time))
        if not self.segments or not lo <= t <= hi:
            raise InvalidInputError(f"time {t!r} lies outside the propagated interval")
        return _evaluate(list(self.segments), t)


def propagate(
    state: PlanarState,
    tof: float,
    constants: SystemConstants = EARTH_MOON,
    options: Optional[PropagationOptions] = None,
) -> PropagationResult:
    """Integrate *state* for *tof* TU (negative runs backward) with DOP853.

    With collisions armed, integration stops at the first crossing of the
    Earth or Moon surface and reports the event time.  Step-size underflow
    raises :class:`IntegrationError`.
    """
    opts = options or PropagationOptions()
    if not math.isfinite(tof) or tof == 0.0:
        raise InvalidInputError(f"time of flight must be finite and non-zero, got {tof!r}")
    mu = constants.mu

    y0 = state.as_array()
    if opts.with_stm:
        y0 = np.concatenate((y0, np.eye(4).reshape(16)))
    fun = variational_rhs if opts.with_stm else rhs

    earth = _RadiusEvent("earth", -mu, constants.earth_radius, -1.0)
    moon = _RadiusEvent("moon", 1.0 - mu, constants.moon_radius, -1.0)
    arm = None

    if opts.collisions:
        r1, r2 = primary_distances(y0, mu)
        if r1 <= earth.radius:
            return _finish(y0, 0.0, Termination.EARTH_COLLISION, opts, [])
        if r2 <= moon.radius:
            return _finish(y0, 0.0, Termination.MOON_COLLISION, opts, [])
        if opts.arm_radius is not None and r1 < opts.arm_radius:
            arm = _RadiusEvent("arm", -mu, opts.arm_radius, 1.0)

    t0 = 0.0
    y = y0
    segments: list = []
    while True:
        events: list = []
        if opts.collisions:
            events = [moon, arm if arm is not None else earth]
        sol = solve_ivp(
            fun,
            (t0, tof),
            y,
            method="DOP853",
            rtol=opts.rtol,
            atol=opts.atol,
            events=events or None,
            dense_output=opts.dense or opts.samples > 0,
            args=(mu,),
        )
        if sol.status == -1:
            raise IntegrationError(sol.message, float(sol.t[-1]))
        if sol.sol is not None:
            segments.append(sol.sol)
        t_end = float(sol.t[-1])
        y = sol.y[:, -1]
        if sol.status == 0:
            return _finish(y, t_end, Termination.COMPLETED, opts, segments)

        hit = _first_event(events, sol.t_events)
        if hit is arm:
            # Earth event armed from here on.
            arm = None
            t0 = t_end
            if t0 == tof:
                return _finish(y, t_end, Termination.COMPLETED, opts, segments)
            continue
        reason = Termination.EARTH_COLLISION if hit is earth else Termination.MOON_COLLISION
        return _finish(y, t_end, reason, opts, segments)


def _first_event(events: list, t_events: list) -> object:
    fired = [(abs(float(ts[0])), ev) for ev, ts in zip(events, t_events) if len(ts)]
    fired.sort(key=lambda pair: pair[0])
    return fired[0][1]


def _finish(
    y: np.ndarray,
    t_end: float,
    reason: Termination,
    opts: PropagationOptions,
    segments: list,
) -> PropagationResult:
    stm = np.asarray(y[4:20]).reshape(4, 4).copy() if opts.with_stm else None
    samples = None
    if opts.samples > 0:
        samples = []
        if segments:
            for t in np.linspace(0.0, t_end, opts.samples):
                samples.append((float(t), _evaluate(segments, float(t))))
        else:
            samples.append((0.0, PlanarState.from_array(y[:4])))
    return PropagationResult(
        final=PlanarState.from_array(y[:4]),
        time=t_end,
        terminated_by=reason,
        stm=stm,
        dense_samples=samples,
        segments=tuple(segments),
    )


def _evaluate(segments: list, t: float) -> PlanarState:
    for segment in segments:
        lo, hi = sorted((segment.t_min, segment.t_max))
        if lo <= t <= hi:
            return PlanarState.from_array(segment(t)[:4])
    # linspace endpoints can overshoot by an ulp
    return PlanarState.from_array(segments[-1](segments[-1].t_max)[:4])
