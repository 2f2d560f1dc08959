"""Bi-impulsive transfer boundary model.

A transfer leaves a circular prograde Earth parking orbit tangentially and
arrives tangentially at a circular Moon orbit.  The departure state is built
from the construction parameters (alpha_i, beta_i) so that the departure
constraints hold identically; the arrival constraints ``psi_f`` are what the
corrector drives to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from selene.constants import EARTH_MOON, SystemConstants
from selene.dynamics import PlanarState
from selene.errors import InvalidInputError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ConstructionParams:
    """Departure phase angle (rad), velocity ratio, and time of flight (TU)."""

    alpha: float
    beta: float
    tof: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in (self.alpha, self.beta, self.tof)):
            raise InvalidInputError(f"construction parameters must be finite: {self!r}")
        if self.tof <= 0.0:
            raise InvalidInputError(f"time of flight must be positive, got {self.tof!r}")
        # float % is the identity on [0, 2*pi), so in-range angles stay bit-identical
        object.__setattr__(self, "alpha", float(self.alpha) % TWO_PI)

    def with_free(self, beta: float, tof: float) -> ConstructionParams:
        """Same alpha, new (beta, tof)."""
        return ConstructionParams(self.alpha, float(beta), float(tof))


@dataclass(frozen=True)
class OrbitSpec:
    """Parking (Earth) and target (Moon) circular orbit altitudes in km."""

    parking_altitude_km: float = 167.0
    target_altitude_km: float = 100.0
    constants: SystemConstants = field(default=EARTH_MOON)

    def __post_init__(self) -> None:
        if not (self.parking_altitude_km > 0.0 and self.target_altitude_km > 0.0):
            raise InvalidInputError("orbit altitudes must be positive")

    @property
    def mu(self) -> float:
        return self.constants.mu

    @property
    def r_i(self) -> float:
        """Parking orbit radius in LU."""
        return self.constants.canonical_length(self.constants.earth_radius_km + self.parking_altitude_km)

    @property
    def r_f(self) -> float:
        """Target orbit radius in LU."""
        return self.constants.canonical_length(self.constants.moon_radius_km + self.target_altitude_km)

    @property
    def circular_speed_i(self) -> float:
        return math.sqrt((1.0 - self.mu) / self.r_i)

    @property
    def circular_speed_f(self) -> float:
        return math.sqrt(self.mu / self.r_f)


@dataclass(frozen=True)
class ImpulseSummary:
    """Signed tangential impulses; ``dv = dv_i + dv_f`` in both unit systems."""

    dv_i_canonical: float
    dv_f_canonical: float
    dv_canonical: float
    dv_i: float
    dv_f: float
    dv: float

    @property
    def dv_abs(self) -> float:
        """|dv_i| + |dv_f| in km/s."""
        return abs(self.dv_i) + abs(self.dv_f)


# ------------------------------------------------------------------
# Departure
# ------------------------------------------------------------------

def departure_state(params: ConstructionParams, orbit: OrbitSpec) -> PlanarState:
    """Rotating-frame state on the parking orbit at phase alpha with inertial speed beta*v_circ."""
    mu, r_i = orbit.mu, orbit.r_i
    ca, sa = math.cos(params.alpha), math.sin(params.alpha)
    w = params.beta * orbit.circular_speed_i - r_i
    return PlanarState(r_i * ca - mu, r_i * sa, -w * sa, w * ca)


def departure_beta_partial(params: ConstructionParams, orbit: OrbitSpec) -> np.ndarray:
    """d(departure state)/d(beta); the position rows are zero."""
    k = orbit.circular_speed_i
    return np.array([0.0, 0.0, -k * math.sin(params.alpha), k * math.cos(params.alpha)])


def moon_circular_state(phase: float, orbit: OrbitSpec, retrograde: bool = False) -> PlanarState:
    """State on the circular target orbit at the given Moon-centred phase."""
    mu, r_f = orbit.mu, orbit.r_f
    cp, sp = math.cos(phase), math.sin(phase)
    speed = -orbit.circular_speed_f if retrograde else orbit.circular_speed_f
    w = speed - r_f
    return PlanarState(r_f * cp - mu + 1.0, r_f * sp, -w * sp, w * cp)


# ------------------------------------------------------------------
# Constraints
# ------------------------------------------------------------------

def psi_i(state: PlanarState, orbit: OrbitSpec) -> np.ndarray:
    """Departure residual: circular radius and tangency about the Earth."""
    dx = state.x + orbit.mu
    return np.array([
        dx * dx + state.y * state.y - orbit.r_i * orbit.r_i,
        dx * (state.u - state.y) + state.y * (state.v + dx),
    ])


def psi_f(state: PlanarState, orbit: OrbitSpec) -> np.ndarray:
    """Arrival residual: circular radius and tangency about the Moon."""
    dx = state.x + orbit.mu - 1.0
    return np.array([
        dx * dx + state.y * state.y - orbit.r_f * orbit.r_f,
        dx * (state.u - state.y) + state.y * (state.v + dx),
    ])


def psi_f_state_jacobian(state: PlanarState, orbit: OrbitSpec) -> np.ndarray:
    """2x4 partials of psi_f with respect to the arrival state."""
    dx = state.x + orbit.mu - 1.0
    return np.array([
        [2.0 * dx, 2.0 * state.y, 0.0, 0.0],
        [state.u, state.v, dx, state.y],
    ])


def insertion_sense(state: PlanarState, orbit: OrbitSpec) -> int:
    """+1 if the arrival is prograde about the Moon, -1 if retrograde."""
    dx = state.x + orbit.mu - 1.0
    h = dx * (state.v + dx) - state.y * (state.u - state.y)
    return 1 if h >= 0.0 else -1


# ------------------------------------------------------------------
# Impulses
# ------------------------------------------------------------------

def impulses(s_i: PlanarState, s_f: PlanarState, orbit: OrbitSpec) -> ImpulseSummary:
    """Injection and insertion impulse magnitudes relative to the circular speeds."""
    mu = orbit.mu
    dv_i = math.hypot(s_i.u - s_i.y, s_i.v + s_i.x + mu) - orbit.circular_speed_i
    dv_f = math.hypot(s_f.u - s_f.y, s_f.v + s_f.x + mu - 1.0) - orbit.circular_speed_f
    vu = orbit.constants.velocity_unit_km_s
    dv_i_km, dv_f_km = dv_i * vu, dv_f * vu
    return ImpulseSummary(
        dv_i_canonical=dv_i,
        dv_f_canonical=dv_f,
        dv_canonical=dv_i + dv_f,
        dv_i=dv_i_km,
        dv_f=dv_f_km,
        dv=dv_i_km + dv_f_km,
    )
