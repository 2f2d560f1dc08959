"""Physical constants and canonical-unit conversions for the Earth-Moon system.

Canonical units: the length unit (LU) is the Earth-Moon distance, the time
unit (TU) is the Earth-Moon orbital period divided by 2*pi, and the velocity
unit (VU) is LU/TU.  Everything downstream of this module works in
canonical units; kilometres, km/s and days only appear in reports.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict

from selene.errors import InvalidInputError

SECONDS_PER_DAY = 86400.0


def _finite(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidInputError(f"{what} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class SystemConstants:
    """The Earth-Moon parameter set.  Immutable, so safe to share between workers."""

    mu: float = 0.0121505856
    length_unit_km: float = 384400.0
    period_days: float = 27.321582
    earth_radius_km: float = 6378.145
    moon_radius_km: float = 1737.1

    def __post_init__(self) -> None:
        if not 0.0 < self.mu < 0.5:
            raise InvalidInputError(f"mass parameter must lie in (0, 0.5), got {self.mu!r}")
        for name in ("length_unit_km", "period_days", "earth_radius_km", "moon_radius_km"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidInputError(f"{name} must be positive, got {value!r}")

    # ------------------------------------------------------------------
    # Derived units
    # ------------------------------------------------------------------

    @property
    def time_unit_days(self) -> float:
        return self.period_days / (2.0 * math.pi)

    @property
    def time_unit_s(self) -> float:
        return self.time_unit_days * SECONDS_PER_DAY

    @property
    def velocity_unit_km_s(self) -> float:
        return self.length_unit_km / self.time_unit_s

    @property
    def earth_radius(self) -> float:
        """Earth radius in LU."""
        return self.earth_radius_km / self.length_unit_km

    @property
    def moon_radius(self) -> float:
        """Moon radius in LU."""
        return self.moon_radius_km / self.length_unit_km

    # ------------------------------------------------------------------
    # Conversions
    # ------------------------------------------------------------------

    def canonical_length(self, km: float) -> float:
        km = _finite(km, "length")
        if km < 0.0:
            raise InvalidInputError(f"length must be non-negative, got {km!r} km")
        return km / self.length_unit_km

    def dimensional_length(self, lu: float) -> float:
        return _finite(lu, "length") * self.length_unit_km

    def canonical_velocity(self, km_s: float) -> float:
        return _finite(km_s, "velocity") / self.velocity_unit_km_s

    def dimensional_velocity(self, vu: float) -> float:
        return _finite(vu, "velocity") * self.velocity_unit_km_s

    def canonical_time(self, days: float) -> float:
        return _finite(days, "time") / self.time_unit_days

    def dimensional_time(self, tu: float) -> float:
        """TU -> days."""
        return _finite(tu, "time") * self.time_unit_days

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


EARTH_MOON = SystemConstants()
