"""Run configuration: a YAML file, presets, and command-line overrides.

Layout of a config file (every key optional, defaults are the published
sweep's values)::

    constants:  {mu, length_unit_km, period_days, earth_radius_km, moon_radius_km}
    orbit:      {parking_altitude_km, target_altitude_km}
    grid:       {alpha: {min, max, step, closed}, beta: {...}, tof: {...}}
    correction: {beta_bounds, tof_bounds, step_tolerance, ..., max_rejections, stall_window, ...}
    search:     {workers, checkpoint_interval, screen_threshold, shared_arcs, branch_mask}
    analysis:   {dedup_beta, dedup_tof, gap_threshold_days, min_solutions, separation_days}
    output_dir: runs/full

Angles and times (grid axes, ``tof_bounds``) may be written as
pi-expressions: ``pi/36``, ``10*pi``, ``2pi``, ``-pi/2``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml

from selene.constants import SystemConstants
from selene.corrector import CorrectionSettings
from selene.errors import ConfigError, SeleneError
from selene.search import AxisSpec, GridSpec
from selene.transfer import OrbitSpec

logger = logging.getLogger(__name__)

_NUMBER = r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_ANGLE = re.compile(
    rf"^(?P<sign>[+-])?\s*(?P<coef>{_NUMBER})?\s*\*?\s*(?P<pi>pi|π)?\s*(?:/\s*(?P<div>{_NUMBER}))?$"
)

# Slack when checking that grid values lie inside the corrector box.
_BOUND_SLACK = 1e-9

PRESET_DIRS = (
    Path(__file__).resolve().parent / "configs",
    Path(__file__).resolve().parent.parent / "configs",
)


def parse_angle(value: Union[str, float, int], key: str = "") -> float:
    """A float from a number or a simple pi-expression."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", key)
    if isinstance(value, (int, float)):
        result = float(value)
    elif isinstance(value, str):
        m = _ANGLE.match(value.strip().lower())
        if not m or not (m.group("coef") or m.group("pi")):
            raise ConfigError(f"cannot read {value!r} as a number or pi-expression", key)
        result = float(m.group("coef") or 1.0)
        if m.group("pi"):
            result *= math.pi
        if m.group("div"):
            divisor = float(m.group("div"))
            if divisor == 0.0:
                raise ConfigError(f"division by zero in {value!r}", key)
            result /= divisor
        if m.group("sign") == "-":
            result = -result
    else:
        raise ConfigError(f"expected a number, got {type(value).__name__}", key)
    if not math.isfinite(result):
        raise ConfigError(f"value must be finite, got {value!r}", key)
    return result


# ------------------------------------------------------------------
# Option groups
# ------------------------------------------------------------------

@dataclass(frozen=True)
class BranchMaskOptions:
    catalog: str
    gap_threshold_days: float = 10.0
    margin_days: float = 5.0


@dataclass(frozen=True)
class SearchOptions:
    workers: int = 1
    checkpoint_interval: int = 5000
    screen_threshold: Optional[float] = None
    shared_arcs: bool = True
    branch_mask: Optional[BranchMaskOptions] = None


@dataclass(frozen=True)
class AnalysisOptions:
    dedup_beta: float = 1e-6
    dedup_tof: float = 1e-5
    gap_threshold_days: float = 10.0
    min_solutions: int = 30
    separation_days: float = 15.0


@dataclass(frozen=True)
class RunConfig:
    constants: SystemConstants = field(default_factory=SystemConstants)
    orbit: OrbitSpec = field(default_factory=OrbitSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    correction: CorrectionSettings = field(default_factory=CorrectionSettings)
    search: SearchOptions = field(default_factory=SearchOptions)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    output_dir: str = "runs/full"

    def validate(self) -> RunConfig:
        """Raise :class:`ConfigError` unless the settings are mutually consistent."""
        for name, axis, bounds in (
            ("beta", self.grid.beta, self.correction.beta_bounds),
            ("tof", self.grid.tof, self.correction.tof_bounds),
        ):
            if axis.count == 0:
                continue
            lo, hi = axis.value(0), axis.value(axis.count - 1)
            slack = _BOUND_SLACK * max(1.0, abs(bounds[1]))
            if lo < bounds[0] - slack or hi > bounds[1] + slack:
                raise ConfigError(
                    f"grid {name} range [{lo!r}, {hi!r}] is not inside corrector bounds {tuple(bounds)!r}",
                    f"correction.{name}_bounds",
                )
        if self.grid.tof.count and self.grid.tof.value(0) <= 0.0:
            raise ConfigError("grid times of flight must be positive", "grid.tof.min")
        if self.search.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.search.workers}", "search.workers")
        if self.search.checkpoint_interval < 1:
            raise ConfigError("checkpoint interval must be at least 1", "search.checkpoint_interval")
        if self.search.screen_threshold is not None and not self.search.screen_threshold > 0.0:
            raise ConfigError("screen threshold must be positive", "search.screen_threshold")
        mask = self.search.branch_mask
        if mask is not None and not (mask.gap_threshold_days > 0.0 and mask.margin_days >= 0.0):
            raise ConfigError("branch mask needs a positive gap threshold and a non-negative margin", "search.branch_mask")
        a = self.analysis
        if not (a.dedup_beta > 0.0 and a.dedup_tof > 0.0 and a.gap_threshold_days > 0.0):
            raise ConfigError("analysis tolerances must be positive", "analysis")
        if a.min_solutions < 1:
            raise ConfigError("min_solutions must be at least 1", "analysis.min_solutions")
        return self

    def override(
        self,
        output_dir: Optional[str] = None,
        workers: Optional[int] = None,
        checkpoint_interval: Optional[int] = None,
        screen_threshold: Optional[float] = None,
        alpha_step: Optional[float] = None,
        beta_step: Optional[float] = None,
        tof_step: Optional[float] = None,
    ) -> RunConfig:
        """Apply command-line overrides; ``None`` leaves a value alone."""
        search = self.search
        if workers is not None:
            search = replace(search, workers=workers)
        if checkpoint_interval is not None:
            search = replace(search, checkpoint_interval=checkpoint_interval)
        if screen_threshold is not None:
            search = replace(search, screen_threshold=screen_threshold)
        grid = self.grid
        try:
            if alpha_step is not None:
                grid = replace(grid, alpha=replace(grid.alpha, step=alpha_step))
            if beta_step is not None:
                grid = replace(grid, beta=replace(grid.beta, step=beta_step))
            if tof_step is not None:
                grid = replace(grid, tof=replace(grid.tof, step=tof_step))
        except SeleneError as err:
            raise ConfigError(err.message, "grid") from err
        return replace(
            self,
            search=search,
            grid=grid,
            output_dir=output_dir if output_dir is not None else self.output_dir,
        ).validate()

    # ------------------------------------------------------------------
    # Serialisation
    # ------------------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        """Plain JSON/YAML-safe form; also what checkpoints fingerprint."""
        return {
            "constants": self.constants.to_dict(),
            "orbit": {
                "parking_altitude_km": self.orbit.parking_altitude_km,
                "target_altitude_km": self.orbit.target_altitude_km,
            },
            "grid": {name: asdict(getattr(self.grid, name)) for name in ("alpha", "beta", "tof")},
            "correction": {
                **asdict(self.correction),
                "beta_bounds": list(self.correction.beta_bounds),
                "tof_bounds": list(self.correction.tof_bounds),
            },
            "search": {
                **asdict(self.search),
                "branch_mask": asdict(self.search.branch_mask) if self.search.branch_mask else None,
            },
            "analysis": asdict(self.analysis),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> RunConfig:
        data = dict(data or {})
        _reject_unknown(data, {f.name for f in fields(cls)}, "")
        try:
            constants = SystemConstants(**_numbers(data.get("constants"), SystemConstants, "constants"))
            orbit = OrbitSpec(constants=constants, **_numbers(data.get("orbit"), OrbitSpec, "orbit", skip={"constants"}))
            grid = _grid(data.get("grid"))
            correction = _correction(data.get("correction"))
            search = _search(data.get("search"))
            analysis = AnalysisOptions(**_numbers(data.get("analysis"), AnalysisOptions, "analysis"))
        except ConfigError:
            raise
        except SeleneError as err:
            raise ConfigError(err.message) from err
        output_dir = data.get("output_dir", cls.output_dir)
        if not isinstance(output_dir, str) or not output_dir:
            raise ConfigError("output_dir must be a non-empty path", "output_dir")
        return cls(constants, orbit, grid, correction, search, analysis, output_dir)


# ------------------------------------------------------------------
# Section readers
# ------------------------------------------------------------------

def _section(raw: Any, where: str) -> Dict[str, Any]:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"expected a mapping, got {type(raw).__name__}", where)
    return dict(raw)


def _reject_unknown(section: Mapping[str, Any], allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}", prefix + unknown[0])


def _numbers(raw: Any, cls: type, where: str, skip: frozenset = frozenset()) -> Dict[str, Any]:
    section = _section(raw, where)
    types = {f.name: f.type for f in fields(cls) if f.name not in skip}
    _reject_unknown(section, set(types), where)
    out: Dict[str, Any] = {}
    for key, value in section.items():
        if str(types[key]) in ("int", "<class 'int'>"):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"expected an integer, got {value!r}", f"{where}.{key}")
            out[key] = value
        else:
            out[key] = parse_angle(value, f"{where}.{key}")
    return out


def _axis(raw: Any, default: AxisSpec, where: str) -> AxisSpec:
    section = _section(raw, where)
    _reject_unknown(section, {"min", "max", "step", "closed"}, where)
    values = {k: parse_angle(section[k], f"{where}.{k}") for k in ("min", "max", "step") if k in section}
    closed = section.get("closed", default.closed)
    if not isinstance(closed, bool):
        raise ConfigError("closed must be true or false", f"{where}.closed")
    return replace(default, closed=closed, **values)


def _grid(raw: Any) -> GridSpec:
    section = _section(raw, "grid")
    _reject_unknown(section, {"alpha", "beta", "tof"}, "grid")
    default = GridSpec()
    return GridSpec(
        alpha=_axis(section.get("alpha"), default.alpha, "grid.alpha"),
        beta=_axis(section.get("beta"), default.beta, "grid.beta"),
        tof=_axis(section.get("tof"), default.tof, "grid.tof"),
    )


def _pair(value: Any, where: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError("expected a [lower, upper] pair", where)
    return (parse_angle(value[0], where), parse_angle(value[1], where))


def _correction(raw: Any) -> CorrectionSettings:
    section = _section(raw, "correction")
    pairs = {k: _pair(section.pop(k), f"correction.{k}") for k in ("beta_bounds", "tof_bounds") if k in section}
    numbers = _numbers(section, CorrectionSettings, "correction", skip=frozenset({"beta_bounds", "tof_bounds"}))
    return CorrectionSettings(**pairs, **numbers)


def _search(raw: Any) -> SearchOptions:
    section = _section(raw, "search")
    _reject_unknown(section, {f.name for f in fields(SearchOptions)}, "search")
    options: Dict[str, Any] = {}
    for key in ("workers", "checkpoint_interval"):
        if key in section:
            value = section[key]
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"expected an integer, got {value!r}", f"search.{key}")
            options[key] = value
    if section.get("screen_threshold") is not None:
        options["screen_threshold"] = parse_angle(section["screen_threshold"], "search.screen_threshold")
    if "shared_arcs" in section:
        if not isinstance(section["shared_arcs"], bool):
            raise ConfigError("shared_arcs must be true or false", "search.shared_arcs")
        options["shared_arcs"] = section["shared_arcs"]
    mask = section.get("branch_mask")
    if mask is not None:
        mask = _section(mask, "search.branch_mask")
        _reject_unknown(mask, {f.name for f in fields(BranchMaskOptions)}, "search.branch_mask")
        if not isinstance(mask.get("catalog"), str):
            raise ConfigError("branch mask needs a catalog path", "search.branch_mask.catalog")
        numbers = {k: parse_angle(v, f"search.branch_mask.{k}") for k, v in mask.items() if k != "catalog"}
        options["branch_mask"] = BranchMaskOptions(catalog=mask["catalog"], **numbers)
    return SearchOptions(**options)


# ------------------------------------------------------------------
# Loading
# ------------------------------------------------------------------

def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    config = RunConfig.from_dict(data).validate()
    logger.debug("loaded config %s (%d grid points)", path, config.grid.size)
    return config


def preset_path(name: str) -> Path:
    for directory in PRESET_DIRS:
        candidate = directory / f"{name}.yaml"
        if candidate.is_file():
            return candidate
    known = sorted({p.stem for d in PRESET_DIRS if d.is_dir() for p in d.glob("*.yaml")})
    raise ConfigError(f"unknown preset {name!r}; available: {', '.join(known) or 'none'}")


def load_preset(name: str) -> RunConfig:
    return load_config(preset_path(name))
