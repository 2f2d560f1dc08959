"""Solution catalog: converged transfers, their persistence, and deduplication.

A catalog file is newline-delimited JSON.  The first line is a versioned
header carrying the constants and grid fingerprints, so catalogs produced
under different configurations cannot be merged by accident; every other
line is one :class:`TransferSolution`.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, is_dataclass, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from selene.constants import EARTH_MOON, SystemConstants
from selene.corrector import CorrectionOutcome
from selene.errors import CatalogError
from selene.transfer import OrbitSpec, departure_state, impulses, insertion_sense

CATALOG_FORMAT = "selene-catalog"
CATALOG_VERSION = 1
ACCEPTANCE = 1e-8


def fingerprint(obj: Any) -> str:
    """sha256 of the canonical JSON form of a dataclass or plain mapping."""
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = asdict(obj)
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _jsonable(value: Any) -> Any:
    if hasattr(value, "value"):
        return value.value
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")


# ------------------------------------------------------------------
# Records
# ------------------------------------------------------------------

@dataclass(frozen=True)
class TransferSolution:
    """One converged transfer.  Impulses in km/s, alpha in rad, tof in TU and days.

    ``dv_i``, ``dv_f`` and ``dv`` are signed (negative when a boundary speed is
    below circular); ``dv_abs`` is the total magnitude |dv_i| + |dv_f|.
    """

    grid_index: int
    alpha: float
    beta: float
    tof: float
    tof_days: float
    departure: Tuple[float, float, float, float]
    insertion: Tuple[float, float, float, float]
    dv_i: float
    dv_f: float
    dv: float
    dv_abs: float
    residual_norm: float
    insertion_sense: int
    iterations: int

    @property
    def solution_id(self) -> int:
        return self.grid_index

    @classmethod
    def from_outcome(cls, outcome: CorrectionOutcome, orbit: OrbitSpec, grid_index: int) -> TransferSolution:
        if not outcome.converged or outcome.final_state is None:
            raise CatalogError(f"grid point {grid_index} did not converge ({outcome.status.value})")
        p = outcome.params
        s_i = departure_state(p, orbit)
        s_f = outcome.final_state
        dv = impulses(s_i, s_f, orbit)
        return cls(
            grid_index=int(grid_index),
            alpha=p.alpha,
            beta=p.beta,
            tof=p.tof,
            tof_days=orbit.constants.dimensional_time(p.tof),
            departure=s_i.as_tuple(),
            insertion=s_f.as_tuple(),
            dv_i=dv.dv_i,
            dv_f=dv.dv_f,
            dv=dv.dv,
            dv_abs=dv.dv_abs,
            residual_norm=outcome.residual_norm,
            insertion_sense=insertion_sense(s_f, orbit),
            iterations=outcome.iterations,
        )

    def problems(self, constants: SystemConstants, acceptance: float = ACCEPTANCE) -> List[str]:
        """Invariant violations, empty when the record is sound."""
        found = []
        numbers = (
            self.alpha, self.beta, self.tof, self.tof_days,
            self.dv_i, self.dv_f, self.dv, self.dv_abs, self.residual_norm,
        )
        if not all(math.isfinite(n) for n in numbers + self.departure + self.insertion):
            found.append("non-finite field")
        if not self.residual_norm < acceptance:
            found.append(f"residual {self.residual_norm!r} not below {acceptance!r}")
        if self.dv != self.dv_i + self.dv_f:
            found.append("dv differs from dv_i + dv_f")
        if self.dv_abs != abs(self.dv_i) + abs(self.dv_f):
            found.append("dv_abs differs from |dv_i| + |dv_f|")
        expected_days = constants.dimensional_time(self.tof) if math.isfinite(self.tof) else math.nan
        if not abs(self.tof_days - expected_days) <= 1e-12 * abs(expected_days):
            found.append("tof_days inconsistent with tof")
        if self.insertion_sense not in (-1, 1):
            found.append("insertion sense must be +1 or -1")
        return found

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> TransferSolution:
        try:
            return cls(
                grid_index=int(data["grid_index"]),
                alpha=float(data["alpha"]),
                beta=float(data["beta"]),
                tof=float(data["tof"]),
                tof_days=float(data["tof_days"]),
                departure=tuple(float(c) for c in data["departure"]),
                insertion=tuple(float(c) for c in data["insertion"]),
                dv_i=float(data["dv_i"]),
                dv_f=float(data["dv_f"]),
                dv=float(data["dv"]),
                dv_abs=float(data["dv_abs"]),
                residual_norm=float(data["residual_norm"]),
                insertion_sense=int(data["insertion_sense"]),
                iterations=int(data["iterations"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CatalogError(f"malformed solution record: {exc}") from exc


# ------------------------------------------------------------------
# Catalog
# ------------------------------------------------------------------

@dataclass(frozen=True)
class CatalogHeader:
    constants: SystemConstants = EARTH_MOON
    grid_hash: str = ""
    raw_count: Optional[int] = None
    format: str = CATALOG_FORMAT
    version: int = CATALOG_VERSION

    @property
    def constants_hash(self) -> str:
        return fingerprint(self.constants)

    def to_json(self) -> Dict[str, Any]:
        return {
            "format": self.format,
            "version": self.version,
            "constants": self.constants.to_dict(),
            "constants_hash": self.constants_hash,
            "grid_hash": self.grid_hash,
            "raw_count": self.raw_count,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> CatalogHeader:
        if data.get("format") != CATALOG_FORMAT:
            raise CatalogError(f"not a catalog file (format {data.get('format')!r})")
        if data.get("version") != CATALOG_VERSION:
            raise CatalogError(f"unsupported catalog version {data.get('version')!r}")
        try:
            header = cls(
                constants=SystemConstants(**data["constants"]),
                grid_hash=str(data["grid_hash"]),
                raw_count=data.get("raw_count"),
            )
        except (KeyError, TypeError) as exc:
            raise CatalogError(f"malformed catalog header: {exc}") from exc
        if header.constants_hash != data.get("constants_hash"):
            raise CatalogError("catalog header constants do not match their fingerprint")
        return header


class Catalog:
    """Append-only collection of validated solutions."""

    def __init__(self, header: Optional[CatalogHeader] = None, acceptance: float = ACCEPTANCE) -> None:
        self.header = header or CatalogHeader()
        self.acceptance = acceptance
        self._records: List[TransferSolution] = []

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[TransferSolution]:
        return iter(self._records)

    @property
    def constants(self) -> SystemConstants:
        return self.header.constants

    @property
    def records(self) -> Tuple[TransferSolution, ...]:
        return tuple(self._records)

    def record(self, solution: TransferSolution) -> None:
        """Append *solution*, rejecting it if any invariant fails."""
        problems = solution.problems(self.constants, self.acceptance)
        if problems:
            raise CatalogError(f"rejected solution {solution.grid_index}: " + "; ".join(problems))
        self._records.append(solution)

    def extend(self, solutions: Iterable[TransferSolution]) -> None:
        for solution in solutions:
            self.record(solution)

    def merge(self, other: Catalog) -> None:
        if (other.header.constants_hash, other.header.grid_hash) != (self.header.constants_hash, self.header.grid_hash):
            raise CatalogError("refusing to merge catalogs built from different constants or grids")
        self.extend(other)

    def get(self, solution_id: int) -> TransferSolution:
        for solution in self._records:
            if solution.solution_id == solution_id:
                return solution
        raise CatalogError(f"no solution with id {solution_id}")

    def sorted_view(self) -> List[TransferSolution]:
        """Records ordered by (alpha, tof)."""
        return sorted(self._records, key=lambda s: (s.alpha, s.tof, s.grid_index))

    def alphas(self) -> List[float]:
        return sorted({s.alpha for s in self._records})

    def at_alpha(self, alpha: float, tol: float = 1e-12) -> List[TransferSolution]:
        return [s for s in self._records if abs(s.alpha - alpha) <= tol]

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(json.dumps(self.header.to_json()) + "\n")
            for solution in self._records:
                f.write(json.dumps(solution.to_json()) + "\n")
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path: Union[str, Path], acceptance: float = ACCEPTANCE) -> Catalog:
        path = Path(path)
        if not path.exists():
            raise CatalogError(f"catalog not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                lines = [line for line in f if line.strip()]
        except UnicodeDecodeError as exc:
            raise CatalogError(f"{path}: not valid UTF-8 at byte {exc.start}") from exc
        if not lines:
            raise CatalogError(f"empty catalog file: {path}")
        try:
            header = CatalogHeader.from_json(json.loads(lines[0]))
            catalog = cls(header, acceptance)
            for number, line in enumerate(lines[1:], start=2):
                try:
                    catalog.record(TransferSolution.from_json(json.loads(line)))
                except CatalogError as err:
                    raise CatalogError(f"{path}:{number}: {err.message}") from err
        except json.JSONDecodeError as exc:
            raise CatalogError(f"{path}: invalid JSON ({exc.msg})") from exc
        return catalog


# ------------------------------------------------------------------
# Deduplication
# ------------------------------------------------------------------

def deduplicate(catalog: Catalog, tol_beta: float = 1e-6, tol_tof: float = 1e-5) -> Catalog:
    """Collapse tolerance clusters to their lowest-residual member.

    Records are grouped by exact alpha; within a group two records are
    linked when they differ by at most *tol_beta* in beta and *tol_tof* TU
    in tof, and each connected component keeps one representative.  The
    pre-dedup count is kept in the header as ``raw_count``.
    """
    if not (tol_beta > 0.0 and tol_tof > 0.0):
        raise CatalogError("deduplication tolerances must be positive")
    groups: Dict[float, List[TransferSolution]] = {}
    for solution in catalog:
        groups.setdefault(solution.alpha, []).append(solution)

    keep: List[TransferSolution] = []
    for alpha in sorted(groups):
        keep.extend(_representatives(groups[alpha], tol_beta, tol_tof))
    keep.sort(key=lambda s: s.grid_index)

    raw = catalog.header.raw_count if catalog.header.raw_count is not None else len(catalog)
    result = Catalog(replace(catalog.header, raw_count=raw), catalog.acceptance)
    result.extend(keep)
    return result


def _representatives(group: Sequence[TransferSolution], tol_beta: float, tol_tof: float) -> List[TransferSolution]:
    if len(group) == 1:
        return list(group)
    points = np.array([[s.beta / tol_beta, s.tof / tol_tof] for s in group])
    pairs = cKDTree(points).query_pairs(r=1.0, p=np.inf, output_type="ndarray")
    n = len(group)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    count, labels = connected_components(graph, directed=False)
    best: Dict[int, TransferSolution] = {}
    for label, solution in zip(labels, group):
        incumbent = best.get(label)
        if incumbent is None or (solution.residual_norm, solution.grid_index) < (incumbent.residual_norm, incumbent.grid_index):
            best[label] = solution
    return [best[label] for label in range(count)]
