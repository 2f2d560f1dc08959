"""Shared test fixtures and helpers for the Selene test suite."""

from __future__ import annotations

import math
from typing import List

import numpy as np
import pytest

from selene.catalog import Catalog, CatalogHeader, TransferSolution
from selene.constants import EARTH_MOON
from selene.corrector import CorrectionOutcome, CorrectionSettings, correct
from selene.search import Candidate, CandidateStatus, evaluate_fan
from selene.transfer import OrbitSpec

# Where the fixture search looks for a first converged transfer.
_FIXTURE_ALPHAS = [k * math.pi / 12.0 for k in range(24)]
_FIXTURE_BETAS = [1.404, 1.407, 1.410]
_FIXTURE_TOFS = [0.3 + 0.02 * k for k in range(161)]


@pytest.fixture(scope="session")
def orbit() -> OrbitSpec:
    return OrbitSpec()


@pytest.fixture(scope="session")
def settings() -> CorrectionSettings:
    return CorrectionSettings()


def fan_search(orbit: OrbitSpec) -> List[Candidate]:
    """Every guess of a small fan search over the fixture grid."""
    found: List[Candidate] = []
    for alpha in _FIXTURE_ALPHAS:
        for beta in _FIXTURE_BETAS:
            found.extend(evaluate_fan(alpha, beta, _FIXTURE_TOFS, orbit))
    return found


@pytest.fixture(scope="session")
def fan(orbit: OrbitSpec) -> List[Candidate]:
    return fan_search(orbit)


@pytest.fixture(scope="session")
def candidates(fan: List[Candidate]) -> List[Candidate]:
    """Feasible guesses, best arrival residual first."""
    return sorted((c for c in fan if c.feasible), key=lambda c: c.psi_f_norm)


@pytest.fixture(scope="session")
def collided(fan: List[Candidate]) -> List[Candidate]:
    """Guesses whose arc hits a primary well before the end of the flight."""
    hits = [c for c in fan if c.status is CandidateStatus.COLLIDED and c.params.tof > c.time + 0.1]
    if not hits:
        pytest.fail("fixture search produced no collisions")
    return hits


@pytest.fixture(scope="session")
def converged(orbit: OrbitSpec, settings: CorrectionSettings, candidates: List[Candidate]) -> CorrectionOutcome:
    """A converged transfer, found by correcting the most promising guesses."""
    for candidate in candidates[:60]:
        outcome = correct(candidate, orbit, settings)
        if outcome.converged:
            return outcome
    pytest.fail("no fixture guess converged")


@pytest.fixture(scope="session")
def solution(converged: CorrectionOutcome, orbit: OrbitSpec) -> TransferSolution:
    return TransferSolution.from_outcome(converged, orbit, grid_index=7)


def make_solution(
    grid_index: int,
    alpha: float = 0.5,
    beta: float = 1.407,
    tof: float = 1.0,
    residual: float = 1e-10,
    dv_i: float = 3.1,
    dv_f: float = 0.8,
) -> TransferSolution:
    """A record that satisfies the catalog invariants, for catalog and analysis tests."""
    return TransferSolution(
        grid_index=grid_index,
        alpha=alpha,
        beta=beta,
        tof=tof,
        tof_days=EARTH_MOON.dimensional_time(tof),
        departure=(0.01, 0.01, 0.1, 0.1),
        insertion=(0.99, 0.001, 0.05, 0.05),
        dv_i=dv_i,
        dv_f=dv_f,
        dv=dv_i + dv_f,
        dv_abs=abs(dv_i) + abs(dv_f),
        residual_norm=residual,
        insertion_sense=1,
        iterations=3,
    )


def days(value: float) -> float:
    """TU for *value* days."""
    return EARTH_MOON.canonical_time(value)


def catalog_of(solutions: List[TransferSolution]) -> Catalog:
    catalog = Catalog(CatalogHeader(grid_hash="test"))
    catalog.extend(solutions)
    return catalog


def random_states(n: int, seed: int = 7) -> List[np.ndarray]:
    """States in the Earth-Moon region, well away from both primaries."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        x, y = rng.uniform(-1.2, 1.2, size=2)
        if math.hypot(x + EARTH_MOON.mu, y) < 0.2 or math.hypot(x - 1.0 + EARTH_MOON.mu, y) < 0.1:
            continue
        u, v = rng.uniform(-0.3, 0.3, size=2)
        out.append(np.array([x, y, u, v]))
    return out
