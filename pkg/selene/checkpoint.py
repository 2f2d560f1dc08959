"""Resumable sweep state.

A checkpoint is an append-only JSONL file::

    {"format": "selene-checkpoint", ..., "config": {...}}   header
    {"solution": {...}}                                      converged transfer
    {"progress": {"next_index": N, ...}}                     commit marker

Solution lines are only trusted up to the last progress line; anything
after it belongs to a block that was interrupted mid-write and is dropped
on open, and the sweep restarts from that progress line's ``next_index``.
Only the final line may be torn; an unreadable line with anything after it
is damage and the checkpoint is refused untouched.
"""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from selene.catalog import TransferSolution, fingerprint
from selene.errors import CheckpointError
from selene.search import RowResult

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "selene-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class SweepCounters:
    """Cumulative tallies carried by every progress line."""

    candidates: Counter = field(default_factory=Counter)
    corrections: Counter = field(default_factory=Counter)
    masked: int = 0
    screened_out: int = 0

    def add(self, candidates: Dict[str, int], corrections: Dict[str, int], masked: int, screened_out: int) -> None:
        self.candidates.update(candidates)
        self.corrections.update(corrections)
        self.masked += masked
        self.screened_out += screened_out

    def to_json(self) -> Dict[str, Any]:
        return {
            "candidates": dict(self.candidates),
            "corrections": dict(self.corrections),
            "masked": self.masked,
            "screened_out": self.screened_out,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> SweepCounters:
        return cls(
            Counter(data.get("candidates", {})),
            Counter(data.get("corrections", {})),
            int(data.get("masked", 0)),
            int(data.get("screened_out", 0)),
        )


@dataclass(frozen=True)
class CheckpointHeader:
    constants_hash: str
    grid_hash: str
    settings_hash: str
    total: int
    config: Dict[str, Any]

    @classmethod
    def for_config(cls, config: Dict[str, Any], total: int) -> CheckpointHeader:
        return cls(
            constants_hash=fingerprint(config["constants"]),
            grid_hash=fingerprint(config["grid"]),
            settings_hash=fingerprint(_settings_view(config)),
            total=total,
            config=config,
        )

    def to_json(self) -> Dict[str, Any]:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "constants_hash": self.constants_hash,
            "grid_hash": self.grid_hash,
            "settings_hash": self.settings_hash,
            "total": self.total,
            "config": self.config,
        }


def _settings_view(config: Dict[str, Any]) -> Dict[str, Any]:
    """The parts of a config that change which solutions a sweep finds."""
    search = config.get("search", {})
    return {
        "orbit": config.get("orbit"),
        "correction": config.get("correction"),
        "screen_threshold": search.get("screen_threshold"),
        "shared_arcs": search.get("shared_arcs"),
        "branch_mask": search.get("branch_mask"),
    }


class Checkpoint:
    """Open checkpoint file: recovered solutions, the resume index, and an append handle."""

    def __init__(self, path: Path, header: CheckpointHeader, solutions: List[TransferSolution],
                 next_index: int, counters: SweepCounters) -> None:
        self.path = path
        self.header = header
        self.solutions = solutions
        self.next_index = next_index
        self.counters = counters
        self._pending: List[RowResult] = []

    @property
    def complete(self) -> bool:
        return self.next_index >= self.header.total

    @classmethod
    def create(cls, path: Union[str, Path], config: Dict[str, Any], total: int) -> Checkpoint:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = CheckpointHeader.for_config(config, total)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(json.dumps(header.to_json()) + "\n")
            f.write(json.dumps({"progress": {"next_index": 0, **SweepCounters().to_json()}}) + "\n")
        tmp.replace(path)
        return cls(path, header, [], 0, SweepCounters())

    @classmethod
    def open(cls, path: Union[str, Path], expected: Optional[Dict[str, Any]] = None) -> Checkpoint:
        """Read *path*, verify its fingerprints and drop any uncommitted tail.

        When *expected* (a config dict) is given, its constants, grid and
        settings must hash to the values recorded in the header.
        """
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"checkpoint not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = f.read()
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: not valid UTF-8 at byte {exc.start}") from exc
        lines = raw.splitlines(keepends=True)
        if not lines:
            raise CheckpointError(f"empty checkpoint file: {path}")

        try:
            head = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: unreadable header ({exc.msg})") from exc
        header = _parse_header(head, path)

        solutions: List[TransferSolution] = []
        pending: List[TransferSolution] = []
        next_index = 0
        counters = SweepCounters()
        committed_bytes = len(lines[0].encode("utf-8"))
        offset = committed_bytes
        for number, line in enumerate(lines[1:], start=2):
            offset += len(line.encode("utf-8"))
            final = number == len(lines)
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                if final:
                    break  # torn final line
                raise CheckpointError(f"{path}:{number}: damaged line ({exc.msg}) before the end of the file") from exc
            if final and not line.endswith("\n"):
                break
            if not isinstance(entry, dict):
                raise CheckpointError(f"{path}:{number}: unrecognised checkpoint entry")
            if "solution" in entry:
                try:
                    pending.append(TransferSolution.from_json(entry["solution"]))
                except Exception as err:
                    raise CheckpointError(f"{path}:{number}: {err}") from err
            elif "progress" in entry:
                progress = entry["progress"]
                next_index = int(progress["next_index"])
                counters = SweepCounters.from_json(progress)
                solutions.extend(pending)
                pending = []
                committed_bytes = offset
            else:
                raise CheckpointError(f"{path}:{number}: unrecognised checkpoint entry")

        if expected is not None:
            _check_against(header, expected)
        if not 0 <= next_index <= header.total:
            raise CheckpointError(f"{path}: resume index {next_index} outside grid of {header.total}")

        if committed_bytes < len(raw.encode("utf-8")):
            logger.warning("discarding uncommitted tail of %s after grid index %d", path, next_index)
            with open(path, "r+b") as f:
                f.truncate(committed_bytes)
        return cls(path, header, solutions, next_index, counters)

    def absorb(self, result: RowResult) -> None:
        """Buffer a finished row; nothing reaches disk until :meth:`commit`."""
        self._pending.append(result)

    @property
    def pending_candidates(self) -> int:
        return sum(r.processed for r in self._pending)

    def commit(self) -> int:
        """Append buffered solutions and a progress marker, then fsync.

        Returns the new resume index.
        """
        rows, self._pending = self._pending, []
        next_index = rows[-1].stop if rows else self.next_index
        if next_index < self.next_index:
            raise CheckpointError(f"progress may not move backwards ({next_index} < {self.next_index})")
        solutions = [s for row in rows for s in row.solutions]
        for row in rows:
            self.counters.add(row.candidates, row.corrections, row.masked, row.screened_out)
        with open(self.path, "a", encoding="utf-8") as f:
            for solution in solutions:
                f.write(json.dumps({"solution": solution.to_json()}) + "\n")
            f.write(json.dumps({"progress": {"next_index": next_index, **self.counters.to_json()}}) + "\n")
            f.flush()
            os.fsync(f.fileno())
        self.solutions.extend(solutions)
        self.next_index = next_index
        logger.debug("checkpoint committed at grid index %d", next_index)
        return next_index


def _parse_header(head: Dict[str, Any], path: Path) -> CheckpointHeader:
    if head.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint file (format {head.get('format')!r})")
    if head.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {head.get('version')!r}")
    try:
        header = CheckpointHeader(
            constants_hash=str(head["constants_hash"]),
            grid_hash=str(head["grid_hash"]),
            settings_hash=str(head["settings_hash"]),
            total=int(head["total"]),
            config=dict(head["config"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint header ({exc})") from exc
    try:
        _check_against(header, header.config)
    except CheckpointError as err:
        raise CheckpointError(f"{path}: header does not match its embedded config ({err.message})") from err
    return header


def _check_against(header: CheckpointHeader, config: Dict[str, Any]) -> None:
    try:
        recomputed = CheckpointHeader.for_config(config, header.total)
    except KeyError as exc:
        raise CheckpointError(f"config is missing section {exc}") from exc
    for name in ("constants_hash", "grid_hash", "settings_hash"):
        if getattr(recomputed, name) != getattr(header, name):
            raise CheckpointError(f"{name.replace('_hash', '')} fingerprint differs from the checkpoint")
