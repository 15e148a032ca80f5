"""Phase-diagram scans over the (kerr, tilt) plane.

Each grid cell is an independent simulation from the same initial condition,
so cells can run in any order on any number of worker processes; results are
collected by cell index and the exported files do not depend on scheduling.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import __version__
from .dynamics import simulate
from .model import LatticeParams, RunSettings, check, dump_config
from .observables import classify
from .wannier_stark import build_basis

__all__ = [
    "CellResult",
    "SweepGrid",
    "SweepMismatchError",
    "axis_values",
    "export",
    "load_checkpoint",
    "load_results",
    "run_cell",
    "run_sweep",
    "write_checkpoint",
]

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["chi", "tilt", "delta_n", "avg_max_fidelity", "theta", "label", "period",
                  "peak_fraction", "N0_over_N", "boundary_contaminated", "status"]


class SweepMismatchError(ValueError):
    """A checkpoint belongs to a different grid."""


def axis_values(lo: float, hi: float, count: int) -> tuple[float, ...]:
    if count < 1:
        raise ValueError("axis count must be >= 1")
    if count == 1:
        return (float(lo),)
    return tuple(float(v) for v in np.linspace(lo, hi, count))


@dataclass(frozen=True)
class SweepGrid:
    """Cartesian grid of interaction strengths and tilts around a template model."""

    chi_values: tuple[float, ...]
    tilt_values: tuple[float, ...]
    template: LatticeParams = field(default_factory=LatticeParams)
    settings: RunSettings = field(default_factory=RunSettings)

    @classmethod
    def from_ranges(cls, chi: tuple[float, float, int], tilt: tuple[float, float, int],
                    template: LatticeParams | None = None,
                    settings: RunSettings | None = None) -> "SweepGrid":
        return cls(axis_values(*chi), axis_values(*tilt), template or LatticeParams(), settings or RunSettings())

    def __post_init__(self):
        if not self.chi_values or not self.tilt_values:
            raise ValueError("grid axes must be non-empty")
        if any(not v > 0 for v in self.tilt_values):
            raise ValueError("tilt values must be positive")
        if any(v < 0 for v in self.chi_values):
            raise ValueError("kerr values must be non-negative")
        check(self.template)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.chi_values), len(self.tilt_values)

    def __len__(self) -> int:
        return len(self.chi_values) * len(self.tilt_values)

    def cell(self, index: int) -> tuple[float, float]:
        i, k = divmod(index, len(self.tilt_values))
        return self.chi_values[i], self.tilt_values[k]

    def params_for(self, index: int) -> LatticeParams:
        chi, tilt = self.cell(index)
        return self.template.with_(kerr=chi, tilt=tilt)

    def spec(self) -> dict:
        """JSON-friendly identity of the grid, used to validate checkpoints."""
        return {
            "chi_values": list(self.chi_values),
            "tilt_values": list(self.tilt_values),
            "template": dump_config(self.template, self.settings),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.spec(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class CellResult:
    index: int
    chi: float
    tilt: float
    label: str
    delta_n: float
    avg_max_fidelity: float
    theta: float
    period: float | None = None
    peak_fraction: float | None = None
    N0_over_N: float | None = None
    boundary_contaminated: bool = False
    status: str = "ok"
    error: str = ""
    runtime: float = 0.0
    steps: int = 0
    rejected_steps: int = 0

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "CellResult":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in rec.items() if k in names})


def run_cell(grid: SweepGrid, index: int) -> CellResult:
    """Simulate and classify one grid cell; failures are returned, not raised."""
    chi, tilt = grid.cell(index)
    start = time.perf_counter()
    try:
        params = grid.params_for(index)
        settings = grid.settings.resolved(params)
        traj = simulate(params, settings)
        res = classify(traj, build_basis(params), t_start=settings.window_start,
                       stationary_threshold=settings.stationary_threshold,
                       peak_fraction=settings.peak_fraction, min_periods=settings.min_periods)
        return CellResult(index, chi, tilt, res.label, res.delta_n, res.avg_max_fidelity, res.theta,
                          res.period, res.peak_fraction, res.n0_over_n, traj.boundary_contaminated,
                          runtime=time.perf_counter() - start, steps=traj.stats.accepted,
                          rejected_steps=traj.stats.rejected)
    except Exception as exc:  # one bad cell must not stop the sweep
        log.warning("cell %d (chi=%g, tilt=%g) failed: %s", index, chi, tilt, exc)
        nan = float("nan")
        return CellResult(index, chi, tilt, "Failed", nan, nan, nan, status="failed",
                          error=f"{type(exc).__name__}: {exc}", runtime=time.perf_counter() - start)


# --------------------------------------------------------------------------
# checkpoints


def write_checkpoint(path, grid: SweepGrid, results: Iterable[CellResult]) -> None:
    """Atomically replace ``path`` with the grid identity and finished cells."""
    path = Path(path)
    payload = {
        "grid": grid.spec(),
        "config_hash": grid.config_hash(),
        "results": [r.to_record() for r in sorted(results, key=lambda r: r.index)],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, allow_nan=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _diff_summary(old: dict, new: dict) -> str:
    parts = []
    for key in sorted(set(old) | set(new)):
        if old.get(key) != new.get(key):
            if key == "template":
                a = old.get(key, "").splitlines()
                b = new.get(key, "").splitlines()
                changed = [f"{x!r} -> {y!r}" for x, y in zip(a, b) if x != y]
                parts.append("template: " + ", ".join(changed or ["differs"]))
            else:
                parts.append(f"{key}: {old.get(key)} -> {new.get(key)}")
    return "; ".join(parts)


def load_checkpoint(path, grid: SweepGrid) -> dict[int, CellResult]:
    """Finished cells from ``path``; empty if it does not exist.

    Raises :class:`SweepMismatchError` when the checkpoint was written for a
    different grid.
    """
    path = Path(path)
    if not path.exists() or path.stat().st_size == 0:
        return {}
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("grid") != grid.spec():
        raise SweepMismatchError("checkpoint grid differs: " + _diff_summary(payload.get("grid", {}), grid.spec()))
    return {r["index"]: CellResult.from_record(r) for r in payload.get("results", [])}


# --------------------------------------------------------------------------
# driver


def run_sweep(
    grid: SweepGrid,
    workers: int = 1,
    *,
    checkpoint=None,
    resume: bool = False,
    limit: int | None = None,
    progress: Callable[[CellResult], None] | None = None,
) -> list[CellResult]:
    """Run every cell of ``grid``; results are ordered by cell index.

    With ``checkpoint`` set, finished cells are saved after each completion;
    ``resume`` skips cells already present there. ``limit`` stops after that
    many newly computed cells (the returned list is then partial).
    """
    done: dict[int, CellResult] = {}
    if checkpoint is not None and resume:
        done = load_checkpoint(checkpoint, grid)
    pending = [i for i in range(len(grid)) if i not in done]
    if limit is not None:
        pending = pending[:limit]

    def record(res: CellResult):
        done[res.index] = res
        if checkpoint is not None:
            write_checkpoint(checkpoint, grid, done.values())
        if progress is not None:
            progress(res)

    if workers <= 1 or len(pending) <= 1:
        for i in pending:
            record(run_cell(grid, i))
    else:
        # one task per cell: idle workers pick up the next cell as soon as they finish
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, grid, i) for i in pending]
            for fut in as_completed(futures):
                record(fut.result())
    return [done[i] for i in sorted(done)]


# --------------------------------------------------------------------------
# export


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def results_csv(results: Iterable[CellResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for r in sorted(results, key=lambda r: r.index):
        rec = r.to_record()
        writer.writerow([_cell_text(rec[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def export(results: list[CellResult], outdir, grid: SweepGrid, *, wall_time: float | None = None) -> dict:
    """Write ``results.csv``, ``timings.csv``, ``failures.log`` and ``manifest.json``.

    ``results.csv`` holds only deterministic fields; per-cell runtimes and
    step counts go to ``timings.csv``. Returns the manifest dictionary.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(results, key=lambda r: r.index)
    (outdir / "results.csv").write_text(results_csv(ordered), encoding="utf-8")
    with open(outdir / "timings.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chi", "tilt", "runtime", "steps", "rejected_steps"])
        for r in ordered:
            w.writerow([repr(r.chi), repr(r.tilt), f"{r.runtime:.3f}", r.steps, r.rejected_steps])
    failures = [r for r in ordered if r.status != "ok"]
    (outdir / "failures.log").write_text(
        "".join(f"chi={r.chi!r} tilt={r.tilt!r}: {r.error}\n" for r in failures), encoding="utf-8")
    manifest = {
        "tool": "tiltcav",
        "version": __version__,
        "grid": grid.spec(),
        "config_hash": grid.config_hash(),
        "cells": len(grid),
        "completed": len(ordered),
        "failed": len(failures),
        "wall_time": wall_time,
        "files": {name: hashlib.sha256((outdir / name).read_bytes()).hexdigest()
                  for name in ("results.csv", "failures.log")},
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def _parse_field(name: str, text: str):
    if name in ("label", "status"):
        return text
    if name == "boundary_contaminated":
        return text == "true"
    if text == "":
        return None
    value = float(text)
    return value


def load_results(path) -> list[dict]:
    """Read a ``results.csv`` back into dictionaries with typed values."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse_field(k, v) for k, v in row.items()} for row in reader]


def isclose_records(a: dict, b: dict) -> bool:
    """Field-wise equality treating NaN as equal to NaN."""
    for key in RESULT_COLUMNS:
        x, y = a.get(key), b.get(key)
        if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
            continue
        if x != y:
            return False
    return True
