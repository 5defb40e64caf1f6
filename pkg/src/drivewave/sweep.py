"""Parameter sweeps: (s, r) speed heatmaps and (h, s) regime maps."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (
    CoexistenceAbsent, Regime, RegimeBoundaryError, classify_regime, drive_equilibrium_density,
    linearized_speed_drive, linearized_speed_wildtype, persistence_composite, persistence_pure,
    pulled_set_boundary, thresholds,
)
from .model_core import INFINITY, ConversionTiming, Parameters
from .solver import GridConfig, Outcome, detect_outcome, simulate, sized_grid


@dataclass(frozen=True)
class SweepSpec:
    """Axes and solver settings of an (s, r) heatmap.

    The r-axis is log-spaced on [r_min, r_max]; ``include_r0`` adds the exact
    r=0 row and ``include_rinf`` the r=inf row.
    """

    timing: ConversionTiming = ConversionTiming.ZYGOTE
    c: float = 0.25
    h: float = 0.1
    s_min: float = 0.02
    s_max: float = 0.98
    s_count: int = 50
    r_min: float = 0.01
    r_max: float = 10.0
    r_count: int = 40
    include_r0: bool = True
    include_rinf: bool = False
    dx: float = 0.25
    travel: float = 150.0
    T_min: float = 200.0
    T_max: float = 1000.0
    samples: int = 100
    representation: str = "allele"

    def problems(self) -> list[str]:
        out = []
        if self.s_count < 2 or self.r_count < 2:
            out.append("axis counts must be at least 2")
        if not (0 < self.s_min < self.s_max < 1):
            out.append("s-axis must satisfy 0 < s_min < s_max < 1")
        if not (0 < self.r_min < self.r_max):
            out.append("r-axis bounds must satisfy 0 < r_min < r_max")
        if not (0 <= self.c <= 1):
            out.append("c must lie in [0,1]")
        if not (0 <= self.h <= 1):
            out.append("h must lie in [0,1]")
        if not self.dx > 0:
            out.append("dx must be positive")
        if not (0 < self.T_min <= self.T_max):
            out.append("T bounds must satisfy 0 < T_min <= T_max")
        return out

    @property
    def s_values(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.s_count)

    @property
    def r_values(self) -> list[float]:
        rows = list(np.geomspace(self.r_min, self.r_max, self.r_count))
        if self.include_r0:
            rows.insert(0, 0.0)
        if self.include_rinf:
            rows.append(INFINITY)
        return [float(r) for r in rows]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["timing"] = ConversionTiming.parse(self.timing).value
        return d


@dataclass
class CellResult:
    s: float
    r: float
    speed: Optional[float]
    outcome: str
    wake_density: Optional[float]
    stderr: Optional[float]
    speed_left: Optional[float] = None
    plateau: Optional[float] = None
    T: Optional[float] = None
    length: Optional[float] = None
    error: Optional[str] = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class SweepTable:
    spec: SweepSpec
    s_values: list[float]
    r_values: list[float]
    cells: list[CellResult]
    overlays: dict

    def cell(self, s_index: int, r_index: int) -> CellResult:
        return self.cells[r_index * len(self.s_values) + s_index]

    def row(self, r_index: int) -> list[CellResult]:
        n = len(self.s_values)
        return self.cells[r_index * n:(r_index + 1) * n]


# ---------------------------------------------------------------------------
# one cell
# ---------------------------------------------------------------------------

def _linear_speeds(timing, params: Parameters) -> list[float]:
    speeds = [linearized_speed_drive(timing, params)]
    if params.is_rinf:
        speeds.append(2.0)
    else:
        speeds.append(linearized_speed_wildtype(params, drive_equilibrium_density(params), timing))
    return [abs(v) for v in speeds if v is not None and v != 0]


def speed_bound(timing, params: Parameters) -> float:
    """Upper estimate of any front speed, used to size the domain."""
    return max(_linear_speeds(timing, params) + [0.25])


def cell_grid(spec: SweepSpec, params: Parameters) -> GridConfig:
    """Run long enough for the slowest expected front to cover ``spec.travel``."""
    v_fast = speed_bound(spec.timing, params)
    v_slow = min(_linear_speeds(spec.timing, params) or [v_fast])
    T = min(spec.T_max, max(spec.T_min, spec.travel / v_slow))
    return sized_grid(1.5 * v_fast, T, spec.dx, samples=spec.samples)


def run_cell(spec: SweepSpec, s: float, r: float) -> CellResult:
    params = Parameters(r=r, c=spec.c, s=s, h=spec.h)
    try:
        grid = cell_grid(spec, params)
        traj = simulate(spec.timing, params, spec.representation, grid)
        rep = detect_outcome(traj)
    except Exception as exc:  # recorded per cell, never aborts the sweep
        return CellResult(s, r, None, "error", None, None, error=f"{type(exc).__name__}: {exc}")
    speed = None if rep.outcome is Outcome.CLEARANCE else rep.speed
    return CellResult(s, r, speed, rep.outcome.value, rep.wake_density, rep.stderr,
                      speed_left=rep.speed_left, plateau=rep.plateau, T=grid.T,
                      length=grid.length, diagnostics=rep.diagnostics)


def _run_packed(args) -> CellResult:
    return run_cell(*args)


# ---------------------------------------------------------------------------
# heatmap
# ---------------------------------------------------------------------------

def run_heatmap(spec: SweepSpec, parallelism: int = 1) -> SweepTable:
    """Run every (s, r) cell; results are ordered row by row along the r-axis."""
    problems = spec.problems()
    if problems:
        raise ValueError("; ".join(problems))
    s_vals = [float(s) for s in spec.s_values]
    r_vals = spec.r_values
    tasks = [(spec, s, r) for r in r_vals for s in s_vals]
    if parallelism <= 1:
        cells = [_run_packed(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            cells = list(pool.map(_run_packed, tasks, chunksize=max(1, len(tasks) // (8 * parallelism))))
    return SweepTable(spec, s_vals, r_vals, cells, overlay_lines(spec))


def overlay_lines(spec: SweepSpec, resolution: int = 400) -> dict:
    """Analytic curves drawn over a heatmap, clipped to the axis box."""
    timing = ConversionTiming.parse(spec.timing)
    s_axis = np.linspace(spec.s_min, spec.s_max, resolution)
    in_box = lambda r: spec.r_min <= r <= spec.r_max

    pure = [[float(s), float(persistence_pure(s))] for s in s_axis if in_box(persistence_pure(s))]
    composite = []
    for s in s_axis:
        try:
            r_thr, _ = persistence_composite(timing, Parameters(1.0, spec.c, float(s), spec.h))
        except CoexistenceAbsent:
            continue
        if in_box(r_thr):
            composite.append([float(s), r_thr])

    th = thresholds(timing, spec.c, spec.h)
    verticals = {name: val for name, val in (("s1", th.s1), ("s2", th.s2))
                 if spec.s_min <= val <= spec.s_max}
    boundary = pulled_set_boundary(timing, spec.c, spec.h) if th.a_factor < 0 else None
    if boundary is not None and not spec.s_min <= boundary <= spec.s_max:
        boundary = None
    return {"pure_persistence": pure, "composite_persistence": composite,
            "thresholds": verticals, "pulled_set_boundary": boundary}


def _fmt(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if x == 0:
        return "0"
    if math.isinf(x):
        return "inf"
    return f"{x:.10g}"


def heatmap_csv(table: SweepTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["s", "r", "speed", "outcome", "wake_density", "stderr"])
    for cell in table.cells:
        writer.writerow([_fmt(cell.s), _fmt(cell.r), _fmt(cell.speed), cell.outcome,
                         _fmt(cell.wake_density), _fmt(cell.stderr)])
    return buf.getvalue()


def jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else None)
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return jsonable(x.item())
    return x


def sidecar(table: SweepTable, extra: Optional[dict] = None) -> dict:
    return jsonable({
        "tool": "drivewave", "version": __version__,
        "spec": table.spec.to_dict(),
        "overlays": table.overlays,
        "cells": [asdict(c) for c in table.cells],
        **(extra or {}),
    })


def write_heatmap(table: SweepTable, prefix: str | Path, extra: Optional[dict] = None) -> list[Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.parent / f"{prefix.name}_heatmap.csv"
    json_path = prefix.parent / f"{prefix.name}_overlays.json"
    csv_path.write_text(heatmap_csv(table), encoding="utf-8")
    json_path.write_text(json.dumps(sidecar(table, extra), indent=2, sort_keys=True), encoding="utf-8")
    return [csv_path, json_path]


# ---------------------------------------------------------------------------
# regime maps
# ---------------------------------------------------------------------------

@dataclass
class RegimeMap:
    timing: ConversionTiming
    c: float
    h_values: list[float]
    s_values: list[float]
    regimes: list[list[Regime]]  # indexed [h][s]

    def column(self, h_index: int) -> list[Regime]:
        return self.regimes[h_index]


def run_regime_map(timing: ConversionTiming, c: float, h_values: Sequence[float],
                   s_values: Sequence[float], tol: float = 1e-9) -> RegimeMap:
    """Classify every (h, s) cell of the r=inf model; threshold cells become BOUNDARY."""
    timing = ConversionTiming.parse(timing)
    grid = []
    for h in h_values:
        row = []
        for s in s_values:
            try:
                row.append(classify_regime(timing, c, float(h), float(s), tol=tol))
            except RegimeBoundaryError:
                row.append(Regime.BOUNDARY)
        grid.append(row)
    return RegimeMap(timing, c, [float(h) for h in h_values], [float(s) for s in s_values], grid)


def regime_csv(rmap: RegimeMap) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["h", "s", "regime"])
    for h, row in zip(rmap.h_values, rmap.regimes):
        for s, reg in zip(rmap.s_values, row):
            writer.writerow([_fmt(h), _fmt(s), reg.value])
    return buf.getvalue()
