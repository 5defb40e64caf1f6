"""Command-line entry point: ``drivewave <subcommand> [--config FILE] [flags]``.

Settings live in a flat namespace of dotted keys (``solver.dx``). Precedence is
built-in defaults, then the config file, then flags.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from .analysis import (
    CoexistenceAbsent, RegimeBoundaryError, classify_regime, drive_equilibrium_density,
    linearized_speed_drive, linearized_speed_wildtype, persistence_composite, persistence_pure,
    pulled_set_boundary, pulled_set_contains, thresholds,
)
from .model_core import ConversionTiming, DegenerateStateError, Parameters, parameter_problems
from .si_wave import SIParams, admissible_constants, critical_speed, si_params, verify_subsuper
from .solver import (
    ConvergenceError, GridConfig, InsufficientSamples, NumericalBlowup, Representation,
    detect_outcome, simulate, sized_grid,
)
from .sweep import (
    SweepSpec, jsonable, regime_csv, run_heatmap, run_regime_map, speed_bound, write_heatmap,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3
THREADS_ENV = "DRIVEWAVE_THREADS"


class UsageError(Exception):
    def __init__(self, problems: Sequence[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


# ---------------------------------------------------------------------------
# value parsing
# ---------------------------------------------------------------------------

def _float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none", "auto") else _float(text)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return str(value)


@dataclass(frozen=True)
class Setting:
    parse: Callable[[str], Any]
    default: Any
    help: str


SETTINGS: dict[str, Setting] = {
    "model.timing": Setting(str, "zygote", "conversion timing: zygote, germline or perfect"),
    "model.representation": Setting(str, "allele", "state variables: genotype, allele or frequency"),
    "model.r": Setting(_float, 1.0, "intrinsic growth rate (inf selects the frequency limit)"),
    "model.c": Setting(_float, 0.25, "conversion efficiency"),
    "model.h": Setting(_float, 0.1, "dominance of the fitness cost"),
    "model.s": Setting(_float, 0.3, "fitness cost of the drive"),
    "solver.dx": Setting(_float, 0.25, "grid spacing"),
    "solver.T": Setting(_float, 200.0, "final time"),
    "solver.dt": Setting(_optional_float, None, "time step (default: stability limit)"),
    "solver.length": Setting(_optional_float, None, "domain length (default: sized from expected speed)"),
    "solver.moving_window": Setting(_bool, False, "follow the front with a moving window"),
    "solver.samples": Setting(int, 200, "number of observation times"),
    "solver.snapshots": Setting(int, 5, "number of stored full profiles"),
    "sweep.s_min": Setting(_float, SweepSpec.s_min, "smallest s"),
    "sweep.s_max": Setting(_float, SweepSpec.s_max, "largest s"),
    "sweep.s_count": Setting(int, SweepSpec.s_count, "number of s values"),
    "sweep.r_min": Setting(_float, SweepSpec.r_min, "smallest positive r"),
    "sweep.r_max": Setting(_float, SweepSpec.r_max, "largest r"),
    "sweep.r_count": Setting(int, SweepSpec.r_count, "number of log-spaced r values"),
    "sweep.include_r0": Setting(_bool, SweepSpec.include_r0, "add the exact r=0 row"),
    "sweep.include_rinf": Setting(_bool, SweepSpec.include_rinf, "add the r=inf row"),
    "sweep.travel": Setting(_float, SweepSpec.travel, "distance the slowest front should cover"),
    "sweep.T_min": Setting(_float, SweepSpec.T_min, "shortest run per cell"),
    "sweep.T_max": Setting(_float, SweepSpec.T_max, "longest run per cell"),
    "regimes.h_min": Setting(_float, 0.0, "smallest h"),
    "regimes.h_max": Setting(_float, 1.0, "largest h"),
    "regimes.h_count": Setting(int, 101, "number of h values"),
    "regimes.s_min": Setting(_float, 0.005, "smallest s"),
    "regimes.s_max": Setting(_float, 0.995, "largest s"),
    "regimes.s_count": Setting(int, 199, "number of s values"),
    "si.beta1": Setting(_optional_float, None, "susceptible loss rate (default: mapped from the model)"),
    "si.beta2": Setting(_optional_float, None, "infective gain rate (default: mapped from the model)"),
    "si.gamma": Setting(_optional_float, None, "infective death rate (default: mapped from the model)"),
    "si.n_points": Setting(int, 100_000, "verification grid size"),
    "output.prefix": Setting(str, "drivewave", "path prefix of written artifacts"),
    "run.threads": Setting(int, 1, f"worker processes (default from ${THREADS_ENV})"),
}

_MODEL = ("model.timing", "model.representation", "model.r", "model.c", "model.h", "model.s")
_SOLVER = tuple(k for k in SETTINGS if k.startswith("solver."))
COMMAND_KEYS: dict[str, tuple[str, ...]] = {
    "simulate": _MODEL + _SOLVER + ("output.prefix",),
    "speed": _MODEL + _SOLVER,
    "heatmap": ("model.timing", "model.representation", "model.c", "model.h", "solver.dx", "solver.samples")
    + tuple(k for k in SETTINGS if k.startswith("sweep.")) + ("output.prefix", "run.threads"),
    "regimes": ("model.timing", "model.c") + tuple(k for k in SETTINGS if k.startswith("regimes."))
    + ("output.prefix",),
    "thresholds": ("model.timing", "model.r", "model.c", "model.h", "model.s"),
    "verify-si": ("model.timing", "model.c", "model.h", "model.s")
    + tuple(k for k in SETTINGS if k.startswith("si.")),
}
COMMAND_HELP = {
    "simulate": "run one simulation and write trajectory and snapshot CSVs",
    "speed": "measure the front speed and print the wave report as JSON",
    "heatmap": "sweep (s, r) and write the speed heatmap CSV with its JSON sidecar",
    "regimes": "classify the (h, s) plane and write the regime CSV",
    "thresholds": "print thresholds, linear speeds and persistence values as JSON",
    "verify-si": "certify the SI sub- and super-solutions and print the report as JSON",
}


def _flag(key: str) -> str:
    return "--" + key.split(".", 1)[1].replace("_", "-")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    command: str
    settings: dict

    def __getitem__(self, key: str) -> Any:
        return self.settings[key]

    @property
    def timing(self) -> ConversionTiming:
        return ConversionTiming.parse(self["model.timing"])

    @property
    def params(self) -> Parameters:
        return Parameters(self["model.r"], self["model.c"], self["model.s"], self["model.h"])

    @property
    def threads(self) -> int:
        return self.settings.get("run.threads", 1)

    @property
    def prefix(self) -> str:
        return self["output.prefix"]

    def grid(self) -> GridConfig:
        opts = dict(dt=self["solver.dt"], moving_window=self["solver.moving_window"],
                    samples=self["solver.samples"], snapshots=self["solver.snapshots"])
        if self["solver.length"] is None:
            v = speed_bound(self.timing, self.params)
            return sized_grid(1.5 * v, self["solver.T"], self["solver.dx"], **opts)
        return GridConfig(self["solver.length"], self["solver.dx"], self["solver.T"], **opts)

    def sweep_spec(self) -> SweepSpec:
        sweep = {k.split(".", 1)[1]: v for k, v in self.settings.items() if k.startswith("sweep.")}
        return SweepSpec(timing=self.timing, c=self["model.c"], h=self["model.h"],
                         dx=self["solver.dx"], samples=self["solver.samples"],
                         representation=self["model.representation"], **sweep)

    def si(self) -> SIParams:
        direct = [self[k] for k in ("si.beta1", "si.beta2", "si.gamma")]
        if all(v is not None for v in direct):
            return SIParams(*direct)
        return si_params(self.timing, Parameters(1.0, self["model.c"], self["model.s"], self["model.h"]))

    def echo(self) -> dict:
        return {"command": self.command, "settings": dict(self.settings)}

    def config_text(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in self.settings.items())


def argv_from_echo(echo: dict) -> list[str]:
    """Command line that re-creates an echoed configuration."""
    argv = [echo["command"]]
    for key, value in echo["settings"].items():
        argv += [_flag(key), value if isinstance(value, str) else _format(value)]
    return argv


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError([message])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drivewave", description="Gene-drive traveling-wave laboratory.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command, keys in COMMAND_KEYS.items():
        p = sub.add_parser(command, help=COMMAND_HELP[command], description=COMMAND_HELP[command])
        p.add_argument("--config", help="key=value settings file; flags override it")
        for key in keys:
            p.add_argument(_flag(key), dest=key, default=argparse.SUPPRESS, metavar="VALUE",
                           help=f"{SETTINGS[key].help} [{key}]")
        if command in ("simulate", "heatmap", "regimes"):
            p.add_argument("--output", dest="output.prefix", default=argparse.SUPPRESS,
                           metavar="PREFIX", help="alias of --prefix")
    return parser


def read_config_file(path: str | Path) -> tuple[dict[str, str], list[str]]:
    raw, problems = {}, []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        return raw, [f"cannot read config file {path}: {exc.strerror}"]
    for number, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            problems.append(f"config line {number}: expected key=value")
        elif key not in SETTINGS:
            problems.append(f"config line {number}: unknown key {key!r}")
        else:
            raw[key] = value.strip()
    return raw, problems


def _defaults(command: str) -> dict[str, Any]:
    values = {k: SETTINGS[k].default for k in COMMAND_KEYS[command]}
    if "run.threads" in values and os.environ.get(THREADS_ENV):
        values["run.threads"] = os.environ[THREADS_ENV]
    return values


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Resolve argv (and an optional ``--config`` file) into a validated RunConfig.

    Raises UsageError listing every violated constraint.
    """
    ns = vars(build_parser().parse_args(list(argv)))
    command = ns.pop("command")
    config_path = ns.pop("config", None)
    keys = COMMAND_KEYS[command]

    merged = _defaults(command)
    problems = []
    if config_path:
        raw, file_problems = read_config_file(config_path)
        problems += file_problems
        merged.update({k: v for k, v in raw.items() if k in keys})
    merged.update(ns)

    settings = {}
    for key in keys:
        value = merged[key]
        if isinstance(value, str):
            try:
                value = SETTINGS[key].parse(value)
            except ValueError:
                problems.append(f"{key.split('.', 1)[1]} has invalid value {value!r}")
                continue
        settings[key] = value
    if problems:
        raise UsageError(problems)

    cfg = RunConfig(command, settings)
    problems = validate(cfg)
    if problems:
        raise UsageError(problems)
    return cfg


def validate(cfg: RunConfig) -> list[str]:
    st = cfg.settings
    problems = []
    try:
        ConversionTiming.parse(st["model.timing"])
    except ValueError:
        problems.append("timing must be one of zygote, germline, perfect")
    if "model.representation" in st and st["model.representation"] not in {r.value for r in Representation}:
        problems.append("representation must be one of genotype, allele, frequency")

    model = {name: st.get(f"model.{name}") for name in "rcsh"}
    probe = {"r": 1.0, "c": 0.5, "s": 0.5, "h": 0.5}
    probe.update({k: v for k, v in model.items() if v is not None})
    problems += [msg for msg in parameter_problems(**probe) if model[msg[0]] is not None]

    if problems:
        return problems
    if cfg.command in ("simulate", "speed"):
        problems += cfg.grid().problems()
    elif cfg.command == "heatmap":
        problems += cfg.sweep_spec().problems()
        if st["run.threads"] < 1:
            problems.append("threads must be at least 1")
    elif cfg.command == "regimes":
        if not 0 <= st["regimes.h_min"] <= st["regimes.h_max"] <= 1:
            problems.append("h-axis must satisfy 0 <= h_min <= h_max <= 1")
        if not 0 < st["regimes.s_min"] < st["regimes.s_max"] < 1:
            problems.append("s-axis must satisfy 0 < s_min < s_max < 1")
        if st["regimes.h_count"] < 2 or st["regimes.s_count"] < 2:
            problems.append("axis counts must be at least 2")
    elif cfg.command == "verify-si":
        direct = {k: st[f"si.{k}"] for k in ("beta1", "beta2", "gamma")}
        given = [k for k, v in direct.items() if v is not None]
        if given and len(given) < 3:
            problems.append("beta1, beta2 and gamma must be given together")
        problems += [f"{k} must be positive" for k in given if not direct[k] > 0]
        if st["si.n_points"] < 100:
            problems.append("n_points must be at least 100")
    return problems


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _emit(payload: dict) -> None:
    print(json.dumps(jsonable(payload), indent=2, sort_keys=True))


def _write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True), encoding="utf-8")
    return path


def _prefixed(prefix: str, suffix: str) -> Path:
    base = Path(prefix)
    base.parent.mkdir(parents=True, exist_ok=True)
    return base.parent / f"{base.name}_{suffix}"


def cmd_simulate(cfg: RunConfig) -> dict:
    grid = cfg.grid()
    traj = simulate(cfg.timing, cfg.params, cfg["model.representation"], grid)
    report = detect_outcome(traj)

    traj_path = _prefixed(cfg.prefix, "trajectory.csv")
    with traj_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "window_origin", "front_position", "max_drive"])
        for t, origin, front, peak in zip(traj.times, traj.offsets, traj.front_track(0.5), traj.max_drive):
            writer.writerow([f"{t:.10g}", f"{origin:.10g}", "" if front is None else f"{front:.10g}",
                             f"{peak:.10g}"])
    artifacts = [traj_path]
    if traj.snapshots:
        snap_path = _prefixed(cfg.prefix, "snapshots.csv")
        with snap_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "x", *traj.components])
            for row in traj.snapshot_rows():
                writer.writerow([f"{v:.10g}" for v in row])
        artifacts.append(snap_path)
    artifacts.append(_write_json(_prefixed(cfg.prefix, "run.json"), {
        "config": cfg.echo(), "report": report.to_dict(), "meta": traj.meta,
        "steps": traj.steps, "max_clamp": traj.max_clamp}))
    return {"artifacts": [str(p) for p in artifacts], "report": report.to_dict()}


def cmd_speed(cfg: RunConfig) -> dict:
    traj = simulate(cfg.timing, cfg.params, cfg["model.representation"], cfg.grid())
    return {"config": cfg.echo(), "report": detect_outcome(traj).to_dict()}


def cmd_heatmap(cfg: RunConfig) -> dict:
    table = run_heatmap(cfg.sweep_spec(), cfg.threads)
    paths = write_heatmap(table, cfg.prefix, extra={"config": cfg.echo()})
    failed = sum(cell.outcome == "error" for cell in table.cells)
    return {"artifacts": [str(p) for p in paths], "cells": len(table.cells), "failed_cells": failed}


def cmd_regimes(cfg: RunConfig) -> dict:
    st = cfg.settings
    axis = lambda name: [st[f"regimes.{name}_min"] + i * (st[f"regimes.{name}_max"] - st[f"regimes.{name}_min"])
                         / (st[f"regimes.{name}_count"] - 1) for i in range(st[f"regimes.{name}_count"])]
    rmap = run_regime_map(cfg.timing, st["model.c"], axis("h"), axis("s"))
    csv_path = _prefixed(cfg.prefix, "regimes.csv")
    csv_path.write_text(regime_csv(rmap), encoding="utf-8")
    json_path = _write_json(_prefixed(cfg.prefix, "regimes.json"), {"config": cfg.echo()})
    return {"artifacts": [str(csv_path), str(json_path)]}


def cmd_thresholds(cfg: RunConfig) -> dict:
    timing, params = cfg.timing, cfg.params
    th = thresholds(timing, params.c, params.h)
    try:
        regime = classify_regime(timing, params.c, params.h, params.s).value
    except RegimeBoundaryError:
        regime = "boundary"
    try:
        composite, n_star = persistence_composite(timing, params)
    except CoexistenceAbsent:
        composite = n_star = None
    wt = None if params.is_rinf else linearized_speed_wildtype(
        params, drive_equilibrium_density(params), timing)
    return {
        "config": cfg.echo(),
        "thresholds": {"s1": th.s1, "s2": th.s2, "a_factor": th.a_factor, "A": th.A(params.s)},
        "regime_rinf": regime,
        "linearized_speed_drive": linearized_speed_drive(timing, params),
        "linearized_speed_wildtype": wt,
        "persistence_pure": persistence_pure(params.s),
        "persistence_composite": composite,
        "coexistence_density": n_star,
        "pulled_set_contains": pulled_set_contains(timing, params.c, params.h, params.s) if th.a_factor < 0 else None,
        "pulled_set_boundary": pulled_set_boundary(timing, params.c, params.h) if th.a_factor < 0 else None,
    }


def cmd_verify_si(cfg: RunConfig) -> dict:
    si = cfg.si()
    if not si.wave_exists:
        raise UsageError(["beta2 must exceed gamma for a traveling wave to exist"])
    constants = admissible_constants(si)
    report = verify_subsuper(si, constants, n_points=cfg["si.n_points"])
    return {"config": cfg.echo(), "si": {"beta1": si.beta1, "beta2": si.beta2, "gamma": si.gamma},
            "v": critical_speed(si), "report": report.to_dict()}


COMMANDS = {"simulate": cmd_simulate, "speed": cmd_speed, "heatmap": cmd_heatmap,
            "regimes": cmd_regimes, "thresholds": cmd_thresholds, "verify-si": cmd_verify_si}
NUMERICAL_ERRORS = (NumericalBlowup, ConvergenceError, InsufficientSamples, DegenerateStateError,
                    FloatingPointError, ArithmeticError)


def _fail(kind: str, code: int, **details) -> int:
    print(json.dumps({"error": kind, **details}, sort_keys=True), file=sys.stderr)
    return code


def dispatch(cfg: RunConfig) -> int:
    try:
        _emit(COMMANDS[cfg.command](cfg))
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, problems=exc.problems)
    except NUMERICAL_ERRORS as exc:
        return _fail("numerical", EXIT_NUMERICAL, type=type(exc).__name__, message=str(exc))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, problems=exc.problems)
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
