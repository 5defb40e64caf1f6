"""Explicit finite-difference integration, front tracking and speed fits."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import model_core as mc
from .model_core import ConversionTiming, Parameters

SAFETY = 0.8
LOG_FLOOR = 1e-8
OCCUPIED = 0.01
CLEARED = 1e-3
STALL_SPEED = 1e-3


class Representation(str, Enum):
    GENOTYPE = "genotype"
    ALLELE = "allele"
    FREQUENCY = "frequency"


class Outcome(str, Enum):
    DRIVE_INVASION = "drive_invasion"
    WT_INVASION = "wt_invasion"
    COEXISTENCE = "coexistence"
    CLEARANCE = "clearance"
    STALLED = "stalled"


class ConfigurationError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalBlowup(RuntimeError):
    def __init__(self, step: int, time: float):
        self.step, self.time = step, time
        super().__init__(f"non-finite state at step {step} (t={time:g})")


class InsufficientSamples(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, state: np.ndarray):
        self.state = state
        super().__init__(message)


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

def auto_dt(dx: float) -> float:
    return SAFETY * dx * dx / 2


@dataclass(frozen=True)
class GridConfig:
    """Uniform grid x_i = i*dx on [0, length] with zero-flux ends.

    ``dt=None`` selects the stability-limited step automatically.
    ``samples`` observation times are spread evenly over [0, T].
    """

    length: float
    dx: float
    T: float
    dt: Optional[float] = None
    moving_window: bool = False
    samples: int = 200
    snapshots: int = 0

    def problems(self) -> list[str]:
        out = []
        if not self.dx > 0:
            out.append("dx must be positive")
        if not self.length > 0:
            out.append("length must be positive")
        if not self.T > 0:
            out.append("T must be positive")
        if self.dx > 0 and self.length > 0:
            ratio = self.length / self.dx
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                out.append("length/dx must be an integer")
            elif round(ratio) < 16:
                out.append("length/dx must be at least 16")
            if self.dt is not None:
                if not self.dt > 0:
                    out.append("dt must be positive")
                elif self.dt > auto_dt(self.dx) * (1 + 1e-12):
                    out.append(f"dt must not exceed {auto_dt(self.dx):g} (0.8*dx^2/2) for stability")
        if self.samples < 2:
            out.append("samples must be at least 2")
        if self.snapshots < 0:
            out.append("snapshots must be non-negative")
        return out

    def validate(self) -> "GridConfig":
        problems = self.problems()
        if problems:
            raise ConfigurationError(problems)
        return self

    @property
    def cells(self) -> int:
        return int(round(self.length / self.dx))

    @property
    def points(self) -> int:
        return self.cells + 1

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.points) * self.dx

    @property
    def time_step(self) -> float:
        return self.dt if self.dt is not None else auto_dt(self.dx)


def sized_grid(v_guess: Optional[float], T: float, dx: float, **kw) -> GridConfig:
    """Grid long enough for a front started mid-domain to stay inside."""
    v = abs(v_guess) if v_guess is not None else 2.0
    cells = max(16, math.ceil(2 * (1 + v * T) / dx))
    return GridConfig(length=cells * dx, dx=dx, T=T, **kw)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def front_observable(drive: np.ndarray, total: np.ndarray) -> np.ndarray:
    """Drive frequency where the population is present, drive density elsewhere."""
    occupied = total > OCCUPIED
    return np.where(occupied, drive / np.where(occupied, total, 1.0), drive)


def front_position(profile: np.ndarray, level: float, dx: float = 1.0,
                   origin: float = 0.0, side: str = "right") -> Optional[float]:
    """Interpolated location where ``profile`` drops through ``level``.

    ``side='right'`` picks the rightmost such crossing, ``'left'`` the leftmost.
    """
    q = np.asarray(profile)
    hits = np.flatnonzero((q[:-1] >= level) & (q[1:] < level))
    if hits.size == 0:
        return None
    i = hits[-1] if side == "right" else hits[0]
    frac = (q[i] - level) / (q[i] - q[i + 1])
    return origin + (i + frac) * dx


def estimate_speed(times: Sequence[float], positions: Sequence[Optional[float]],
                   window: float = 0.4) -> tuple[float, float]:
    """Least-squares slope over the last ``window`` fraction of samples."""
    t = np.asarray(times, dtype=float)
    x = np.array([np.nan if p is None else p for p in positions], dtype=float)
    start = int(math.floor(len(t) * (1 - window)))
    t, x = t[start:], x[start:]
    keep = np.isfinite(x)
    t, x = t[keep], x[keep]
    if t.size < 10:
        raise InsufficientSamples(f"need at least 10 tracked samples, got {t.size}")
    tc = t - t.mean()
    sxx = float(tc @ tc)
    slope = float(tc @ (x - x.mean())) / sxx
    resid = x - x.mean() - slope * tc
    stderr = math.sqrt(float(resid @ resid) / (t.size - 2) / sxx)
    return slope, stderr


# ---------------------------------------------------------------------------
# trajectories and reports
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Sampled history of one run.

    ``observable[k]`` is the front observable at ``times[k]`` on the local grid
    ``x``; the window origin at that time is ``offsets[k]``.
    """

    times: np.ndarray
    x: np.ndarray
    dx: float
    offsets: np.ndarray
    observable: np.ndarray
    max_drive: np.ndarray
    final_state: np.ndarray
    final_total: np.ndarray
    components: tuple[str, ...]
    density_run: bool
    snapshots: list = field(default_factory=list)
    min_before_clamp: float = 0.0
    max_clamp: float = 0.0
    steps: int = 0
    meta: dict = field(default_factory=dict)

    def front_track(self, level: float, side: str = "right") -> list[Optional[float]]:
        return [front_position(q, level, self.dx, off, side)
                for q, off in zip(self.observable, self.offsets)]

    def half_peak_track(self) -> list[Optional[float]]:
        """Rightmost crossing of half the current peak, for pulse-shaped profiles."""
        return [front_position(q, 0.5 * q.max(), self.dx, off) if q.max() > CLEARED else None
                for q, off in zip(self.observable, self.offsets)]

    def snapshot_rows(self):
        """Rows (t, x, *components) for every stored snapshot."""
        for t, origin, state in self.snapshots:
            xs = origin + self.x
            for i, xv in enumerate(xs):
                yield (t, xv, *state[:, i])


@dataclass
class WaveReport:
    outcome: Outcome
    speed: Optional[float]
    stderr: Optional[float]
    wake_density: Optional[float]
    speed_left: Optional[float] = None
    stderr_left: Optional[float] = None
    plateau: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["outcome"] = self.outcome.value
        return d


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

Reaction = Callable[[np.ndarray], np.ndarray]


def _laplacian(u: np.ndarray, out: np.ndarray, inv_dx2: float) -> np.ndarray:
    out[:, 1:-1] = u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]
    out[:, 0] = 2 * (u[:, 1] - u[:, 0])
    out[:, -1] = 2 * (u[:, -2] - u[:, -1])
    out *= inv_dx2
    return out


def _gradient(u: np.ndarray, inv_2dx: float) -> np.ndarray:
    g = np.zeros_like(u)
    g[1:-1] = (u[2:] - u[:-2]) * inv_2dx
    return g


def _shift(u: np.ndarray, cells: int, left_fill: np.ndarray, right_fill: np.ndarray) -> None:
    """Translate content by ``-cells`` grid points, filling with far-field states."""
    if cells > 0:
        u[:, :-cells] = u[:, cells:].copy()
        u[:, -cells:] = right_fill[:, None]
    elif cells < 0:
        k = -cells
        u[:, k:] = u[:, :-k].copy()
        u[:, :k] = left_fill[:, None]


def integrate(state0: np.ndarray, reaction: Reaction, grid: GridConfig, *,
              drive_of: Callable[[np.ndarray], np.ndarray],
              total_of: Optional[Callable[[np.ndarray], np.ndarray]] = None,
              components: Sequence[str] = (),
              advection: Optional[Callable[[np.ndarray], np.ndarray]] = None,
              capped: Sequence[int] = (),
              observers: Sequence[Callable] = (),
              level: float = 0.5,
              rate_bound: float = 1.0,
              meta: Optional[dict] = None) -> Trajectory:
    """Explicit Euler with centred diffusion (unit coefficient) and clamping at zero.

    ``advection(u)`` returns an additional term for every component,
    ``capped`` lists components clamped to at most one. With an automatic
    time step, ``rate_bound`` (a bound on the reaction's stiffness) further
    limits dt to 0.5/rate_bound.
    """
    grid.validate()
    u = np.array(state0, dtype=float, copy=True)
    if u.ndim == 1:
        u = u[None, :]
    dt0 = grid.time_step
    if grid.dt is None:
        dt0 = min(dt0, 0.5 / rate_bound)
    steps = max(1, math.ceil(grid.T / dt0 - 1e-9))
    dt = grid.T / steps
    dx = grid.dx
    inv_dx2 = 1.0 / (dx * dx)
    lap = np.empty_like(u)
    left_fill, right_fill = u[:, 0].copy(), u[:, -1].copy()

    sample_steps = np.unique(np.round(np.linspace(0, steps, grid.samples + 1)).astype(int))
    snap_steps = set()
    if grid.snapshots:
        snap_steps = set(np.round(np.linspace(0, steps, grid.snapshots)).astype(int).tolist())
    recenter_every = max(1, int(round(1.0 / dt)))

    totals = total_of or (lambda v: np.ones(v.shape[1]))
    times, offsets, observable, max_drive, snapshots = [], [], [], [], []
    origin = 0.0
    lowest = 0.0
    sample_iter = iter(sample_steps.tolist())
    next_sample = next(sample_iter)

    def observe(step):
        drive = drive_of(u)
        q = front_observable(drive, totals(u)) if total_of else drive
        times.append(step * dt)
        offsets.append(origin)
        observable.append(np.array(q, copy=True))
        max_drive.append(float(drive.max()))
        for obs in observers:
            obs(step * dt, origin + grid.x, u)

    for step in range(steps + 1):
        if step == next_sample:
            observe(step)
            next_sample = next(sample_iter, None)
        if step in snap_steps:
            snapshots.append((step * dt, origin, u.copy()))
        if step == steps:
            break

        if grid.moving_window and step % recenter_every == 0:
            drive = drive_of(u)
            q = front_observable(drive, totals(u)) if total_of else drive
            pos = front_position(q, level, dx)
            if pos is not None and not (0.35 * grid.length <= pos <= 0.65 * grid.length):
                cells = int(round((pos - 0.5 * grid.length) / dx))
                _shift(u, cells, left_fill, right_fill)
                origin += cells * dx

        du = _laplacian(u, lap, inv_dx2)
        du += reaction(u)
        if advection is not None:
            du += advection(u)
        u += dt * du

        low, high = u.min(), u.max()
        if not (math.isfinite(low) and math.isfinite(high)):
            raise NumericalBlowup(step + 1, (step + 1) * dt)
        if low < 0:
            lowest = min(lowest, low)
            np.maximum(u, 0.0, out=u)
        for i in capped:
            np.minimum(u[i], 1.0, out=u[i])

    return Trajectory(
        times=np.array(times), x=grid.x, dx=dx, offsets=np.array(offsets),
        observable=np.array(observable), max_drive=np.array(max_drive),
        final_state=u, final_total=totals(u), components=tuple(components),
        density_run=total_of is not None, snapshots=snapshots,
        min_before_clamp=float(lowest), max_clamp=max(0.0, -float(lowest)), steps=steps,
        meta=dict(meta or {}, dt=dt, scheme="explicit-euler/central-2nd"),
    )


# ---------------------------------------------------------------------------
# model runs
# ---------------------------------------------------------------------------

def initial_condition(representation: Representation, grid: GridConfig) -> np.ndarray:
    """Drive occupies x < L/2, wild type the rest (the midpoint is wild type)."""
    representation = Representation(representation)
    drive = grid.x < grid.length / 2
    if representation is Representation.GENOTYPE:
        return np.stack([drive, np.zeros_like(drive), ~drive]).astype(float)
    if representation is Representation.ALLELE:
        return np.stack([drive, ~drive]).astype(float)
    return np.stack([np.ones(grid.points), drive.astype(float)])


def _meta(timing, params, representation, grid):
    return {"timing": ConversionTiming.parse(timing).value, "params": asdict(params),
            "representation": Representation(representation).value, "grid": asdict(grid)}


def simulate(timing: ConversionTiming, params: Parameters,
             representation: Representation | str, grid: GridConfig,
             observers: Sequence[Callable] = (), *,
             initial_state: Optional[np.ndarray] = None, level: float = 0.5) -> Trajectory:
    """Integrate the reaction-diffusion system for one parameter set.

    r=inf is delegated to :func:`simulate_rinf_scalar`.
    """
    timing = ConversionTiming.parse(timing)
    if params.is_rinf:
        return simulate_rinf_scalar(timing, params, grid, observers=observers, level=level)
    representation = Representation(representation)
    state = initial_condition(representation, grid) if initial_state is None else initial_state
    meta = _meta(timing, params, representation, grid)
    stiffness = 1.0 + params.r

    if representation is Representation.GENOTYPE:
        alpha = mc.het_drive_share(timing, params.c)
        return integrate(
            state, lambda u: mc.genotype_reaction(timing, params, u), grid,
            drive_of=lambda u: u[0] + alpha * u[1], total_of=lambda u: u.sum(axis=0),
            components=("n_DD", "n_DW", "n_WW"), observers=observers, level=level, rate_bound=stiffness, meta=meta)

    if representation is Representation.ALLELE:
        return integrate(
            state, lambda u: mc.allele_reaction(timing, params, u), grid,
            drive_of=lambda u: u[0], total_of=lambda u: u[0] + u[1],
            components=("n_D", "n_W"), observers=observers, level=level, rate_bound=stiffness, meta=meta)

    inv_2dx = 1.0 / (2 * grid.dx)

    def reaction(u):
        n = np.maximum(u[0], 1e-300)
        dn, dp = mc.frequency_reaction(timing, params, (n, u[1]))
        return np.stack([dn, dp])

    def advection(u):
        log_n = np.log(np.maximum(u[0], LOG_FLOOR))
        out = np.zeros_like(u)
        out[1] = 2 * _gradient(log_n, inv_2dx) * _gradient(u[1], inv_2dx)
        return out

    return integrate(
        state, reaction, grid, drive_of=lambda u: u[0] * u[1], total_of=lambda u: u[0],
        components=("n", "p"), advection=advection, capped=(1,),
        observers=observers, level=level, rate_bound=stiffness, meta=meta)


def simulate_rinf_scalar(timing: ConversionTiming, params: Parameters, grid: GridConfig,
                         T: Optional[float] = None, *, sigma: Optional[Callable] = None,
                         observers: Sequence[Callable] = (), level: float = 0.5) -> Trajectory:
    """Scalar equation p_t = p_xx + p(1-p)sigma(p) of the r=inf limit.

    ``sigma`` overrides the model's selection term (e.g. a cubic approximation).
    """
    if T is not None:
        grid = GridConfig(grid.length, grid.dx, T, grid.dt, grid.moving_window,
                          grid.samples, grid.snapshots)
    if sigma is None:
        sigma = lambda p: mc.rinf_sigma(timing, params, p)
    p0 = (grid.x < grid.length / 2).astype(float)
    meta = _meta(timing, params, Representation.FREQUENCY, grid)
    meta["representation"] = "scalar-rinf"
    return integrate(
        p0, lambda u: u * (1 - u) * sigma(u), grid, drive_of=lambda u: u[0],
        components=("p",), capped=(0,), observers=observers, level=level, meta=meta)


# ---------------------------------------------------------------------------
# outcome detection
# ---------------------------------------------------------------------------

def find_plateau(profile: np.ndarray, dx: float, min_width: float = 10.0,
                 flat: float = 5e-4) -> Optional[tuple[int, int, float]]:
    """Longest flat stretch with 0.02 < q < 0.98 flanked by higher q on the
    left and lower q on the right. Returns (start, stop, level)."""
    q = np.asarray(profile)
    grad = np.abs(np.gradient(q, dx))
    mask = (q > 0.02) & (q < 0.98) & (grad < flat)
    if not mask.any():
        return None
    edges = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    best = int(np.argmax(stops - starts))
    a, b = int(starts[best]), int(stops[best])
    if (b - a) * dx < max(min_width, 20 * dx):
        return None
    level = float(np.median(q[a:b]))
    if a == 0 or b >= q.size:
        return None
    if q[:a].max() < level + 0.5 * (1 - level) or q[b:].min() > 0.5 * level:
        return None
    return a, b, level


def _median_or_none(values: np.ndarray) -> Optional[float]:
    return float(np.median(values)) if values.size else None


def detect_outcome(traj: Trajectory, window: float = 0.4, level: float = 0.5) -> WaveReport:
    diag = {"min_before_clamp": traj.min_before_clamp, "max_clamp": traj.max_clamp,
            "final_max_drive": float(traj.max_drive[-1])}

    if traj.density_run and traj.max_drive[-1] < CLEARED:
        tail = traj.max_drive > 0
        if tail.sum() >= 2:
            k = int(math.floor(len(traj.times) * (1 - window)))
            t, y = traj.times[k:], traj.max_drive[k:]
            ok = y > 0
            if ok.sum() >= 2:
                diag["drive_decay_rate"] = float(-np.polyfit(t[ok], np.log(y[ok]), 1)[0])
        return WaveReport(Outcome.CLEARANCE, None, None,
                          float(np.median(traj.final_total)), diagnostics=diag)

    final_q = traj.observable[-1]
    plateau = find_plateau(final_q, traj.dx)
    if plateau is not None:
        a, b, p_star = plateau
        right = traj.front_track(p_star / 2, "right")
        left = traj.front_track((1 + p_star) / 2, "left")
        try:
            v_r, e_r = estimate_speed(traj.times, right, window)
            v_l, e_l = estimate_speed(traj.times, left, window)
        except InsufficientSamples:
            v_r = v_l = None
        if v_r is not None and v_r > 0 > v_l:
            diag["plateau_cells"] = b - a
            return WaveReport(Outcome.COEXISTENCE, v_r, e_r,
                              float(np.median(traj.final_total[a:b])),
                              speed_left=v_l, stderr_left=e_l, plateau=p_star, diagnostics=diag)

    track = traj.front_track(level, "right")
    try:
        speed, err = estimate_speed(traj.times, track, window)
        diag["tracked_level"] = level
    except InsufficientSamples:
        # the profile never reaches ``level`` (drive pulse, or empty land behind a plateau)
        track = traj.half_peak_track()
        try:
            speed, err = estimate_speed(traj.times, track, window)
            diag["tracked_level"] = "half-peak"
        except InsufficientSamples as exc:
            diag["error"] = str(exc)
            return WaveReport(Outcome.STALLED, None, None, None, diagnostics=diag)

    valid = [p for p in track if p is not None]
    diag["displacement"] = float(valid[-1] - valid[0])
    if abs(speed) < STALL_SPEED:
        outcome = Outcome.STALLED
    else:
        outcome = Outcome.DRIVE_INVASION if speed > 0 else Outcome.WT_INVASION

    wake = None
    if traj.density_run:
        last = max(k for k, pos in enumerate(track) if pos is not None)
        i = int((track[last] - traj.offsets[-1]) / traj.dx)
        margin = int(10 / traj.dx)
        n = traj.final_total
        wake = _median_or_none(n[:max(0, i - margin)] if speed >= 0 else n[i + margin:])
    else:
        wake = 1.0
    return WaveReport(outcome, speed, err, wake, diagnostics=diag)


# ---------------------------------------------------------------------------
# well-mixed dynamics
# ---------------------------------------------------------------------------

def ode_equilibrium(timing: ConversionTiming, params: Parameters, initial_state,
                    representation: Representation | str = Representation.GENOTYPE,
                    tol: float = 1e-10, T_max: float = 1e5) -> np.ndarray:
    """Integrate the diffusion-free system until the rate norm drops below ``tol``."""
    if params.is_rinf:
        raise ValueError("ode_equilibrium needs finite r")
    representation = Representation(representation)
    react = {Representation.GENOTYPE: mc.genotype_reaction,
             Representation.ALLELE: mc.allele_reaction}[representation]
    rhs = lambda t, y: react(timing, params, y)
    y0 = np.asarray(initial_state, dtype=float)

    def settled(t, y):
        return float(np.linalg.norm(rhs(t, y))) - tol
    settled.terminal = True
    settled.direction = -1

    if settled(0.0, y0) <= 0:
        return y0
    sol = solve_ivp(rhs, (0.0, T_max), y0, method="LSODA", rtol=1e-11, atol=1e-14,
                    events=settled)
    final = sol.y[:, -1]
    if sol.status != 1:
        raise ConvergenceError(f"rates did not fall below {tol:g} by t={T_max:g}", final)
    return final
