"""The r=0 reduction to a susceptible-infected (SI) wave and its certification.

At r=0 the wild-type allele plays the role of susceptibles S and the drive
allele that of infected I:

    S_t = S_xx - beta1 S I/(S+I)
    I_t = I_xx + beta2 S I/(S+I) - gamma I

This module maps each conversion model onto (beta1, beta2, gamma), builds
explicit sub- and super-solutions for the critical wave and checks the
comparison inequalities they must satisfy.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .model_core import ConversionTiming, Parameters, effective
from .solver import GridConfig, WaveReport, detect_outcome, integrate

#: the constant piece of the upper I profile meets condition 3 with equality
ROUNDOFF = 1e-12
SEARCH_CAP = 2.0 ** 60
#: L2 is found on a finite grid; inflate it so off-grid points keep a margin
L2_SAFETY = 1.05


@dataclass(frozen=True)
class SIParams:
    beta1: float
    beta2: float
    gamma: float

    def __post_init__(self):
        bad = [k for k, v in asdict(self).items() if not v > 0]
        if bad:
            raise ValueError(f"{', '.join(bad)} must be positive")

    @property
    def wave_exists(self) -> bool:
        return self.beta2 > self.gamma


def si_params(timing: ConversionTiming, params: Parameters) -> SIParams:
    timing, params = effective(timing, params)
    c, s, h = params.c, params.s, params.h
    beta1 = 1 - (1 - s * h) * (1 - c)
    if timing is ConversionTiming.ZYGOTE:
        beta2 = c * (1 - s) + s * (1 - c) * (1 - h)
    else:
        beta2 = c * (1 - s * h) + s * (1 - h)
    return SIParams(beta1, beta2, s)


def si_reaction(si: SIParams, state) -> np.ndarray:
    """Reaction terms for the state ordered (I, S), matching (n_D, n_W)."""
    i, s = (np.asarray(x, dtype=float) for x in state)
    n = i + s
    occupied = n > 1e-12
    contact = np.where(occupied, s * i / np.where(occupied, n, 1.0), 0.0)
    return np.stack([si.beta2 * contact - si.gamma * i, -si.beta1 * contact])


def critical_speed(si: SIParams) -> Optional[float]:
    gap = si.beta2 - si.gamma
    return 2 * math.sqrt(gap) if gap >= 0 else None


# ---------------------------------------------------------------------------
# sub- and super-solutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubSuperConstants:
    L1: float
    L2: float
    M: float
    lambda_star: float
    v: float

    @property
    def L3(self) -> float:
        return math.e * self.M * self.lambda_star

    @property
    def s_break(self) -> float:
        return self.L1 * math.log(self.L1)

    @property
    def upper_break(self) -> float:
        return 1.0 / self.lambda_star

    @property
    def lower_break(self) -> float:
        return (self.L2 / self.L3) ** 2

    def breakpoints(self) -> tuple[float, float, float]:
        return self.upper_break, self.s_break, self.lower_break


def _depletion_sup(si: SIParams, L1: float, lam: float, M: float) -> float:
    """sup over z > L1 log L1 of beta1 e M lam z exp((1/L1 - lam) z)."""
    kappa = lam - 1.0 / L1
    z1 = L1 * math.log(L1)
    z = max(z1, 1.0 / kappa)
    return si.beta1 * math.e * M * lam * z * math.exp(-kappa * z)


def _l1_ok(si: SIParams, L1: float, lam: float, M: float, v: float) -> bool:
    if L1 <= math.e or 1.0 / L1 >= lam or L1 * math.log(L1) <= 1.0 / lam:
        return False
    return _depletion_sup(si, L1, lam, M) <= v - 1.0 / L1


def _profiles_lower_s(z, L1):
    z1 = L1 * math.log(L1)
    on = z > z1
    e = np.exp(-np.where(on, z, z1) / L1)
    s = np.where(on, 1 - L1 * e, 0.0)
    d1 = np.where(on, e, 0.0)
    d2 = np.where(on, -e / L1, 0.0)
    return s, d1, d2, on


def _profiles_upper_i(z, M, lam):
    L3 = math.e * M * lam
    on = z > 1.0 / lam
    zz = np.where(on, z, 1.0 / lam)
    e = np.exp(-lam * zz)
    i = np.where(on, L3 * zz * e, M)
    d1 = np.where(on, L3 * (1 - lam * zz) * e, 0.0)
    d2 = np.where(on, L3 * (lam * lam * zz - 2 * lam) * e, 0.0)
    return i, d1, d2, on


def _profiles_lower_i(z, L2, L3, lam):
    z0 = (L2 / L3) ** 2
    on = z > z0
    zz = np.where(on, z, max(z0, 1e-300))
    root = np.sqrt(zz)
    e = np.exp(-lam * zz)
    phi = L3 * zz - L2 * root
    phi1 = L3 - L2 / (2 * root)
    phi2 = L2 / (4 * zz * root)
    i = np.where(on, phi * e, 0.0)
    d1 = np.where(on, (phi1 - lam * phi) * e, 0.0)
    d2 = np.where(on, (phi2 - 2 * lam * phi1 + lam * lam * phi) * e, 0.0)
    return i, d1, d2, on


def _lower_i_slack(si: SIParams, L1: float, L2: float, L3: float, lam: float,
                   z: np.ndarray) -> np.ndarray:
    """Condition (iv) slack divided by exp(-lam z), valid for z beyond the lower-I break."""
    root = np.sqrt(z)
    phi = L3 * z - L2 * root
    s_low = 1 - L1 * np.exp(-z / L1)
    e = np.exp(-lam * z)
    return L2 / (4 * z * root) - si.beta2 * phi * phi * e / (s_low + phi * e)


def _l2_ok(si, L1, L2, L3, lam, span) -> bool:
    z0 = (L2 / L3) ** 2
    z = z0 + np.geomspace(1e-9 * max(z0, 1.0), span, 20_000)
    return bool(np.all(_lower_i_slack(si, L1, L2, L3, lam, z) >= 0))


def _smallest(ok, lo: float) -> float:
    """Smallest value >= lo accepted by the monotone predicate ``ok``."""
    if ok(lo):
        return lo
    hi = max(lo, 1.0) * 2
    while not ok(hi):
        hi *= 2
        if hi > SEARCH_CAP:
            raise ValueError("no admissible constant below 2**60; beta2 is too close to gamma")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
        if hi - lo <= 1e-9 * hi:
            break
    return hi


def admissible_constants(si: SIParams) -> SubSuperConstants:
    """Constants (L1, L2) making the profiles sub/super-solutions of the critical wave."""
    if not si.wave_exists:
        raise ValueError("sub/super-solutions need beta2 > gamma")
    lam = math.sqrt(si.beta2 - si.gamma)
    v = 2 * lam
    M = (si.beta2 - si.gamma) / si.gamma
    L3 = math.e * M * lam

    L1 = _smallest(lambda L: _l1_ok(si, L, lam, M, v), math.e * (1 + 1e-12))
    z1 = L1 * math.log(L1)
    floor = max(L3 * math.sqrt(z1), L3 * (4 * si.beta2) ** -0.25) * (1 + 1e-9)
    span = 400.0 / lam
    L2 = _smallest(lambda L: _l2_ok(si, L1, L, L3, lam, span), floor) * L2_SAFETY
    return SubSuperConstants(L1=L1, L2=L2, M=M, lambda_star=lam, v=v)


@dataclass
class InequalityReport:
    margins: dict
    worst_at: dict
    strict_margins: dict
    constants: dict
    grid: dict
    passed: bool
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def verify_subsuper(si: SIParams, constants: SubSuperConstants,
                    z_min: Optional[float] = None, z_max: Optional[float] = None,
                    n_points: int = 100_000) -> InequalityReport:
    """Check the four comparison inequalities pointwise on a uniform grid.

    Each condition is evaluated at the worst admissible coupling: the
    contact term beta*S*I/(S+I) increases in both arguments, so the
    bounding profile that makes the inequality hardest is substituted.
    Margins are >= 0 when an inequality holds.
    """
    c = constants
    lam, M, v, L3 = c.lambda_star, c.M, c.v, c.L3
    breaks = c.breakpoints()
    if z_min is None:
        z_min = -50.0
    if z_max is None:
        z_max = max(200.0 / lam, 10 * max(breaks))
    z = np.linspace(z_min, z_max, n_points)
    near = np.zeros(z.shape, dtype=bool)
    for b in breaks:
        near |= np.abs(z - b) <= 1e-9 * max(1.0, abs(b))
    z = z[~near]

    s_lo, s_lo1, s_lo2, s_on = _profiles_lower_s(z, c.L1)
    i_hi, i_hi1, i_hi2, i_hi_on = _profiles_upper_i(z, M, lam)
    i_lo, i_lo1, i_lo2, i_lo_on = _profiles_lower_i(z, c.L2, L3, lam)

    def contact(a, b):
        tot = a + b
        return np.where(tot > 0, a * b / np.where(tot > 0, tot, 1.0), 0.0)

    b1, b2, g = si.beta1, si.beta2, si.gamma
    cond = {
        # upper S = 1: -v*0 - 0 + beta1*contact(1, I) >= 0 at I = lower I
        "1": b1 * contact(np.ones_like(z), i_lo),
        "2": -(-v * s_lo1 - s_lo2 + b1 * contact(s_lo, i_hi)),
        "3": -v * i_hi1 - i_hi2 - b2 * contact(np.ones_like(z), i_hi) + g * i_hi,
        "4": -(-v * i_lo1 - i_lo2 - b2 * contact(s_lo, i_lo) + g * i_lo),
    }
    strict = {
        "i": np.zeros_like(z),
        "ii": np.where(s_on, -b1 * i_hi - (-v * s_lo1 - s_lo2), np.inf),
        "iii": np.where(i_hi_on, -v * i_hi1 - i_hi2 - (b2 - g) * i_hi, np.inf),
        "iv": np.where(i_lo_on, cond["4"], np.inf),
    }
    scale = max(1.0, M * b2)
    margins, worst_at, passed = {}, {}, True
    for key, vals in cond.items():
        k = int(np.argmin(vals))
        margins[key] = float(vals[k])
        worst_at[key] = float(z[k])
        passed &= vals[k] >= -ROUNDOFF * scale
    strict_margins = {}
    for key, vals in strict.items():
        finite = np.isfinite(vals)
        strict_margins[key] = float(vals[finite].min()) if finite.any() else None

    l1_sup = _depletion_sup(si, c.L1, lam, M)
    return InequalityReport(
        margins=margins, worst_at=worst_at, strict_margins=strict_margins,
        constants={**asdict(c), "L3": L3, "breakpoints": list(breaks)},
        grid={"z_min": float(z_min), "z_max": float(z_max), "n_points": int(n_points),
              "excluded_near_breakpoints": int(near.sum())},
        passed=bool(passed),
        diagnostics={"condition2_analytic_sup": l1_sup, "condition2_rhs": v - 1 / c.L1,
                     "roundoff_tolerance": ROUNDOFF * scale, "si": asdict(si)},
    )


# ---------------------------------------------------------------------------
# simulation cross-check
# ---------------------------------------------------------------------------

def simulate_si(si: SIParams, grid: GridConfig):
    """Run the SI system from the standard step: infected left, susceptible right."""
    infected = (grid.x < grid.length / 2).astype(float)
    state = np.stack([infected, 1.0 - infected])
    rate = 1.0 + si.beta1 + si.beta2 + si.gamma
    return integrate(state, lambda u: si_reaction(si, u), grid,
                     drive_of=lambda u: u[0], total_of=lambda u: u[0] + u[1],
                     components=("I", "S"), rate_bound=rate,
                     meta={"si": asdict(si), "grid": asdict(grid)})


def si_speed_crosscheck(si: SIParams, grid: GridConfig) -> tuple[float, Optional[float], WaveReport]:
    """Measured front speed of the SI system next to its critical speed."""
    if not si.wave_exists:
        raise ValueError("no invasion wave when beta2 <= gamma")
    report = detect_outcome(simulate_si(si, grid))
    return report.speed, critical_speed(si), report
