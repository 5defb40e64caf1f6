"""Closed-form analysis: thresholds, linear speeds, regimes and equilibria."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .model_core import (
    INFINITY, ConversionTiming, Parameters, effective, mean_fitness, rinf_sigma,
)

Sigma = Callable[[np.ndarray], np.ndarray]


class Regime(str, Enum):
    MONOSTABLE_DRIVE_INVASION = "drive"
    MONOSTABLE_WT_INVASION = "wt"
    COEXISTENCE = "coexistence"
    BISTABLE = "bistable"
    CLEARANCE_DEGENERATE = "clearance"
    # only produced by regime maps for cells sitting on a threshold
    BOUNDARY = "boundary"


class RegimeBoundaryError(ValueError):
    """s sits exactly on a threshold; the caller should perturb it."""


class CoexistenceAbsent(ValueError):
    pass


# ---------------------------------------------------------------------------
# linear spreading speeds
# ---------------------------------------------------------------------------

def drive_radicand(timing: ConversionTiming, params: Parameters) -> float:
    """Linear growth rate of a rare drive allele in a wild-type population."""
    timing, params = effective(timing, params)
    c, s, h = params.c, params.s, params.h
    if timing is ConversionTiming.ZYGOTE:
        return c * (1 - 2 * s) - s * h * (1 - c)
    return (1 - s * h) * (1 + c) - 1


def linearized_speed_drive(timing: ConversionTiming, params: Parameters) -> Optional[float]:
    rad = drive_radicand(timing, params)
    return 2 * math.sqrt(rad) if rad >= 0 else None


def drive_equilibrium_density(params: Parameters) -> float:
    """Carrying density of a pure drive-homozygote population."""
    if params.r == 0:
        return 0.0
    if params.is_rinf:
        return 1.0
    return max(0.0, 1 - params.s / (params.r * (1 - params.s)))


def linearized_speed_wildtype(params: Parameters, drive_equilibrium: float,
                              timing: ConversionTiming = ConversionTiming.ZYGOTE) -> Optional[float]:
    """Leftward speed of rare wild type entering a drive-occupied region.

    When the drive has eradicated the population the wild type spreads into
    empty space at the Fisher rate 2*sqrt(r).
    """
    _, params = effective(timing, params)
    if drive_equilibrium > 0:
        rad = (1 - params.s * params.h) * (1 - params.c) / (1 - params.s) - 1
    else:
        rad = params.r
    return -2 * math.sqrt(rad) if rad >= 0 else None


# ---------------------------------------------------------------------------
# thresholds and regimes at r = inf
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Thresholds:
    """Selection thresholds for fixed (c, h).

    ``a_factor`` is the s-independent part of the curvature coefficient A,
    so that A = s * a_factor.
    """

    timing: ConversionTiming
    a_factor: float
    s1: float
    s2: float

    def A(self, s: float) -> float:
        return s * self.a_factor

    @property
    def a_sign(self) -> int:
        return int(np.sign(self.a_factor))


def _ratio(num: float, den: float) -> float:
    if num == 0:
        return 0.0
    return num / den if den > 0 else math.inf


def thresholds(timing: ConversionTiming, c: float, h: float) -> Thresholds:
    timing = ConversionTiming.parse(timing)
    if timing is ConversionTiming.PERFECT_ZYGOTE:
        timing_eff, c = ConversionTiming.ZYGOTE, 1.0
    else:
        timing_eff = timing
    s1 = _ratio(c, 1 - h * (1 - c))
    if timing_eff is ConversionTiming.ZYGOTE:
        a_factor = 2 * (1 - c) * (1 - h) - 1
        s2 = _ratio(c, 2 * c + h * (1 - c))
    else:
        a_factor = 1 - 2 * h
        s2 = _ratio(c, h * (1 + c))
    return Thresholds(timing, a_factor, s1, s2)


def classify_regime(timing: ConversionTiming, c: float, h: float, s: float,
                    tol: float = 1e-12) -> Regime:
    """Regime of the r=inf frequency equation."""
    th = thresholds(timing, c, h)
    for name, value in (("s1", th.s1), ("s2", th.s2)):
        if abs(s - value) <= tol:
            raise RegimeBoundaryError(f"s={s} lies on threshold {name}={value}")
    if th.a_factor > 0:
        if s < th.s1:
            return Regime.MONOSTABLE_DRIVE_INVASION
        return Regime.COEXISTENCE if s < th.s2 else Regime.MONOSTABLE_WT_INVASION
    if th.a_factor < 0:
        if s < th.s2:
            return Regime.MONOSTABLE_DRIVE_INVASION
        return Regime.BISTABLE if s < th.s1 else Regime.MONOSTABLE_WT_INVASION
    return Regime.MONOSTABLE_DRIVE_INVASION if s < th.s1 else Regime.MONOSTABLE_WT_INVASION


def classify_regime_r0(timing: ConversionTiming, params: Parameters) -> Regime:
    """At r=0 the drive either invades (eradicating behind it) or is cleared."""
    rad = drive_radicand(timing, params)
    return Regime.MONOSTABLE_DRIVE_INVASION if rad > 0 else Regime.CLEARANCE_DEGENERATE


# ---------------------------------------------------------------------------
# pulled fronts
# ---------------------------------------------------------------------------

def pulled_set_polynomial(timing: ConversionTiming, c: float, h: float, s: float) -> float:
    timing = ConversionTiming.parse(timing)
    if timing is ConversionTiming.PERFECT_ZYGOTE:
        timing, c = ConversionTiming.ZYGOTE, 1.0
    if timing is ConversionTiming.ZYGOTE:
        lead = 1 - 2 * s * (1 - (1 - h) * (1 - c))
        return lead * (c - 2 * s * c - s * h + s * c * h) + s * (2 * (1 - c) * (1 - h) - 1)
    return (1 - 2 * s * h) * (c - s * h * (c + 1)) + s * (1 - 2 * h)


def pulled_set_contains(timing: ConversionTiming, c: float, h: float, s: float) -> bool:
    """Closed-form sufficient condition for a pulled drive wave.

    Only meaningful when A < 0; for A >= 0 the polynomial value is returned
    as is.
    """
    return pulled_set_polynomial(timing, c, h, s) > 0


def pulled_set_boundary(timing: ConversionTiming, c: float, h: float) -> Optional[float]:
    """Largest s of the pulled set below s2, or None if the set does not end there."""
    th = thresholds(timing, c, h)
    hi = min(th.s2, 1.0 - 1e-12)
    f = lambda s: pulled_set_polynomial(timing, c, h, s)
    lo = 1e-12
    if hi <= lo or f(lo) <= 0 or f(hi) > 0:
        return None
    return brentq(f, lo, hi, xtol=1e-14)


def pulled_criterion(sigma: Sigma, grid_resolution: int = 10_000) -> bool:
    """Grid check that per-capita growth sigma(0) dominates (1-p)sigma(p)."""
    p = np.linspace(0.0, 1.0, grid_resolution)
    vals = _evaluate(sigma, p)
    return bool(np.all(vals[0] - (1 - p) * vals >= -1e-12))


def _evaluate(f: Sigma, x: np.ndarray) -> np.ndarray:
    out = np.asarray(f(x), dtype=float)
    if out.shape != x.shape:
        out = np.array([float(f(v)) for v in x])
    return out


# ---------------------------------------------------------------------------
# sign of the bistable speed
# ---------------------------------------------------------------------------

def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-9, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, width):
        return width * (fa + 4 * fm + fb) / 6

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, m - a)
        right = simpson(fm, frm, fb, b - m)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15 * tol:
            return left + right + delta / 15
        return (recurse(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol, max_depth)


def speed_sign_integral(sigma: Sigma, tol: float = 1e-9) -> float:
    """Integral of p(1-p)sigma(p) over [0,1]; its sign is the sign of the wave speed."""
    return adaptive_simpson(lambda p: p * (1 - p) * float(sigma(p)), 0.0, 1.0, tol)


def sigma_for(timing: ConversionTiming, params: Parameters) -> Sigma:
    return lambda p: rinf_sigma(timing, params, p)


def speed_sign_threshold(sigma_of_s: Callable[[float], Sigma], lo: float, hi: float,
                         xtol: float = 1e-10) -> float:
    """Value of s where the sign integral of ``sigma_of_s(s)`` vanishes."""
    return brentq(lambda s: speed_sign_integral(sigma_of_s(s)), lo, hi, xtol=xtol)


# ---------------------------------------------------------------------------
# cubic reaction p(1-p)(a + b p) under weak selection
# ---------------------------------------------------------------------------

def weak_selection_sigma(s: float) -> Sigma:
    """Weak-selection approximation of the perfect-conversion selection term."""
    return lambda p: s * np.asarray(p, dtype=float) + 1 - 2 * s


@dataclass(frozen=True)
class CubicFront:
    linear_speed: Optional[float]
    speed: float
    pushed: bool


def cubic_front(a: float, b: float) -> CubicFront:
    """Minimal front of u_t = u_xx + u(1-u)(a + b u) with b > 0.

    The explicit heteroclinic u' = -k u(1-u), k = sqrt(b/2), travels at
    (b + 2a)/sqrt(2b). It is the selected front exactly when it decays faster
    than the critical rate v/2; otherwise the front is pulled at 2 sqrt(a).
    """
    if b <= 0:
        raise ValueError("cubic_front needs b > 0")
    k = math.sqrt(b / 2)
    explicit = (b + 2 * a) / math.sqrt(2 * b)
    if a <= 0:
        return CubicFront(None, explicit, True)
    linear = 2 * math.sqrt(a)
    pushed = k > explicit / 2
    return CubicFront(linear, explicit if pushed else linear, pushed)


def weak_selection_front(s: float) -> CubicFront:
    return cubic_front(1 - 2 * s, s)


# ---------------------------------------------------------------------------
# equilibria and persistence
# ---------------------------------------------------------------------------

def interior_root(timing: ConversionTiming, params: Parameters) -> Optional[float]:
    """Root of the frequency selection term, unfiltered; None when A = 0."""
    timing, params = effective(timing, params)
    c, s, h = params.c, params.s, params.h
    th = thresholds(timing, c, h)
    a = th.A(s)
    if a == 0:
        return None
    if timing is ConversionTiming.ZYGOTE:
        return 0.5 + (2 * c * (1 - s) - s) / (2 * a)
    return 0.5 + (2 * c * (1 - s * h) - s) / (2 * a)


def interior_equilibrium(timing: ConversionTiming, params: Parameters) -> Optional[float]:
    p = interior_root(timing, params)
    return p if p is not None and 0 < p < 1 else None


@dataclass(frozen=True)
class EquilibriumReport:
    p_star: Optional[float]
    n_star: float
    persistence_r: float
    degenerate: bool = False


def persistence_pure(s: float) -> float:
    return s / (1 - s)


def persistence_composite(timing: ConversionTiming, params: Parameters) -> tuple[float, float]:
    """Growth-rate threshold and density of a stable coexistence population."""
    th = thresholds(timing, params.c, params.h)
    p_star = interior_equilibrium(timing, params)
    if p_star is None or th.A(params.s) <= 0:
        raise CoexistenceAbsent("no stable interior equilibrium for these parameters")
    m = float(mean_fitness(timing, params, p_star))
    threshold = (1 - m) / m
    if params.is_rinf:
        n_star = 1.0
    elif params.r == 0:
        n_star = 0.0
    else:
        n_star = max(0.0, 1 - threshold / params.r)
    return threshold, n_star


def equilibrium_report(timing: ConversionTiming, params: Parameters) -> EquilibriumReport:
    p_root = interior_root(timing, params)
    try:
        threshold, n_star = persistence_composite(timing, params)
        return EquilibriumReport(p_root, n_star, threshold)
    except CoexistenceAbsent:
        p_star = interior_equilibrium(timing, params)
        return EquilibriumReport(p_star, drive_equilibrium_density(params),
                                 persistence_pure(params.s), degenerate=p_root is None)
