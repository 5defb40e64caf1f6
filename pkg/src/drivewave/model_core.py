"""Parameters, states and reaction terms for the gene-drive models.

Three coordinate systems are supported:

* genotype densities ``(n_DD, n_DW, n_WW)``
* allelic half-densities ``(n_D, n_W)``
* total density and drive frequency ``(n, p)``

Every reaction function accepts floats or numpy arrays (components along the
leading axis) and is vectorised over the trailing axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from itertools import product
from typing import NamedTuple, Sequence

import numpy as np

INFINITY = math.inf

#: densities at or below this are treated as empty space
EMPTY_DENSITY = 1e-12

GENOTYPES = ("DD", "DW", "WW")


class ConversionTiming(str, Enum):
    ZYGOTE = "zygote"
    GERMLINE = "germline"
    PERFECT_ZYGOTE = "perfect"

    @classmethod
    def parse(cls, text: str | "ConversionTiming") -> "ConversionTiming":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        aliases = {"perfect_zygote": "perfect", "perfect-zygote": "perfect"}
        return cls(aliases.get(key, key))


class InvalidParameters(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DegenerateStateError(ValueError):
    """Raised when a frequency is requested for an empty population."""


def parameter_problems(r: float, c: float, s: float, h: float) -> list[str]:
    """Every violated range constraint, as human-readable messages."""
    problems = []
    if not (isinstance(r, (int, float)) and (r == INFINITY or (math.isfinite(r) and r >= 0))):
        problems.append("r must be >= 0 or inf")
    if not (0.0 <= c <= 1.0):
        problems.append("c must lie in [0,1]")
    if not (0.0 < s < 1.0):
        problems.append("s must lie in (0,1)")
    if not (0.0 <= h <= 1.0):
        problems.append("h must lie in [0,1]")
    return problems


@dataclass(frozen=True)
class Parameters:
    """Growth rate ``r`` (may be ``INFINITY``), conversion ``c``, cost ``s``, dominance ``h``."""

    r: float
    c: float
    s: float
    h: float

    def __post_init__(self):
        for name in ("r", "c", "s", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        problems = parameter_problems(self.r, self.c, self.s, self.h)
        if problems:
            raise InvalidParameters(problems)

    @property
    def is_rinf(self) -> bool:
        return self.r == INFINITY

    @property
    def f_dd(self) -> float:
        return 1.0 - self.s

    @property
    def f_dw(self) -> float:
        return 1.0 - self.s * self.h

    @property
    def f_ww(self) -> float:
        return 1.0

    def with_(self, **changes) -> "Parameters":
        return replace(self, **changes)


def effective(timing: ConversionTiming, params: Parameters) -> tuple[ConversionTiming, Parameters]:
    """Rewrite perfect conversion as zygote conversion with c = 1."""
    timing = ConversionTiming.parse(timing)
    if timing is ConversionTiming.PERFECT_ZYGOTE:
        return ConversionTiming.ZYGOTE, params.with_(c=1.0)
    return timing, params


def het_drive_share(timing: ConversionTiming, c: float) -> float:
    """Fraction alpha of a heterozygote counted as drive allele."""
    timing = ConversionTiming.parse(timing)
    if timing is ConversionTiming.GERMLINE:
        return 0.5 * (1.0 + c)
    return 0.5


class GenotypeState(NamedTuple):
    n_dd: object
    n_dw: object
    n_ww: object


class AlleleState(NamedTuple):
    n_d: object
    n_w: object


class FrequencyState(NamedTuple):
    n: object
    p: object


# ---------------------------------------------------------------------------
# offspring tables
# ---------------------------------------------------------------------------

def _canonical(genotype: str) -> str:
    g = genotype.upper()
    if sorted(g) == ["D", "W"]:
        return "DW"
    if g not in GENOTYPES:
        raise ValueError(f"unknown genotype {genotype!r}")
    return g


def offspring_distribution(timing: ConversionTiming, c: float,
                           parents: tuple[str, str]) -> dict[str, float]:
    """Offspring genotype probabilities for one mating, before fitness weighting."""
    timing = ConversionTiming.parse(timing)
    if timing is ConversionTiming.PERFECT_ZYGOTE:
        timing, c = ConversionTiming.ZYGOTE, 1.0
    het_d = (1.0 + c) / 2 if timing is ConversionTiming.GERMLINE else 0.5
    gamete_d = {"DD": 1.0, "DW": het_d, "WW": 0.0}

    dist = dict.fromkeys(GENOTYPES, 0.0)
    pd_a, pd_b = (gamete_d[_canonical(g)] for g in parents)
    for (a, pa), (b, pb) in product((("D", pd_a), ("W", 1 - pd_a)),
                                    (("D", pd_b), ("W", 1 - pd_b))):
        weight = pa * pb
        if a == b:
            dist[a + a] += weight
        elif timing is ConversionTiming.ZYGOTE:
            dist["DD"] += c * weight
            dist["DW"] += (1 - c) * weight
        else:
            dist["DW"] += weight
    return dist


# ---------------------------------------------------------------------------
# reaction terms
# ---------------------------------------------------------------------------

def growth_factor(r: float, n):
    """Density-dependent fecundity multiplier 1 + r(1 - n)."""
    return 1.0 + r * (1.0 - n)


def _require_finite_r(params: Parameters):
    if params.is_rinf:
        raise ValueError("density dynamics are undefined at r=inf; use rinf_sigma")


def _per_capita(n):
    occupied = n > EMPTY_DENSITY
    return occupied, np.where(occupied, n, 1.0)


def genotype_reaction(timing: ConversionTiming, params: Parameters,
                      st: GenotypeState | Sequence) -> np.ndarray:
    """Reaction part of the three-genotype system, shape ``(3, ...)``."""
    _require_finite_r(params)
    timing, params = effective(timing, params)
    dd, dw, ww = (np.asarray(x, dtype=float) for x in st)
    n = dd + dw + ww
    occupied, safe_n = _per_capita(n)
    k = growth_factor(params.r, n) / safe_n
    c, s, h = params.c, params.s, params.h

    if timing is ConversionTiming.ZYGOTE:
        births_dd = (c * ww * dw + 2 * c * ww * dd + (c / 2 + 0.25) * dw * dw
                     + (c + 1) * dw * dd + dd * dd)
        births_dw = (1 - c) * (ww * dw + 2 * ww * dd + 0.5 * dw * dw + dw * dd)
        births_ww = ww * ww + ww * dw + 0.25 * dw * dw
    else:
        births_dd = 0.25 * (1 + c) ** 2 * dw * dw + (1 + c) * dw * dd + dd * dd
        births_dw = ((1 + c) * ww * dw + 2 * ww * dd + 0.5 * (1 - c * c) * dw * dw
                     + (1 - c) * dw * dd)
        births_ww = ww * ww + (1 - c) * ww * dw + 0.25 * (1 - c) ** 2 * dw * dw

    rates = np.stack([
        (1 - s) * k * births_dd - dd,
        (1 - s * h) * k * births_dw - dw,
        k * births_ww - ww,
    ])
    return np.where(occupied, rates, 0.0)


def allele_reaction(timing: ConversionTiming, params: Parameters,
                    st: AlleleState | Sequence) -> np.ndarray:
    """Reaction part of the two-allele system, shape ``(2, ...)``."""
    _require_finite_r(params)
    timing, params = effective(timing, params)
    nd, nw = (np.asarray(x, dtype=float) for x in st)
    n = nd + nw
    occupied, safe_n = _per_capita(n)
    k = growth_factor(params.r, n) / safe_n
    c, s, h = params.c, params.s, params.h
    het = 1 - s * h

    if timing is ConversionTiming.ZYGOTE:
        fd = nd * (k * ((1 - s) * (nd + 2 * c * nw) + het * (1 - c) * nw) - 1)
    else:
        fd = nd * (k * ((1 - s) * nd + het * (1 + c) * nw) - 1)
    fw = nw * (k * (nw + het * (1 - c) * nd) - 1)
    return np.where(occupied, np.stack([fd, fw]), 0.0)


def to_allelic(timing: ConversionTiming, st: GenotypeState | Sequence,
               c: float | None = None) -> AlleleState:
    """Collapse genotype densities to allelic half-densities.

    ``c`` is needed for germline conversion only.
    """
    timing = ConversionTiming.parse(timing)
    if timing is ConversionTiming.GERMLINE and c is None:
        raise ValueError("germline conversion needs c to weight heterozygotes")
    alpha = het_drive_share(timing, c if c is not None else 0.0)
    dd, dw, ww = st
    return AlleleState(dd + alpha * dw, ww + (1 - alpha) * dw)


def allele_fitness(timing: ConversionTiming, params: Parameters, p):
    """Marginal fitness of the drive and wild-type alleles at frequency p."""
    timing, params = effective(timing, params)
    p = np.asarray(p, dtype=float)
    c, s, h = params.c, params.s, params.h
    het = 1 - s * h
    q = 1 - p
    if timing is ConversionTiming.ZYGOTE:
        w_d = (1 - s) * (p + 2 * c * q) + het * (1 - c) * q
    else:
        w_d = (1 - s) * p + het * (1 + c) * q
    w_w = q + het * (1 - c) * p
    return w_d, w_w


def mean_fitness(timing: ConversionTiming, params: Parameters, p):
    w_d, w_w = allele_fitness(timing, params, p)
    p = np.asarray(p, dtype=float)
    return p * w_d + (1 - p) * w_w


def rinf_sigma(timing: ConversionTiming, params: Parameters, p):
    """Per-capita selection sigma(p) of the r=inf scalar equation p_t = p_xx + p(1-p)sigma(p)."""
    w_d, w_w = allele_fitness(timing, params, p)
    p = np.asarray(p, dtype=float)
    return (w_d - w_w) / (p * w_d + (1 - p) * w_w)


def frequency_reaction(timing: ConversionTiming, params: Parameters,
                       st: FrequencyState | Sequence):
    """Reaction parts ``(dn, dp)`` in density/frequency coordinates.

    The advection term of the frequency equation is left to the caller.
    At r=inf the density is pinned at one, so ``dn`` is zero.
    """
    n, p = (np.asarray(x, dtype=float) for x in st)
    if np.any(n <= 0):
        raise DegenerateStateError("frequency is undefined where n <= 0")
    w_d, w_w = allele_fitness(timing, params, p)
    pq = p * (1 - p)
    if params.is_rinf:
        mean = p * w_d + (1 - p) * w_w
        return np.zeros_like(n), pq * (w_d - w_w) / mean
    k = growth_factor(params.r, n)
    dn = n * (k * (p * w_d + (1 - p) * w_w) - 1)
    dp = k * pq * (w_d - w_w)
    return dn, dp
