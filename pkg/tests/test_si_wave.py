import dataclasses
import math
import time

import numpy as np
import pytest

from drivewave.model_core import ConversionTiming as T, Parameters
from drivewave.si_wave import (
    ROUNDOFF, SIParams, admissible_constants, critical_speed, si_params, si_reaction,
    si_speed_crosscheck, verify_subsuper,
)
from drivewave.solver import GridConfig, Outcome, integrate

BASE = SIParams(1.0, 0.8, 0.2)


def test_parameters_must_be_positive():
    with pytest.raises(ValueError, match="beta2, gamma"):
        SIParams(1.0, 0.0, -1.0)


def test_wave_existence_and_critical_speed():
    assert BASE.wave_exists
    assert critical_speed(BASE) == pytest.approx(2 * math.sqrt(0.6))
    assert not SIParams(1, 0.2, 0.3).wave_exists
    assert critical_speed(SIParams(1, 0.2, 0.3)) is None


@pytest.mark.parametrize("s", [0.1, 0.2, 0.4])
def test_perfect_conversion_mapping(s):
    si = si_params(T.PERFECT_ZYGOTE, Parameters(0, 0.3, s, 0.7))
    assert (si.beta1, si.beta2, si.gamma) == pytest.approx((1, 1 - s, s))
    assert critical_speed(si) == pytest.approx(2 * math.sqrt(1 - 2 * s))


def test_partial_conversion_mappings():
    z = si_params(T.ZYGOTE, Parameters(0, 0.25, 0.3, 0.1))
    assert (z.beta1, z.beta2, z.gamma) == pytest.approx((0.2725, 0.3775, 0.3))
    g = si_params(T.GERMLINE, Parameters(0, 0.25, 0.3, 0.1))
    assert (g.beta1, g.beta2, g.gamma) == pytest.approx((0.2725, 0.5125, 0.3))


def test_reaction_at_a_point():
    i, s = 0.2, 0.6
    di, ds = si_reaction(BASE, (np.array(i), np.array(s)))
    contact = i * s / (i + s)
    assert di == pytest.approx(0.8 * contact - 0.2 * i)
    assert ds == pytest.approx(-contact)
    np.testing.assert_array_equal(si_reaction(BASE, (np.zeros(3), np.zeros(3))), 0)


def test_susceptible_reaction_never_positive():
    rng = np.random.default_rng(3)
    state = rng.uniform(0, 1, size=(2, 10_000))
    assert np.all(si_reaction(BASE, state)[1] <= 0)


def test_susceptible_mass_non_increasing():
    masses = []
    g = GridConfig(100, 0.5, 40, samples=40)
    infected = (g.x < 50).astype(float)
    integrate(np.stack([infected, 1 - infected]), lambda u: si_reaction(BASE, u), g,
              drive_of=lambda u: u[0], total_of=lambda u: u[0] + u[1],
              observers=[lambda t, x, u: masses.append(u[1].sum())], rate_bound=3.0)
    assert np.all(np.diff(masses) <= 1e-12)


SETS = {
    "base": BASE,
    "zygote": si_params(T.ZYGOTE, Parameters(0, 0.25, 0.3, 0.1)),
    "germline": si_params(T.GERMLINE, Parameters(0, 0.25, 0.3, 0.1)),
}


@pytest.mark.parametrize("name", SETS)
def test_constants_satisfy_their_side_conditions(name):
    si = SETS[name]
    c = admissible_constants(si)
    assert c.v == pytest.approx(critical_speed(si))
    assert c.M == pytest.approx((si.beta2 - si.gamma) / si.gamma)
    assert c.L1 > math.e and 1 / c.L1 < c.lambda_star
    assert c.s_break > c.upper_break
    assert c.L2 >= c.L3 * math.sqrt(c.s_break)


@pytest.mark.parametrize("name", SETS)
def test_all_four_inequalities_hold(name):
    si = SETS[name]
    start = time.perf_counter()
    report = verify_subsuper(si, admissible_constants(si))
    assert time.perf_counter() - start < 5
    assert report.passed
    tol = report.diagnostics["roundoff_tolerance"]
    assert tol <= ROUNDOFF * max(1, report.constants["M"] * si.beta2)
    assert all(m >= -tol for m in report.margins.values())
    assert report.grid["n_points"] == 100_000
    assert report.diagnostics["condition2_analytic_sup"] <= report.diagnostics["condition2_rhs"]


@pytest.mark.parametrize("change, failing", [({"L1": 0.6}, "2"), ({"L2": 0.5}, "4"), ({"L2": 0.9}, "4")])
def test_shrunken_constants_are_rejected(change, failing):
    c = admissible_constants(BASE)
    scaled = dataclasses.replace(c, **{k: getattr(c, k) * f for k, f in change.items()})
    report = verify_subsuper(BASE, scaled)
    assert not report.passed
    assert report.margins[failing] < -1e-3


def test_report_serialises():
    d = verify_subsuper(BASE, admissible_constants(BASE), n_points=1000).to_dict()
    assert set(d["margins"]) == {"1", "2", "3", "4"}
    assert set(d["strict_margins"]) == {"i", "ii", "iii", "iv"}


def test_no_constants_without_a_wave():
    with pytest.raises(ValueError):
        admissible_constants(SIParams(1, 0.2, 0.3))


@pytest.mark.parametrize("si, grid", [
    (BASE, GridConfig(300, 0.25, 300, moving_window=True)),
    (SIParams(0.27, 0.38, 0.3), GridConfig(300, 0.5, 1000, moving_window=True)),
])
def test_simulated_speed_matches_critical_speed(si, grid):
    measured, predicted, report = si_speed_crosscheck(si, grid)
    assert report.outcome is Outcome.DRIVE_INVASION
    assert measured == pytest.approx(predicted, rel=0.05)
