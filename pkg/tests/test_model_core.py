import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drivewave.model_core import (
    GENOTYPES, INFINITY, AlleleState, ConversionTiming as T, DegenerateStateError,
    GenotypeState, InvalidParameters, Parameters, allele_reaction, frequency_reaction,
    genotype_reaction, mean_fitness, offspring_distribution, rinf_sigma, to_allelic,
)

TIMINGS = list(T)
rng = np.random.default_rng(12345)


def random_params(rng, r_max=10.0):
    return Parameters(r=rng.uniform(0, r_max), c=rng.uniform(0, 1),
                      s=rng.uniform(0.01, 0.99), h=rng.uniform(0, 1))


def brute_force_rates(timing, params, state):
    """Sum over ordered parent pairs of offspring tables times fitness."""
    dens = dict(zip(GENOTYPES, state))
    n = sum(state)
    fit = {"DD": params.f_dd, "DW": params.f_dw, "WW": 1.0}
    births = dict.fromkeys(GENOTYPES, 0.0)
    for a, b in itertools.product(GENOTYPES, repeat=2):
        for child, prob in offspring_distribution(timing, params.c, (a, b)).items():
            births[child] += prob * dens[a] * dens[b]
    k = 1 + params.r * (1 - n)
    return np.array([k * fit[g] * births[g] / n - dens[g] for g in GENOTYPES])


# --- parameters -------------------------------------------------------------

def test_parameter_validation_collects_all_problems():
    with pytest.raises(InvalidParameters) as err:
        Parameters(r=-1, c=1.5, s=1.2, h=-0.1)
    assert len(err.value.problems) == 4
    assert "s must lie in (0,1)" in err.value.problems


def test_infinite_r_allowed():
    assert Parameters(r=INFINITY, c=0.5, s=0.3, h=0.5).is_rinf


# --- offspring tables ---------------------------------------------------------

def test_offspring_ww_ww():
    assert offspring_distribution(T.ZYGOTE, 0.3, ("WW", "WW")) == {"DD": 0, "DW": 0, "WW": 1}


def test_offspring_zygote_ww_dd():
    d = offspring_distribution(T.ZYGOTE, 0.3, ("WW", "DD"))
    assert d["DD"] == pytest.approx(0.3) and d["DW"] == pytest.approx(0.7) and d["WW"] == 0


def test_offspring_germline_het_het():
    c = 0.37
    d = offspring_distribution(T.GERMLINE, c, ("WD", "WD"))
    assert d["DD"] == pytest.approx(c * c + c * (1 - c) + (1 - c) ** 2 / 4)
    assert d["DW"] == pytest.approx(c * (1 - c) + (1 - c) ** 2 / 2)
    assert d["WW"] == pytest.approx((1 - c) ** 2 / 4)


def test_offspring_zygote_het_het_table_row():
    c = 0.4
    d = offspring_distribution(T.ZYGOTE, c, ("DW", "DW"))
    assert d["DD"] == pytest.approx(0.25 + 0.5 * c)
    assert d["DW"] == pytest.approx(0.5 * (1 - c))
    assert d["WW"] == pytest.approx(0.25)


@pytest.mark.parametrize("timing", TIMINGS)
def test_offspring_sums_to_one(timing):
    for c in np.linspace(0, 1, 21):
        for pair in itertools.product(GENOTYPES, repeat=2):
            assert sum(offspring_distribution(timing, c, pair).values()) == pytest.approx(1, abs=1e-15)


# --- genotype reaction --------------------------------------------------------

def test_wild_type_at_capacity_is_stationary():
    p = Parameters(r=0, c=0.3, s=0.4, h=0.2)
    assert np.allclose(genotype_reaction(T.ZYGOTE, p, (0, 0, 1)), 0)


def test_perfect_half_half_r0():
    p = Parameters(r=0, c=0.0, s=0.3, h=0.5)
    rates = genotype_reaction(T.PERFECT_ZYGOTE, p, (0.5, 0, 0.5))
    assert rates[0] == pytest.approx(0.025)
    assert rates[2] == pytest.approx(-0.25)


def test_perfect_matches_two_equation_form():
    for _ in range(100):
        p = random_params(rng)
        dd, ww = rng.uniform(0, 1, 2)
        k = 1 + p.r * (1 - dd - ww)
        f_d = (1 - p.s) * k * (dd ** 2 + 2 * ww * dd) / (ww + dd) - dd
        f_w = k * ww ** 2 / (ww + dd) - ww
        got = genotype_reaction(T.PERFECT_ZYGOTE, p, (dd, 0, ww))
        assert got[0] == pytest.approx(f_d, abs=1e-13)
        assert got[1] == 0
        assert got[2] == pytest.approx(f_w, abs=1e-13)


@pytest.mark.parametrize("timing", TIMINGS)
def test_genotype_reaction_matches_table_assembly(timing):
    for _ in range(200):
        p = random_params(rng)
        state = rng.uniform(0, 1, 3)
        assert np.allclose(genotype_reaction(timing, p, state),
                           brute_force_rates(timing, p, state), atol=1e-13, rtol=0)


@pytest.mark.parametrize("timing", TIMINGS)
def test_zero_state_gives_zero_rates(timing):
    p = random_params(rng)
    assert np.all(genotype_reaction(timing, p, (0, 0, 0)) == 0)
    assert np.all(allele_reaction(timing, p, (0, 0)) == 0)


def test_homogeneous_wild_type_logistic():
    p = Parameters(r=2.5, c=0.5, s=0.3, h=0.5)
    for n in (0.1, 0.5, 1.0, 1.3):
        rates = genotype_reaction(T.GERMLINE, p, (0, 0, n))
        assert rates[2] == pytest.approx((1 + p.r * (1 - n)) * n - n)


def test_perfect_equals_zygote_c1():
    for _ in range(100):
        p = random_params(rng)
        state = rng.uniform(0, 1, 3)
        p1 = p.with_(c=1.0)
        assert np.array_equal(genotype_reaction(T.PERFECT_ZYGOTE, p, state),
                              genotype_reaction(T.ZYGOTE, p1, state))
        a = state[:2]
        assert np.array_equal(allele_reaction(T.PERFECT_ZYGOTE, p, a),
                              allele_reaction(T.ZYGOTE, p1, a))
        q = rng.uniform()
        assert rinf_sigma(T.PERFECT_ZYGOTE, p, q) == rinf_sigma(T.ZYGOTE, p1, q)
        assert mean_fitness(T.PERFECT_ZYGOTE, p, q) == mean_fitness(T.ZYGOTE, p1, q)


# --- allele reaction ---------------------------------------------------------

@pytest.mark.parametrize("timing", TIMINGS)
def test_genotype_to_allele_reduction(timing):
    params = [random_params(rng) for _ in range(1000)]
    for p in params:
        g = GenotypeState(*rng.uniform(0, 1, 3))
        alpha = 0.5 * (1 + p.c) if timing is T.GERMLINE else 0.5
        rg = genotype_reaction(timing, p, g)
        expected = (rg[0] + alpha * rg[1], rg[2] + (1 - alpha) * rg[1])
        got = allele_reaction(timing, p, to_allelic(timing, g, p.c))
        assert np.allclose(got, expected, atol=1e-12, rtol=0)


def test_zygote_c1_is_perfect_allele_system():
    for _ in range(200):
        p = random_params(rng)
        nd, nw = rng.uniform(0, 1, 2)
        n = nd + nw
        k = 1 + p.r * (1 - n)
        f_d = (1 - p.s) * k * (nd ** 2 + 2 * nw * nd) / n - nd
        f_w = k * nw ** 2 / n - nw
        assert np.allclose(allele_reaction(T.ZYGOTE, p.with_(c=1.0), (nd, nw)), (f_d, f_w), atol=1e-13)


def test_germline_r0_example():
    s, h, c = 0.2, 0.3, 0.25
    p = Parameters(r=0, c=c, s=s, h=h)
    rate = allele_reaction(T.GERMLINE, p, (0.5, 0.5))
    assert rate[0] == pytest.approx((c * (1 - s * h) + s * (1 - h)) * 0.25 - s * 0.5, abs=1e-14)


def test_to_allelic_examples():
    assert np.allclose(to_allelic(T.ZYGOTE, (0.2, 0.4, 0.4)), (0.4, 0.6))
    assert np.allclose(to_allelic(T.GERMLINE, (0.2, 0.4, 0.4), c=0.5), (0.5, 0.5))
    for t in TIMINGS:
        assert np.allclose(to_allelic(t, (0.3, 0, 0.7), c=0.2), (0.3, 0.7))


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_to_allelic_conserves_total(dd, dw, ww, c):
    for t in TIMINGS:
        a = to_allelic(t, (dd, dw, ww), c=c)
        assert a.n_d + a.n_w == pytest.approx(dd + dw + ww)


# --- frequency coordinates ----------------------------------------------------

@pytest.mark.parametrize("timing", TIMINGS)
def test_frequency_form_matches_chain_rule(timing):
    for _ in range(200):
        p = random_params(rng)
        nd, nw = rng.uniform(0.05, 1, 2)
        n, q = nd + nw, nd / (nd + nw)
        f_d, f_w = allele_reaction(timing, p, (nd, nw))
        dn_expected = f_d + f_w
        dp_expected = ((1 - q) * f_d - q * f_w) / n
        dn, dp = frequency_reaction(timing, p, (n, q))
        assert dn == pytest.approx(dn_expected, abs=1e-10)
        assert dp == pytest.approx(dp_expected, abs=1e-10)


@pytest.mark.parametrize("timing", TIMINGS)
def test_frequency_fixed_points(timing):
    p = random_params(rng)
    _, dp = frequency_reaction(timing, p, (np.array([0.7, 0.7]), np.array([0.0, 1.0])))
    assert np.all(dp == 0)


def test_perfect_frequency_formula():
    p = Parameters(r=1.7, c=0.0, s=0.3, h=0.5)
    n, q = 0.6, 0.4
    _, dp = frequency_reaction(T.PERFECT_ZYGOTE, p, (n, q))
    s = p.s
    assert dp == pytest.approx((p.r * (1 - n) + 1) * s * q * (1 - q) * (q - (2 * s - 1) / s))


def test_frequency_rejects_empty_population():
    with pytest.raises(DegenerateStateError):
        frequency_reaction(T.ZYGOTE, Parameters(1, 0.5, 0.3, 0.5), (0.0, 0.5))


@pytest.mark.parametrize("timing", TIMINGS)
def test_rinf_frequency_reaction_is_sigma(timing):
    p = random_params(rng).with_(r=INFINITY)
    q = rng.uniform(0, 1, 50)
    dn, dp = frequency_reaction(timing, p, (np.ones(50), q))
    assert np.all(dn == 0)
    assert np.allclose(dp, q * (1 - q) * rinf_sigma(timing, p, q), atol=1e-15)


# --- sigma and mean fitness ---------------------------------------------------

def test_sigma_perfect_example():
    p = Parameters(r=INFINITY, c=0, s=0.3, h=0.5)
    assert rinf_sigma(T.PERFECT_ZYGOTE, p, 0.5) == pytest.approx(0.3 * (0.5 + 4 / 3) / 0.775)
    assert rinf_sigma(T.PERFECT_ZYGOTE, p, 0.5) == pytest.approx(0.7097, abs=1e-4)


def test_sigma_perfect_interior_root():
    s = 0.7
    p = Parameters(r=INFINITY, c=0, s=s, h=0.5)
    assert rinf_sigma(T.PERFECT_ZYGOTE, p, (2 * s - 1) / s) == pytest.approx(0, abs=1e-15)


def test_sigma_zygote_at_zero():
    c, h = 0.25, 0.1
    for s in (0.1, 0.3, 0.6):
        p = Parameters(r=1, c=c, s=s, h=h)
        assert rinf_sigma(T.ZYGOTE, p, 0.0) * mean_fitness(T.ZYGOTE, p, 0.0) == pytest.approx(
            c * (1 - s) - s * (1 - (1 - c) * (1 - h)))


def test_mean_fitness_quadratic_forms():
    for _ in range(200):
        p = random_params(rng)
        q = rng.uniform()
        a_z = p.s * (2 * (1 - p.c) * (1 - p.h) - 1)
        a_g = p.s * (1 - 2 * p.h)
        assert mean_fitness(T.ZYGOTE, p, q) == pytest.approx(-a_z * q * q + (a_z - p.s) * q + 1)
        assert mean_fitness(T.GERMLINE, p, q) == pytest.approx(-a_g * q * q + (a_g - p.s) * q + 1)


def test_mean_fitness_example_and_bounds():
    p = Parameters(r=1, c=0.25, s=0.35, h=0.1)
    assert mean_fitness(T.ZYGOTE, p, 0.398) == pytest.approx(0.8900, abs=1e-4)
    for t in TIMINGS:
        for _ in range(100):
            pr = random_params(rng)
            q = np.linspace(0, 1, 101)
            m = mean_fitness(t, pr, q)
            assert m[0] == pytest.approx(1) and m[-1] == pytest.approx(1 - pr.s)
            assert np.all(m >= 1 - pr.s - 1e-14) and np.all(m <= 1 + 1e-14)


@settings(max_examples=200)
@given(st.floats(0.01, 0.99), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_sigma_finite(s, c, h, q):
    for t in TIMINGS:
        assert np.isfinite(rinf_sigma(t, Parameters(INFINITY, c, s, h), q))
