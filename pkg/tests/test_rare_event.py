import math
from fractions import Fraction

import numpy as np
import pytest

from isamp import bounds, rare_event
from isamp.errors import DomainError
from isamp.rare_event import RareBinomialSpec


# ---------------------------------------------------------------------------
# exact tails
# ---------------------------------------------------------------------------

def test_binom_tail_small_exact():
    t = rare_event.binom_tail(4, 3)
    assert t.value == pytest.approx(5 / 16, abs=0)
    assert t.log_value == pytest.approx(math.log(5 / 16), abs=1e-14)
    assert rare_event.binom_tail(4, 0).value == 1.0


def test_binom_tail_100_90():
    t = rare_event.binom_tail(100, 90)
    assert abs(t.value - 1.5316e-17) <= 1e-21
    assert t.value == pytest.approx(1.5316450877189926e-17, rel=1e-14)


def test_binom_tail_beyond_integer_cap():
    # log-space route agrees with the exact one at the boundary scale
    exact = rare_event.binom_tail(1000, 600)
    approx_log = rare_event.binom_tail(1001, 600).log_value
    assert math.isfinite(approx_log)
    assert exact.log_value == pytest.approx(math.log(exact.value), rel=1e-12)


def test_binom_tail_domain():
    with pytest.raises(DomainError):
        rare_event.binom_tail(10, 11)


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------

def test_de_moivre_small_cases():
    r = rare_event.de_moivre_identity(4, 3)
    assert r.lhs == Fraction(6, 16) and r.rhs == Fraction(6, 16) and r.equal
    r0 = rare_event.de_moivre_identity(12, 0)
    assert r0.lhs == 0 and r0.rhs == 0 and r0.equal


def test_de_moivre_exhaustive_through_60():
    for N in range(1, 61):
        for k in range(0, N + 1):
            assert rare_event.de_moivre_identity(N, k).equal


def test_bahadur_bracket_n100():
    b = rare_event.bahadur_bracket(100, 0.9)
    assert 1.0 <= b.ratio <= 1.0 + (1 / 8) ** 2
    assert b.upper == pytest.approx(1.015625, abs=1e-12)


def test_bahadur_bracket_n4():
    b = rare_event.bahadur_bracket(4, 0.75)
    assert b.upper == pytest.approx(2.0, abs=1e-12)
    assert 1.0 <= b.ratio <= 2.0


def test_bahadur_bracket_grid():
    for N in (4, 8, 20, 40, 100, 160, 200):
        for p in (0.625, 0.75, 0.8, 0.9, 0.95):
            k = N * p
            if abs(k - round(k)) > 1e-9 or round(k) + 1 <= (N + 1) / 2:
                continue
            b = rare_event.bahadur_bracket(N, p)
            assert 1.0 <= b.ratio <= b.upper * (1 + 1e-12)


def test_bahadur_domain_error():
    with pytest.raises(DomainError):
        rare_event.bahadur_bracket(100, 0.505)  # denominator not positive


# ---------------------------------------------------------------------------
# L_A
# ---------------------------------------------------------------------------

def test_rare_LA_small_exact():
    value = rare_event.rare_LA(4, 0.75, 0.75, "exact_direct")
    # two-point conditional law, evaluated independently
    nu_a = [4 / 5, 1 / 5]
    mu = [4 * 0.75**3 * 0.25, 0.75**4]
    expected = sum(a * math.log(a / m) for a, m in zip(nu_a, mu))
    assert value == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("N,p", [(4, 0.75), (10, 0.8), (20, 0.8), (50, 0.9), (100, 0.9)])
def test_rare_LA_two_routes_agree(N, p):
    for theta in (p, 0.6, 0.8):
        direct = rare_event.rare_LA(N, p, theta, "exact_direct")
        formula = rare_event.rare_LA(N, p, theta, "exact_formula")
        assert direct == pytest.approx(formula, abs=1e-9)


def test_rare_LA_asymptotic_as_printed():
    value = rare_event.rare_LA(100, 0.9, 0.9, "asymptotic")
    assert value == pytest.approx(65.0165946782896, rel=1e-12)
    # e^{L_A} ~ 1.723e28 under this formula
    assert math.exp(value) == pytest.approx(1.723e28, rel=1e-3)


def test_conditional_tail_support():
    spec = RareBinomialSpec(4, 0.75, 0.75)
    tail = rare_event.conditional_tail(spec)
    max_log_rho_a = math.log((4 / 5) / (4 * 0.75**3 * 0.25))
    assert tail.above(max_log_rho_a - 1e-9) > 0.0
    assert tail.above(max_log_rho_a) == 0.0


def test_thm3_bound_with_exact_conditional_tail():
    spec = RareBinomialSpec(4, 0.75, 0.75)
    L_A = rare_event.rare_LA(4, 0.75, 0.75, "exact_direct")
    tail = rare_event.conditional_tail(spec)
    # the conditional support tops out below L_A + 1, so the tail term is 0
    value = bounds.thm3_bound(L_A, 2.0, tail)
    assert value == pytest.approx(math.exp(-0.5), rel=1e-12)


# ---------------------------------------------------------------------------
# tilt optimization
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("N,p", [(100, 0.9), (4, 0.75), (20, 0.8)])
def test_optimal_tilt_near_p(N, p):
    theta_star = rare_event.optimal_tilt(N, p, grid_step=0.005)
    assert abs(theta_star - p) <= 0.05 + 1e-12


def test_tilt_at_p_beats_preset_alternatives():
    at_p = rare_event.rare_LA(100, 0.9, 0.9, "exact_direct")
    for theta in (0.6, 0.7, 0.8, 0.95):
        assert at_p <= rare_event.rare_LA(100, 0.9, theta, "exact_direct")


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def test_untilted_run_misses_the_event():
    spec = RareBinomialSpec(100, 0.9, 0.5)  # theta = 1/2: plain target sampling
    run = rare_event.rare_is_run(spec, 10**6, seed=3)
    assert run.estimate == 0.0


def test_tilted_run_small_case_within_3se():
    spec = RareBinomialSpec(4, 0.75, 0.75)
    n = 10**5
    run = rare_event.rare_is_run(spec, n, seed=7)
    # exact sampling variance of the truncated estimator
    j = np.arange(3, 5)
    nu = np.array([math.comb(4, int(x)) for x in j]) / 16.0
    mu = np.array([4 * 0.75**3 * 0.25, 0.75**4])
    var1 = float(np.sum(nu**2 / mu)) - float(nu.sum()) ** 2
    se = math.sqrt(var1 / n)
    assert abs(run.estimate - 5 / 16) <= 3 * se


def test_truncated_estimator_unbiased_by_enumeration():
    for N, p, theta in ((4, 0.75, 0.75), (20, 0.8, 0.7), (100, 0.9, 0.9)):
        spec = RareBinomialSpec(N, p, theta)
        mean = rare_event.exact_truncated_mean(spec)
        exact = rare_event.binom_tail(N, spec.k).value
        assert mean == pytest.approx(exact, rel=1e-12)


def test_thm3_consistency_n20():
    spec = RareBinomialSpec(20, 0.8, 0.8)
    L_A = rare_event.rare_LA(20, 0.8, 0.8, "exact_direct")
    t = 8.0
    n = math.ceil(math.exp(L_A + t))
    devs = []
    for i in range(200):
        run = rare_event.rare_is_run(spec, n, seed=100 + i)
        devs.append(abs(run.ratio_to_exact - 1.0))
    devs = np.array(devs)
    bound = bounds.thm3_bound(L_A, t, rare_event.conditional_tail(spec))
    se = devs.std(ddof=1) / math.sqrt(len(devs))
    assert devs.mean() <= bound + 3 * se


def test_spec_validation():
    with pytest.raises(DomainError):
        RareBinomialSpec(100, 0.45, 0.9)
    with pytest.raises(DomainError):
        RareBinomialSpec(100, 0.855, 0.9)  # Np not integral
    with pytest.raises(DomainError):
        RareBinomialSpec(100, 0.9, 1.5)
