import math

import numpy as np
import pytest

from isamp import model
from isamp._rng import stream
from isamp.errors import DomainError, UnsupportedError


def test_identity_log_weight_is_zero():
    pair = model.identity_pair(2)
    assert pair.log_weight(0) == 0.0
    assert np.all(pair.log_weight([0, 1, 1]) == 0.0)


def test_exp_pair_log_weight():
    pair = model.exp_pair()
    # rho(x) = (1/2) e^{x/2}
    assert pair.log_weight(0.0) == pytest.approx(-math.log(2), abs=1e-15)
    assert pair.log_weight(2.0) == pytest.approx(1.0 - math.log(2), abs=1e-15)
    with pytest.raises(DomainError):
        pair.log_weight(-0.1)


def test_binom_pair_log_weight_at_50():
    pair = model.binom_pair(100, 0.5, 0.55)
    expected = 50 * math.log(1.1) + 50 * math.log(0.9)
    assert pair.log_weight(50) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(DomainError):
        pair.log_weight(101)


def test_enumerate_identity_on_two_points():
    enum = model.enumerate_pair(model.identity_pair(2))
    assert len(enum.points) == 2
    assert np.all(enum.log_rho == 0.0)
    assert enum.mu_total == pytest.approx(1.0, abs=1e-12)


def test_enumerate_binom_masses():
    enum = model.enumerate_pair(model.binom_pair(100, 0.5, 0.55))
    assert len(enum.points) == 101
    assert abs(enum.rho_mu_total - 1.0) < 1e-12
    assert abs(enum.mu_total - 1.0) < 1e-12
    assert abs(enum.nu_total - 1.0) < 1e-12


def test_enumerate_counterexample_weights():
    N = 10
    enum = model.enumerate_pair(model.counterexample_pair(N))
    assert np.allclose(enum.log_rho[:-1], -math.log(2.0), atol=1e-15)
    assert enum.log_rho[-1] == pytest.approx(math.log((N + 1) / 2.0), abs=1e-15)


def test_enumerate_rejects_closed_form_pairs():
    with pytest.raises(UnsupportedError):
        model.enumerate_pair(model.exp_pair())


def test_absolute_continuity_checked_at_enumeration():
    bad = model.PairModel(
        name="bad",
        log_weight_fn=lambda x: np.zeros(np.shape(x)),
        support=model.FINITE,
        points=np.array([0, 1]),
        log_mu=np.array([0.0, -np.inf]),
        log_nu=np.array([math.log(0.5), math.log(0.5)]),
    )
    with pytest.raises(DomainError, match="absolute continuity"):
        model.enumerate_pair(bad)


@pytest.mark.parametrize("factory,kwargs", [
    (model.identity_pair, {"size": 5}),
    (model.binom_pair, {"N": 100, "p0": 0.5, "p1": 0.55}),
    (model.binom_pair, {"N": 100, "p0": 0.5, "p1": 0.7}),
    (model.counterexample_pair, {"N": 50}),
])
def test_unbiasedness_base_identity(factory, kwargs):
    enum = model.enumerate_pair(factory(**kwargs))
    assert abs(enum.rho_mu_total - 1.0) < 1e-12


@pytest.mark.parametrize("factory,kwargs", [
    (model.identity_pair, {"size": 5}),
    (model.binom_pair, {"N": 100, "p0": 0.5, "p1": 0.55}),
    (model.counterexample_pair, {"N": 50}),
])
def test_closed_form_log_weight_matches_enumeration(factory, kwargs):
    pair = factory(**kwargs)
    enum = model.enumerate_pair(pair)
    keep = enum.nu > 0
    direct = pair.log_weight(enum.points[keep])
    from_masses = np.log(enum.nu[keep]) - np.log(enum.mu[keep])
    assert np.max(np.abs(direct - from_masses)) < 1e-10


@pytest.mark.parametrize("factory,kwargs", [
    (model.identity_pair, {"size": 5}),
    (model.binom_pair, {"N": 100, "p0": 0.5, "p1": 0.5}),
    (model.counterexample_pair, {"N": 40}),
])
def test_sampler_frequencies_match_mu(factory, kwargs):
    pair = factory(**kwargs)
    enum = model.enumerate_pair(pair)
    n = 10**5
    draws = pair.sample(stream(2024, 0), n)
    idx = {int(p): i for i, p in enumerate(enum.points)}
    counts = np.zeros(len(enum.points))
    vals, cnts = np.unique(draws, return_counts=True)
    for v, c in zip(vals, cnts):
        counts[idx[int(v)]] = c
    freqs = counts / n
    se = np.sqrt(enum.mu * (1 - enum.mu) / n)
    assert np.all(np.abs(freqs - enum.mu) <= 5 * np.maximum(se, 1e-12))


def test_large_binom_refuses_to_sample():
    pair = model.large_binom_pair()
    with pytest.raises(UnsupportedError):
        pair.sample(stream(0, 0), 10)


def test_large_binom_normal_parameters():
    mean, sd = model.large_binom_pair().logrho_normal
    assert mean == pytest.approx(368064.2, abs=0.1)
    assert sd == pytest.approx(659.167, abs=0.001)


def test_weight_classes_groups_counterexample():
    probs, log_rho, fv = model.weight_classes(model.counterexample_pair(10**4))
    assert len(probs) == 2
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert fv is None


def test_weight_classes_with_integrand():
    probs, log_rho, fv = model.weight_classes(model.identity_pair(3), "x")
    assert len(probs) == 3  # same log rho but distinct f values
    assert sorted(fv) == [0.0, 1.0, 2.0]


def test_make_pair_errors():
    with pytest.raises(DomainError):
        model.make_pair("nope")
    with pytest.raises(DomainError):
        model.make_pair("binom", N=100)


def test_unnormalized_shift_view():
    pair = model.with_constant_shift(model.binom_pair(20, 0.5, 0.6), 3.7)
    assert pair.normalization == model.UNNORMALIZED
    base = model.binom_pair(20, 0.5, 0.6)
    assert pair.log_weight(10) == pytest.approx(base.log_weight(10) - 3.7, abs=1e-12)
