"""Rare-event estimation for the symmetric binomial upper tail.

The target nu is Binomial(N, 1/2) and the event is A = {j : Np <= j <= N}
for p > 1/2 with Np integral, so nu(A) is a far-tail probability.  The
proposal tilts the coin to mu = Binomial(N, theta) and estimates

    I_n(A) = (1/n) sum (nu(X_i)/mu(X_i)) 1_A(X_i).

The sample size that makes the ratio I_n(A)/nu(A) accurate is
exp(D(nu_A||mu)), with nu_A the target conditioned on A.  This module
provides the exact tail masses (integer arithmetic up to N = 1000), the
truncated-moment identity of de Moivre and the Bahadur bracket used to
control them, two independent routes to L_A = D(nu_A||mu), the tilt
that minimizes it, and the simulation itself.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp

from ._rng import stream
from .bounds import TailModel
from .errors import DomainError

EXACT_INTEGER_CAP = 1000

EXACT_DIRECT = "exact_direct"
EXACT_FORMULA = "exact_formula"
ASYMPTOTIC = "asymptotic"


@dataclass(frozen=True)
class RareBinomialSpec:
    """Event A = {j : Np <= j <= N} under nu = Binomial(N, 1/2).

    ``theta`` is the tilt of the sampling measure mu = Binomial(N, theta).
    """

    N: int
    p: float
    theta: float

    def __post_init__(self):
        if not 0.5 < self.p < 1.0:
            raise DomainError("p must lie in (1/2, 1)")
        if not 0.0 < self.theta < 1.0:
            raise DomainError("theta must lie in (0, 1)")
        if abs(self.N * self.p - round(self.N * self.p)) > 1e-9:
            raise DomainError(f"N*p = {self.N * self.p} must be an integer")

    @property
    def k(self):
        return int(round(self.N * self.p))


class BinomTail(NamedTuple):
    value: float
    log_value: float


def binom_tail(N, k):
    """P(Binomial(N, 1/2) >= k) and its natural log.

    Exact integer arithmetic through N = 1000; log-space summation above.
    """
    if not 0 <= k <= N:
        raise DomainError(f"need 0 <= k <= N, got k={k}, N={N}")
    if N <= EXACT_INTEGER_CAP:
        total = sum(math.comb(N, j) for j in range(k, N + 1))
        value = float(Fraction(total, 2 ** N))
        log_value = math.log(total) - N * math.log(2.0)
        return BinomTail(value, log_value)
    j = np.arange(k, N + 1)
    logs = gammaln(N + 1) - gammaln(j + 1) - gammaln(N - j + 1) - N * math.log(2.0)
    log_value = float(logsumexp(logs))
    return BinomTail(math.exp(log_value), log_value)


def binom_point(N, k):
    """P(Binomial(N, 1/2) = k) as an exact Fraction (N <= 1000)."""
    if N > EXACT_INTEGER_CAP:
        raise DomainError(f"exact point mass limited to N <= {EXACT_INTEGER_CAP}")
    return Fraction(math.comb(N, k), 2 ** N)


class DeMoivreResult(NamedTuple):
    lhs: Fraction
    rhs: Fraction
    equal: bool


def de_moivre_identity(N, k):
    """Both sides of 2^-N sum_{k<=j<=N} C(N,j)(j - N/2) = (k/2) b(k; N, 1/2).

    Evaluated in exact rational arithmetic; ``equal`` must come out True.
    """
    if not 0 <= k <= N:
        raise DomainError(f"need 0 <= k <= N, got k={k}, N={N}")
    lhs = sum(Fraction(math.comb(N, j), 1) * (Fraction(j) - Fraction(N, 2))
              for j in range(k, N + 1)) / Fraction(2 ** N)
    rhs = Fraction(k, 2) * binom_point(N, k)
    return DeMoivreResult(lhs, rhs, lhs == rhs)


class BahadurBracket(NamedTuple):
    R: float
    Z: float
    ratio: float
    upper: float


def bahadur_bracket(N, p):
    """Bahadur's two-sided bracket 1 <= R/Z <= 1 + x^-2 for the tail Z.

    R = (1/2) b(Np; N, 1/2) (Np+1)/(Np+1-(N+1)/2) and x = (Np-N/2)/sqrt(N/4).
    Requires Np integral and Np+1 > (N+1)/2.
    """
    k = round(N * p)
    if abs(N * p - k) > 1e-9:
        raise DomainError("N*p must be an integer")
    denom = Fraction(k + 1) - Fraction(N + 1, 2)
    if denom <= 0:
        raise DomainError("bracket needs Np + 1 > (N + 1)/2")
    R = Fraction(1, 2) * binom_point(N, k) * Fraction(k + 1) / denom
    Z = Fraction(sum(math.comb(N, j) for j in range(k, N + 1)), 2 ** N)
    ratio = R / Z
    x = (k - N / 2.0) / math.sqrt(N / 4.0)
    upper = 1.0 + x ** -2
    if not (1 <= ratio and float(ratio) <= upper * (1 + 1e-15)):
        raise DomainError(f"bracket violated: ratio = {float(ratio)}, upper = {upper}")
    return BahadurBracket(float(R), float(Z), float(ratio), upper)


def _log_mu(spec, j):
    """log Binomial(N, theta) pmf."""
    N, th = spec.N, spec.theta
    j = np.asarray(j, dtype=float)
    return (gammaln(N + 1) - gammaln(j + 1) - gammaln(N - j + 1)
            + j * math.log(th) + (N - j) * math.log1p(-th))


def _conditional_law(spec):
    """(j values over A, log nu_A masses, log rho_A values)."""
    N, k = spec.N, spec.k
    j = np.arange(k, N + 1)
    log_nu = (gammaln(N + 1) - gammaln(j + 1) - gammaln(N - j + 1)
              - N * math.log(2.0))
    log_z = binom_tail(N, k).log_value
    log_nu_a = log_nu - log_z
    log_rho_a = log_nu_a - _log_mu(spec, j)
    return j, log_nu_a, log_rho_a


def rare_LA(N, p, theta, mode=EXACT_DIRECT):
    """L_A = D(nu_A||mu) by direct summation, the closed formula, or the
    printed large-N asymptotic.

    The two exact routes must agree to ~1e-9; the asymptotic
    -2N log(p^p (1-p)^{1-p}) is reported as printed in its source and
    disagrees wildly with the exact value (the exact routes are the
    truth; see the package README).
    """
    spec = RareBinomialSpec(N, p, theta)
    if mode == EXACT_DIRECT:
        _, log_nu_a, log_rho_a = _conditional_law(spec)
        return float(np.sum(np.exp(log_nu_a) * log_rho_a))
    if mode == EXACT_FORMULA:
        k = spec.k
        tail = binom_tail(N, k)
        b_point = float(binom_point(N, k))
        first = -(N * math.log(2.0) + tail.log_value + N * math.log1p(-theta))
        second = math.log(theta / (1.0 - theta)) * (
            k / (2.0 * tail.value) * b_point + N / 2.0)
        return first - second
    if mode == ASYMPTOTIC:
        return -2.0 * N * (p * math.log(p) + (1.0 - p) * math.log1p(-p))
    raise DomainError(f"unknown mode {mode!r}")


def conditional_tail(spec):
    """TailModel of log rho_A(Y) given Y in A (exact discrete law)."""
    _, log_nu_a, log_rho_a = _conditional_law(spec)
    return TailModel.from_discrete(log_rho_a, np.exp(log_nu_a))


def optimal_tilt(N, p, grid_step=0.005):
    """Grid argmin of L_A over tilts theta in (1/2, 1)."""
    if grid_step <= 0:
        raise DomainError("grid step must be positive")
    thetas = np.arange(0.5 + grid_step, 1.0 - grid_step / 2.0, grid_step)
    values = [rare_LA(N, p, th, EXACT_DIRECT) for th in thetas]
    return float(thetas[int(np.argmin(values))])


class RareRunResult(NamedTuple):
    estimate: float
    ratio_to_exact: float
    log10_estimate: float


def rare_is_run(spec, n, seed=0):
    """Truncated importance-sampling estimate of nu(A) from n tilted draws.

    Draws reduce to multinomial counts over the support (the estimate
    depends on them only through counts), and the weighted sum is
    accumulated in log space because the weights are far-tail masses.
    """
    if n < 1:
        raise DomainError("need n >= 1")
    N = spec.N
    j = np.arange(N + 1)
    mu_log = _log_mu(spec, j)
    mu_pmf = np.exp(mu_log)
    mu_pmf = mu_pmf / mu_pmf.sum()
    counts = stream(seed, 0).multinomial(int(n), mu_pmf)
    nu_log = (gammaln(N + 1) - gammaln(j + 1.0) - gammaln(N - j + 1.0)
              - N * math.log(2.0))
    in_a = (j >= spec.k) & (counts > 0)
    exact = binom_tail(N, spec.k)
    if not np.any(in_a):
        return RareRunResult(0.0, 0.0, -math.inf)
    log_terms = np.log(counts[in_a]) + nu_log[in_a] - mu_log[in_a]
    log_est = float(logsumexp(log_terms)) - math.log(n)
    return RareRunResult(
        estimate=math.exp(log_est),
        ratio_to_exact=math.exp(log_est - exact.log_value),
        log10_estimate=log_est / math.log(10.0),
    )


def exact_truncated_mean(spec):
    """E(I_n(1_A)) under the tilt, by full enumeration: equals nu(A)."""
    N = spec.N
    j = np.arange(spec.k, N + 1)
    nu_log = (gammaln(N + 1) - gammaln(j + 1.0) - gammaln(N - j + 1.0)
              - N * math.log(2.0))
    # mu * rho = nu on A, so the expectation is the exact tail mass
    return float(np.exp(logsumexp(nu_log)))
