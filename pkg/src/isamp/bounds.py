"""Computable error bounds and the sample-size cutoff.

Everything here is driven by two inputs: the Kullback-Leibler
divergence L = E_nu(log rho(Y)) and the tail of log rho(Y) under the
target.  With n = exp(L + t), t >= 0,

    E|I_n(f) - I(f)|  <=  ||f|| (e^{-t/4} + 2 sqrt(P(log rho(Y) > L + t/2)))

and with n = exp(L - t),

    P(I_n(1) >= 1 - delta)  <=  e^{-t/2} + P(log rho(Y) <= L - t/2) / (1 - delta),

so a sample of size about e^L is both sufficient and necessary.  The
module also evaluates the self-normalized (J_n) analogue, the
rare-event analogue driven by the conditioned divergence L_A, the
exact variance of I_n(f), the inverse problem (smallest t meeting a
target error), and two facts about convergence diagnostics: the
universal sample-size bound at which the empirical-variance test
reports convergence regardless of the problem, and the necessity bound
forcing q_n to be small whenever I_n(1) has converged in L^1.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._logspace import LOG_ZERO
from ._rng import stream
from .errors import DomainError, NoSolutionError, UnsupportedError
from .model import CLOSED_FORM, PairModel, enumerate_pair, resolve_integrand

#: largest log n for which n itself is returned in linear scale
MAX_LINEAR_LOG_N = 700.0

UPPER = "upper"
LOWER = "lower"


# ---------------------------------------------------------------------------
# tail models for log rho(Y)
# ---------------------------------------------------------------------------

class TailModel:
    """Distribution of log rho(Y) under the target, reduced to its tails.

    ``above(c)`` returns P(log rho(Y) > c) and ``at_or_below(c)`` its
    complement; both always lie in [0, 1].
    """

    def __init__(self, above_fn, kind):
        self._above = above_fn
        self.kind = kind

    def above(self, c):
        return min(1.0, max(0.0, float(self._above(float(c)))))

    def at_or_below(self, c):
        return min(1.0, max(0.0, 1.0 - self._above(float(c))))

    @classmethod
    def from_discrete(cls, values, masses, kind="exact_enumeration"):
        """Exact tails of a discrete law given point values and masses."""
        values = np.asarray(values, dtype=float)
        masses = np.asarray(masses, dtype=float)
        order = np.argsort(values)
        values = values[order]
        masses = masses[order]
        total = masses.sum()
        if total <= 0:
            raise DomainError("tail model needs positive total mass")
        masses = masses / total
        # tail_from[i] = P(value >= values[i]), accumulated from the top
        tail_from = np.cumsum(masses[::-1])[::-1]

        def above(c):
            i = np.searchsorted(values, c, side="right")
            return float(tail_from[i]) if i < len(values) else 0.0

        return cls(above, kind)

    @classmethod
    def exact_enumeration(cls, pair):
        """Exact tail sums of nu-mass over a finite pair's support."""
        enum = enumerate_pair(pair)
        keep = enum.nu > 0.0
        return cls.from_discrete(enum.log_rho[keep], enum.nu[keep])

    @classmethod
    def closed_form(cls, fn):
        return cls(fn, "closed_form")

    @classmethod
    def normal(cls, mean, sd):
        """Normal approximation; the tail is erfc-based, good out to z ~ 8."""
        if sd <= 0:
            raise DomainError("normal tail needs sd > 0")

        def above(c):
            z = (c - mean) / sd
            return 0.5 * math.erfc(z / math.sqrt(2.0))

        return cls(above, "normal")

    @classmethod
    def monte_carlo(cls, pair, replicates=10**5, seed=0):
        """Empirical tail from target draws (pairs without exact tails)."""
        if pair.target_sampler is None:
            raise UnsupportedError(f"pair {pair.name!r} has no target sampler for Monte Carlo tails")
        y = pair.sample_target(stream(seed, 0), int(replicates))
        lr = np.sort(np.asarray(pair.log_weight(y), dtype=float))

        def above(c):
            return 1.0 - np.searchsorted(lr, c, side="right") / lr.size

        return cls(above, "monte_carlo")

    @classmethod
    def for_pair(cls, pair):
        """Best available tail for a pair: exact, closed form, or normal."""
        if pair.logrho_tail_fn is not None:
            return cls.closed_form(pair.logrho_tail_fn)
        if pair.enumerable:
            return cls.exact_enumeration(pair)
        if pair.logrho_normal is not None:
            return cls.normal(*pair.logrho_normal)
        raise UnsupportedError(f"no tail model available for pair {pair.name!r}")


def logrho_tail(tail, c, side="above"):
    """P(log rho(Y) > c) or P(log rho(Y) <= c) for a TailModel."""
    if side == "above":
        return tail.above(c)
    if side in ("at_or_below", "below"):
        return tail.at_or_below(c)
    raise DomainError(f"unknown tail side {side!r}")


# ---------------------------------------------------------------------------
# KL divergence
# ---------------------------------------------------------------------------

def kl_divergence(pair, method="auto"):
    """L = D(nu||mu) in nats, from the closed form or exact enumeration."""
    if method == "auto":
        method = "closed_form" if pair.kl_closed_form is not None else "enumerate"
    if method in ("closed_form", "closed"):
        if pair.kl_closed_form is None:
            raise UnsupportedError(f"pair {pair.name!r} has no closed-form divergence")
        value = float(pair.kl_closed_form)
    elif method == "enumerate":
        enum = enumerate_pair(pair)
        keep = enum.nu > 0.0
        value = float(np.sum(enum.nu[keep] * enum.log_rho[keep]))
    else:
        raise DomainError(f"unknown KL method {method!r}")
    if value < -1e-12:
        raise DomainError(f"computed divergence {value} is negative beyond rounding")
    return max(value, 0.0)


def kl_divergence_mc(pair, n=10**5, seed=0):
    """Monte-Carlo estimate of the divergence from target draws, with s.e."""
    if pair.target_sampler is None:
        raise UnsupportedError(f"pair {pair.name!r} has no target sampler")
    y = pair.sample_target(stream(seed, 0), int(n))
    lr = np.asarray(pair.log_weight(y), dtype=float)
    return float(lr.mean()), float(lr.std(ddof=1) / math.sqrt(lr.size))


# ---------------------------------------------------------------------------
# the three error bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundQuery:
    """Inputs to the error bounds.

    ``t`` is the log-scale slack: the sample size is exp(L + t) for an
    upper bound and exp(L - t) for a lower bound.
    """

    L: float
    t: float
    f_norm: float = 1.0
    delta: float = 0.5
    side: str = UPPER

    def __post_init__(self):
        if self.t < 0:
            raise DomainError("slack t must be nonnegative")
        if not (0.0 < self.delta < 1.0):
            raise DomainError("delta must lie in (0, 1)")
        if self.f_norm < 0:
            raise DomainError("f_norm must be nonnegative")

    @classmethod
    def for_log_n(cls, L, log_n, side=UPPER, **kw):
        """Build a query from log n, choosing t by the side's convention."""
        t = log_n - L if side == UPPER else L - log_n
        if t < 0:
            raise DomainError(
                f"log n = {log_n} is on the wrong side of L = {L} for a {side} bound")
        return cls(L=L, t=t, side=side, **kw)


def thm1_bound(query, tail):
    """L^1 error bound (upper side) or failure-probability bound (lower)."""
    if query.side == UPPER:
        p = tail.above(query.L + query.t / 2.0)
        return query.f_norm * (math.exp(-query.t / 4.0) + 2.0 * math.sqrt(p))
    p = tail.at_or_below(query.L - query.t / 2.0)
    return min(1.0, math.exp(-query.t / 2.0) + p / (1.0 - query.delta))


class Thm2Bound(NamedTuple):
    epsilon: float
    threshold: float
    probability: float


def thm2_bound(query, tail):
    """Self-normalized analogue: P(|J_n - I(f)| >= threshold) <= probability.

    epsilon is the square root of the un-normed theorem-1 bracket; when
    it reaches 1 the statement is vacuous (infinite threshold).
    """
    inner = math.exp(-query.t / 4.0) + 2.0 * math.sqrt(tail.above(query.L + query.t / 2.0))
    eps = math.sqrt(inner)
    if eps >= 1.0:
        return Thm2Bound(eps, math.inf, 1.0)
    return Thm2Bound(eps, 2.0 * query.f_norm * eps / (1.0 - eps), min(2.0 * eps, 1.0))


def thm3_bound(L_A, t, conditional_tail, delta=0.5, side=UPPER):
    """Rare-event ratio bounds, driven by L_A = D(nu_A||mu).

    ``conditional_tail`` is the law of log rho_A(Y) given Y in A.  The
    upper side bounds E|I_n(1_A)/nu(A) - 1| at n = exp(L_A + t); the
    lower side bounds P(I_n(1_A)/nu(A) >= 1 - delta) at n = exp(L_A - t).
    """
    if t < 0:
        raise DomainError("slack t must be nonnegative")
    if side == UPPER:
        p = conditional_tail.above(L_A + t / 2.0)
        return math.exp(-t / 4.0) + 2.0 * math.sqrt(p)
    if not (0.0 < delta < 1.0):
        raise DomainError("delta must lie in (0, 1)")
    p = conditional_tail.at_or_below(L_A - t / 2.0)
    return min(1.0, math.exp(-t / 2.0) + p / (1.0 - delta))


# ---------------------------------------------------------------------------
# exact variance of I_n(f)
# ---------------------------------------------------------------------------

def _variance_log_m2(pair, f):
    """log of the second moment integral f^2 rho d nu, or None."""
    if pair.enumerable:
        enum = enumerate_pair(pair)
        fv = np.asarray(resolve_integrand(f)(enum.points), dtype=float)
        keep = (enum.nu > 0.0) & (fv != 0.0)
        if not np.any(keep):
            return LOG_ZERO
        logs = 2.0 * np.log(np.abs(fv[keep])) + enum.log_rho[keep] + np.log(enum.nu[keep])
        from scipy.special import logsumexp
        return float(logsumexp(logs))
    if pair.name in ("exp12",):
        # integral of f^2 rho d nu is (1/4) integral f(y)^2 dy: divergent
        # for both built-in integrands.
        return math.inf
    if pair.name in ("binom", "large-binom") and (f == "one" or f is None):
        N, p0, p1 = pair.params["N"], pair.params["p0"], pair.params["p1"]
        return N * math.log(p1 * p1 / p0 + (1.0 - p1) * (1.0 - p1) / (1.0 - p0))
    raise UnsupportedError(f"no exact variance for {f!r} on pair {pair.name!r}")


def exact_variance(pair, f):
    """Var(I_1(f)) = integral f^2 rho d nu - I(f)^2; +inf if divergent.

    Var(I_n(f)) is this value divided by n.
    """
    log_m2 = _variance_log_m2(pair, f)
    if log_m2 == math.inf:
        return math.inf
    m2 = math.exp(log_m2) if log_m2 < MAX_LINEAR_LOG_N else math.inf
    if m2 == math.inf:
        return math.inf
    i = pair.exact_integral(f)
    return max(m2 - i * i, 0.0)


def exact_variance_log(pair, f):
    """log of exact_variance, usable when the linear value overflows."""
    log_m2 = _variance_log_m2(pair, f)
    if log_m2 == math.inf:
        return math.inf
    i = pair.exact_integral(f)
    if i == 0.0:
        return log_m2
    log_i2 = 2.0 * math.log(abs(i))
    if log_m2 <= log_i2:
        return LOG_ZERO
    return log_m2 + math.log1p(-math.exp(log_i2 - log_m2))


# ---------------------------------------------------------------------------
# inverse problem and diagnostic theorems
# ---------------------------------------------------------------------------

class SampleSizeResult(NamedTuple):
    t: float
    log_n: float
    n: int | None


def required_sample_size(L, f_norm, tail, target_error, t_tol=1e-9):
    """Smallest t with theorem-1 upper bound <= target_error.

    The bound is monotone non-increasing in t, so bisection applies.
    Returns (t, log n = L + t, n), with n given in linear scale only
    when log n <= 700; raises NoSolutionError when the bound's floor
    (set by a tail bounded away from zero) exceeds the target.
    """
    if target_error <= 0:
        raise DomainError("target error must be positive")

    def bound(t):
        return f_norm * (math.exp(-t / 4.0) + 2.0 * math.sqrt(tail.above(L + t / 2.0)))

    def result(t):
        log_n = L + t
        n = None
        if log_n <= MAX_LINEAR_LOG_N:
            # shave the bisection overshoot so exact-integer solutions
            # are not pushed to the next integer
            n = math.ceil(math.exp(log_n) * (1.0 - 2e-9))
        return SampleSizeResult(t, log_n, n)

    if bound(0.0) <= target_error:
        return result(0.0)
    hi = 1.0
    while bound(hi) > target_error:
        hi *= 2.0
        if hi > 1e9:
            raise NoSolutionError(
                f"theorem-1 bound never reaches {target_error}; tail is bounded away from zero")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > t_tol:
        mid = 0.5 * (lo + hi)
        if bound(mid) <= target_error:
            hi = mid
        else:
            lo = mid
    return result(hi)


def flaw_bound(epsilon):
    """log10 of the universal sample size eps^-2 * 2^(1 + eps^-3).

    By that sample size the empirical-variance diagnostic reports
    convergence with probability at least 1 - 4 eps, for every pair of
    measures; computed in log scale because the value is astronomical.
    """
    if not (0.0 < epsilon <= 1.0):
        raise DomainError("epsilon must lie in (0, 1]")
    return -2.0 * math.log10(epsilon) + (1.0 + epsilon ** -3) * math.log10(2.0)


def qn_necessity_bound(epsilon_n, n):
    """Bracket max{1/n, loglog(1/eps)/log(1/eps)} bounding q_n.

    The theorem reads q_n <= C times this bracket for a universal
    constant C that is not pinned down; the bare bracket (C = 1) is
    returned and callers should label it 'up to a universal constant'.
    """
    if not (0.0 < epsilon_n < 1.0):
        raise DomainError("epsilon_n must lie in (0, 1)")
    if n < 1:
        raise DomainError("n must be at least 1")
    log_inv = math.log(1.0 / epsilon_n)
    second = math.log(log_inv) / log_inv if log_inv > 0 else -math.inf
    return max(1.0 / n, second)
