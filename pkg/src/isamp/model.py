"""Proposal/target distribution pairs and their log-weights.

A :class:`PairModel` bundles a proposal measure mu (the one we sample),
a target measure nu (the one whose integrals we want), and the
log-density ratio log(d nu / d mu), carried in natural-log scale
end-to-end.  Built-in pairs cover the worked examples used elsewhere in
the package: an exponential pair, binomial pairs, an analytically
handled binomial pair far too large to sample, and a uniform pair with
a single huge-weight point that defeats weight-degeneracy diagnostics.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from .errors import DomainError, UnsupportedError

FINITE = "finite"
CLOSED_FORM = "closed_form"
SIMULATION_ONLY = "simulation_only"

NORMALIZED = "normalized"
UNNORMALIZED = "unnormalized"

#: Named integrands accepted by the CLI and the experiment runners.
INTEGRANDS = {
    "one": lambda x: np.ones_like(np.asarray(x, dtype=float)),
    "x": lambda x: np.asarray(x, dtype=float),
}


def resolve_integrand(f):
    """Accept a callable or one of the integrand names in INTEGRANDS."""
    if callable(f):
        return f
    try:
        return INTEGRANDS[f]
    except KeyError:
        raise DomainError(f"unknown integrand {f!r}; expected one of {sorted(INTEGRANDS)}")


@dataclass(frozen=True)
class PairModel:
    """A proposal/target pair with vectorized sampling and log-weights.

    ``log_weight_fn`` returns log rho(x) for normalized pairs and
    log tau(x) (rho = C * tau with C unknown) for unnormalized ones.
    Finite pairs carry their full support as (points, log_mu, log_nu)
    arrays; closed-form pairs may carry analytic hooks used by the
    bounds module (exact KL, log-weight tail, L2 norms of the named
    integrands under nu).
    """

    name: str
    log_weight_fn: Callable
    support: str = FINITE
    normalization: str = NORMALIZED
    sampler: Optional[Callable] = None          # (rng, size) -> points
    target_sampler: Optional[Callable] = None   # (rng, size) -> points
    points: Optional[np.ndarray] = None
    log_mu: Optional[np.ndarray] = None
    log_nu: Optional[np.ndarray] = None
    kl_closed_form: Optional[float] = None
    logrho_tail_fn: Optional[Callable] = None   # c -> P_nu(log rho(Y) > c)
    logrho_normal: Optional[tuple] = None       # (mean, sd) of log rho(Y) under nu
    f_l2_norms: dict = field(default_factory=dict)
    f_integrals: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def log_weight(self, x):
        """log rho(x) (or log tau(x)); raises DomainError off mu's support."""
        return self.log_weight_fn(np.asarray(x))

    def sample(self, rng, size):
        """Draw ``size`` i.i.d. proposal points."""
        if self.sampler is None:
            raise UnsupportedError(f"pair {self.name!r} is analytic only and cannot be sampled")
        return self.sampler(rng, size)

    def sample_target(self, rng, size):
        if self.target_sampler is None:
            raise UnsupportedError(f"pair {self.name!r} has no target sampler")
        return self.target_sampler(rng, size)

    @property
    def enumerable(self):
        return self.support == FINITE

    def f_l2_norm(self, f):
        """L2(nu) norm of an integrand, exact where the pair allows it."""
        if self.enumerable:
            fn = resolve_integrand(f)
            fv = np.asarray(fn(self.points), dtype=float)
            return float(np.sqrt(np.sum(fv * fv * np.exp(self.log_nu))))
        if isinstance(f, str) and f in self.f_l2_norms:
            return self.f_l2_norms[f]
        raise UnsupportedError(f"no closed-form L2 norm for {f!r} on pair {self.name!r}")

    def exact_integral(self, f):
        """I(f) = integral of f d(nu), exact where the pair allows it."""
        if self.enumerable:
            fn = resolve_integrand(f)
            fv = np.asarray(fn(self.points), dtype=float)
            return float(np.sum(fv * np.exp(self.log_nu)))
        if isinstance(f, str) and f in self.f_integrals:
            return self.f_integrals[f]
        if (isinstance(f, str) and f == "one") or f is None:
            if self.normalization == NORMALIZED:
                return 1.0
        raise UnsupportedError(f"no exact integral for {f!r} on pair {self.name!r}")


@dataclass(frozen=True)
class EnumeratedPair:
    """Complete support listing of a finite pair, with its mass checks."""

    points: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    log_rho: np.ndarray
    mu_total: float
    nu_total: float
    rho_mu_total: float

    def rows(self):
        for i in range(len(self.points)):
            yield self.points[i], self.mu[i], self.nu[i], self.log_rho[i]


def log_weight(pair, x):
    """Module-level alias for PairModel.log_weight."""
    return pair.log_weight(x)


def enumerate_pair(pair, check_tol=1e-12):
    """List a finite pair's support as (point, mu, nu, log rho) arrays.

    Masses are computed in log space and exponentiated; the three mass
    identities (mu and nu sum to 1, sum of rho*mu equals 1) are checked
    against ``check_tol`` for normalized pairs, and absolute continuity
    (nu-mass only where mu-mass is positive) is always enforced.
    """
    if not pair.enumerable:
        raise UnsupportedError(f"pair {pair.name!r} has no enumerable support")
    log_mu, log_nu = pair.log_mu, pair.log_nu
    bad = (log_mu == -np.inf) & (log_nu > -np.inf)
    if np.any(bad):
        pts = np.asarray(pair.points)[bad][:5]
        raise DomainError(f"pair {pair.name!r} violates absolute continuity at {pts!r}")
    mu = np.exp(log_mu)
    nu = np.exp(log_nu)
    log_rho = np.where(log_nu == -np.inf, -np.inf, log_nu - log_mu)
    mu_total = float(np.sum(mu))
    nu_total = float(np.sum(nu))
    rho_mu_total = float(np.sum(np.exp(log_rho + log_mu)))
    if pair.normalization == NORMALIZED:
        for label, total in (("mu", mu_total), ("nu", nu_total), ("rho*mu", rho_mu_total)):
            if abs(total - 1.0) > check_tol:
                raise DomainError(
                    f"pair {pair.name!r}: sum of {label} is {total!r}, off 1 by more than {check_tol}"
                )
    return EnumeratedPair(np.asarray(pair.points), mu, nu, log_rho,
                          mu_total, nu_total, rho_mu_total)


def weight_classes(pair, f=None):
    """Aggregate a finite pair's support into distinct weight classes.

    Exchangeability means any statistic of an i.i.d. batch that depends
    only on the multiset of (log rho, f) values can be simulated from
    multinomial counts over these classes instead of per-point draws.
    Returns (probs, log_rho, f_values); f_values is None when no
    integrand is given and classes then merge points of equal log rho.
    """
    enum = enumerate_pair(pair)
    if f is None:
        keys = enum.log_rho
        uniq, inverse = np.unique(keys, return_inverse=True)
        probs = np.zeros(len(uniq))
        np.add.at(probs, inverse, enum.mu)
        return probs, uniq, None
    fn = resolve_integrand(f)
    fv = np.asarray(fn(enum.points), dtype=float)
    keys = np.stack([enum.log_rho, fv], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    probs = np.zeros(len(uniq))
    np.add.at(probs, inverse, enum.mu)
    return probs, uniq[:, 0].copy(), uniq[:, 1].copy()


def with_constant_shift(pair, log_c):
    """Unnormalized view of a pair: log tau = log rho - log_c.

    Used to exercise code paths that must not depend on the unknown
    normalizing constant (J_n, Q_n).
    """
    base = pair.log_weight_fn
    return PairModel(
        name=f"{pair.name}~unnorm",
        log_weight_fn=lambda x: base(np.asarray(x)) - log_c,
        support=pair.support,
        normalization=UNNORMALIZED,
        sampler=pair.sampler,
        target_sampler=pair.target_sampler,
        points=pair.points,
        log_mu=pair.log_mu,
        log_nu=None if pair.log_nu is None else pair.log_nu - 0.0,
        params=dict(pair.params),
    )


# ---------------------------------------------------------------------------
# built-in pairs
# ---------------------------------------------------------------------------

def _binom_log_pmf(k, n, p):
    from scipy.stats import binom as _b
    return _b.logpmf(k, n, p)


def identity_pair(size=2):
    """mu = nu = uniform over {0, ..., size-1}; log rho is identically 0."""
    if size < 1:
        raise DomainError("identity pair needs a support of at least one point")
    points = np.arange(size)
    log_u = np.full(size, -math.log(size))

    def lw(x):
        x = np.asarray(x)
        if np.any((x < 0) | (x >= size)):
            raise DomainError(f"point outside the support 0..{size - 1}")
        return np.zeros(np.shape(x))

    return PairModel(
        name="identity",
        log_weight_fn=lw,
        support=FINITE,
        sampler=lambda rng, m: rng.integers(0, size, m),
        target_sampler=lambda rng, m: rng.integers(0, size, m),
        points=points,
        log_mu=log_u,
        log_nu=log_u.copy(),
        kl_closed_form=0.0,
        logrho_tail_fn=lambda c: 1.0 if c < 0.0 else 0.0,
        f_l2_norms={"one": 1.0},
        params={"size": size},
    )


def exp_pair():
    """mu = Exp(mean 1), nu = Exp(mean 2); log rho(x) = x/2 - log 2."""
    log2 = math.log(2.0)

    def lw(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("exponential support is x >= 0")
        return x / 2.0 - log2

    def tail(c):
        # log rho(Y) = Y/2 - log 2 with Y ~ Exp(mean 2)
        if c < -log2:
            return 1.0
        return math.exp(-(c + log2))

    return PairModel(
        name="exp12",
        log_weight_fn=lw,
        support=CLOSED_FORM,
        sampler=lambda rng, m: rng.exponential(1.0, m),
        target_sampler=lambda rng, m: rng.exponential(2.0, m),
        kl_closed_form=1.0 - log2,
        logrho_tail_fn=tail,
        f_l2_norms={"one": 1.0, "x": math.sqrt(8.0)},
        f_integrals={"one": 1.0, "x": 2.0},
    )


def binom_pair(N, p0, p1):
    """mu = Binomial(N, p0), nu = Binomial(N, p1) on {0, ..., N}."""
    if not (0 < p0 < 1 and 0 < p1 < 1):
        raise DomainError("binomial pair needs success probabilities strictly inside (0, 1)")
    N = int(N)
    points = np.arange(N + 1)
    a = math.log(p1 / p0)
    b = math.log((1.0 - p1) / (1.0 - p0))

    def lw(x):
        x = np.asarray(x)
        if np.any((x < 0) | (x > N) | (x != np.floor(x))):
            raise DomainError(f"point outside the support 0..{N}")
        x = np.asarray(x, dtype=float)
        return x * a + (N - x) * b

    kl = N * (p1 * a + (1.0 - p1) * b)
    return PairModel(
        name="binom",
        log_weight_fn=lw,
        support=FINITE,
        sampler=lambda rng, m: rng.binomial(N, p0, m),
        target_sampler=lambda rng, m: rng.binomial(N, p1, m),
        points=points,
        log_mu=_binom_log_pmf(points, N, p0),
        log_nu=_binom_log_pmf(points, N, p1),
        kl_closed_form=kl,
        params={"N": N, "p0": p0, "p1": p1},
    )


def large_binom_pair(N=10**6, p0=0.5, p1=0.9):
    """Binomial(N, p0) vs Binomial(N, p1) at a scale that is never sampled.

    log rho(Y) under nu is exactly linear in Y, so its mean and standard
    deviation are closed forms and the tail is handled by a normal
    approximation; weights themselves would span e^(+-1e5) and the pair
    therefore refuses to produce draws.
    """
    N = int(N)
    a = math.log(p1 / p0)
    b = math.log((1.0 - p1) / (1.0 - p0))

    def lw(x):
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x > N)):
            raise DomainError(f"point outside the support 0..{N}")
        return x * a + (N - x) * b

    mean = N * (p1 * a + (1.0 - p1) * b)
    sd = abs(a - b) * math.sqrt(N * p1 * (1.0 - p1))
    return PairModel(
        name="large-binom",
        log_weight_fn=lw,
        support=CLOSED_FORM,
        sampler=None,
        target_sampler=None,
        kl_closed_form=mean,
        logrho_normal=(mean, sd),
        logrho_tail_fn=lambda c: float(norm.sf(c, loc=mean, scale=sd)),
        f_l2_norms={"one": 1.0},
        f_integrals={"one": 1.0},
        params={"N": N, "p0": p0, "p1": p1},
    )


def counterexample_pair(N):
    """Uniform proposal on {1..N}; target piles mass (N+1)/2N onto N.

    rho is 1/2 on 1..N-1 and (N+1)/2 at N, so a sample of size n << N
    almost never sees the big weight: every weight-degeneracy statistic
    looks healthy long before the estimate is anywhere near converged.
    """
    N = int(N)
    if N < 2:
        raise DomainError("counterexample pair needs N >= 2")
    log_half = -math.log(2.0)
    log_big = math.log((N + 1) / 2.0)

    def lw(x):
        x = np.asarray(x)
        if np.any((x < 1) | (x > N) | (x != np.floor(x))):
            raise DomainError(f"point outside the support 1..{N}")
        return np.where(np.asarray(x) == N, log_big, log_half)

    def target_sample(rng, m):
        big = rng.random(m) < (N + 1) / (2.0 * N)
        other = rng.integers(1, N, m)
        return np.where(big, N, other)

    points = np.arange(1, N + 1)
    log_mu = np.full(N, -math.log(N))
    log_nu = np.full(N, -math.log(2.0 * N))
    log_nu[-1] = math.log((N + 1) / (2.0 * N))
    kl = ((N - 1) / (2.0 * N)) * log_half + ((N + 1) / (2.0 * N)) * log_big
    return PairModel(
        name="counterexample",
        log_weight_fn=lw,
        support=FINITE,
        sampler=lambda rng, m: rng.integers(1, N + 1, m),
        target_sampler=target_sample,
        points=points,
        log_mu=log_mu,
        log_nu=log_nu,
        kl_closed_form=kl,
        params={"N": N},
    )


#: CLI-facing registry.  Values are (factory, parameter names).
BUILTIN_PAIRS = {
    "identity": (identity_pair, ("size",)),
    "exp12": (exp_pair, ()),
    "binom": (binom_pair, ("N", "p0", "p1")),
    "large-binom": (large_binom_pair, ()),
    "counterexample": (counterexample_pair, ("N",)),
}


def make_pair(name, **params):
    """Construct a built-in pair by name, ignoring irrelevant params."""
    try:
        factory, keys = BUILTIN_PAIRS[name]
    except KeyError:
        raise DomainError(f"unknown pair {name!r}; expected one of {sorted(BUILTIN_PAIRS)}")
    kwargs = {k: params[k] for k in keys if params.get(k) is not None}
    missing = [k for k in keys if k not in kwargs and k not in ("size",)]
    if name == "binom" and missing:
        raise DomainError(f"pair 'binom' needs parameters {missing}")
    if name == "counterexample" and missing:
        raise DomainError("pair 'counterexample' needs parameter N")
    return factory(**kwargs)
