"""Importance sampling for exponential families (Gibbs measures).

A Gibbs model has density Z(beta)^-1 exp(-beta H(x)) against a base
measure; F(beta) = log Z(beta).  Estimating Z(beta) from n draws at a
reference temperature beta0 uses weights exp(-(beta - beta0) H), and
the sample size that makes the ratio estimate accurate is exp(L + r*sigma)
with

    L     = F(beta0) - F(beta) - (beta0 - beta) F'(beta),
    sigma = |beta0 - beta| sqrt(F''(beta)),

both nonnegative because F is convex (F' = -E H, F'' = Var H under the
measure at beta).  Models here: independent spins (closed forms), the
1D Ising chain with periodic boundary (transfer matrix, exact
sequential sampling), and exact enumeration over explicit state lists
for oracle checks.  The thermodynamic-limit layer classifies whether
the estimator converges when log n grows like b * L_N, by comparing b
with q(beta) = p(beta0) - p(beta) - (beta0 - beta) p'(beta).
"""

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom as binom_dist

from ._rng import stream
from .errors import DomainError, ResourceError, UnsupportedError

ENUMERATION_CAP = 24  # spins; 2^24 log-space sums stay fast

CONVERGES = "Converges"
FAILS = "Fails"
CRITICAL = "CriticalFreeEnergyOnly"


def central_derivatives(f, x, h=None):
    """(f'(x), f''(x)) by Richardson-refined central differences."""
    if h is None:
        h = 1e-4 * max(1.0, abs(x))
    def d1(step):
        return (f(x + step) - f(x - step)) / (2.0 * step)
    def d2(step):
        return (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step)
    fp = (4.0 * d1(h / 2.0) - d1(h)) / 3.0
    fpp = (4.0 * d2(h / 2.0) - d2(h)) / 3.0
    return fp, fpp


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class IndependentSpins:
    """N independent +-1 spins with H(x) = -sum x_i; Z = (2 cosh beta)^N."""

    def __init__(self, N):
        if N < 1:
            raise DomainError("need at least one spin")
        self.N = int(N)
        self.name = "spins"
        self.params = {"N": self.N}

    def free_energy(self, beta):
        N = self.N
        F = N * (math.log(2.0) + math.log(math.cosh(beta)))
        Fp = N * math.tanh(beta)
        Fpp = N / math.cosh(beta) ** 2
        return F, Fp, Fpp

    def log_z(self, beta):
        return self.free_energy(beta)[0]

    def hamiltonian_classes(self):
        """Distinct H values (indexed by up-spin count) and log-counts."""
        k = np.arange(self.N + 1)
        h = (self.N - 2 * k).astype(float)
        from scipy.special import gammaln
        log_counts = gammaln(self.N + 1) - gammaln(k + 1) - gammaln(self.N - k + 1)
        return h, log_counts

    def sample_hamiltonians(self, beta, n, rng):
        """Aggregated draw: counts over the N+1 magnetization classes.

        The up-spin count is Binomial(N, p) with p = e^beta/(2 cosh beta),
        so an i.i.d. sample of any size n reduces to one multinomial draw;
        n can be astronomically large.
        """
        p = 1.0 / (1.0 + math.exp(-2.0 * beta))
        pmf = binom_dist.pmf(np.arange(self.N + 1), self.N, p)
        pmf = pmf / pmf.sum()
        counts = rng.multinomial(int(n), pmf)
        h = (self.N - 2 * np.arange(self.N + 1)).astype(float)
        keep = counts > 0
        return h[keep], counts[keep].astype(float)


class IsingTransfer(NamedTuple):
    lam1: float
    lam2: float
    Z: float
    F: float


def ising_transfer(N, J, h, beta):
    """Eigenvalues, partition function and F for the periodic 1D Ising chain.

    Z = lam1^N + lam2^N with
    lam1,2 = e^{bJ} cosh(bh) +- sqrt(e^{2bJ} sinh^2(bh) + e^{-2bJ});
    F is assembled in log scale so it stays finite when Z overflows.
    """
    if N < 1:
        raise DomainError("need at least one spin")
    if J < 0:
        raise DomainError("coupling J must be nonnegative")
    bj, bh = beta * J, beta * h
    disc = math.sqrt(math.exp(2.0 * bj) * math.sinh(bh) ** 2 + math.exp(-2.0 * bj))
    e = math.exp(bj) * math.cosh(bh)
    lam1, lam2 = e + disc, e - disc
    ratio_pow = (lam2 / lam1) ** N  # |lam2| < lam1, so this is in (-1, 1)
    F = N * math.log(lam1) + math.log1p(ratio_pow)
    try:
        Z = math.exp(F)
    except OverflowError:
        Z = math.inf
    return IsingTransfer(lam1, lam2, Z, F)


class IsingChain:
    """Periodic 1D Ising chain: H(x) = -J sum x_i x_{i+1} - h sum x_i.

    F comes from the transfer matrix; derivatives use Richardson central
    differences on the exact F.  Sampling at any beta is exact sequential
    conditional sampling driven by rescaled transfer-matrix powers (the
    proposal draws are i.i.d. exact Gibbs samples, not a Markov chain).
    """

    def __init__(self, N, J=1.0, h=0.0):
        if N < 1:
            raise DomainError("need at least one spin")
        self.N = int(N)
        self.J = float(J)
        self.h = float(h)
        self.name = "ising"
        self.params = {"N": self.N, "J": self.J, "h": self.h}

    def transfer(self, beta):
        return ising_transfer(self.N, self.J, self.h, beta)

    def log_z(self, beta):
        return self.transfer(beta).F

    def free_energy(self, beta, fd_step=None):
        F = self.log_z(beta)
        Fp, Fpp = central_derivatives(self.log_z, beta, fd_step)
        return F, Fp, Fpp

    def hamiltonian(self, states):
        """H for an array of +-1 spin configurations, shape (..., N)."""
        states = np.asarray(states)
        pair = np.sum(states * np.roll(states, -1, axis=-1), axis=-1)
        return -self.J * pair - self.h * np.sum(states, axis=-1)

    def _matrix(self, beta):
        bj, bh = beta * self.J, beta * self.h
        return np.array([
            [math.exp(bj + bh), math.exp(-bj)],
            [math.exp(-bj), math.exp(bj - bh)],
        ])

    def _normalized_powers(self, beta):
        """W[m] proportional to V^m for m = 0..N; scale factors dropped."""
        V = self._matrix(beta)
        Vn = V / V.max()
        powers = [np.eye(2)]
        for _ in range(self.N):
            nxt = powers[-1] @ Vn
            nxt = nxt / nxt.max()
            powers.append(nxt)
        return powers, V / V.max()

    def sample_states(self, beta, n, rng):
        """n exact i.i.d. configurations from the Gibbs measure at beta."""
        N = self.N
        powers, Vn = self._normalized_powers(beta)
        # spin index 0 <-> +1, 1 <-> -1
        diag = np.diag(powers[N])
        p_first_plus = diag[0] / diag.sum()
        x = np.empty((int(n), N), dtype=np.int8)
        first = (rng.random(int(n)) >= p_first_plus).astype(np.int8)  # 0 = +1
        x[:, 0] = first
        if N > 1:
            # cond[k, s, a] = P(x_{k+1} = +1 | x_k = s, x_1 = a)
            cond = np.empty((N, 2, 2))
            for k in range(1, N):
                W_num = powers[N - k]
                for s in (0, 1):
                    for a in (0, 1):
                        num_plus = Vn[s, 0] * W_num[0, a]
                        num_minus = Vn[s, 1] * W_num[1, a]
                        cond[k, s, a] = num_plus / (num_plus + num_minus)
            cur = first
            for k in range(1, N):
                p_plus = cond[k, cur, first]
                nxt = (rng.random(int(n)) >= p_plus).astype(np.int8)
                x[:, k] = nxt
                cur = nxt
        return 1 - 2 * x  # back to +-1 values

    def sample_hamiltonians(self, beta, n, rng):
        states = self.sample_states(beta, n, rng)
        return self.hamiltonian(states).astype(float), np.ones(int(n))


class EnumeratedGibbs:
    """Exact model over an explicit list of Hamiltonian values.

    Serves as the brute-force oracle: F, F' and F'' are exact log-space
    moments of H, not differences.  Optionally weighted by log base
    masses (defaults to counting measure).
    """

    def __init__(self, h_values, log_mass=None, name="enumerated"):
        self.h_values = np.asarray(h_values, dtype=float)
        self.log_mass = (np.zeros(self.h_values.size) if log_mass is None
                         else np.asarray(log_mass, dtype=float))
        self.name = name
        self.params = {"states": self.h_values.size}

    def free_energy(self, beta):
        w = self.log_mass - beta * self.h_values
        F = float(logsumexp(w))
        p = np.exp(w - F)
        eh = float(np.sum(p * self.h_values))
        var_h = float(np.sum(p * (self.h_values - eh) ** 2))
        return F, -eh, var_h

    def log_z(self, beta):
        return self.free_energy(beta)[0]

    def sample_hamiltonians(self, beta, n, rng):
        w = self.log_mass - beta * self.h_values
        p = np.exp(w - logsumexp(w))
        counts = rng.multinomial(int(n), p / p.sum())
        keep = counts > 0
        return self.h_values[keep], counts[keep].astype(float)


def spin_state_hamiltonians(N, model="spins", J=1.0, h=0.0):
    """H over all 2^N spin states via bit tricks (brute-force oracle input)."""
    if N > ENUMERATION_CAP:
        raise ResourceError(f"state enumeration capped at {ENUMERATION_CAP} spins")
    codes = np.arange(1 << N, dtype=np.uint32)
    pop = np.bitwise_count(codes).astype(np.int64)
    mag = 2 * pop - N  # sum of spins, bit set <-> +1
    if model == "spins":
        return (-mag).astype(float)
    if model == "ising":
        mask = np.uint32((1 << N) - 1)
        rolled = ((codes >> np.uint32(1)) | (codes << np.uint32(N - 1))) & mask
        disagree = np.bitwise_count(codes ^ rolled).astype(np.int64)
        pair_sum = N - 2 * disagree
        return (-J * pair_sum - h * mag).astype(float)
    raise DomainError(f"unknown spin model {model!r}")


def free_energy(model, beta):
    """(F, F', F'') for any model exposing free_energy."""
    return model.free_energy(beta)


# ---------------------------------------------------------------------------
# sample-size plan and bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GibbsPlan:
    beta0: float
    beta: float
    L: float
    sigma: float
    r: float = 0.0


def gibbs_L_sigma(model, beta0, beta):
    """Plan with L = F(b0) - F(b) - (b0 - b) F'(b), sigma = |b0 - b| sqrt(F''(b))."""
    F0 = model.free_energy(beta0)[0]
    F, Fp, Fpp = model.free_energy(beta)
    L = F0 - F - (beta0 - beta) * Fp
    if L < -1e-9:
        raise DomainError(f"computed L = {L}; free energy is not convex here")
    if Fpp < -1e-9:
        raise DomainError(f"computed F'' = {Fpp}; free energy is not convex here")
    L = max(L, 0.0) if L < 1e-12 else L
    sigma = abs(beta0 - beta) * math.sqrt(max(Fpp, 0.0))
    return GibbsPlan(beta0=beta0, beta=beta, L=L, sigma=sigma)


def plan_at_log_n(plan, log_n):
    """(plan with r filled in, side) for a given sample size in log scale."""
    gap = log_n - plan.L
    side = "upper" if gap >= 0 else "lower"
    if plan.sigma == 0.0:
        r = 0.0 if gap == 0.0 else math.inf
    else:
        r = abs(gap) / plan.sigma
    return replace(plan, r=r), side


def thm4_bound(plan, delta=0.5, side="upper"):
    """Ratio-error bounds at n = exp(L +- r sigma); +inf when r = 0 (vacuous)."""
    r, sigma = plan.r, plan.sigma
    if r < 0:
        raise DomainError("slack r must be nonnegative")
    if r == 0.0:
        return math.inf
    if side == "upper":
        return math.exp(-r * sigma / 4.0) + 4.0 / r
    if not (0.0 < delta < 1.0):
        raise DomainError("delta must lie in (0, 1)")
    return min(1.0, math.exp(-r * sigma / 2.0) + 4.0 / ((1.0 - delta) * r * r))


class ZhatResult(NamedTuple):
    ratio: float
    log_zhat: float
    Q_n: float


def _zhat_once(model, beta0, beta, n, rng, log_z_beta):
    h, counts = model.sample_hamiltonians(beta0, n, rng)
    log_w = -(beta - beta0) * h
    log_sum = logsumexp(np.log(counts) + log_w)
    log_zhat = model.log_z(beta0) - math.log(n) + log_sum
    q = math.exp(np.max(log_w) - log_sum)
    ratio = math.exp(log_zhat - log_z_beta) if log_z_beta is not None else None
    return ZhatResult(ratio, float(log_zhat), float(q))


def zhat_estimate(model, beta0, beta, n, seed=0, path=()):
    """One importance-sampling run of Z-hat_n(beta) from draws at beta0.

    Returns the ratio to the true Z(beta) (None when the model cannot
    evaluate it), log Z-hat, and the weight-degeneracy statistic Q_n of
    the run's weights.
    """
    try:
        log_z = model.log_z(beta)
    except (UnsupportedError, NotImplementedError):
        log_z = None
    return _zhat_once(model, beta0, beta, int(n), stream(seed, *path, 0), log_z)


def zhat_replicates(model, beta0, beta, n, replicates, seed=0, path=()):
    """Independent Z-hat runs; returns (ratios, Q_n values) as arrays."""
    log_z = model.log_z(beta)
    out = [_zhat_once(model, beta0, beta, int(n), stream(seed, *path, i), log_z)
           for i in range(int(replicates))]
    return (np.array([r.ratio for r in out]), np.array([r.Q_n for r in out]))


# ---------------------------------------------------------------------------
# thermodynamic limit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThermoModel:
    """Limit description: p(beta) = lim F_N(beta)/L_N, with |H_N| <= C L_N."""

    name: str
    p: Callable
    p_prime: Callable
    L_N: Callable
    H_bound: float


def spins_thermo():
    return ThermoModel(
        name="spins",
        p=lambda b: math.log(2.0) + math.log(math.cosh(b)),
        p_prime=math.tanh,
        L_N=lambda N: float(N),
        H_bound=1.0,
    )


def ising_thermo(J=1.0, h=0.0):
    def p(b):
        bj, bh = b * J, b * h
        disc = math.sqrt(math.exp(2.0 * bj) * math.sinh(bh) ** 2 + math.exp(-2.0 * bj))
        return math.log(math.exp(bj) * math.cosh(bh) + disc)

    return ThermoModel(
        name="ising",
        p=p,
        p_prime=lambda b: central_derivatives(p, b)[0],
        L_N=lambda N: float(N),
        H_bound=J + abs(h),
    )


def thermo_q(tm, beta0, beta):
    """q(beta) = p(beta0) - p(beta) - (beta0 - beta) p'(beta) >= 0."""
    q = tm.p(beta0) - tm.p(beta) - (beta0 - beta) * tm.p_prime(beta)
    if q < -1e-9:
        raise DomainError(f"computed q = {q}; limit free energy is not convex here")
    return max(q, 0.0)


class RegimeVerdict(NamedTuple):
    verdict: str
    qnn_prediction: str


def classify_regime(b, q_beta, tol=1e-12):
    """Phase classification of log n ~ b * L_N against the cutoff q(beta).

    b > q: the ratio estimate converges to 1 and q_{n,N} is exponentially
    small in L_N.  b < q: the ratio does not converge and q_{n,N} is not
    exponentially small.  b = q (within tol): only the free energy per
    site converges, and q_{n,N} is still not exponentially small.
    """
    if b < 0 or q_beta < 0:
        raise DomainError("b and q(beta) must be nonnegative")
    if abs(b - q_beta) <= tol:
        return RegimeVerdict(CRITICAL, "not exponentially small")
    if b > q_beta:
        return RegimeVerdict(CONVERGES, "exponentially small")
    return RegimeVerdict(FAILS, "not exponentially small")
