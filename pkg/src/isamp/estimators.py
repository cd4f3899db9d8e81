"""Weighted-batch estimators and convergence diagnostics.

Given n proposal draws with log-weights w_i = log rho(X_i) and
integrand values f_i, this module computes

* the unbiased estimate  I_n = (1/n) sum f_i e^{w_i},
* the self-normalized    J_n = sum f_i e^{w_i} / sum e^{w_i},
* the empirical variance v_n = (1/n^2) sum f_i^2 e^{2 w_i} - I_n^2 / n,
* the weight-degeneracy statistic  Q_n = max e^{w_i} / sum e^{w_i},

all in log space (signed log-sum-exp for I_n, so f may be negative),
plus Monte-Carlo estimates of q_n = E(Q_n) and of the mean absolute
deviation E|I_n(f) - I(f)| over independent replicates.

Replicate simulations for finite-support pairs run on multinomial
counts over the pair's distinct (log rho, f) classes rather than on
per-draw streams; the batch statistics above depend on the draws only
through those counts, so the shortcut is distributionally exact and
makes sample sizes like 10^10 feasible.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from ._logspace import LOG_ZERO, log_weighted_sum, signed_logsumexp
from ._rng import stream
from .errors import DegenerateBatchError, UsageError
from .model import PairModel, resolve_integrand, weight_classes


@dataclass(frozen=True)
class WeightedBatch:
    """Log-weights and optional integrand values for n draws."""

    log_weights: np.ndarray
    f_values: Optional[np.ndarray] = None

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float)
        object.__setattr__(self, "log_weights", lw)
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise UsageError("log-weights must be finite or -inf")
        if self.f_values is not None:
            fv = np.asarray(self.f_values, dtype=float)
            if fv.shape != lw.shape:
                raise UsageError("f_values and log_weights must have equal length")
            object.__setattr__(self, "f_values", fv)

    @property
    def n(self):
        return self.log_weights.size

    def require_f(self):
        if self.f_values is None:
            raise UsageError("this estimator needs integrand values on the batch")
        return self.f_values


class DiagnosticReport(NamedTuple):
    """Per-batch summary; Q_n = exp(max_log_weight - log_sum_weights)."""

    I_n: float
    J_n: float
    v_n: float
    Q_n: float
    max_log_weight: float
    log_sum_weights: float


def sample_batch(pair, f, n, rng):
    """Draw an n-point WeightedBatch from a pair's proposal."""
    x = pair.sample(rng, int(n))
    fv = None if f is None else np.asarray(resolve_integrand(f)(x), dtype=float)
    return WeightedBatch(pair.log_weight(x), fv)


def estimate_In(batch):
    """Unbiased importance-sampling estimate (1/n) sum f_i e^{w_i}."""
    fv = batch.require_f()
    log_abs, sign = log_weighted_sum(batch.log_weights, fv)
    if sign == 0.0:
        return 0.0
    return sign * math.exp(log_abs - math.log(batch.n))


def estimate_Jn(batch):
    """Self-normalized estimate sum f_i e^{w_i} / sum e^{w_i}."""
    fv = batch.require_f()
    log_sum_w = logsumexp(batch.log_weights)
    if log_sum_w == LOG_ZERO:
        raise DegenerateBatchError("all weights are zero; J_n is undefined")
    log_abs, sign = log_weighted_sum(batch.log_weights, fv)
    if sign == 0.0:
        return 0.0
    return sign * math.exp(log_abs - log_sum_w)


def empirical_variance(batch):
    """Plug-in variance estimate v_n(f), clamped at zero."""
    fv = batch.require_f()
    with np.errstate(divide="ignore"):
        log_sq = 2.0 * batch.log_weights + 2.0 * np.log(np.abs(fv))
    log_sq = np.where(fv == 0.0, LOG_ZERO, log_sq)
    log_sum_sq = logsumexp(log_sq)
    n = batch.n
    mean_sq = 0.0 if log_sum_sq == LOG_ZERO else math.exp(log_sum_sq - 2.0 * math.log(n))
    v = mean_sq - estimate_In(batch) ** 2 / n
    return max(v, 0.0)


def q_statistic(batch):
    """Q_n = max weight over total weight, valid for unnormalized weights.

    The maximum is subtracted before exponentiation, so an additive
    constant on the log-weights cancels exactly.
    """
    lw = batch.log_weights
    m = float(np.max(lw)) if lw.size else LOG_ZERO
    if m == LOG_ZERO:
        raise DegenerateBatchError("all weights are zero; Q_n is undefined")
    return float(1.0 / np.sum(np.exp(lw - m)))


def diagnostic_report(batch):
    """Bundle I_n, J_n, v_n, Q_n and the raw log-scale extremes.

    A batch without integrand values is treated as f identically 1.
    """
    if batch.f_values is None:
        batch = WeightedBatch(batch.log_weights, np.ones(batch.n))
    m = float(np.max(batch.log_weights))
    log_sum = float(logsumexp(batch.log_weights))
    return DiagnosticReport(
        I_n=estimate_In(batch),
        J_n=estimate_Jn(batch),
        v_n=empirical_variance(batch),
        Q_n=q_statistic(batch),
        max_log_weight=m,
        log_sum_weights=log_sum,
    )


# ---------------------------------------------------------------------------
# mergeable accumulator (single pass over a stream, associative merge)
# ---------------------------------------------------------------------------

@dataclass
class RunningAccumulator:
    """Log-space accumulator whose merge is associative and commutative."""

    n: int = 0
    max_log_w: float = LOG_ZERO
    log_sum_w: float = LOG_ZERO
    log_sum_fw_pos: float = LOG_ZERO
    log_sum_fw_neg: float = LOG_ZERO
    log_sum_f2w2: float = LOG_ZERO

    def update(self, batch):
        fv = batch.f_values if batch.f_values is not None else np.ones(batch.n)
        lw = batch.log_weights
        self.n += batch.n
        if lw.size:
            self.max_log_w = max(self.max_log_w, float(np.max(lw)))
            self.log_sum_w = float(np.logaddexp(self.log_sum_w, logsumexp(lw)))
        with np.errstate(divide="ignore"):
            log_f = np.log(np.abs(fv))
        log_fw = np.where(fv == 0.0, LOG_ZERO, lw + log_f)
        pos = fv > 0.0
        if np.any(pos):
            self.log_sum_fw_pos = float(np.logaddexp(self.log_sum_fw_pos, logsumexp(log_fw[pos])))
        if np.any(~pos & (fv != 0.0)):
            neg = ~pos & (fv != 0.0)
            self.log_sum_fw_neg = float(np.logaddexp(self.log_sum_fw_neg, logsumexp(log_fw[neg])))
        log_f2w2 = np.where(fv == 0.0, LOG_ZERO, 2.0 * lw + 2.0 * log_f)
        self.log_sum_f2w2 = float(np.logaddexp(self.log_sum_f2w2, logsumexp(log_f2w2)))
        return self

    def merge(self, other):
        out = RunningAccumulator()
        out.n = self.n + other.n
        out.max_log_w = max(self.max_log_w, other.max_log_w)
        out.log_sum_w = float(np.logaddexp(self.log_sum_w, other.log_sum_w))
        out.log_sum_fw_pos = float(np.logaddexp(self.log_sum_fw_pos, other.log_sum_fw_pos))
        out.log_sum_fw_neg = float(np.logaddexp(self.log_sum_fw_neg, other.log_sum_fw_neg))
        out.log_sum_f2w2 = float(np.logaddexp(self.log_sum_f2w2, other.log_sum_f2w2))
        return out

    @property
    def I_n(self):
        log_abs, sign = signed_logsumexp(
            [self.log_sum_fw_pos, self.log_sum_fw_neg], [1.0, -1.0])
        return 0.0 if sign == 0.0 else sign * math.exp(log_abs - math.log(self.n))

    @property
    def v_n(self):
        mean_sq = 0.0 if self.log_sum_f2w2 == LOG_ZERO else math.exp(
            self.log_sum_f2w2 - 2.0 * math.log(self.n))
        return max(mean_sq - self.I_n ** 2 / self.n, 0.0)

    @property
    def Q_n(self):
        if self.max_log_w == LOG_ZERO:
            raise DegenerateBatchError("all weights are zero; Q_n is undefined")
        return math.exp(self.max_log_w - self.log_sum_w)


# ---------------------------------------------------------------------------
# replicate simulations
# ---------------------------------------------------------------------------

class ReplicateEstimate(NamedTuple):
    mean: float
    se: float


DEFAULT_MAD_REPLICATES = 200
DEFAULT_QN_REPLICATES = 500


def _replicate_map(fn, replicates, threads=1):
    indices = range(int(replicates))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, indices))
    return [fn(i) for i in indices]


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    if np.all(values == values[0]):
        return ReplicateEstimate(float(values[0]), 0.0)
    return ReplicateEstimate(float(values.mean()),
                             float(values.std(ddof=1) / math.sqrt(values.size)))


def _counts_batch_stats(probs, log_rho, f_vals, n, rng):
    """(I_n, Q_n) of an n-draw batch simulated via class counts."""
    counts = rng.multinomial(int(n), probs)
    occ = counts > 0
    log_c = np.log(counts[occ])
    lw = log_rho[occ]
    if np.max(lw) == LOG_ZERO:
        raise DegenerateBatchError("all weights are zero; Q_n is undefined")
    q = float(1.0 / np.sum(counts[occ] * np.exp(lw - np.max(lw))))
    if f_vals is None:
        i_n = math.exp(logsumexp(log_c + lw) - math.log(n))
        return i_n, q
    fv = f_vals[occ]
    log_abs, sign = log_weighted_sum(log_c + lw, fv)
    i_n = 0.0 if sign == 0.0 else sign * math.exp(log_abs - math.log(n))
    return i_n, q


def _as_log_weight_sampler(source, f=None):
    """Normalize qn/mad inputs to a per-replicate sampling closure.

    ``source`` is a PairModel (finite pairs use the multinomial class
    shortcut, others draw points) or a callable (rng, n) -> log_weights.
    Returns fn(rng, n) -> (I_n or None, Q_n).
    """
    if isinstance(source, PairModel):
        if source.enumerable:
            probs, log_rho, f_vals = weight_classes(source, f)
            return lambda rng, n: _counts_batch_stats(probs, log_rho, f_vals, n, rng)

        def draw(rng, n):
            batch = sample_batch(source, f, n, rng)
            i_n = estimate_In(batch) if f is not None else None
            return i_n, q_statistic(batch)

        return draw

    def from_callable(rng, n):
        batch = WeightedBatch(np.asarray(source(rng, n), dtype=float))
        return None, q_statistic(batch)

    return from_callable


def estimate_qn(source, n, replicates=DEFAULT_QN_REPLICATES, seed=0, threads=1, path=()):
    """Monte-Carlo estimate of q_n = E(Q_n) with its standard error.

    ``source`` may be a PairModel or a callable (rng, n) -> log_weights;
    replicate i draws from the stream keyed by (seed, *path, i).
    """
    if replicates < 2:
        raise UsageError("q_n estimation needs at least 2 replicates")
    sampler = _as_log_weight_sampler(source)
    qs = _replicate_map(
        lambda i: sampler(stream(seed, *path, i), n)[1], replicates, threads)
    return _mean_se(qs)


def estimate_mad(source, f, n, replicates=DEFAULT_MAD_REPLICATES, exact_I=None,
                 seed=0, threads=1, path=()):
    """Monte-Carlo estimate of E|I_n(f) - I(f)| with its standard error."""
    if exact_I is None:
        raise UsageError("mean absolute deviation needs the exact integral I(f)")
    if replicates < 2:
        raise UsageError("MAD estimation needs at least 2 replicates")
    sampler = _as_log_weight_sampler(source, f)
    devs = _replicate_map(
        lambda i: abs(sampler(stream(seed, *path, i), n)[0] - exact_I), replicates, threads)
    return _mean_se(devs)


def replicate_In(source, f, n, replicates, seed=0, threads=1, path=()):
    """Array of independent I_n(f) replicates (shared seed convention)."""
    sampler = _as_log_weight_sampler(source, f)
    return np.array(_replicate_map(
        lambda i: sampler(stream(seed, *path, i), n)[0], replicates, threads))
