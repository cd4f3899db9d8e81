"""Log-space accumulation helpers.

All weights in this package are carried as natural logarithms; sums of
weighted terms use log-sum-exp, with separate positive and negative
accumulators when the summands can take either sign.  Zero weight is
represented as -inf and contributes nothing.
"""

import math

import numpy as np
from scipy.special import logsumexp

LOG_ZERO = -np.inf


def logsumexp_pair(a, b):
    """log(e^a + e^b) for scalars, tolerating -inf."""
    if a == LOG_ZERO:
        return b
    if b == LOG_ZERO:
        return a
    return np.logaddexp(a, b)


def signed_logsumexp(log_abs, signs):
    """log|sum(signs * exp(log_abs))| and the sign of the sum.

    Returns (log_abs_sum, sign) with sign in {-1, 0, 1}.  Terms with
    log_abs = -inf are ignored.
    """
    log_abs = np.asarray(log_abs, dtype=float)
    signs = np.asarray(signs, dtype=float)
    if log_abs.size == 0 or np.all(log_abs == LOG_ZERO):
        return LOG_ZERO, 0.0
    val, sign = logsumexp(log_abs, b=signs, return_sign=True)
    return float(val), float(sign)


def log_weighted_sum(log_weights, values):
    """(log|S|, sign) for S = sum(values * exp(log_weights))."""
    values = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore"):
        log_abs = np.asarray(log_weights, dtype=float) + np.log(np.abs(values))
    log_abs = np.where(values == 0.0, LOG_ZERO, log_abs)
    return signed_logsumexp(log_abs, np.sign(values))


def exp_or_inf(x):
    """exp(x) as a float, returning inf instead of raising on overflow."""
    if x == LOG_ZERO:
        return 0.0
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf
