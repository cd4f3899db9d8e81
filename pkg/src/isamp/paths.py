"""Sequential importance sampling for lattice paths.

Two models:

* Monotone paths from (0,0) to (n,n), stepping up/right.  The sampler
  flips a fair coin until it hits the top or right side of the box and
  is then forced; if T is the hitting time, mu(path) = 2^-T while the
  target is uniform over all C(2n, n) paths.  The hitting-time laws
  under both measures are exact, which pins the divergence
  L = -log C(2n,n) + (2 - 2/(n+1)) n log 2 ~ log(sqrt(pi n)/4).

* Self-avoiding walks across an m x m grid of cells, corner to corner
  (Knuth's estimator): grow the walk by choosing uniformly among
  unvisited lattice neighbors, weight = product of the choice counts,
  dead ends keep weight zero so the path-count estimate stays unbiased.
  Exhaustive enumeration provides exact oracles on small grids.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp

from ._rng import stream
from .errors import DomainError, ResourceError

MU = "mu"
NU = "nu"

SAW_ENUMERATION_CAP = 5


# ---------------------------------------------------------------------------
# monotone paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotonePathSample:
    """Hitting time T of one sampled path; mu(path) = 2^-T."""

    T: int
    log_mu_prob: float
    n: int


def _log_binom(a, b):
    return gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1)


def sample_monotone_T(n, size, rng):
    """Hitting times of ``size`` coin-flip paths in the n x n box."""
    if n < 1:
        raise DomainError("box size n must be at least 1")
    if n == 1:
        return np.ones(int(size), dtype=np.int64)
    steps = rng.integers(0, 2, size=(int(size), 2 * n - 1))
    ups = np.cumsum(steps, axis=1)
    t_axis = np.arange(1, 2 * n)
    hit = (ups == n) | ((t_axis - ups) == n)
    return 1 + np.argmax(hit, axis=1).astype(np.int64)


def sample_monotone_path(n, rng):
    """One draw of the sequential proposal; only T matters distributionally."""
    T = int(sample_monotone_T(n, 1, rng)[0])
    return MonotonePathSample(T=T, log_mu_prob=-T * math.log(2.0), n=n)


def t_pmf(n, j, law=MU):
    """Exact hitting-time pmf under the proposal (mu) or the uniform target (nu).

    mu{T=j} = 2^(1-j) C(j-1, n-1);  nu{T=j} = 2 C(j-1, n-1) / C(2n, n),
    both supported on n <= j <= 2n-1 (zero outside by convention).
    """
    j_arr = np.asarray(j)
    scalar = j_arr.ndim == 0
    j_arr = np.atleast_1d(j_arr).astype(np.int64)
    ok = (j_arr >= n) & (j_arr <= 2 * n - 1)
    jj = np.where(ok, j_arr, n)
    log_c = _log_binom(jj - 1, n - 1)
    if law == MU:
        vals = np.exp((1.0 - jj) * math.log(2.0) + log_c)
    elif law == NU:
        vals = np.exp(math.log(2.0) + log_c - _log_binom(2 * n, n))
    else:
        raise DomainError(f"unknown law {law!r}")
    vals = np.where(ok, vals, 0.0)
    return float(vals[0]) if scalar else vals


def monotone_log_rho(n, T):
    """log rho(path) = T log 2 - log C(2n, n)."""
    return np.asarray(T, dtype=float) * math.log(2.0) - float(_log_binom(2 * n, n))


def monotone_L(n):
    """(exact, asymptotic) divergence of uniform from the coin-flip proposal.

    exact      = -log C(2n,n) + (2 - 2/(n+1)) n log 2
    asymptotic = log sqrt(pi n) - 2 log 2       (error O(1/n))
    """
    if n < 1:
        raise DomainError("box size n must be at least 1")
    exact = -float(_log_binom(2 * n, n)) + (2.0 - 2.0 / (n + 1)) * n * math.log(2.0)
    asym = 0.5 * math.log(math.pi * n) - 2.0 * math.log(2.0)
    return exact, asym


def monotone_limit_cdf(x):
    """Limit law of (2n-1-T)/sqrt(n) under mu: integral of e^{-y^2/4}/sqrt(pi).

    Equals erf(x/2); the normalization 1/sqrt(pi) makes the total mass 1.
    """
    return math.erf(x / 2.0)


# ---------------------------------------------------------------------------
# self-avoiding walks (Knuth's grid-crossing estimator)
# ---------------------------------------------------------------------------

def _saw_geometry(m):
    if m < 1:
        raise DomainError("grid size m must be at least 1")
    side = m + 1
    V = side * side
    nbr = np.full((V, 4), -1, dtype=np.int64)
    for y in range(side):
        for x in range(side):
            v = y * side + x
            if x + 1 < side:
                nbr[v, 0] = v + 1
            if x - 1 >= 0:
                nbr[v, 1] = v - 1
            if y + 1 < side:
                nbr[v, 2] = v + side
            if y - 1 >= 0:
                nbr[v, 3] = v - side
    center = ((m + 1) // 2) * side + ((m + 1) // 2)
    target = V - 1
    return V, nbr, center, target


def _saw_ring(m):
    """8-neighborhood in cyclic order (E NE N NW W SW S SE); -1 off grid."""
    side = m + 1
    V = side * side
    ring = np.full((V, 8), -1, dtype=np.int64)
    dirs = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
    for y in range(side):
        for x in range(side):
            v = y * side + x
            for d, (dx, dy) in enumerate(dirs):
                xx, yy = x + dx, y + dy
                if 0 <= xx < side and 0 <= yy < side:
                    ring[v, d] = yy * side + xx
    return ring


class SawExact(NamedTuple):
    count: int
    mean_length: float
    center_fraction: float


def saw_enumerate(m):
    """Exhaustive count of corner-to-corner self-avoiding paths.

    Also reports the exact mean path length in edges and the exact
    fraction of paths through the center vertex, both under the uniform
    law on complete paths.  Depth-first with an explicit stack; grids
    above m = 5 are refused.
    """
    if m > SAW_ENUMERATION_CAP:
        raise ResourceError(f"exhaustive enumeration capped at m = {SAW_ENUMERATION_CAP}")
    V, nbr, center, target = _saw_geometry(m)
    count = 0
    length_total = 0
    center_total = 0
    visited = np.zeros(V, dtype=bool)
    visited[0] = True
    # stack entries: [vertex, next neighbor slot to try]
    stack = [[0, 0]]
    length = 0
    while stack:
        v, slot = stack[-1]
        if v == target:
            count += 1
            length_total += length
            center_total += bool(visited[center])
            visited[v] = False
            stack.pop()
            length -= 1
            continue
        advanced = False
        while slot < 4:
            w = int(nbr[v, slot])
            slot += 1
            if w >= 0 and not visited[w]:
                stack[-1][1] = slot
                visited[w] = True
                stack.append([w, 0])
                length += 1
                advanced = True
                break
        if not advanced:
            visited[v] = False
            stack.pop()
            length -= 1
    if count == 0:
        raise DomainError("no complete path found; geometry is broken")
    return SawExact(count, length_total / count, center_total / count)


class SawEstimate(NamedTuple):
    count_estimate: float
    log_count_estimate: float
    mean_length: float
    center_fraction: float
    q_n: float
    n: int
    reached: int


def _saw_batch(m, size, rng):
    """Vectorized propagation of ``size`` walks; returns per-walk stats."""
    V, nbr, center, target = _saw_geometry(m)
    words = (V + 63) // 64
    size = int(size)
    log_w = np.zeros(size)
    lengths = np.zeros(size, dtype=np.int64)
    reached = np.zeros(size, dtype=bool)
    through = np.zeros(size, dtype=bool)

    idx = np.arange(size)
    cur = np.zeros(size, dtype=np.int64)
    vis = np.zeros((size, words), dtype=np.uint64)
    vis[:, 0] = 1  # start vertex visited
    alive = idx
    while alive.size:
        cand = nbr[cur[alive]]                       # (a, 4)
        word = (cand >> 6).clip(min=0)
        bit = (cand & 63).astype(np.uint64)
        seen = (vis[alive[:, None], word] >> bit) & np.uint64(1)
        valid = (cand >= 0) & (seen == 0)
        counts = valid.sum(axis=1)
        dead = counts == 0
        if np.any(dead):
            log_w[alive[dead]] = -np.inf
        live = ~dead
        if not np.any(live):
            break
        rows = alive[live]
        candl = cand[live]
        validl = valid[live]
        countsl = counts[live]
        log_w[rows] += np.log(countsl)
        pick = (rng.random(rows.size) * countsl).astype(np.int64)
        cum = np.cumsum(validl, axis=1)
        col = (cum <= pick[:, None]).sum(axis=1)
        nxt = candl[np.arange(rows.size), col]
        vis[rows, nxt >> 6] |= np.uint64(1) << (nxt.astype(np.uint64) & np.uint64(63))
        cur[rows] = nxt
        lengths[rows] += 1
        through[rows] |= nxt == center
        done = nxt == target
        reached[rows[done]] = True
        alive = rows[~done]
    return log_w, lengths, reached, through


_PRUNED_KERNEL = None


def _pruned_kernel():
    """Compile (once) the trap-avoiding walker.

    The proposal chooses uniformly among unvisited neighbors from which
    the target corner is still reachable through unvisited cells, so
    every walk completes and the weight is the product of admissible
    choice counts.  Reachability is maintained incrementally: a move can
    only disconnect free space when the free cells in its 8-ring split
    into more than one arc containing a free 4-neighbor; only then is
    the reachable set recomputed by depth-first search from the target.
    Per-walk randomness comes from a splitmix64 stream seeded off the
    caller's generator, keeping runs reproducible.
    """
    global _PRUNED_KERNEL
    if _PRUNED_KERNEL is not None:
        return _PRUNED_KERNEL
    from numba import njit

    @njit(cache=True)
    def run(seeds, nbr, ring, V, target, center, logtab):  # pragma: no cover
        n = seeds.shape[0]
        logw = np.zeros(n)
        lengths = np.zeros(n, np.int64)
        through = np.zeros(n, np.uint8)
        free = np.empty(V, np.uint8)
        stamp = np.zeros(V, np.int64)
        stack = np.empty(V, np.int64)
        cand = np.empty(4, np.int64)
        gen = 0
        for i in range(n):
            s = np.uint64(seeds[i])
            for j in range(V):
                free[j] = 1
            free[0] = 0
            gen += 1
            top = 0
            stack[top] = target
            top += 1
            stamp[target] = gen
            while top > 0:
                top -= 1
                u = stack[top]
                for d in range(4):
                    w = nbr[u, d]
                    if w >= 0 and free[w] == 1 and stamp[w] != gen:
                        stamp[w] = gen
                        stack[top] = w
                        top += 1
            v = 0
            lw = 0.0
            ln = 0
            thr = np.uint8(1) if center == 0 else np.uint8(0)
            while v != target:
                k = 0
                for d in range(4):
                    c = nbr[v, d]
                    if c >= 0 and free[c] == 1 and stamp[c] == gen:
                        cand[k] = c
                        k += 1
                if k == 0:
                    lw = -np.inf  # unreachable by construction; kept as a guard
                    break
                lw += logtab[k]
                s = s + np.uint64(0x9E3779B97F4A7C15)
                z = s
                z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
                z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
                z = z ^ (z >> np.uint64(31))
                u01 = (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
                c = cand[min(int(u01 * k), k - 1)]
                free[c] = 0
                ln += 1
                if c == center:
                    thr = np.uint8(1)
                v = c
                if v == target:
                    break
                # arc test: count free ring blocks holding a free 4-neighbor
                blocks_with4 = 0
                prev_free = ring[c, 7] >= 0 and free[ring[c, 7]] == 1
                cur_has4 = False
                all_free = True
                for d8 in range(8):
                    rc = ring[c, d8]
                    isfree = rc >= 0 and free[rc] == 1
                    if not isfree:
                        all_free = False
                    if isfree and not prev_free:
                        cur_has4 = False
                    if isfree and d8 % 2 == 0:
                        cur_has4 = True
                    if (not isfree) and prev_free and cur_has4:
                        blocks_with4 += 1
                        cur_has4 = False
                    prev_free = isfree
                if prev_free and cur_has4:
                    blocks_with4 += 1
                if all_free:
                    blocks_with4 = 1
                if blocks_with4 > 1:
                    gen += 1
                    top = 0
                    stack[top] = target
                    top += 1
                    stamp[target] = gen
                    while top > 0:
                        top -= 1
                        u = stack[top]
                        for d in range(4):
                            w = nbr[u, d]
                            if w >= 0 and free[w] == 1 and stamp[w] != gen:
                                stamp[w] = gen
                                stack[top] = w
                                top += 1
            logw[i] = lw
            lengths[i] = ln
            through[i] = thr
        return logw, lengths, through

    _PRUNED_KERNEL = run
    return run


_LOG_CHOICES = np.array([0.0, 0.0, math.log(2.0), math.log(3.0), math.log(4.0)])


def _saw_batch_pruned(m, size, rng):
    """Trap-avoiding walks; same outputs as _saw_batch (all walks reach)."""
    V, nbr, center, target = _saw_geometry(m)
    ring = _saw_ring(m)
    seeds = rng.integers(0, 2**63, size=int(size), dtype=np.uint64)
    log_w, lengths, through = _pruned_kernel()(seeds, nbr, ring, V, target,
                                               center, _LOG_CHOICES)
    reached = np.isfinite(log_w)
    return log_w, lengths, reached, through.astype(bool)


def saw_batch_log_weights(m, size, rng, prune_traps=False):
    """Per-walk log-weights (-inf for dead ends); feeds the q_n estimator."""
    walker = _saw_batch_pruned if prune_traps else _saw_batch
    log_w, _, reached, _ = walker(m, size, rng)
    return np.where(reached, log_w, -np.inf)


def saw_estimate(m, n, seed=0, chunk=1 << 18, prune_traps=False):
    """Sequential importance sampling on the m x m grid with n walks.

    The default proposal picks uniformly among unvisited neighbors and
    keeps dead ends as zero-weight samples; with ``prune_traps`` the
    proposal additionally refuses moves that disconnect the walker from
    the target, so every walk completes (the historical grid-crossing
    experiment behaves this way -- its walks all end at the far corner).
    Both proposals give unbiased path-count estimates.  Returns the
    count estimate (mean weight over all walks), the weight-averaged
    mean length in edges and fraction of paths through the center
    vertex, and the batch's Q_n.
    """
    if m < 1 or n < 1:
        raise DomainError("need m >= 1 and n >= 1")
    n = int(n)
    walker = _saw_batch_pruned if prune_traps else _saw_batch
    log_w_chunks = []        # logsumexp pieces: total weight, w*length, w*center
    log_wlen_chunks = []
    log_wcen_chunks = []
    max_log_w = -np.inf
    n_reached = 0
    done = 0
    chunk_index = 0
    while done < n:
        size = min(chunk, n - done)
        log_w, lengths, reached, through = walker(m, size, stream(seed, chunk_index))
        chunk_index += 1
        lw = log_w[reached]
        if lw.size:
            log_w_chunks.append(logsumexp(lw))
            log_wlen_chunks.append(logsumexp(lw + np.log(lengths[reached])))
            cen = lw[through[reached]]
            if cen.size:
                log_wcen_chunks.append(logsumexp(cen))
            max_log_w = max(max_log_w, float(np.max(lw)))
            n_reached += int(reached.sum())
        done += size
    if not log_w_chunks:
        return SawEstimate(0.0, -np.inf, math.nan, math.nan, math.nan, n, 0)
    log_total = float(logsumexp(log_w_chunks))
    log_count = log_total - math.log(n)
    count = math.exp(log_count) if log_count < 700 else math.inf
    log_wcen = float(logsumexp(log_wcen_chunks)) if log_wcen_chunks else -np.inf
    return SawEstimate(
        count_estimate=count,
        log_count_estimate=log_count,
        mean_length=math.exp(float(logsumexp(log_wlen_chunks)) - log_total),
        center_fraction=math.exp(log_wcen - log_total),
        q_n=math.exp(max_log_w - log_total),
        n=n,
        reached=n_reached,
    )


def saw_qn_sampler(m, prune_traps=False):
    """(rng, n) -> log-weights closure for estimators.estimate_qn."""
    return lambda rng, n: saw_batch_log_weights(m, n, rng, prune_traps=prune_traps)


def saw_decision_tree_expectation(m, prune_traps=False):
    """Exact E[weight * 1(reached)] for either proposal, as a Fraction.

    Traverses the full decision tree of the sampler; with pruning the
    admissible sets shrink but the product-weight telescopes the same
    way, so both must equal the exhaustive path count.
    """
    if m > 3:
        raise ResourceError("decision-tree traversal capped at m = 3")
    V, nbr, center, target = _saw_geometry(m)
    visited = np.zeros(V, dtype=bool)

    def reachable(src):
        seen = visited.copy()
        stack = [src]
        seen[src] = True
        while stack:
            u = stack.pop()
            if u == target:
                return True
            for w in nbr[u]:
                if w >= 0 and not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        return False

    def walk(v):
        if v == target:
            return Fraction(1)
        visited[v] = True
        options = [int(w) for w in nbr[v] if w >= 0 and not visited[w]]
        if prune_traps:
            options = [w for w in options if reachable(w)]
        total = Fraction(0)
        for w in options:
            total += walk(w)
        visited[v] = False
        return total

    return walk(0)
