"""Reproducible random streams derived from a 64-bit master seed.

Every simulation in this package draws from a Philox (counter-based)
generator keyed by (master seed, path), where ``path`` is a tuple of
small integers identifying the consumer -- typically a replicate index.
Streams with different paths are statistically independent, and the
same (seed, path) always yields the same draws, independent of thread
scheduling or the order in which replicates run.
"""

import numpy as np

DEFAULT_SEED = 42


def stream(seed, *path):
    """Return a Generator for the stream keyed by (seed, path)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def replicate_streams(seed, replicates, *prefix):
    """Yield (index, Generator) pairs for ``replicates`` derived streams."""
    for i in range(int(replicates)):
        yield i, stream(seed, *prefix, i)
