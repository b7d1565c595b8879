"""Deterministic RNG streams.

Every random draw in the package hangs off an integer experiment seed plus a
small stream tag, so independent concerns (weight init, batch order, score
batches, corruptions, ...) never share a generator.  Changing a tag value
invalidates stored reproducibility, so the constants below are frozen.
"""

import numpy as np

INIT = 1
SCORE_BATCH = 2
RANDOM_MASK = 3
BATCH_SHUFFLE = 4
CHECK = 5
RETRAIN = 6
PRETRAIN = 7
IMP_ROUND = 8


def stream(seed, *tags):
    """Return a fresh Generator keyed by (seed, *tags)."""
    return np.random.default_rng([int(seed), *[int(t) for t in tags]])


def combine(seed, *tags):
    """Collapse (seed, *tags) into one derived integer seed."""
    ss = np.random.SeedSequence([int(seed), *[int(t) for t in tags]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
