"""Deterministic random-stream derivation.

All randomness in a run flows from one integer seed through named substreams,
so independent components (data shuffle, per-factor MC, minibatch selection,
metric estimation) never share or race on a generator.
"""

import numpy as np

SHUFFLE = 0
MC = 1
MINIBATCH = 2
METRIC = 3


def substream(seed, *path):
    """A Generator seeded by (seed, *path); identical paths give identical streams."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))
