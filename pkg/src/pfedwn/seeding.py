"""Named, reproducible random streams derived from one master seed.

Every stage draws from its own stream so that changing how one stage
consumes randomness leaves the others untouched.
"""

import numpy as np

STREAMS = {
    "topology": 1,
    "fading": 2,
    "data": 3,
    "training": 4,
    "em": 5,
    "init": 6,
    "drops": 7,
}


def stream(master_seed, name, *keys):
    """Generator for ``name`` under ``master_seed``; extra ``keys`` (e.g. node id,
    replication index) select independent sub-streams."""
    try:
        tag = STREAMS[name]
    except KeyError:
        raise KeyError(f"unknown stream {name!r}; known: {sorted(STREAMS)}") from None
    entropy = [int(master_seed), tag, *(int(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
