"""Named random substreams derived from one master seed."""

import zlib

import numpy as np


def substream(seed, name, *keys):
    """Return an independent ``Generator`` for ``(seed, name, *keys)``.

    Every consumer of randomness (``"init"``, ``"subsample"``, ``"de"``,
    ``"split-noise"``, ...) gets its own stream, so replaying one module
    does not disturb the draws of another.  ``seed`` may be an integer or a
    tuple of integers such as ``(master_seed, replicate)``.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    entropy = tuple(int(s) for s in seed) if isinstance(seed, (tuple, list)) else int(seed)
    spawn_key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=spawn_key))


def as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
