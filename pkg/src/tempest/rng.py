"""Seeded random streams.

Every random draw in the package comes from a Philox generator keyed by
``(seed, component, index)``. Streams for different trees or layers never
share state, so adding a tree or running trees in a different order leaves
the others untouched.
"""

import zlib

import numpy as np


def stream(seed: int, component: str, index: int = 0) -> np.random.Generator:
    """Return the independent generator for ``component`` number ``index``."""
    tag = zlib.crc32(component.encode("utf-8"))
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tag, int(index)])
    return np.random.Generator(np.random.Philox(ss))
