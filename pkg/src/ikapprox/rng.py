"""Named, seedable random streams.

Every random consumer draws from a stream identified by ``(seed, name)``, so
changing how much one consumer draws never perturbs another.
"""

import zlib

import numpy as np

RNG_ALGORITHM = "numpy.PCG64 via SeedSequence(seed, crc32(stream name))"


def stream(seed, name, *extra):
    """Return a generator for the named stream under ``seed``.

    ``extra`` integers (e.g. a row index) further split the stream.
    """
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    key = [int(seed), zlib.crc32(name.encode("utf-8"))]
    key.extend(int(e) for e in extra)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
