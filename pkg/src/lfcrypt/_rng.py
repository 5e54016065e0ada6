"""Seeded random streams.

All randomness goes through PCG64 seeded by a ``SeedSequence`` whose
``spawn_key`` names the stream, so a (seed, stream) pair maps to the same
bits on every platform. Uniform doubles use numpy's 53-bit mantissa
construction (``Generator.random``).
"""

import numpy as np

# stream identifiers; never renumber, they are part of the key format
STREAM_LENSLET_MASK = 0
STREAM_SENSOR_MASK = 1
STREAM_KEY_PERTURBATION = 2
STREAM_OCCLUSION = 3
STREAM_SCENE = 4


def stream(seed, stream_id, *sub):
    """Return an independent generator for ``(seed, stream_id, *sub)``."""
    seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF,
                                 spawn_key=(int(stream_id),) + tuple(int(s) for s in sub))
    return np.random.Generator(np.random.PCG64(seq))
