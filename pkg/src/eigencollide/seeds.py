"""Deterministic seed derivation.

Every random stream is a ``numpy.random.Generator`` built from a
``SeedSequence`` whose entropy is the master seed and whose ``spawn_key``
is a tuple of small non-negative integers::

    (replicate, stage, i, j, component)

``stage`` separates the base grid draw from refinement draws, ``(i, j)`` is
the 0-based matrix entry of the driving field and ``component`` is 0 for the
real driver and 1 for the imaginary one.  Distinct keys give independent
streams, so results never depend on the order in which work is scheduled.
"""

import numpy as np

STAGE_BASE = 0
STAGE_REFINE = 1
STAGE_FIELD = 2
STAGE_STIEFEL = 3
STAGE_STRATUM = 4

MASK64 = (1 << 64) - 1


def derive(master, *key):
    if master is None:
        raise ValueError("a master seed is required")
    master = int(master)
    if master < 0:
        raise ValueError("seeds must be non-negative")
    return np.random.SeedSequence(entropy=master & MASK64, spawn_key=tuple(int(k) for k in key))


def generator(master, *key):
    return np.random.Generator(np.random.PCG64(derive(master, *key)))
