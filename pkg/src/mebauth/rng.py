"""Deterministic random number generation.

Every stochastic operation in the package draws from an explicit
``numpy.random.Generator`` backed by the PCG64 bit generator. PCG64's
stream is fully specified by its seed and is reproducible across
platforms and numpy releases, which is what makes seeded training
trajectories and code generation repeatable bit-for-bit.
"""

import numpy as np

GENERATOR_NAME = "PCG64"


def make_rng(seed: int) -> np.random.Generator:
    """Return the package-standard generator for a 64-bit unsigned seed."""
    if not (0 <= int(seed) < 2**64):
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))
