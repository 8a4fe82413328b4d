"""SplitMix64 seed derivation.

Every random draw in the pipeline is made from a ``numpy.random.Generator``
whose seed is derived from the experiment's master seed::

    stage_seed  = splitmix64(master ^ STAGE[stage])
    derived     = splitmix64(stage_seed ^ index)

Per-sample attack seeds follow ``splitmix64(master ^ sample_index)``.
"""

import numpy as np

MASK64 = (1 << 64) - 1

STAGE = {
    "data": 0x01,
    "init": 0x02,
    "shuffle": 0x03,
    "train_noise": 0x04,
    "nacf_noise": 0x05,
}


def splitmix64(x):
    """One SplitMix64 output step for state ``x`` (a 64-bit integer)."""
    z = (int(x) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master, stage, index=0):
    if stage not in STAGE:
        raise KeyError(f"unknown seed stage {stage!r}")
    stage_seed = splitmix64((int(master) & MASK64) ^ STAGE[stage])
    return splitmix64(stage_seed ^ (int(index) & MASK64))


def sample_seed(master, sample_index):
    return splitmix64((int(master) & MASK64) ^ (int(sample_index) & MASK64))


def rng_for(master, stage, index=0):
    return np.random.default_rng(derive_seed(master, stage, index))
