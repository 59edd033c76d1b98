"""Counter-based seed derivation.

A derived seed is

    mix64(mix64(master ^ fnv1a64(label)) + (index + 1) * GOLDEN)  (mod 2**64)

where ``mix64`` is the splitmix64 finaliser and ``GOLDEN`` is 0x9E3779B97F4A7C15.
For a fixed (master, label) the map index -> seed is a bijection on 64-bit
integers, so streams never collide within one label.
"""

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def fnv1a64(text):
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK
    return h


def derive_seed(master, index, label):
    """Seed for replication ``index`` of stream ``label`` under ``master``."""
    if index < 0:
        raise ValueError("index must be non-negative")
    base = mix64((int(master) & MASK) ^ fnv1a64(label))
    return mix64(base + ((int(index) + 1) * GOLDEN & MASK))


def rng_for(master, index, label):
    return np.random.default_rng(derive_seed(master, index, label))
