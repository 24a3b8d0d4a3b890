"""Deterministic seed derivation.

Every experiment fans out work (replicates, babbling, training, policy
draws) from one master seed.  Sub-seeds come from the splitmix64 stream:
``derive_seed(master, k)`` is the (k+1)-th output of a splitmix64 generator
seeded with ``master``.  This mapping is part of the on-disk artifact
contract and must stay stable across versions.
"""

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, k: int) -> int:
    """k-th derived seed (k >= 0) of the splitmix64 stream seeded by master."""
    if k < 0:
        raise ValueError("stream index must be nonnegative")
    state = (int(master) + (k + 1) * _GAMMA) & _MASK
    return _mix(state)
