"""Counter-based seed splitting.

Per-trial seeds are ``mix64(master ^ (m * GOLDEN) ^ trial)`` with all
arithmetic modulo 2**64, where ``mix64`` is the SplitMix64 finalizer.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def split_seed(master: int, m: int, trial: int) -> int:
    """Seed for trial ``trial`` at scale ``m`` derived from ``master``."""
    return mix64((master & MASK64) ^ ((m * GOLDEN) & MASK64) ^ (trial & MASK64))
