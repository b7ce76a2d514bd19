"""SplitMix64 random stream, vectorised over numpy uint64 arithmetic.

Every random draw in the package (initialisation, dropout masks, data
synthesis, corruptions) goes through this generator so that a seed fixes
the output bit-for-bit on every platform.
"""

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

_GAMMA_U = np.uint64(GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64(z):
    """SplitMix64 output finaliser for a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix_array(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 generator. ``state`` advances by the golden gamma per draw."""

    def __init__(self, seed=0):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def u64(self, n):
        """The next ``n`` outputs as a uint64 array (same stream as ``next_u64``)."""
        n = int(n)
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * _GAMMA_U
            out = _mix_array(z)
        self.state = (self.state + n * GAMMA) & MASK64
        return out

    def uniform(self, shape=(), low=0.0, high=1.0):
        """Floats in [low, high) built from the top 53 bits of each draw."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        u = u.reshape(shape)
        if low != 0.0 or high != 1.0:
            u = low + (high - low) * u
        return u

    def normal(self, shape=(), mean=0.0, std=1.0):
        """Box-Muller normals; consumes two uniforms per value."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = self.uniform(2 * n)
        u1 = 1.0 - u[:n]  # (0, 1]
        u2 = u[n:]
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return (mean + std * z).reshape(shape)

    def integers(self, low, high, shape=()):
        """Integers in [low, high)."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        u = self.uniform(shape)
        return np.minimum(low + np.floor(u * (high - low)).astype(np.int64), high - 1)

    def permutation(self, n):
        keys = self.uniform(n)
        return np.argsort(keys, kind="stable")

    def spawn(self, index):
        """Child stream for ``index``: seed xor index pushed through SplitMix64."""
        return Rng(Rng(self.state ^ (int(index) & MASK64)).next_u64())


def derive(seed, index):
    """Stand-alone child seed derivation, independent of any live stream state."""
    return Rng(Rng((int(seed) ^ int(index)) & MASK64).next_u64())
