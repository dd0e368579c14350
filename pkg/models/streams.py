"""
Counter-based random streams.

A draw is a pure function of (master_seed, replicate, j, k): the seed is
the Philox4x32-10 key and the other three fields form the counter block.
Nothing is carried between calls, so any schedule of replicates or
threads reproduces the same numbers.
"""

import numpy as np

PHILOX_M4x32_0 = np.uint64(0xD2511F53)
PHILOX_M4x32_1 = np.uint64(0xCD9E8D57)
PHILOX_W32_0 = np.uint64(0x9E3779B9)
PHILOX_W32_1 = np.uint64(0xBB67AE85)
PHILOX_ROUNDS = 10

MASK32 = np.uint64(0xFFFFFFFF)
SHIFT32 = np.uint64(32)


def _mulhilo(a, b):
    product = a * b
    return product >> SHIFT32, product & MASK32


def philox4x32(counter, key):
    """
    Vectorised Philox4x32-10 block function.

    counter is a tuple of four uint64 arrays holding 32-bit words, key a
    pair of 32-bit words; returns the four output words as uint64 arrays.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & MASK32 for c in counter)
    k0 = np.uint64(int(key[0]) & 0xFFFFFFFF)
    k1 = np.uint64(int(key[1]) & 0xFFFFFFFF)

    with np.errstate(over='ignore'):
        for _ in range(PHILOX_ROUNDS):
            hi0, lo0 = _mulhilo(PHILOX_M4x32_0, c0)
            hi1, lo1 = _mulhilo(PHILOX_M4x32_1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = (k0 + PHILOX_W32_0) & MASK32
            k1 = (k1 + PHILOX_W32_1) & MASK32
    return c0, c1, c2, c3


def zigzag(values):
    """Map signed integers onto unsigned ones: 0, -1, 1, -2, ... -> 0, 1, 2, 3, ..."""
    values = np.asarray(values, dtype=np.int64)
    return ((values << 1) ^ (values >> 63)).astype(np.uint64)


def seed_key(master_seed: int):
    master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    return master_seed & 0xFFFFFFFF, master_seed >> 32


def uniforms(master_seed: int, replicate, j, k):
    """
    One uniform in (0, 1) per (replicate, j, k), broadcasting the three arrays.

    Uses 53 bits from the first two output words; the half-ulp offset keeps
    0 and 1 out of range so inverse CDFs stay finite.
    """
    replicate = np.asarray(replicate, dtype=np.uint64)
    zj, zk = zigzag(j), zigzag(k)
    replicate, zj, zk = np.broadcast_arrays(replicate, zj, zk)
    counter = (replicate & MASK32, replicate >> SHIFT32, zj, zk)
    w0, w1, _, _ = philox4x32(counter, seed_key(master_seed))
    a = (w0 >> np.uint64(5)).astype(np.float64)
    b = (w1 >> np.uint64(6)).astype(np.float64)
    return (a * 67108864.0 + b + 0.5) / 9007199254740992.0


def sign_bits(master_seed: int, replicate, j, k):
    """Fair +1/-1 signs from the top bit of the third output word"""
    replicate = np.asarray(replicate, dtype=np.uint64)
    zj, zk = zigzag(j), zigzag(k)
    replicate, zj, zk = np.broadcast_arrays(replicate, zj, zk)
    counter = (replicate & MASK32, replicate >> SHIFT32, zj, zk)
    _, _, w2, _ = philox4x32(counter, seed_key(master_seed))
    return np.where((w2 >> np.uint64(31)) & np.uint64(1), 1.0, -1.0)
