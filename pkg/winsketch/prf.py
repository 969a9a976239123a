"""
Keyed pseudorandom functions.

Every coin a sketch flips is a pure function of (key, value) so that a sketch can be
rebuilt offline from the same seed and compared entry by entry with the streaming one.
"""

import hashlib
from collections.abc import Hashable, Sequence

import numpy as np

from winsketch.constants import MERSENNE_61

_SEP = b"\x1f"


def derive_key(seed: int, *labels: Hashable) -> bytes:
    """
    Derive a 16 byte key from a master seed and a path of labels.

    Args:
        seed (int): master seed.
        labels (Hashable): labels identifying the consumer, e.g. ("Z", level).

    Returns:
        bytes: the derived key.
    """
    h = hashlib.blake2b(digest_size=16)
    h.update(str(seed).encode("utf-8"))
    for label in labels:
        h.update(_SEP)
        h.update(repr(label).encode("utf-8"))
    return h.digest()


def prf_int(key: bytes, value: Hashable) -> int:
    """
    64 bit keyed hash of a value.
    """
    h = hashlib.blake2b(repr(value).encode("utf-8"), digest_size=8, key=key)
    return int.from_bytes(h.digest(), "big", signed=False)


def prf_uniform(key: bytes, value: Hashable) -> float:
    """
    Keyed hash of a value mapped to [0, 1) with 53 bits of precision.
    """
    return (prf_int(key, value) >> 11) * 2.0**-53


class KWiseHash:
    """
    Polynomial hash of the given degree over the prime field 2^61 - 1.

    A random polynomial of degree k - 1 gives a k-wise independent family over
    integer keys below the prime.
    """

    def __init__(self, independence: int, seed: int):
        if independence < 1:
            raise ValueError(f"Independence must be at least 1, got {independence}.")
        self.independence = independence
        rng = np.random.default_rng(seed)
        draws = rng.integers(0, MERSENNE_61, size=independence, dtype=np.int64)
        self.coefficients: list[int] = [int(c) for c in draws]

    def __call__(self, x: int) -> int:
        acc = 0
        for c in self.coefficients:
            acc = (acc * x + c) % MERSENNE_61
        return acc

    def uniform(self, x: int) -> float:
        return self(x) / MERSENNE_61

    def __repr__(self) -> str:
        return f"KWiseHash(independence={self.independence})"


class AliasTable:
    """
    Walker/Vose alias table for O(1) sampling from a fixed discrete distribution.

    Args:
        weights (Sequence[float]): non-negative weights, at least one positive.
    """

    def __init__(self, weights: Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("Alias table needs a non-empty weight vector.")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("Alias weights must be non-negative with a positive sum.")

        n = len(w)
        scaled = w * n / w.sum()
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            self.prob[i] = 1.0

    def __len__(self) -> int:
        return len(self.prob)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """
        Draw `size` indices.
        """
        columns = rng.integers(0, len(self.prob), size=size)
        coins = rng.random(size)
        return np.where(coins < self.prob[columns], columns, self.alias[columns])
