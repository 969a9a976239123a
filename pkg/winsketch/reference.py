"""
Count-of-ones and toy 1-median over a window of bits.

Both sketches keep every 1 (or every bit) with probability p, in buckets capped at
10 ln(1/delta) / eps^2 entries. A level cannot reconstruct the window sample when a
bucket is full and its earliest entry arrived after the window start; such a level
FAILs and the ladder moves on to a larger guess.
"""

import logging
import math
from dataclasses import dataclass

from winsketch.framework import (
    LevelSnapshot,
    Recovery,
    SketchEngine,
    SketchSpec,
    SlidingWindowSolver,
    SubSketchSpec,
    TimestampedItem,
    make_ladder,
)
from winsketch.prf import derive_key, prf_uniform
from winsketch.profiles import DESK, Profile

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class OnesSpecParams:
    o: float
    eps: float
    delta: float
    c: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 0.5), got {self.eps}.")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}.")
        if self.o <= 0:
            raise ValueError(f"Guess must be positive, got {self.o}.")

    @property
    def p(self) -> float:
        return min(self.c * math.log(1 / self.delta) / (self.eps**2 * self.o), 1.0)

    @property
    def threshold(self) -> int:
        return math.ceil(10 * math.log(1 / self.delta) / self.eps**2)


def bucket_covers_window(
    snap: LevelSnapshot, sub: int, bid: int, threshold: float
) -> bool:
    """
    Whether a bucket still holds every filtered item of the window.
    """
    entries = snap.buckets[sub].get(bid, ())
    if sum(e.size for e in entries) < threshold:
        return True
    return entries[0].tau <= snap.start


def _constant(value):
    return lambda item: value


def ones_spec(params: OnesSpecParams) -> SketchSpec:
    key = derive_key(params.seed, "ones", params.o)
    p = params.p

    def keep(item: TimestampedItem) -> bool:
        return item.value == 1 and prf_uniform(key, item.tau) < p

    sub = SubSketchSpec(
        filter=keep,
        bucketer=_constant(0),
        processor=_constant(None),
        threshold=params.threshold,
        name="ones",
    )

    def recover(snap: LevelSnapshot) -> Recovery:
        if not bucket_covers_window(snap, 0, 0, params.threshold):
            return Recovery.fail("ones bucket overflowed inside the window")
        count = len(snap.buckets[0].get(0, ()))
        return Recovery(count / p, witness=count)

    return SketchSpec((sub,), recover)


def toy_median_spec(params: OnesSpecParams) -> SketchSpec:
    key = derive_key(params.seed, "median", params.o)
    p = params.p

    def keep(item: TimestampedItem) -> bool:
        return prf_uniform(key, item.tau) < p

    sub = SubSketchSpec(
        filter=keep,
        bucketer=lambda item: item.value,
        processor=_constant(None),
        threshold=params.threshold,
        name="median",
    )

    def recover(snap: LevelSnapshot) -> Recovery:
        for bit in (0, 1):
            if not bucket_covers_window(snap, 0, bit, params.threshold):
                return Recovery.fail(f"bucket {bit} overflowed inside the window")
        zeros = len(snap.buckets[0].get(0, ()))
        ones = len(snap.buckets[0].get(1, ()))
        median = 1 if ones >= zeros else 0
        return Recovery(min(zeros, ones) / p, witness=median)

    return SketchSpec((sub,), recover)


def _check_bit(value: int):
    if value not in (0, 1):
        raise ValueError(f"Expected a bit, got {value!r}.")


class OnesCounter(SlidingWindowSolver):
    """
    Number of ones among the last `window` bits.
    """

    def __init__(
        self,
        window: int,
        eps: float,
        delta: float,
        seed: int = 0,
        profile: Profile = DESK,
    ):
        def factory(o: float) -> SketchSpec:
            return ones_spec(OnesSpecParams(o, eps, delta, profile.toy_rate, seed))

        threshold = OnesSpecParams(1, eps, delta).threshold
        engine = SketchEngine(make_ladder(1, window), factory, threshold, delta)
        super().__init__(engine, window)

    def ingest(self, value: int) -> TimestampedItem:
        _check_bit(value)
        return super().ingest(value)


class ToyMedian(SlidingWindowSolver):
    """
    Optimal 1-median cost min(#zeros, #ones) of the last `window` bits.
    """

    def __init__(
        self,
        window: int,
        eps: float,
        delta: float,
        seed: int = 0,
        profile: Profile = DESK,
    ):
        def factory(o: float) -> SketchSpec:
            return toy_median_spec(OnesSpecParams(o, eps, delta, profile.toy_rate, seed))

        threshold = OnesSpecParams(1, eps, delta).threshold
        engine = SketchEngine(make_ladder(1, window), factory, 2 * threshold, delta)
        super().__init__(engine, window)

    def ingest(self, value: int) -> TimestampedItem:
        _check_bit(value)
        return super().ingest(value)
