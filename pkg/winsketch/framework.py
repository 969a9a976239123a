"""
Bucketing-based sketches maintained over a sliding window.

A sketch specification is a tuple of sub-sketches. Each sub-sketch filters items,
assigns the survivors to buckets and stores a processed form of every item until the
bucket load exceeds its threshold, at which point the earliest entries are evicted.
`SketchEngine` runs one such sketch per guess of the optimum and keeps each of them
within a global space cap by dropping a prefix of the stream.
"""

from __future__ import annotations

import logging
import math
from bisect import bisect_left
from collections import Counter, deque
from collections.abc import Callable, Hashable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Generic, TypeVar

from winsketch.constants import Status

LOGGER = logging.getLogger(__name__)

V = TypeVar("V")

Buckets = dict[Hashable, list["Entry"]]


@dataclass(frozen=True, slots=True)
class TimestampedItem(Generic[V]):
    value: V
    tau: int


def unit_size(item: TimestampedItem) -> int:
    return 1


@dataclass(frozen=True)
class SubSketchSpec:
    """
    One sub-sketch: filter, bucket and process functions plus a bucket threshold.

    All functions must be pure. `unit_size(x)` is the space taken by `processor(x)`.
    """

    filter: Callable[[TimestampedItem], bool]
    bucketer: Callable[[TimestampedItem], Hashable]
    processor: Callable[[TimestampedItem], Any]
    threshold: float
    unit_size: Callable[[TimestampedItem], int] = unit_size
    name: str = ""

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError(f"Threshold must be non-negative, got {self.threshold}.")


@dataclass(frozen=True)
class Recovery:
    """
    Outcome of a recover function on one level: an estimate or FAIL.
    """

    value: float
    witness: Any = None
    status: Status = Status.OK
    certified: bool = True
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == Status.OK

    @classmethod
    def fail(cls, reason: str) -> Recovery:
        return cls(value=math.nan, status=Status.FAIL, reason=reason)


@dataclass(frozen=True)
class SketchSpec:
    subs: tuple[SubSketchSpec, ...]
    recover: Callable[[LevelSnapshot], Recovery]

    def __post_init__(self):
        if len(self.subs) < 1:
            raise ValueError("A sketch needs at least one sub-sketch.")


@dataclass(frozen=True, slots=True)
class Entry:
    item: TimestampedItem
    info: Any
    size: int

    @property
    def tau(self) -> int:
        return self.item.tau


@dataclass(frozen=True)
class GuessLadder:
    levels: tuple[float, ...]
    m: float
    M: float

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self) -> Iterator[float]:
        return iter(self.levels)

    def failure_bound(self, delta: float) -> float:
        """
        Union bound on the probability that some level misbehaves, given a per level
        failure probability `delta`.
        """
        return min(1.0, len(self.levels) * delta)


def make_ladder(m: float, M: float) -> GuessLadder:
    """
    Build the guess ladder {m, 2m, 4m, ...} up to the first guess >= M.

    Args:
        m (float): smallest guess.
        M (float): largest value the optimum can take.

    Returns:
        GuessLadder: the ladder.
    """
    if m <= 0:
        raise ValueError(f"Smallest guess must be positive, got {m}.")
    if M < m:
        raise ValueError(f"Largest guess {M} is smaller than smallest guess {m}.")

    levels = [float(m)]
    while levels[-1] < M:
        levels.append(levels[-1] * 2)
    return GuessLadder(tuple(levels), float(m), float(M))


@dataclass(frozen=True)
class LevelSnapshot:
    """
    Window restriction of one level's buckets.
    """

    o: float
    left: int
    N: int
    W: int
    buckets: tuple[dict[Hashable, tuple[Entry, ...]], ...]
    spec: SketchSpec

    @property
    def start(self) -> int:
        return window_start(self.N, self.W)

    def entries(self, sub: int) -> Iterator[Entry]:
        for bucket in self.buckets[sub].values():
            yield from bucket

    def load(self, sub: int, bid: Hashable) -> int:
        return sum(e.size for e in self.buckets[sub].get(bid, ()))


@dataclass(frozen=True)
class WindowedEstimate:
    value: float
    witness: Any
    level: float | None
    status: Status
    certified: bool = True
    reason: str = ""
    failure_bound: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == Status.OK

    @classmethod
    def fail(cls, reason: str) -> WindowedEstimate:
        return cls(math.nan, None, None, Status.FAIL, certified=False, reason=reason)


@dataclass(frozen=True)
class SpaceBudget:
    per_level: dict[float, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return sum(self.per_level.values())


def window_start(N: int, W: int) -> int:
    return max(1, N - W + 1)


class LevelState:
    """
    Buckets of one ladder level, together with its left pointer and space budget.

    Args:
        o (float): the guess of this level.
        spec (SketchSpec): the sketch specification for this guess.
        space_cap (float): the cap S on the space budget.
    """

    def __init__(self, o: float, spec: SketchSpec, space_cap: float):
        if space_cap < 0:
            raise ValueError(f"Space cap must be non-negative, got {space_cap}.")
        self.o = o
        self.spec = spec
        self.space_cap = space_cap
        self.left = 1
        self.budget = 0
        self.N = 0
        self._buckets: list[dict[Hashable, deque[Entry]]] = [{} for _ in spec.subs]
        self._loads: list[dict[Hashable, int]] = [{} for _ in spec.subs]
        # tau -> (sub, bucket) pairs still holding an entry of that arrival
        self._where: dict[int, list[tuple[int, Hashable]]] = {}

    def __repr__(self) -> str:
        return f"LevelState(o={self.o}, left={self.left}, budget={self.budget})"

    def ingest(self, item: TimestampedItem):
        if item.tau != self.N + 1:
            raise ValueError(f"Expected timestamp {self.N + 1}, got {item.tau}.")
        self.N = item.tau

        for i, sub in enumerate(self.spec.subs):
            if not sub.filter(item):
                continue
            bid = sub.bucketer(item)
            size = sub.unit_size(item)
            bucket = self._buckets[i].setdefault(bid, deque())
            bucket.append(Entry(item, sub.processor(item), size))
            self._where.setdefault(item.tau, []).append((i, bid))
            load = self._loads[i].get(bid, 0) + size
            self.budget += size
            while load > sub.threshold:
                evicted = bucket.popleft()
                load -= evicted.size
                self.budget -= evicted.size
                self._forget(evicted.tau, i, bid)
            self._store_load(i, bid, load)

        while self.budget > self.space_cap:
            self._drop_arrival(self.left)
            self.left += 1

    def _store_load(self, sub: int, bid: Hashable, load: int):
        if self._buckets[sub][bid]:
            self._loads[sub][bid] = load
        else:
            del self._buckets[sub][bid]
            self._loads[sub].pop(bid, None)

    def _forget(self, tau: int, sub: int, bid: Hashable):
        slots = self._where[tau]
        slots.remove((sub, bid))
        if not slots:
            del self._where[tau]

    def _drop_arrival(self, tau: int):
        for sub, bid in self._where.pop(tau, []):
            bucket = self._buckets[sub][bid]
            entry = bucket.popleft()
            assert entry.tau == tau, "Bucket entries out of order."
            self.budget -= entry.size
            self._store_load(sub, bid, self._loads[sub][bid] - entry.size)

    def contents(self) -> list[Buckets]:
        return [
            {bid: list(bucket) for bid, bucket in buckets.items()}
            for buckets in self._buckets
        ]

    def snapshot(self, W: int) -> LevelSnapshot | None:
        """
        Window restriction of the buckets, or None when this level dropped part of
        the window.
        """
        start = window_start(self.N, W)
        if self.left > start:
            return None

        restricted = []
        for buckets in self._buckets:
            kept: dict[Hashable, tuple[Entry, ...]] = {}
            for bid, bucket in buckets.items():
                entries = list(bucket)
                j = bisect_left(entries, start, key=lambda e: e.tau)
                if j < len(entries):
                    kept[bid] = tuple(entries[j:])
            restricted.append(kept)
        return LevelSnapshot(self.o, self.left, self.N, W, tuple(restricted), self.spec)


class SketchEngine:
    """
    One bucketing-based sketch per guess in the ladder.

    Args:
        ladder (GuessLadder): the guesses.
        spec_factory (Callable[[float], SketchSpec]): sketch specification for a guess.
        space_cap (float): cap S on the space budget of every level.
        delta (float): per level failure probability, used for reporting only.
    """

    def __init__(
        self,
        ladder: GuessLadder,
        spec_factory: Callable[[float], SketchSpec],
        space_cap: float,
        delta: float = 0.0,
    ):
        self.ladder = ladder
        self.space_cap = space_cap
        self.delta = delta
        self.levels = [LevelState(o, spec_factory(o), space_cap) for o in ladder]
        self.N = 0

    def __repr__(self) -> str:
        return f"SketchEngine(levels={len(self.levels)}, N={self.N}, S={self.space_cap})"

    def ingest(self, value: Any) -> TimestampedItem:
        self.N += 1
        item = TimestampedItem(value, self.N)
        for level in self.levels:
            level.ingest(item)
        return item

    def snapshot(self, W: int) -> list[LevelSnapshot]:
        if W < 1:
            raise ValueError(f"Window size must be at least 1, got {W}.")
        snapshots = []
        for level in self.levels:
            snap = level.snapshot(W)
            if snap is None:
                LOGGER.debug(f"Level o={level.o} excluded, left pointer {level.left}.")
            else:
                snapshots.append(snap)
        return snapshots

    def query(self, W: int) -> WindowedEstimate:
        estimate = recover(self.snapshot(W))
        return replace(estimate, failure_bound=self.ladder.failure_bound(self.delta))

    def space_budget(self) -> SpaceBudget:
        return SpaceBudget(
            {level.o: space_budget(level.contents(), level.spec) for level in self.levels}
        )


def recover(
    snapshots: Sequence[LevelSnapshot],
    recover_fn: Callable[[LevelSnapshot], Recovery] | None = None,
) -> WindowedEstimate:
    """
    Run the recover function on each snapshot by increasing guess and return the first
    one that does not FAIL.

    Args:
        snapshots (Sequence[LevelSnapshot]): qualifying levels.
        recover_fn (Callable | None): override of the snapshots' own recover function.

    Returns:
        WindowedEstimate: the estimate of the smallest successful level, or FAIL.
    """
    if not snapshots:
        return WindowedEstimate.fail("no level covers the window")

    for snap in sorted(snapshots, key=lambda s: s.o):
        fn = recover_fn or snap.spec.recover
        result = fn(snap)
        if result.ok:
            return WindowedEstimate(
                result.value, result.witness, snap.o, Status.OK, result.certified
            )
        LOGGER.debug(f"Level o={snap.o} failed: {result.reason}")
    return WindowedEstimate.fail("every level failed")


def offline_sketch(items: Iterable[TimestampedItem], spec: SketchSpec) -> list[Buckets]:
    """
    Build the sketch of a finite item sequence directly: every bucket keeps the
    longest run of latest filtered items whose total size fits its threshold.

    Args:
        items (Iterable[TimestampedItem]): items in timestamp order.
        spec (SketchSpec): the sketch specification.

    Returns:
        list[Buckets]: per sub-sketch, bucket id to entries in timestamp order.
    """
    items = list(items)
    result: list[Buckets] = []
    for sub in spec.subs:
        grouped: Buckets = {}
        for item in items:
            if sub.filter(item):
                entry = Entry(item, sub.processor(item), sub.unit_size(item))
                grouped.setdefault(sub.bucketer(item), []).append(entry)

        kept: Buckets = {}
        for bid, entries in grouped.items():
            total = 0
            suffix = []
            for entry in reversed(entries):
                if total + entry.size > sub.threshold:
                    break
                total += entry.size
                suffix.append(entry)
            if suffix:
                kept[bid] = suffix[::-1]
        result.append(kept)
    return result


def space_budget(contents: Sequence[Buckets], spec: SketchSpec) -> float:
    """
    Sum over sub-sketches and buckets of min(threshold, stored size).
    """
    return sum(
        min(sub.threshold, sum(e.size for e in bucket))
        for sub, buckets in zip(spec.subs, contents)
        for bucket in buckets.values()
    )


class DistinctWindowTracker:
    """
    Short history of recent items used to detect windows with few distinct values.

    An arriving item is appended. If its value now occurs more than `per_value_cap`
    times, the earliest copy is removed; otherwise, if the history holds more than
    `capacity` items, the earliest item is removed.
    """

    def __init__(self, per_value_cap: int, capacity: int):
        if per_value_cap < 1 or capacity < 1:
            raise ValueError("Tracker caps must be positive.")
        self.per_value_cap = per_value_cap
        self.capacity = capacity
        self.items: deque[TimestampedItem] = deque()
        self._counts: Counter[Hashable] = Counter()

    def __len__(self) -> int:
        return len(self.items)

    def ingest(self, item: TimestampedItem):
        self.items.append(item)
        self._counts[item.value] += 1
        if self._counts[item.value] > self.per_value_cap:
            for idx, old in enumerate(self.items):
                if old.value == item.value:
                    del self.items[idx]
                    break
            self._counts[item.value] -= 1
        elif len(self.items) > self.capacity:
            old = self.items.popleft()
            self._counts[old.value] -= 1
            if not self._counts[old.value]:
                del self._counts[old.value]

    def window(self, N: int, W: int) -> list[TimestampedItem]:
        start = window_start(N, W)
        return [item for item in self.items if item.tau >= start]


class SlidingWindowSolver:
    """
    Front end pairing a sketch engine with a window size.

    Subclasses may answer a query directly, without the ladder, by overriding
    `_shortcut` (typically when the window optimum is zero).
    """

    def __init__(self, engine: SketchEngine, window: int):
        if window < 1:
            raise ValueError(f"Window size must be at least 1, got {window}.")
        self.engine = engine
        self.window = window

    @property
    def N(self) -> int:
        return self.engine.N

    def ingest(self, value: Any) -> TimestampedItem:
        item = self.engine.ingest(value)
        self._observe(item)
        return item

    def _observe(self, item: TimestampedItem):
        pass

    def _shortcut(self) -> WindowedEstimate | None:
        return None

    def query(self) -> WindowedEstimate:
        estimate = self._shortcut()
        if estimate is not None:
            return estimate
        return self.engine.query(self.window)

    def space_budget(self) -> SpaceBudget:
        return self.engine.space_budget()
