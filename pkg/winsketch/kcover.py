"""
Maximum k-coverage over a window of (set, element) edges.

Elements are subsampled by a seeded hash and every kept element keeps at most T of
its latest edges. The sketch graph is small and the best k sets on it, scaled by 1/p,
estimate the window optimum.
"""

import heapq
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

from winsketch.constants import (
    ORACLE_ENUMERATION_CAP,
    CoverRecovery,
    HashMode,
    Status,
)
from winsketch.framework import (
    LevelSnapshot,
    Recovery,
    SketchEngine,
    SketchSpec,
    SlidingWindowSolver,
    SubSketchSpec,
    TimestampedItem,
    WindowedEstimate,
    make_ladder,
    window_start,
)
from winsketch.prf import KWiseHash, derive_key, prf_uniform
from winsketch.profiles import DESK, Profile

LOGGER = logging.getLogger(__name__)

SketchGraph = dict[int, set[int]]


class Edge(NamedTuple):
    set_id: int
    elem_id: int


@dataclass(frozen=True)
class KCoverSpecParams:
    o: float
    n: int
    m: int
    k: int
    eps: float
    delta: float
    seed: int = 0
    rate_divisor: float = 1.0
    hash_mode: HashMode = HashMode.PRF
    recovery: CoverRecovery = CoverRecovery.EXACT

    def __post_init__(self):
        if self.k < 1 or self.k > self.n:
            raise ValueError(f"k must lie in [1, n={self.n}], got {self.k}.")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}.")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}.")

    @property
    def p(self) -> float:
        log_n = math.log(max(self.n, 2))
        rate = self.k * math.log(1 / self.delta) * log_n / (self.eps**2 * self.o)
        return min(rate / self.rate_divisor, 1.0)

    @property
    def T(self) -> int:
        return max(1, math.ceil(self.n * math.log(1 / self.eps) / (self.eps * self.k)))

    @property
    def independence(self) -> int:
        log_n = math.log(max(self.n, 2))
        return max(2, math.ceil(self.k * math.log(1 / self.delta) * log_n))


@dataclass(frozen=True)
class CoverageSolution:
    chosen: tuple[int, ...]
    covered_in_sketch: int
    estimate: float


def element_hash(params: KCoverSpecParams):
    """
    Element to [0, 1) hash, keyed by the seed and the guess.
    """
    if params.hash_mode == HashMode.KWISE:
        seed = int.from_bytes(derive_key(params.seed, "kcover", params.o)[:8], "big")
        return KWiseHash(params.independence, seed).uniform

    key = derive_key(params.seed, "kcover", params.o)
    return lambda elem: prf_uniform(key, elem)


def kcover_spec(params: KCoverSpecParams) -> SketchSpec:
    h = element_hash(params)
    p = params.p

    sub = SubSketchSpec(
        filter=lambda item: h(item.value.elem_id) <= p,
        bucketer=lambda item: item.value.elem_id,
        processor=lambda item: item.value,
        threshold=params.T,
        name="H'_p",
    )

    def recover(snap: LevelSnapshot) -> Recovery:
        graph = sketch_graph(e.info for e in snap.entries(0))
        if params.recovery == CoverRecovery.GREEDY:
            solution = recover_greedy(graph, params.k, p, params.n)
        else:
            solution = recover_exact(graph, params.k, p, params.n)
        return Recovery(solution.estimate, witness=solution)

    return SketchSpec((sub,), recover)


def kcover_space_cap(n: int, eps: float, delta: float, divisor: float = 1.0) -> float:
    log_n = math.log(max(n, 2))
    return (
        200 * n * math.log(1 / delta) * math.log(1 / eps) * log_n / eps**3 / divisor
    )


def sketch_graph(edges: Iterable[Edge]) -> SketchGraph:
    graph: SketchGraph = {}
    for edge in edges:
        graph.setdefault(edge.set_id, set()).add(edge.elem_id)
    return graph


def coverage(edges: Iterable[Edge], chosen: Iterable[int]) -> int:
    """
    Number of distinct elements adjacent to the chosen sets.
    """
    chosen = set(chosen)
    return len({e.elem_id for e in edges if e.set_id in chosen})


def _bitmasks(graph: SketchGraph, n: int) -> list[int]:
    index: dict[int, int] = {}
    masks = [0] * n
    for set_id, elems in graph.items():
        if set_id >= n:
            raise ValueError(f"Set id {set_id} is out of range for n={n}.")
        for elem in elems:
            masks[set_id] |= 1 << index.setdefault(elem, len(index))
    return masks


def recover_exact(graph: SketchGraph, k: int, p: float, n: int) -> CoverageSolution:
    """
    Best k sets of the sketch graph by exhaustive search.

    Args:
        graph (SketchGraph): set id to sampled elements.
        k (int): number of sets.
        p (float): element sampling rate.
        n (int): number of sets.

    Returns:
        CoverageSolution: the best sets and the scaled estimate.
    """
    if math.comb(n, k) > ORACLE_ENUMERATION_CAP:
        raise ValueError(f"C({n}, {k}) subsets exceed the enumeration cap.")

    masks = _bitmasks(graph, n)
    best: tuple[int, ...] = tuple(range(k))
    best_cover = -1
    for chosen in combinations(range(n), k):
        union = 0
        for s in chosen:
            union |= masks[s]
        covered = union.bit_count()
        if covered > best_cover:
            best, best_cover = chosen, covered
    return CoverageSolution(best, best_cover, best_cover / p)


def recover_greedy(graph: SketchGraph, k: int, p: float, n: int) -> CoverageSolution:
    """
    Lazy greedy max coverage on the sketch graph, ties broken by lowest set id.
    """
    masks = _bitmasks(graph, n)
    heap = [(-masks[s].bit_count(), s) for s in range(n)]
    heapq.heapify(heap)

    covered = 0
    chosen: list[int] = []
    while len(chosen) < k:
        neg_gain, s = heapq.heappop(heap)
        gain = (masks[s] & ~covered).bit_count()
        if gain == -neg_gain:
            chosen.append(s)
            covered |= masks[s]
        else:
            heapq.heappush(heap, (-gain, s))

    count = covered.bit_count()
    return CoverageSolution(tuple(chosen), count, count / p)


class NonemptyTracker:
    """
    Remembers the latest arrival to tell whether the window holds any edge.
    """

    def __init__(self):
        self.latest = 0

    def observe(self, tau: int):
        self.latest = max(self.latest, tau)

    def nonempty(self, N: int, W: int) -> bool:
        return self.latest >= window_start(N, W) and self.latest > 0


class KCoverWindow(SlidingWindowSolver):
    """
    Sliding-window max k-coverage in the edge-arrival model.
    """

    def __init__(
        self,
        n: int,
        m: int,
        k: int,
        window: int,
        eps: float,
        delta: float,
        seed: int = 0,
        recovery: CoverRecovery = CoverRecovery.EXACT,
        hash_mode: HashMode = HashMode.PRF,
        profile: Profile = DESK,
        space_cap: float | None = None,
    ):
        self.n, self.m, self.k = n, m, k

        def factory(o: float) -> SketchSpec:
            params = KCoverSpecParams(
                o,
                n,
                m,
                k,
                eps,
                delta,
                seed,
                rate_divisor=profile.kcover_rate_divisor,
                hash_mode=hash_mode,
                recovery=recovery,
            )
            return kcover_spec(params)

        if space_cap is None:
            space_cap = kcover_space_cap(n, eps, delta, profile.kcover_space_divisor)
        # OPT_k is at most min(m, window) once the window is nonempty
        ladder = make_ladder(1, max(1, min(m, window)))
        super().__init__(SketchEngine(ladder, factory, space_cap, delta), window)
        self.tracker = NonemptyTracker()

    def ingest(self, value: Sequence[int]) -> TimestampedItem:
        edge = Edge(*value)
        if not (0 <= edge.set_id < self.n and 0 <= edge.elem_id < self.m):
            raise ValueError(f"Edge {tuple(edge)} out of range, n={self.n}, m={self.m}.")
        return super().ingest(edge)

    def _observe(self, item: TimestampedItem):
        self.tracker.observe(item.tau)

    def _shortcut(self) -> WindowedEstimate | None:
        if self.tracker.nonempty(self.N, self.window):
            return None
        empty = CoverageSolution(tuple(range(self.k)), 0, 0.0)
        return WindowedEstimate(0.0, empty, None, Status.OK)
