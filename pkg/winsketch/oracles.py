"""
Brute-force optima used as ground truth by the experiments and the tests.
"""

import logging
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from itertools import combinations
from typing import Any

from winsketch.clustering import cost
from winsketch.constants import ORACLE_ENUMERATION_CAP, DiversityKind
from winsketch.diversity import count_submultisets, div_value, submultisets
from winsketch.framework import window_start

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowView:
    """
    The items with timestamp in [N - W + 1, N], in arrival order.
    """

    items: tuple[Any, ...]
    N: int
    W: int

    @classmethod
    def of(cls, stream: Sequence[Any], W: int, N: int | None = None) -> "WindowView":
        N = len(stream) if N is None else N
        if not 0 <= N <= len(stream):
            raise ValueError(f"Window end {N} outside a stream of {len(stream)} items.")
        return cls(tuple(stream[window_start(N, W) - 1 : N]), N, W)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def _check_enumeration(size: int, what: str):
    if size > ORACLE_ENUMERATION_CAP:
        raise ValueError(
            f"{what}: {size} subsets exceed the oracle cap {ORACLE_ENUMERATION_CAP}."
        )


def opt_kcover(edges: Iterable[tuple[int, int]], n: int, k: int) -> int:
    """
    Maximum number of elements covered by k of the n sets.

    Args:
        edges (Iterable[tuple[int, int]]): (set, element) pairs.
        n (int): number of sets.
        k (int): number of sets to choose.

    Returns:
        int: the optimum coverage.
    """
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, n={n}], got {k}.")
    _check_enumeration(math.comb(n, k), "k-cover")

    neighbours: list[set[int]] = [set() for _ in range(n)]
    for set_id, elem_id in edges:
        neighbours[set_id].add(elem_id)
    return max(
        len(set().union(*(neighbours[s] for s in chosen)))
        for chosen in combinations(range(n), k)
    )


def opt_div(
    points: Sequence[Sequence[int]], k: int, kind: DiversityKind, t: int = 1
) -> float:
    """
    Maximum diversity over the k-submultisets of a point multiset. Fewer than k
    points give 0.

    The search runs over distinct values with their multiplicities (capped at k), so
    its size depends on the number of distinct points, not on the window length.
    """
    counts = Counter(tuple(x) for x in points)
    if counts.total() < k:
        return 0.0
    values = list(counts)
    caps = [min(counts[v], k) for v in values]
    _check_enumeration(count_submultisets(caps, k), "diversity")
    return max(div_value(Q, kind, t) for Q in submultisets(values, caps, k))


def opt_cluster_candidates(
    points: Sequence[Sequence[float]],
    k: int,
    p: float,
    candidates: Sequence[Sequence[float]] | None = None,
) -> float:
    """
    Minimum l_p clustering cost over k centers drawn from `candidates` (the distinct
    data points by default).

    Args:
        points (Sequence[Sequence[float]]): the points to cluster.
        k (int): number of centers.
        p (float): cost exponent.
        candidates (Sequence[Sequence[float]] | None): allowed centers.

    Returns:
        float: the restricted optimum.
    """
    if candidates is None:
        candidates = points
    candidates = list(dict.fromkeys(tuple(c) for c in candidates))
    if len(points) == 0:
        return 0.0
    if len(candidates) <= k:
        return cost(points, candidates, p)
    _check_enumeration(math.comb(len(candidates), k), "clustering")
    return min(cost(points, chosen, p) for chosen in combinations(candidates, k))
