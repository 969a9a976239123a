"""
Sliding-window diversity maximization over the integer grid [Delta]^d.

Every window point is snapped to a grid of side mu = eps o / (10 sqrt(d)). The sketch
keeps the k latest points plus the T_div latest points of every grid cell; the best
k-subset of what it keeps loses at most an eps fraction of the window optimum when the
normalized optimum lies in [o, 2o].
"""

import logging
import math
from collections import Counter
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from winsketch.constants import (
    BIPARTITION_CAP,
    HELD_KARP_CAP,
    MATCHING_CAP,
    T_CYCLES_CAP,
    DiversityKind,
    DivSolver,
    Status,
)
from winsketch.framework import (
    DistinctWindowTracker,
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
from winsketch.profiles import DESK, Profile

LOGGER = logging.getLogger(__name__)

Point = tuple[int, ...]

SINGLE_COPY_KINDS = {
    DiversityKind.EDGE,
    DiversityKind.TREE,
    DiversityKind.CYCLE,
    DiversityKind.T_TREES,
    DiversityKind.T_CYCLES,
}

_SIZE_CAPS = {
    DiversityKind.CYCLE: HELD_KARP_CAP,
    DiversityKind.T_CYCLES: T_CYCLES_CAP,
    DiversityKind.BIPARTITION: BIPARTITION_CAP,
    DiversityKind.MATCHING: MATCHING_CAP,
}


def check_kind(kind: DiversityKind, k: int, t: int = 1):
    if k < 2:
        raise ValueError(f"Diversity needs k >= 2, got {k}.")
    if kind == DiversityKind.MATCHING and k % 2:
        raise ValueError(f"{kind} needs an even k, got {k}.")
    if kind in (DiversityKind.T_TREES, DiversityKind.T_CYCLES) and not 1 <= t < k:
        raise ValueError(f"{kind} needs 1 <= t < k, got t={t}, k={k}.")


def t_div(kind: DiversityKind, k: int) -> int:
    return 1 if kind in SINGLE_COPY_KINDS else k


def normalizer(kind: DiversityKind, k: int, t: int = 1) -> int:
    """
    Number of distances summed by a diversity function on k points.

    Args:
        kind (DiversityKind): the diversity function.
        k (int): solution size.
        t (int): number of trees or cycles for the t-variants.

    Returns:
        int: the divisor mapping OPT to the normalized optimum.
    """
    check_kind(kind, k, t)
    match kind:
        case DiversityKind.EDGE:
            return 1
        case DiversityKind.CLIQUE:
            return k * (k - 1) // 2
        case DiversityKind.TREE | DiversityKind.STAR:
            return k - 1
        case DiversityKind.T_TREES:
            return k - t
        case DiversityKind.BIPARTITION:
            return (k // 2) * ((k + 1) // 2)
        case DiversityKind.MATCHING:
            return k // 2
        case _:
            return k


def grid_snap(x: Sequence[int], mu_squared: Fraction) -> tuple[int, ...]:
    """
    Grid point of side mu holding x, as its index vector floor(x / mu).

    The side is passed squared so that integer coordinates snap exactly.
    """
    if mu_squared <= 0:
        raise ValueError(f"Grid side must be positive, got mu^2 = {mu_squared}.")
    num, den = mu_squared.numerator, mu_squared.denominator
    return tuple(math.isqrt(c * c * den // num) for c in x)


def distance_matrix(points: Sequence[Sequence[float]]) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    diff = P[:, None, :] - P[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def _mst_weights(D: np.ndarray) -> list[float]:
    n = len(D)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = D[0].copy()
    weights = []
    for _ in range(n - 1):
        candidates = np.where(in_tree, np.inf, best)
        j = int(np.argmin(candidates))
        weights.append(float(candidates[j]))
        in_tree[j] = True
        best = np.minimum(best, D[j])
    return weights


def _tour_costs(D: list[list[float]]) -> list[float]:
    """
    Shortest closed tour through every subset of the points (Held-Karp on all masks).
    """
    n = len(D)
    full = 1 << n
    dp = [[math.inf] * n for _ in range(full)]
    for s in range(n):
        dp[1 << s][s] = 0.0
    tours = [0.0] * full
    for mask in range(1, full):
        low = (mask & -mask).bit_length() - 1
        row = dp[mask]
        best = math.inf
        for j in range(n):
            cost = row[j]
            if cost == math.inf:
                continue
            best = min(best, cost + D[j][low])
            for nxt in range(low + 1, n):
                if mask & (1 << nxt):
                    continue
                nxt_mask = mask | (1 << nxt)
                candidate = cost + D[j][nxt]
                if candidate < dp[nxt_mask][nxt]:
                    dp[nxt_mask][nxt] = candidate
        tours[mask] = best
    return tours


def _min_partition_tours(tours: list[float], n: int, t: int) -> float:
    full = (1 << n) - 1
    parts = list(tours)
    for _ in range(t - 1):
        nxt = [math.inf] * (full + 1)
        for mask in range(1, full + 1):
            low = mask & -mask
            rest = mask ^ low
            sub = rest
            # sub ranges over subsets of rest; low always joins the first part
            while True:
                part = sub | low
                if part != mask:
                    nxt[mask] = min(nxt[mask], tours[part] + parts[mask ^ part])
                if sub == 0:
                    break
                sub = (sub - 1) & rest
        parts = nxt
    return parts[full]


def _min_matching(D: list[list[float]]) -> float:
    n = len(D)
    memo: dict[int, float] = {0: 0.0}

    def solve(mask: int) -> float:
        if mask in memo:
            return memo[mask]
        low = (mask & -mask).bit_length() - 1
        rest = mask ^ (1 << low)
        best = math.inf
        for j in range(n):
            if rest & (1 << j):
                best = min(best, D[low][j] + solve(rest ^ (1 << j)))
        memo[mask] = best
        return best

    return solve((1 << n) - 1)


def div_value(Q: Sequence[Point], kind: DiversityKind, t: int = 1) -> float:
    """
    Exact diversity of a point multiset.

    Args:
        Q (Sequence[Point]): the k points.
        kind (DiversityKind): the diversity function.
        t (int): number of trees or cycles for the t-variants.

    Returns:
        float: the diversity value (not normalized).
    """
    k = len(Q)
    check_kind(kind, k, t)
    cap = _SIZE_CAPS.get(kind)
    if cap is not None and k > cap:
        raise ValueError(f"{kind} is solved exactly only for k <= {cap}, got {k}.")

    D = distance_matrix(Q)
    upper = D[np.triu_indices(k, 1)]
    match kind:
        case DiversityKind.EDGE:
            return float(upper.min())
        case DiversityKind.CLIQUE:
            return float(upper.sum())
        case DiversityKind.TREE:
            return sum(_mst_weights(D))
        case DiversityKind.T_TREES:
            return sum(sorted(_mst_weights(D))[: k - t])
        case DiversityKind.CYCLE:
            return _tour_costs(D.tolist())[(1 << k) - 1]
        case DiversityKind.T_CYCLES:
            return _min_partition_tours(_tour_costs(D.tolist()), k, t)
        case DiversityKind.STAR:
            return float(D.sum(axis=1).min())
        case DiversityKind.BIPARTITION:
            everyone = set(range(k))
            return min(
                float(D[np.ix_(list(side), sorted(everyone - set(side)))].sum())
                for side in combinations(range(k), k // 2)
            )
        case DiversityKind.PSEUDOFOREST:
            off = D + np.diag(np.full(k, np.inf))
            return float(off.min(axis=1).sum())
        case DiversityKind.MATCHING:
            return _min_matching(D.tolist())
    raise ValueError(f"Unknown diversity kind {kind}.")


@dataclass(frozen=True)
class DivSpecParams:
    o: float
    eps: float
    k: int
    kind: DiversityKind
    t: int = 1
    d: int = 2

    def __post_init__(self):
        check_kind(self.kind, self.k, self.t)
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}.")

    @property
    def mu(self) -> float:
        return self.eps * self.o / (10 * math.sqrt(self.d))

    @property
    def t_div(self) -> int:
        return t_div(self.kind, self.k)

    @property
    def mu_squared(self) -> Fraction:
        return (Fraction(self.eps) * Fraction(self.o)) ** 2 / (100 * self.d)

    def cell(self, x: Point) -> tuple[int, ...]:
        return grid_snap(x, self.mu_squared)


@dataclass(frozen=True)
class DiversitySolution:
    points: tuple[Point, ...]
    value: float
    certified: bool = True


def div_spec(
    params: DivSpecParams,
    solver: DivSolver = DivSolver.EXACT,
    exact_budget: int = 200_000,
) -> SketchSpec:
    d, k = params.d, params.k
    latest = SubSketchSpec(
        filter=lambda item: True,
        bucketer=lambda item: 0,
        processor=lambda item: None,
        threshold=k * d,
        unit_size=lambda item: d,
        name="latest",
    )
    cells = SubSketchSpec(
        filter=lambda item: True,
        bucketer=lambda item: params.cell(item.value),
        processor=lambda item: None,
        threshold=params.t_div * d,
        unit_size=lambda item: d,
        name="cells",
    )

    def recover(snap: LevelSnapshot) -> Recovery:
        solution = recover_div(snap, k, params.kind, params.t, solver, exact_budget)
        return Recovery(solution.value, solution, certified=solution.certified)

    return SketchSpec((latest, cells), recover)


def recover_div(
    snap: LevelSnapshot,
    k: int,
    kind: DiversityKind,
    t: int = 1,
    solver: DivSolver = DivSolver.EXACT,
    exact_budget: int = 200_000,
) -> DiversitySolution:
    """
    Solve diversity on the points kept by a snapshot of `div_spec`.
    """
    kept = {e.tau: e.item.value for sub in (0, 1) for e in snap.entries(sub)}
    points = [kept[tau] for tau in sorted(kept)]
    if solver == DivSolver.GREEDY:
        return greedy_diversity(points, k, kind, t)
    return solve_diversity(points, k, kind, t, exact_budget)


def count_submultisets(counts: Sequence[int], k: int) -> int:
    ways = [1] + [0] * k
    for c in counts:
        nxt = [0] * (k + 1)
        for total, w in enumerate(ways):
            if w:
                for used in range(min(c, k - total) + 1):
                    nxt[total + used] += w
        ways = nxt
    return ways[k]


def submultisets(
    values: Sequence[Point], counts: Sequence[int], k: int
) -> Iterator[list[Point]]:
    chosen: list[Point] = []

    def walk(i: int, left: int) -> Iterator[list[Point]]:
        if left == 0:
            yield list(chosen)
            return
        if i == len(values):
            return
        for used in range(min(counts[i], left), -1, -1):
            chosen.extend([values[i]] * used)
            yield from walk(i + 1, left - used)
            del chosen[len(chosen) - used :]

    yield from walk(0, k)


def exact_diversity(points: Sequence[Point], k: int, kind: DiversityKind, t: int = 1):
    """
    Best k-submultiset of `points` by enumeration.
    """
    if len(points) < k:
        return DiversitySolution(tuple(points), 0.0)
    counts = Counter(points)
    values = list(counts)
    best: list[Point] = []
    best_value = -math.inf
    for Q in submultisets(values, [min(counts[v], k) for v in values], k):
        value = div_value(Q, kind, t)
        if value > best_value:
            best, best_value = Q, value
    return DiversitySolution(tuple(best), best_value)


def greedy_diversity(points: Sequence[Point], k: int, kind: DiversityKind, t: int = 1):
    """
    Farthest-point selection: start from the latest point and repeatedly add the
    point farthest from those chosen.
    """
    if len(points) < k:
        return DiversitySolution(tuple(points), 0.0, certified=False)

    distinct = list(dict.fromkeys(reversed(points)))
    D = distance_matrix(distinct)
    chosen = [0]
    nearest = D[0].copy()
    while len(chosen) < min(k, len(distinct)):
        j = int(np.argmax(nearest))
        chosen.append(j)
        nearest = np.minimum(nearest, D[j])

    Q = [distinct[j] for j in chosen]
    spare = Counter(points)
    for q in Q:
        spare[q] -= 1
    for value in distinct:
        while len(Q) < k and spare[value] > 0:
            Q.append(value)
            spare[value] -= 1
    return DiversitySolution(tuple(Q), div_value(Q, kind, t), certified=False)


def solve_diversity(
    points: Sequence[Point],
    k: int,
    kind: DiversityKind,
    t: int = 1,
    exact_budget: int = 200_000,
) -> DiversitySolution:
    counts = Counter(points)
    size = count_submultisets([min(c, k) for c in counts.values()], k)
    if size > exact_budget:
        LOGGER.warning(
            f"{size} candidate subsets exceed the exact budget {exact_budget}, "
            "falling back to farthest-point greedy."
        )
        return greedy_diversity(points, k, kind, t)
    return exact_diversity(points, k, kind, t)


def div_space_cap(k: int, kind: DiversityKind, d: int, eps: float, scale: float = 1.0):
    side = 2 * math.sqrt(d) + 40 * math.sqrt(d) / eps + 1
    return scale * d * (k * t_div(kind, k) * side**d + k)


class ZeroOptTracker(DistinctWindowTracker):
    """
    Keeps at most `per_value_cap` copies of each value and k * per_value_cap items,
    enough to solve the window exactly whenever it holds fewer than k distinct points.
    """

    def __init__(self, k: int, per_value_cap: int):
        super().__init__(per_value_cap, k * per_value_cap)
        self.k = k

    def query(self, N: int, W: int) -> list[Point] | None:
        """
        Window points kept by the tracker when the window has fewer than k distinct
        values, None otherwise.
        """
        values = [item.value for item in self.window(N, W)]
        if len(set(values)) >= self.k:
            return None
        return values


def zero_opt_solution(
    values: Sequence[Point], k: int, kind: DiversityKind, t: int = 1
) -> DiversitySolution:
    """
    Exact optimum of a window with fewer than k distinct values from the tracker's
    copies. Missing copies are filled by repeating the latest value.
    """
    if not values:
        return DiversitySolution((), 0.0)
    padded = list(values) + [values[-1]] * max(0, k - len(values))
    return exact_diversity(padded, k, kind, t)


class DiversityWindow(SlidingWindowSolver):
    """
    Sliding-window diversity maximization. Deterministic.
    """

    def __init__(
        self,
        kind: DiversityKind,
        k: int,
        d: int,
        delta_grid: int,
        window: int,
        eps: float,
        t: int = 1,
        solver: DivSolver = DivSolver.EXACT,
        profile: Profile = DESK,
        space_cap: float | None = None,
    ):
        check_kind(kind, k, t)
        self.kind, self.k, self.t, self.d, self.delta_grid = kind, k, t, d, delta_grid
        budget = profile.div_exact_budget

        def factory(o: float) -> SketchSpec:
            return div_spec(DivSpecParams(o, eps, k, kind, t, d), solver, budget)

        if space_cap is None:
            space_cap = div_space_cap(k, kind, d, eps, profile.div_space_scale)
        ladder = make_ladder(1, math.sqrt(d) * delta_grid)
        super().__init__(SketchEngine(ladder, factory, space_cap), window)

        per_value = k if kind == DiversityKind.T_CYCLES else t_div(kind, k)
        self.tracker = ZeroOptTracker(k, per_value)

    def ingest(self, value: Sequence[int]) -> TimestampedItem:
        point = tuple(int(c) for c in value)
        if len(point) != self.d or not all(1 <= c <= self.delta_grid for c in point):
            raise ValueError(f"Point {point} is not in [{self.delta_grid}]^{self.d}.")
        return super().ingest(point)

    def _observe(self, item: TimestampedItem):
        self.tracker.ingest(item)

    def _shortcut(self) -> WindowedEstimate | None:
        if self.N - window_start(self.N, self.window) + 1 < self.k:
            return WindowedEstimate(0.0, DiversitySolution((), 0.0), None, Status.OK)
        values = self.tracker.query(self.N, self.window)
        if values is None:
            return None
        solution = zero_opt_solution(values, self.k, self.kind, self.t)
        return WindowedEstimate(solution.value, solution, None, Status.OK)
