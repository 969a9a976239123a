"""
Sliding-window l_p k-clustering through coresets.

Points of [Delta]^d are placed in a randomly shifted hierarchy of grids. Three
bucketing-based sketches run side by side on every grid level:

- Z samples points with rate p_i and estimates cell counts, which decide the heavy
  cells top-down;
- Z' samples with rate p'_i and estimates |X^i|, the number of points in crucial
  cells of level i;
- Z'' assigns every point a random subset of m-hat replicas; a replica j of level i
  holds the crucial points whose subset contains j, and one uniform member per
  replica is one draw of the sensitivity sampling.

A level FAILs when some grid level runs out of nonempty replicas.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from winsketch.constants import SHIFT_BITS, ClusterMethod, Status
from winsketch.framework import (
    Buckets,
    DistinctWindowTracker,
    Entry,
    LevelSnapshot,
    Recovery,
    SketchEngine,
    SketchSpec,
    SlidingWindowSolver,
    SubSketchSpec,
    TimestampedItem,
    WindowedEstimate,
    make_ladder,
)
from winsketch.prf import AliasTable, derive_key, prf_int, prf_uniform
from winsketch.profiles import DESK, Profile

LOGGER = logging.getLogger(__name__)

Point = tuple[int, ...]
Cell = tuple[int, ...]
SnapshotBuckets = Sequence[dict[Cell, Sequence[Entry]]]


class ShiftedGrids:
    """
    Hierarchy of grids G_{-1}, ..., G_L shifted by a random vector v in [0, Delta)^d.

    G_i has cells of side Delta / 2^i. The shift is stored as integers s with
    v = s * Delta / 2^SHIFT_BITS so cell indices are computed exactly.
    """

    def __init__(self, delta_grid: int, d: int, L: int, shift: Sequence[int]):
        if len(shift) != d:
            raise ValueError(f"Shift has {len(shift)} coordinates, expected {d}.")
        if not all(0 <= s < 1 << SHIFT_BITS for s in shift):
            raise ValueError("Shift coordinates must lie in [0, 2^SHIFT_BITS).")
        self.delta_grid = delta_grid
        self.d = d
        self.L = L
        self.shift = tuple(int(s) for s in shift)
        self._denominator = delta_grid << (SHIFT_BITS + 1)
        self.cells = lru_cache(maxsize=1 << 14)(self._cells)

    def __repr__(self) -> str:
        return f"ShiftedGrids(delta={self.delta_grid}, d={self.d}, L={self.L})"

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.shift, dtype=float) * self.delta_grid / (1 << SHIFT_BITS)

    @property
    def root(self) -> Cell:
        return (0,) * self.d

    def side(self, i: int) -> float:
        return self.delta_grid / 2.0**i

    def cell(self, x: Point, i: int) -> Cell:
        """
        Index vector of the level-i cell containing x.
        """
        if not -1 <= i <= self.L:
            raise ValueError(f"Level {i} outside [-1, {self.L}].")
        return self.cells(x)[i + 1]

    def _cells(self, x: Point) -> tuple[Cell, ...]:
        base = [(c << SHIFT_BITS) + s * self.delta_grid for c, s in zip(x, self.shift)]
        return tuple(
            tuple((b << (i + 1)) // self._denominator for b in base)
            for i in range(-1, self.L + 1)
        )


def parent(cell: Cell) -> Cell:
    return tuple(c >> 1 for c in cell)


def level_count(n: int, d: int, delta_grid: int, slack: int = 10) -> int:
    return math.ceil(math.log2(n * d * delta_grid)) + slack


def build_grids(
    delta_grid: int, d: int, n: int, seed: int, slack: int = 10
) -> ShiftedGrids:
    """
    Sample the shift of the grid hierarchy.

    Args:
        delta_grid (int): side of the point domain [Delta]^d.
        d (int): dimension.
        n (int): bound on the number of points.
        seed (int): master seed.
        slack (int): extra levels beyond log2(n d Delta).

    Returns:
        ShiftedGrids: the grids.
    """
    if min(delta_grid, d, n) < 1:
        raise ValueError("Delta, d and n must be at least 1.")
    rng = np.random.default_rng(prf_int(derive_key(seed, "grids"), "shift"))
    shift = rng.integers(0, 1 << SHIFT_BITS, size=d)
    return ShiftedGrids(delta_grid, d, level_count(n, d, delta_grid, slack), shift)


@dataclass(frozen=True)
class ClusterSketchParams:
    o: float
    k: int
    p: float
    d: int
    delta_grid: int
    n: int
    eps: float
    delta: float
    L: int
    profile: Profile = DESK

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"Clustering needs p >= 1, got {self.p}.")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}.")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}.")

    def R(self, i: int) -> float:
        return 0.01 * self.o / (math.sqrt(self.d) * self.delta_grid / 2.0**i) ** self.p

    @property
    def log_term(self) -> float:
        return math.log(self.n * self.L / self.delta)

    @property
    def gamma(self) -> float:
        return self.eps / (40 * 2 ** (2 * self.p + 2) * self.L)

    @property
    def spread(self) -> float:
        return self.k * self.L + (2 * self.d**1.5) ** self.p

    def rate_z(self, i: int) -> float:
        return min(1.0, self.profile.cluster_z_rate * self.log_term / self.R(i))

    def rate_zp(self, i: int) -> float:
        scale = self.eps**2 * self.gamma * self.R(i)
        return min(1.0, self.profile.cluster_zp_rate * self.log_term / scale)

    def rate_zpp(self, i: int) -> float:
        return min(1.0, 1 / (self.profile.cluster_zpp_rate * self.spread * self.R(i)))

    @property
    def m_hat_uncapped(self) -> float:
        log_n = math.log(max(self.n, 2))
        inner = self.p * log_n * math.log(self.k * self.L * self.d)
        inner += math.log(1 / self.delta)
        return (
            self.profile.cluster_mhat_rate
            * 2 ** (2 * self.p + 2)
            / self.eps**3
            * self.spread
            * inner
            * self.L
            / self.delta
        )

    @property
    def m_hat(self) -> int:
        capped = min(self.profile.cluster_max_replicas, math.ceil(self.m_hat_uncapped))
        return max(1, capped)

    def threshold_z(self, i: int) -> int:
        cap = math.ceil(self.profile.cluster_threshold * self.rate_z(i) * self.R(i))
        return self.d * max(1, cap)

    def threshold_zp(self, i: int) -> int:
        cap = math.ceil(self.profile.cluster_threshold * self.rate_zp(i) * self.R(i))
        return self.d * max(1, cap)

    def threshold_zpp(self, i: int) -> int:
        c = self.profile.cluster_threshold
        return math.ceil(c * self.rate_zpp(i) * self.m_hat * self.R(i) * self.d)

    def sample_factor(self, i: int) -> float:
        return min(2 ** (2 * self.p + 1) / self.R(i), 1.0)


@dataclass(frozen=True)
class ReplicaSubset:
    """
    A random subset of range(universe), stored as its size and the seed that
    regenerates it.
    """

    size: int
    seed: int
    universe: int

    def __len__(self) -> int:
        return self.size

    def indices(self) -> np.ndarray:
        if self.size == self.universe:
            return np.arange(self.universe)
        rng = np.random.default_rng([self.seed, 1])
        return np.sort(rng.choice(self.universe, size=self.size, replace=False))


def replica_subset(key: bytes, x: Point, universe: int, rate: float) -> ReplicaSubset:
    seed = prf_int(key, x)
    if rate >= 1:
        return ReplicaSubset(universe, seed, universe)
    size = int(np.random.default_rng([seed, 0]).binomial(universe, rate))
    return ReplicaSubset(size, seed, universe)


def _sampled_level(
    key: bytes, i: int, rate: float, threshold: int, grids: ShiftedGrids, name: str
):
    d = grids.d
    return SubSketchSpec(
        filter=lambda item: rate >= 1 or prf_uniform(key, item.value) < rate,
        bucketer=lambda item: grids.cell(item.value, i),
        processor=lambda item: None,
        threshold=threshold,
        unit_size=lambda item: d,
        name=f"{name}_{i}",
    )


def _replica_level(key: bytes, i: int, params: ClusterSketchParams, grids: ShiftedGrids):
    rate = params.rate_zpp(i)
    m_hat = params.m_hat

    @lru_cache(maxsize=4096)
    def zeta(x: Point) -> ReplicaSubset:
        return replica_subset(key, x, m_hat, rate)

    return SubSketchSpec(
        filter=lambda item: len(zeta(item.value)) > 0,
        bucketer=lambda item: grids.cell(item.value, i),
        processor=lambda item: zeta(item.value),
        threshold=params.threshold_zpp(i),
        unit_size=lambda item: len(zeta(item.value)),
        name=f"Z''_{i}",
    )


def cluster_specs(
    params: ClusterSketchParams, grids: ShiftedGrids, seed: int
) -> tuple[list[SubSketchSpec], list[SubSketchSpec], list[SubSketchSpec]]:
    """
    Sub-sketches of Z, Z' and Z'', one per grid level 0..L.
    """
    z, zp, zpp = [], [], []
    for i in range(params.L + 1):
        key = derive_key(seed, "Z", params.o, i)
        z.append(
            _sampled_level(key, i, params.rate_z(i), params.threshold_z(i), grids, "Z")
        )
        key = derive_key(seed, "Z'", params.o, i)
        zp.append(
            _sampled_level(key, i, params.rate_zp(i), params.threshold_zp(i), grids, "Z'")
        )
        zpp.append(_replica_level(derive_key(seed, "Z''", params.o, i), i, params, grids))
    return z, zp, zpp


@dataclass
class HeavyCrucialMap:
    L: int
    heavy: dict[int, set[Cell]] = field(default_factory=dict)
    estimates: dict[tuple[int, Cell], float] = field(default_factory=dict)

    def is_heavy(self, i: int, cell: Cell) -> bool:
        return i == -1 or cell in self.heavy.get(i, ())

    def is_crucial(self, i: int, cell: Cell) -> bool:
        return not self.is_heavy(i, cell) and self.is_heavy(i - 1, parent(cell))

    @property
    def crucial(self) -> dict[int, set[Cell]]:
        """
        Crucial cells among those holding sampled points.
        """
        found: dict[int, set[Cell]] = {}
        for i, cell in self.estimates:
            if self.is_crucial(i, cell):
                found.setdefault(i, set()).add(cell)
        return found


def heavy_partition(
    z: SnapshotBuckets, grids: ShiftedGrids, params: ClusterSketchParams
) -> HeavyCrucialMap:
    """
    Mark heavy cells top-down from estimated cell counts.

    A cell of level i is heavy when its estimated count reaches R_i and its parent is
    heavy. The level -1 cell is heavy.

    Args:
        z (SnapshotBuckets): window buckets of Z, one dict per level 0..L.
        grids (ShiftedGrids): the grids.
        params (ClusterSketchParams): the level parameters.

    Returns:
        HeavyCrucialMap: heavy cells and estimates.
    """
    hmap = HeavyCrucialMap(grids.L, heavy={-1: {grids.root}})
    for i in range(grids.L + 1):
        rate, threshold = params.rate_z(i), params.R(i)
        heavy: set[Cell] = set()
        for cell, entries in z[i].items():
            estimate = len(entries) / rate
            hmap.estimates[(i, cell)] = estimate
            if estimate >= threshold and hmap.is_heavy(i - 1, parent(cell)):
                heavy.add(cell)
        hmap.heavy[i] = heavy
    return hmap


@dataclass(frozen=True)
class CoresetPlan:
    active: tuple[int, ...]
    sizes: dict[int, float]
    factors: dict[int, float]
    gamma: float
    t_prime: float
    m: int


def crucial_stats(
    zp: SnapshotBuckets, hmap: HeavyCrucialMap, params: ClusterSketchParams
) -> CoresetPlan:
    """
    Estimate |X^i| per level and derive the sampling plan.
    """
    sizes: dict[int, float] = {}
    for i in range(params.L + 1):
        stored = sum(
            len(entries) for cell, entries in zp[i].items() if hmap.is_crucial(i, cell)
        )
        sizes[i] = stored / params.rate_zp(i)

    gamma = params.gamma
    active = tuple(i for i, s in sizes.items() if s > 0 and s >= gamma * params.R(i))
    factors = {i: params.sample_factor(i) for i in active}
    t_prime = sum(sizes[i] * factors[i] for i in active)
    m = sample_count(t_prime, params)
    return CoresetPlan(active, sizes, factors, gamma, t_prime, m)


def sample_count(t_prime: float, params: ClusterSketchParams) -> int:
    if t_prime <= 0:
        return 0
    log_n = math.log(max(params.n, 2))
    inner = log_n * math.log(2 * t_prime) + math.log(1 / params.delta)
    m = params.profile.cluster_m_rate * t_prime / params.eps**2 * inner
    return max(1, math.ceil(m))


@dataclass(eq=False)
class Coreset:
    points: np.ndarray
    weights: np.ndarray
    levels: np.ndarray
    status: Status = Status.OK
    reason: str = ""

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def ok(self) -> bool:
        return self.status == Status.OK

    @classmethod
    def empty(cls, d: int) -> "Coreset":
        return cls(np.zeros((0, d)), np.zeros(0), np.zeros(0, dtype=int))

    @classmethod
    def fail(cls, d: int, reason: str) -> "Coreset":
        coreset = cls.empty(d)
        coreset.status, coreset.reason = Status.FAIL, reason
        return coreset


@dataclass
class _Replicas:
    members: list[Point]
    replica_ids: np.ndarray
    starts: np.ndarray
    owners: np.ndarray

    def group(self, r: int) -> np.ndarray:
        end = self.starts[r + 1] if r + 1 < len(self.starts) else len(self.owners)
        return self.owners[self.starts[r] : end]


def _replicas(zpp_level: dict[Cell, Sequence[Entry]], hmap: HeavyCrucialMap, i: int):
    members: list[Point] = []
    subsets: list[np.ndarray] = []
    for cell, entries in zpp_level.items():
        if hmap.is_crucial(i, cell):
            for entry in entries:
                members.append(entry.item.value)
                subsets.append(entry.info.indices())
    if not members:
        return _Replicas([], np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0))

    ids = np.concatenate(subsets)
    owners = np.repeat(np.arange(len(members)), [len(s) for s in subsets])
    order = np.argsort(ids, kind="stable")
    replica_ids, starts = np.unique(ids[order], return_index=True)
    return _Replicas(members, replica_ids, starts, owners[order])


def draw_coreset(
    zpp: SnapshotBuckets,
    hmap: HeavyCrucialMap,
    plan: CoresetPlan,
    params: ClusterSketchParams,
    seed: int,
) -> Coreset:
    """
    Sensitivity sampling through the replicas of Z''.

    Every draw picks a level i with probability proportional to |X^i| * f_i, takes the
    next unused nonempty replica of that level and one uniform member of it.

    Args:
        zpp (SnapshotBuckets): window buckets of Z'', one dict per level 0..L.
        hmap (HeavyCrucialMap): heavy cells.
        plan (CoresetPlan): levels, sizes and sample count.
        params (ClusterSketchParams): level parameters.
        seed (int): master seed.

    Returns:
        Coreset: the weighted sample, or a FAIL coreset when replicas run out.
    """
    d = params.d
    if plan.m == 0:
        return Coreset.empty(d)

    replicas = {i: _replicas(zpp[i], hmap, i) for i in plan.active}
    rng = np.random.default_rng(prf_int(derive_key(seed, "draw", params.o), "coreset"))
    table = AliasTable([plan.sizes[i] * plan.factors[i] for i in plan.active])
    picks = table.sample(rng, plan.m)

    used = dict.fromkeys(plan.active, 0)
    points = np.zeros((plan.m, d))
    weights = np.zeros(plan.m)
    levels = np.zeros(plan.m, dtype=int)
    for s, pick in enumerate(picks):
        i = plan.active[pick]
        level = replicas[i]
        if used[i] >= len(level.replica_ids):
            LOGGER.debug(f"Level {i} ran out of replicas after {used[i]} draws.")
            return Coreset.fail(d, f"replicas of grid level {i} exhausted")
        group = level.group(used[i])
        used[i] += 1
        points[s] = level.members[int(group[rng.integers(len(group))])]
        weights[s] = plan.t_prime / (plan.m * plan.factors[i])
        levels[s] = i
    return Coreset(points, weights, levels)


def cost(
    points: np.ndarray | Sequence[Sequence[float]],
    centers: np.ndarray | Sequence[Sequence[float]],
    p: float,
    weights: np.ndarray | Sequence[float] | None = None,
) -> float:
    """
    Sum over points of (weighted) p-th powers of the distance to the nearest center.
    """
    B = np.asarray(centers, dtype=float)
    if B.ndim != 2 or len(B) == 0:
        raise ValueError("At least one center is required.")
    X = np.asarray(points, dtype=float).reshape(-1, B.shape[1])
    if len(X) == 0:
        return 0.0
    sq = ((X[:, None, :] - B[None, :, :]) ** 2).sum(axis=-1).min(axis=1)
    values = sq ** (p / 2)
    if weights is None:
        return float(values.sum())
    return float(values @ np.asarray(weights, dtype=float))


def _candidates(coreset: Coreset) -> tuple[np.ndarray, np.ndarray]:
    unique, inverse = np.unique(coreset.points, axis=0, return_inverse=True)
    return unique, np.bincount(inverse.ravel(), weights=coreset.weights)


def _power_distances(X: np.ndarray, p: float) -> np.ndarray:
    return (((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1)) ** (p / 2)


def _seed_centers(D: np.ndarray, w: np.ndarray, k: int) -> list[int]:
    chosen = [int(np.argmax(w))]
    nearest = D[:, chosen[0]].copy()
    while len(chosen) < k:
        j = int(np.argmax(w * nearest))
        chosen.append(j)
        nearest = np.minimum(nearest, D[:, j])
    return chosen


def _local_search(D: np.ndarray, w: np.ndarray, k: int) -> list[int]:
    chosen = _seed_centers(D, w, k)
    current = float(D[:, chosen].min(axis=1) @ w)
    improved = True
    while improved:
        improved = False
        for pos in range(k):
            for q in range(len(w)):
                if q in chosen:
                    continue
                trial = chosen[:pos] + [q] + chosen[pos + 1 :]
                value = float(D[:, trial].min(axis=1) @ w)
                if value < current * (1 - 1e-12):
                    chosen, current, improved = trial, value, True
    return chosen


def _lloyd(X: np.ndarray, w: np.ndarray, k: int, iterations: int = 100) -> np.ndarray:
    centers = X[_seed_centers(_power_distances(X, 2), w, k)].copy()
    labels = None
    for _ in range(iterations):
        sq = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        new_labels = sq.argmin(axis=1)
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        for c in range(k):
            mask = labels == c
            if w[mask].sum() > 0:
                centers[c] = (X[mask] * w[mask, None]).sum(axis=0) / w[mask].sum()
    return centers


def solve_on_coreset(
    coreset: Coreset,
    k: int,
    p: float,
    method: ClusterMethod = ClusterMethod.EXHAUSTIVE,
    budget: int = 200_000,
) -> np.ndarray:
    """
    Choose k centers for a weighted point set.

    Args:
        coreset (Coreset): weighted points.
        k (int): number of centers.
        p (float): cost exponent.
        method (ClusterMethod): exhaustive search over candidate subsets, single-swap
            local search, or weighted Lloyd (p = 2 only).
        budget (int): cap on the number of subsets the exhaustive search visits.

    Returns:
        np.ndarray: the centers, one per row.
    """
    if method == ClusterMethod.LLOYD and p != 2:
        raise ValueError(f"Lloyd iterations minimize p = 2 cost, got p = {p}.")
    X, w = _candidates(coreset)
    if len(X) <= k:
        return X

    if method == ClusterMethod.LLOYD:
        return _lloyd(X, w, k)

    D = _power_distances(X, p)
    if method == ClusterMethod.LOCAL_SEARCH:
        return X[_local_search(D, w, k)]

    if math.comb(len(X), k) > budget:
        raise ValueError(f"C({len(X)}, {k}) candidate subsets exceed budget {budget}.")
    best, best_cost = None, math.inf
    for chosen in combinations(range(len(X)), k):
        value = float(D[:, chosen].min(axis=1) @ w)
        if value < best_cost:
            best, best_cost = chosen, value
    return X[list(best)]


class JLProjector:
    """
    Random sign projection to d' = ceil(c log2(k) / eps^2) dimensions.

    `to_grid` rounds a projected point and offsets it into [1, grid_side]^d', so
    projected streams remain valid clustering input.
    """

    def __init__(
        self, d: int, k: int, eps: float, seed: int, c: float = 1.0, delta_grid: int = 1
    ):
        if not 0 < eps <= 0.5:
            raise ValueError(f"JL eps must lie in (0, 0.5], got {eps}.")
        self.d = d
        self.target = max(1, math.ceil(c * math.log2(max(k, 2)) / eps**2))
        rng = np.random.default_rng(prf_int(derive_key(seed, "jl"), "matrix"))
        signs = rng.choice(np.array([-1.0, 1.0]), size=(self.target, d))
        self.matrix = signs / math.sqrt(self.target)
        self.offset = math.ceil(d * delta_grid / math.sqrt(self.target)) + 1
        self.grid_side = 2 * self.offset

    def __repr__(self) -> str:
        return f"JLProjector(d={self.d}, target={self.target})"

    def project(self, points: np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
        X = np.asarray(points, dtype=float)
        return X @ self.matrix.T

    def to_grid(self, x: Sequence[int]) -> Point:
        y = self.project(np.asarray(x, dtype=float)[None, :])[0]
        return tuple(int(c) for c in np.rint(y) + self.offset)


def jl_project(
    points: np.ndarray | Sequence[Sequence[float]],
    k: int,
    eps: float,
    seed: int,
    c: float = 1.0,
) -> tuple[np.ndarray, int]:
    """
    Project points with a random sign matrix.

    Returns:
        tuple[np.ndarray, int]: projected points and the target dimension.
    """
    X = np.asarray(points, dtype=float)
    projector = JLProjector(X.shape[1], k, eps, seed, c)
    return projector.project(X), projector.target


class DistinctTracker(DistinctWindowTracker):
    """
    Keeps the latest copy of each value and at most k + 1 items, enough to tell
    whether the window holds at most k distinct points.
    """

    def __init__(self, k: int):
        super().__init__(1, k + 1)
        self.k = k

    def query(self, N: int, W: int) -> list[Point] | None:
        values = list(dict.fromkeys(item.value for item in self.window(N, W)))
        return values if len(values) <= self.k else None


def cluster_space_cap(params: ClusterSketchParams) -> float:
    per_point = params.k * params.d + params.d * (2 * params.d**1.5) ** params.p
    return (
        params.profile.cluster_space_scale
        * 2 ** (2 * params.p + 2)
        / params.eps**3
        * per_point
        * (params.L + 1) ** 2
        * params.log_term
        / params.delta**2
    )


@dataclass(eq=False)
class ClusterSolution:
    centers: np.ndarray
    coreset: Coreset | None = None


def cluster_spec(
    params: ClusterSketchParams,
    grids: ShiftedGrids,
    seed: int,
    method: ClusterMethod = ClusterMethod.EXHAUSTIVE,
) -> SketchSpec:
    z, zp, zpp = cluster_specs(params, grids, seed)
    L = params.L

    def recover(snap: LevelSnapshot) -> Recovery:
        z_buckets, zp_buckets, zpp_buckets = split_levels(snap.buckets, L)
        hmap = heavy_partition(z_buckets, grids, params)
        plan = crucial_stats(zp_buckets, hmap, params)
        if plan.m == 0:
            return Recovery.fail("no crucial points sampled")
        coreset = draw_coreset(zpp_buckets, hmap, plan, params, seed)
        if not coreset.ok:
            return Recovery.fail(coreset.reason)

        chosen = method
        budget = params.profile.cluster_exact_budget
        if method == ClusterMethod.EXHAUSTIVE:
            candidates = len(np.unique(coreset.points, axis=0))
            if math.comb(candidates, params.k) > budget:
                LOGGER.warning(
                    f"{candidates} candidates exceed the exhaustive budget, "
                    "using local search."
                )
                chosen = ClusterMethod.LOCAL_SEARCH
        centers = solve_on_coreset(coreset, params.k, params.p, chosen, budget)
        value = cost(coreset.points, centers, params.p, coreset.weights)
        return Recovery(
            value, ClusterSolution(centers, coreset), certified=chosen == method
        )

    return SketchSpec(tuple(z + zp + zpp), recover)


def split_levels(buckets: Sequence[Buckets], L: int):
    """
    Split the sub-sketch contents of `cluster_spec` into (Z, Z', Z'').
    """
    return buckets[: L + 1], buckets[L + 1 : 2 * L + 2], buckets[2 * L + 2 :]


class ClusteringWindow(SlidingWindowSolver):
    """
    Sliding-window l_p k-clustering over points of [Delta]^d.
    """

    def __init__(
        self,
        k: int,
        p: float,
        d: int,
        delta_grid: int,
        window: int,
        eps: float,
        delta: float,
        seed: int = 0,
        method: ClusterMethod = ClusterMethod.EXHAUSTIVE,
        profile: Profile = DESK,
        jl_eps: float | None = None,
        space_cap: float | None = None,
    ):
        self.k, self.p, self.d, self.delta_grid = k, p, d, delta_grid
        self.projector = None
        if jl_eps is not None:
            c = profile.jl_constant
            self.projector = JLProjector(d, k, jl_eps, seed, c, delta_grid)
            d, delta_grid = self.projector.target, self.projector.grid_side

        self.grids = build_grids(delta_grid, d, window, seed, profile.cluster_level_slack)

        def params(o: float) -> ClusterSketchParams:
            return ClusterSketchParams(
                o, k, p, d, delta_grid, window, eps, delta, self.grids.L, profile
            )

        def factory(o: float) -> SketchSpec:
            return cluster_spec(params(o), self.grids, seed, method)

        reference = params(1.0)
        if reference.m_hat_uncapped > profile.cluster_max_replicas:
            LOGGER.warning(
                f"Replica count {reference.m_hat_uncapped:.3g} clipped to "
                f"{profile.cluster_max_replicas}."
            )
        if space_cap is None:
            space_cap = cluster_space_cap(reference)
        ladder = make_ladder(1, window * (math.sqrt(d) * delta_grid) ** p)
        engine = SketchEngine(ladder, factory, space_cap, delta)
        super().__init__(engine, window)
        self.tracker = DistinctTracker(k)

    def ingest(self, value: Sequence[int]) -> TimestampedItem:
        point = tuple(int(c) for c in value)
        if len(point) != self.d or not all(1 <= c <= self.delta_grid for c in point):
            raise ValueError(f"Point {point} is not in [{self.delta_grid}]^{self.d}.")
        if self.projector is not None:
            point = self.projector.to_grid(point)
        return super().ingest(point)

    def _observe(self, item: TimestampedItem):
        self.tracker.ingest(item)

    def _shortcut(self) -> WindowedEstimate | None:
        values = self.tracker.query(self.N, self.window)
        if values is None:
            return None
        centers = np.asarray(values, dtype=float).reshape(-1, self.grids.d)
        return WindowedEstimate(0.0, ClusterSolution(centers), None, Status.OK)
