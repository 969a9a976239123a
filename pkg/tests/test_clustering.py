import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from winsketch.clustering import (
    ClusteringWindow,
    ClusterSketchParams,
    Coreset,
    CoresetPlan,
    DistinctTracker,
    HeavyCrucialMap,
    JLProjector,
    ReplicaSubset,
    ShiftedGrids,
    cluster_specs,
    cost,
    crucial_stats,
    draw_coreset,
    heavy_partition,
    jl_project,
    level_count,
    parent,
    replica_subset,
    sample_count,
    solve_on_coreset,
)
from winsketch.constants import SHIFT_BITS, ClusterMethod
from winsketch.framework import (
    Entry,
    Recovery,
    SketchSpec,
    TimestampedItem,
    offline_sketch,
)
from winsketch.oracles import opt_cluster_candidates
from winsketch.prf import derive_key
from winsketch.profiles import DESK, THEORY
from winsketch.streams import gen_mixture

TWO_SIDES = [(0, 0), (0, 2), (10, 0), (10, 2)]


def unit_coreset(points) -> Coreset:
    return Coreset(
        np.asarray(points, dtype=float),
        np.ones(len(points)),
        np.zeros(len(points), dtype=int),
    )


def small_params(**kwargs) -> ClusterSketchParams:
    # R_i = 2^i on levels 0..2
    values = dict(
        o=400, k=1, p=1, d=1, delta_grid=4, n=8, eps=0.5, delta=0.1, L=2, profile=DESK
    )
    values.update(kwargs)
    return ClusterSketchParams(**values)


@given(
    st.lists(st.integers(1, 64), min_size=2, max_size=2),
    st.lists(st.integers(0, (1 << SHIFT_BITS) - 1), min_size=2, max_size=2),
)
def test_grid_cells_are_nested(x, shift):
    grids = ShiftedGrids(64, 2, 9, shift)
    x = tuple(x)
    assert grids.cell(x, -1) == grids.root
    for i in range(grids.L + 1):
        assert parent(grids.cell(x, i)) == grids.cell(x, i - 1)


def test_grid_cells_follow_the_shift():
    grids = ShiftedGrids(16, 2, 4, (0, 0))
    assert grids.cell((5, 16), 0) == (0, 1)
    assert grids.cell((5, 16), 2) == (1, 4)
    assert grids.side(2) == 4.0

    # v = Delta / 2 on both coordinates
    shifted = ShiftedGrids(16, 2, 4, (1 << (SHIFT_BITS - 1),) * 2)
    assert shifted.v.tolist() == [8.0, 8.0]
    assert shifted.cell((5, 16), 2) == (3, 6)
    assert shifted.cell((5, 16), -1) == (0, 0)


def test_grid_validation():
    with pytest.raises(ValueError, match="Shift has 1 coordinates, expected 2"):
        ShiftedGrids(16, 2, 4, (0,))
    with pytest.raises(ValueError, match="Shift coordinates must lie in"):
        ShiftedGrids(16, 2, 4, (0, 1 << SHIFT_BITS))
    with pytest.raises(ValueError, match=r"Level 5 outside \[-1, 4\]"):
        ShiftedGrids(16, 2, 4, (0, 0)).cell((1, 1), 5)


def test_level_count():
    assert level_count(10, 2, 8, slack=0) == math.ceil(math.log2(160))
    assert level_count(10, 2, 8) == math.ceil(math.log2(160)) + 10


def test_sketch_params():
    params = small_params()
    assert [params.R(i) for i in range(3)] == pytest.approx([1.0, 2.0, 4.0])
    assert params.rate_z(0) == 1.0
    assert params.threshold_z(2) == math.ceil(DESK.cluster_threshold * 4)
    assert params.sample_factor(2) == 1.0
    assert params.gamma == pytest.approx(0.5 / (40 * 2**4 * 2))
    assert small_params(profile=THEORY).m_hat == THEORY.cluster_max_replicas

    with pytest.raises(ValueError, match="Clustering needs p >= 1"):
        small_params(p=0.5)
    with pytest.raises(ValueError, match="delta must lie in"):
        small_params(delta=1.0)


def test_replica_subset():
    key = derive_key(3, "Z''", 1.0, 2)
    subset = replica_subset(key, (1, 2), 100, 0.3)
    assert subset == replica_subset(key, (1, 2), 100, 0.3)

    indices = subset.indices()
    assert len(indices) == len(subset)
    assert len(set(indices.tolist())) == len(indices)
    assert np.all(np.diff(indices) > 0)
    assert np.all((indices >= 0) & (indices < 100))

    full = replica_subset(key, (1, 2), 100, 1.0)
    assert len(full) == 100
    assert full.indices().tolist() == list(range(100))


def test_heavy_partition_and_crucial_stats():
    params = small_params()
    grids = ShiftedGrids(4, 1, 2, (0,))
    buckets = [
        {(0,): [None] * 3},
        {(0,): [None] * 2, (1,): [None]},
        {(0,): [None], (1,): [None]},
    ]

    hmap = heavy_partition(buckets, grids, params)
    assert hmap.heavy == {-1: {(0,)}, 0: {(0,)}, 1: {(0,)}, 2: set()}
    assert hmap.crucial == {1: {(1,)}, 2: {(0,), (1,)}}
    assert hmap.estimates[(1, (0,))] == 2.0

    plan = crucial_stats(buckets, hmap, params)
    assert plan.sizes == {0: 0.0, 1: 1.0, 2: 2.0}
    assert plan.active == (1, 2)
    assert plan.t_prime == 3.0
    assert plan.m == sample_count(3.0, params)


@given(
    st.lists(st.tuples(st.integers(1, 8), st.integers(1, 8)), min_size=1, max_size=50),
    st.lists(st.integers(0, (1 << SHIFT_BITS) - 1), min_size=2, max_size=2),
)
def test_crucial_cells_partition_the_window(points, shift):
    # R_i = 3.5 * 2^i, so no level-4 cell reaches R_4 with 50 points
    params = small_params(o=4000, d=2, delta_grid=8, L=4)
    assert all(params.rate_z(i) == params.rate_zp(i) == 1.0 for i in range(5))
    grids = ShiftedGrids(8, 2, 4, shift)

    buckets = [{} for _ in range(5)]
    for x in points:
        for i in range(5):
            buckets[i].setdefault(grids.cell(x, i), []).append(x)

    hmap = heavy_partition(buckets, grids, params)
    assert not hmap.heavy[4]
    for i in range(5):
        assert all(hmap.is_heavy(i - 1, parent(c)) for c in hmap.heavy[i])

    levels = {}
    for x in points:
        crucial = [i for i in range(5) if hmap.is_crucial(i, grids.cell(x, i))]
        assert len(crucial) == 1
        levels[crucial[0]] = levels.get(crucial[0], 0) + 1

    plan = crucial_stats(buckets, hmap, params)
    assert plan.sizes == {i: float(levels.get(i, 0)) for i in range(5)}
    assert sum(plan.sizes.values()) == len(points)


@pytest.mark.slow
def test_cell_estimates_are_close_to_counts():
    # R_i = 4096 * 2^i and sampling rates 0.23, 0.11, 0.06, 0.03
    profile = replace(DESK, cluster_z_rate=80.0)
    params = ClusterSketchParams(
        o=100 * 4096 * 4096,
        k=1,
        p=1,
        d=1,
        delta_grid=4096,
        n=4096,
        eps=0.5,
        delta=0.1,
        L=3,
        profile=profile,
    )
    assert all(params.rate_z(i) < 1 for i in range(4))
    grids = ShiftedGrids(4096, 1, 3, (0,))
    points = [(x,) for x in range(2, 4097, 2)]
    items = [TimestampedItem(x, tau) for tau, x in enumerate(points, start=1)]
    counts = {}
    for x in points:
        for i in range(4):
            cell = (i, grids.cell(x, i))
            counts[cell] = counts.get(cell, 0) + 1

    good = 0
    for seed in range(100):
        z, _, _ = cluster_specs(params, grids, seed)
        spec = SketchSpec(tuple(z), lambda snap: Recovery(0.0))
        hmap = heavy_partition(offline_sketch(items, spec), grids, params)
        good += all(
            abs(estimate - counts[cell]) <= 0.1 * params.R(cell[0])
            or abs(estimate - counts[cell]) <= 0.01 * counts[cell]
            for cell, estimate in hmap.estimates.items()
        )
    assert good >= 90


def test_sample_count():
    params = small_params()
    assert sample_count(0.0, params) == 0
    inner = math.log(8) * math.log(6) + math.log(10)
    assert sample_count(3.0, params) == math.ceil(0.05 * 3 / 0.25 * inner)


def test_draw_coreset_fails_when_replicas_run_out():
    params = small_params()
    grids = ShiftedGrids(4, 1, 2, (0,))
    hmap = heavy_partition([{(0,): [None] * 3}, {(0,): [None] * 2}, {}], grids, params)
    entry = Entry(TimestampedItem((3,), 1), ReplicaSubset(1, 7, 10), 1)
    zpp = [{}, {(1,): [entry]}, {}]

    plan = CoresetPlan((1,), {1: 1.0}, {1: 1.0}, params.gamma, 1.0, m=1)
    coreset = draw_coreset(zpp, hmap, plan, params, seed=0)
    assert coreset.ok
    assert coreset.points.tolist() == [[3.0]]
    assert coreset.weights.tolist() == [1.0]
    assert coreset.levels.tolist() == [1]

    plan = CoresetPlan((1,), {1: 1.0}, {1: 1.0}, params.gamma, 1.0, m=5)
    coreset = draw_coreset(zpp, hmap, plan, params, seed=0)
    assert not coreset.ok
    assert coreset.reason == "replicas of grid level 1 exhausted"
    assert len(coreset) == 0


def test_draw_coreset_is_uniform_over_a_single_level():
    params = small_params()
    # level 1 cell (0,) is crucial under the heavy root and level 0 cell
    hmap = HeavyCrucialMap(2, heavy={-1: {(0,)}, 0: {(0,)}, 1: set(), 2: set()})
    key = derive_key(0, "Z''", params.o, 1)
    entries = []
    for x in range(1, 8):
        subset = replica_subset(key, (x,), 20_000, 0.5)
        entries.append(Entry(TimestampedItem((x,), x), subset, len(subset)))
    zpp = [{}, {(0,): entries}, {}]

    m = 10_000
    plan = CoresetPlan((1,), {1: 7.0}, {1: 1.0}, params.gamma, 7.0, m=m)
    coreset = draw_coreset(zpp, hmap, plan, params, seed=5)
    assert coreset.ok
    assert len(coreset) == m
    assert np.allclose(coreset.weights, 7.0 / m)

    values, counts = np.unique(coreset.points[:, 0], return_counts=True)
    assert values.tolist() == list(range(1, 8))
    expected = m / 7
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # 0.999 quantile of chi-squared with 6 degrees of freedom
    assert chi2 < 22.46


def test_cost():
    assert cost([(0, 0), (2, 0)], [(1, 0)], p=2) == 2.0
    assert cost([(0, 0), (2, 0)], [(1, 0)], p=1) == 2.0
    assert cost([(0, 0), (2, 0)], [(1, 0)], p=2, weights=[1, 3]) == 4.0
    assert cost(np.zeros((0, 2)), [(1, 0)], p=2) == 0.0
    with pytest.raises(ValueError, match="At least one center is required"):
        cost([(0, 0)], np.zeros((0, 2)), p=2)


def test_lloyd_finds_cluster_means():
    centers = solve_on_coreset(unit_coreset(TWO_SIDES), 2, 2, ClusterMethod.LLOYD)
    assert sorted(map(tuple, centers.tolist())) == [(0.0, 1.0), (10.0, 1.0)]

    with pytest.raises(ValueError, match="Lloyd iterations minimize p = 2 cost"):
        solve_on_coreset(unit_coreset(TWO_SIDES), 2, 1, ClusterMethod.LLOYD)


@pytest.mark.parametrize("method", [ClusterMethod.EXHAUSTIVE, ClusterMethod.LOCAL_SEARCH])
def test_candidate_solvers_split_the_sides(method):
    centers = solve_on_coreset(unit_coreset(TWO_SIDES), 2, 2, method)
    assert sorted(centers[:, 0].tolist()) == [0.0, 10.0]
    assert cost(TWO_SIDES, centers, 2) == 8.0
    assert opt_cluster_candidates(TWO_SIDES, 2, 2) == 8.0


def test_solver_edge_cases():
    centers = solve_on_coreset(unit_coreset([(1, 1), (1, 1), (4, 4)]), 2, 2)
    assert sorted(map(tuple, centers.tolist())) == [(1.0, 1.0), (4.0, 4.0)]

    with pytest.raises(ValueError, match="candidate subsets exceed budget 5"):
        solve_on_coreset(unit_coreset(TWO_SIDES), 2, 2, budget=5)


def test_jl_projection():
    projected, target = jl_project(np.zeros((3, 5)), k=4, eps=0.25, seed=0)
    assert target == 32
    assert projected.shape == (3, 32)
    assert not projected.any()

    # eps = 0.5 and k = 16 give d' = c * 16
    assert jl_project(np.ones((1, 3)), k=16, eps=0.5, seed=0)[1] == 16
    assert JLProjector(3, 16, 0.5, seed=0, c=2.0).target == 32
    with pytest.raises(ValueError, match=r"JL eps must lie in \(0, 0.5\]"):
        JLProjector(5, 4, 0.6, seed=0)


def test_jl_grid_points_stay_in_range():
    projector = JLProjector(5, 4, 0.4, seed=1, delta_grid=8)
    rng = np.random.default_rng(0)
    for x in rng.integers(1, 9, size=(50, 5)):
        y = projector.to_grid(x)
        assert len(y) == projector.target
        assert all(1 <= c <= projector.grid_side for c in y)


def test_jl_preserves_squared_norms_on_average():
    x = np.arange(1.0, 6.0)
    ratios = np.array(
        [
            (jl_project(x[None, :], k=4, eps=0.4, seed=seed)[0] ** 2).sum() / (x @ x)
            for seed in range(1000)
        ]
    )
    stderr = ratios.std(ddof=1) / math.sqrt(len(ratios))
    assert abs(ratios.mean() - 1) <= 3 * stderr


def test_distinct_tracker():
    tracker = DistinctTracker(2)
    for tau, value in enumerate(["a", "b", "a"], start=1):
        tracker.ingest(TimestampedItem(value, tau))
    assert tracker.query(3, 3) == ["b", "a"]

    tracker.ingest(TimestampedItem("c", 4))
    assert tracker.query(4, 4) is None
    assert tracker.query(4, 1) == ["c"]


def test_window_with_at_most_k_distinct_points_costs_nothing():
    window = ClusteringWindow(
        k=2, p=2, d=2, delta_grid=8, window=10, eps=0.5, delta=0.1, seed=0
    )
    for point in [(1, 1), (8, 8)] * 6:
        window.ingest(point)
    estimate = window.query()
    assert estimate.ok
    assert estimate.value == 0.0
    assert estimate.level is None
    assert sorted(map(tuple, estimate.witness.centers.tolist())) == [
        (1.0, 1.0),
        (8.0, 8.0),
    ]


def test_window_rejects_points_outside_the_grid():
    window = ClusteringWindow(
        k=2, p=2, d=2, delta_grid=8, window=10, eps=0.5, delta=0.1, seed=0
    )
    with pytest.raises(ValueError, match=r"Point \(9, 1\) is not in \[8\]\^2"):
        window.ingest((9, 1))


def test_window_projects_points():
    window = ClusteringWindow(
        k=2, p=2, d=5, delta_grid=8, window=10, eps=0.5, delta=0.1, seed=0, jl_eps=0.4
    )
    assert window.grids.d == window.projector.target == 7
    item = window.ingest((1, 2, 3, 4, 5))
    assert len(item.value) == 7
    assert window.query().value == 0.0


@pytest.mark.parametrize("seed", [0, 1])
def test_window_on_two_clusters(seed):
    stream = [2, 3, 4, 5, 28, 29, 30, 31] * 10
    window = ClusteringWindow(
        k=2, p=2, d=1, delta_grid=32, window=40, eps=0.5, delta=0.1, seed=seed
    )
    for x in stream:
        window.ingest((x,))

    points = [(x,) for x in stream[-40:]]
    opt = opt_cluster_candidates(points, 2, 2)
    assert opt == 60.0

    estimate = window.query()
    assert estimate.ok
    assert estimate.level == 1.0
    centers = estimate.witness.centers
    assert sorted(c <= 5 for c in centers[:, 0]) == [False, True]
    assert cost(points, centers, 2) <= 2 * opt
    assert 0.5 * opt <= estimate.value <= 2 * opt


def test_engine_matches_offline_sketch_under_space_cap():
    stream = gen_mixture(60, d=2, delta_grid=16, seed=1)
    window = ClusteringWindow(
        k=2, p=2, d=2, delta_grid=16, window=20, eps=0.5, delta=0.1, seed=1, space_cap=300
    )
    items = []
    for tau, point in enumerate(stream, start=1):
        window.ingest(point)
        items.append(TimestampedItem(point, tau))
        if tau % 20 == 0:
            for level in window.engine.levels:
                assert level.budget <= 300
                suffix = items[level.left - 1 :]
                assert level.contents() == offline_sketch(suffix, level.spec)
    assert any(level.left > 1 for level in window.engine.levels)


def coreset_holds(coreset, points, k, p, eps, rng, trials=50) -> bool:
    """
    Whether the weighted coreset prices `trials` random center sets within 1 +- eps.
    """
    for _ in range(trials):
        B = rng.integers(1, 65, size=(k, 2))
        ratio = cost(coreset.points, B, p, coreset.weights) / cost(points, B, p)
        if not 1 - eps <= ratio <= 1 + eps:
            return False
    return True


@pytest.mark.slow
@pytest.mark.parametrize("p", [1, 2])
def test_coreset_and_window_cost_on_mixtures(p):
    k, eps = 2, 0.3
    coreset_ok = cost_ok = 0
    for seed in range(60):
        stream = gen_mixture(150, d=2, delta_grid=64, seed=seed)
        window = ClusteringWindow(
            k=k, p=p, d=2, delta_grid=64, window=100, eps=eps, delta=0.1, seed=seed
        )
        for tau, point in enumerate(stream, start=1):
            window.ingest(point)
            if tau % 50 == 0:
                estimate = window.query()
                assert estimate.ok, f"seed {seed} failed at N = {tau}"

        points = stream[-100:]
        solution = estimate.witness
        assert solution.coreset is not None
        rng = np.random.default_rng(seed)
        coreset_ok += coreset_holds(solution.coreset, points, k, p, eps, rng)
        opt = opt_cluster_candidates(points, k, p)
        cost_ok += cost(points, solution.centers, p) <= (1 + eps) * opt
    assert coreset_ok >= 51
    assert cost_ok >= 51
