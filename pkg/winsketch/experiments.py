"""
Seeded experiment runner and TSV reports.

A trial replays one stream through one sliding-window solver and queries it at
checkpoints (every `checkpoint` items and at the end of the stream). With the oracle
enabled, the window at each checkpoint is materialized from an independent pass over
the stream and solved by brute force.
"""

import json
import logging
import math
import os
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import psutil
from tqdm import tqdm

from winsketch.clustering import ClusteringWindow
from winsketch.constants import (
    ClusterMethod,
    CoverRecovery,
    DiversityKind,
    DivSolver,
    HashMode,
    Problem,
    StreamKind,
)
from winsketch.diversity import DiversityWindow
from winsketch.framework import SlidingWindowSolver, window_start
from winsketch.kcover import KCoverWindow
from winsketch.oracles import WindowView, opt_cluster_candidates, opt_div, opt_kcover
from winsketch.profiles import DESK, Profile
from winsketch.reference import OnesCounter, ToyMedian
from winsketch.streams import PROBLEM_FORMATS, generate_stream, read_stream

LOGGER = logging.getLogger(__name__)

COLUMNS = (
    "seed",
    "window",
    "N",
    "estimate",
    "status",
    "level",
    "oracle",
    "ratio",
    "space",
    "levels",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything needed to reproduce a report.

    `params` holds the problem parameters (n, m, k, kind, t, d, delta_grid, p,
    recovery, hash_mode, solver, method, jl_eps). The stream comes from `stream` or,
    when it is None, from `generator` with `generator_params`, seeded by the trial
    seed.
    """

    problem: Problem
    window: int
    eps: float
    delta: float
    seeds: tuple[int, ...] = (0,)
    params: dict[str, Any] = field(default_factory=dict)
    profile: Profile = DESK
    stream: Path | None = None
    generator: StreamKind | None = None
    generator_params: dict[str, Any] = field(default_factory=dict)
    oracle: bool = False
    checkpoint: int | None = None
    timings: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"Window size must be at least 1, got {self.window}.")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}.")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}.")
        if not self.seeds:
            raise ValueError("At least one seed is required.")
        if (self.stream is None) == (self.generator is None):
            raise ValueError("Exactly one of a stream file and a generator is required.")
        if self.checkpoint is not None and self.checkpoint < 1:
            raise ValueError(f"Checkpoint interval {self.checkpoint} is not positive.")
        if self.workers < 1:
            raise ValueError(f"Worker count must be positive, got {self.workers}.")

    @property
    def every(self) -> int:
        return self.checkpoint or max(1, self.window // 2)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["profile"] = self.profile.to_dict()
        data["stream"] = None if self.stream is None else str(self.stream)
        data["seeds"] = list(self.seeds)
        return data


@dataclass(frozen=True)
class TrialRow:
    seed: int
    window: int
    N: int
    estimate: float
    status: str
    level: float | None
    oracle: float | None
    ratio: float | None
    space: float
    levels: int
    wall: float | None = None
    final: bool = False


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else format(value, ".10g")
    return str(value)


@dataclass
class Report:
    config: ExperimentConfig
    rows: list[TrialRow]

    def summary(self) -> dict[str, Any]:
        """
        Aggregate figures over all rows and over the last row of every trial.
        """
        count = len(self.rows)
        ok = [r for r in self.rows if r.status == "ok"]
        summary: dict[str, Any] = {
            "trials": len(self.config.seeds),
            "queries": count,
            "ok_rate": len(ok) / count if count else None,
            "fails": count - len(ok),
        }
        if self.config.oracle:
            ratios = [r.ratio for r in ok if r.ratio is not None]
            ratios = [x for x in ratios if math.isfinite(x)]
            if ratios:
                p05, p50, p95 = np.quantile(ratios, [0.05, 0.5, 0.95])
                summary |= {"ratio_p05": p05, "ratio_p50": p50, "ratio_p95": p95}
            finals = [r for r in self.rows if r.final]
            summary["success_rate"] = _success_rate(self.rows, self.config)
            summary["final_success_rate"] = _success_rate(finals, self.config)
        return summary

    def to_tsv(self) -> str:
        columns = COLUMNS + (("wall",) if self.config.timings else ())
        config = json.dumps(self.config.to_dict(), sort_keys=True, default=str)
        lines = [f"# config {config}", "\t".join(columns)]
        for row in self.rows:
            values = asdict(row)
            lines.append("\t".join(_cell(values[c]) for c in columns))
        lines.append("")
        lines += [f"{key}\t{_cell(value)}" for key, value in self.summary().items()]
        return "\n".join(lines) + "\n"

    def write(self, path: Path):
        with open(path, "w") as f:
            f.write(self.to_tsv())
        LOGGER.info(f"Report written to {path}.")


def within_guarantee(row: TrialRow, config: ExperimentConfig) -> bool:
    """
    Whether a row meets the approximation guarantee of its problem.
    """
    if row.status != "ok" or row.ratio is None:
        return False
    eps, r = config.eps, row.ratio
    match config.problem:
        case Problem.ONES | Problem.MEDIAN:
            return abs(r - 1) <= eps
        case Problem.KCOVER:
            return 1 - 3 * eps <= r <= 1 + eps
        case Problem.DIVERSITY:
            return 1 - eps - 1e-9 <= r <= 1 + 1e-9
        case Problem.CLUSTER:
            return r <= 1 + eps
    return False


def _success_rate(rows: Sequence[TrialRow], config: ExperimentConfig) -> float | None:
    if not rows:
        return None
    return sum(within_guarantee(r, config) for r in rows) / len(rows)


def make_solver(config: ExperimentConfig, seed: int) -> SlidingWindowSolver:
    """
    Build the sliding-window solver of a config for one trial seed.
    """
    P, W, eps, delta, profile = (
        config.params,
        config.window,
        config.eps,
        config.delta,
        config.profile,
    )
    match config.problem:
        case Problem.ONES:
            return OnesCounter(W, eps, delta, seed, profile)
        case Problem.MEDIAN:
            return ToyMedian(W, eps, delta, seed, profile)
        case Problem.KCOVER:
            return KCoverWindow(
                P["n"],
                P["m"],
                P["k"],
                W,
                eps,
                delta,
                seed,
                recovery=CoverRecovery(P.get("recovery", CoverRecovery.EXACT)),
                hash_mode=HashMode(P.get("hash_mode", HashMode.PRF)),
                profile=profile,
            )
        case Problem.DIVERSITY:
            return DiversityWindow(
                DiversityKind(P["kind"]),
                P["k"],
                P.get("d", 2),
                P["delta_grid"],
                W,
                eps,
                t=P.get("t", 1),
                solver=DivSolver(P.get("solver", DivSolver.EXACT)),
                profile=profile,
            )
        case Problem.CLUSTER:
            return ClusteringWindow(
                P["k"],
                P.get("p", 2),
                P.get("d", 2),
                P["delta_grid"],
                W,
                eps,
                delta,
                seed,
                method=ClusterMethod(P.get("method", ClusterMethod.EXHAUSTIVE)),
                profile=profile,
                jl_eps=P.get("jl_eps"),
            )
    raise ValueError(f"Unknown problem {config.problem!r}.")


def oracle_value(config: ExperimentConfig, window: WindowView) -> float:
    """
    Brute-force optimum of a materialized window.
    """
    P = config.params
    items = list(window)
    match config.problem:
        case Problem.ONES:
            return float(sum(items))
        case Problem.MEDIAN:
            ones = sum(items)
            return float(min(ones, len(items) - ones))
        case Problem.KCOVER:
            return float(opt_kcover(items, P["n"], P["k"]))
        case Problem.DIVERSITY:
            return opt_div(items, P["k"], DiversityKind(P["kind"]), P.get("t", 1))
        case Problem.CLUSTER:
            return opt_cluster_candidates(items, P["k"], P.get("p", 2))
    raise ValueError(f"Unknown problem {config.problem!r}.")


def ratio(estimate: float, oracle: float) -> float:
    if oracle == 0:
        return 1.0 if estimate == 0 else math.inf
    return estimate / oracle


def _stream(config: ExperimentConfig, seed: int) -> Iterable[Any]:
    if config.stream is not None:
        return read_stream(config.stream, PROBLEM_FORMATS[config.problem])
    fmt, items = generate_stream(config.generator, seed, **config.generator_params)
    if fmt != PROBLEM_FORMATS[config.problem]:
        raise ValueError(f"Generator {config.generator} does not produce {fmt} streams.")
    return items


def check_memory(limit_mb: float) -> float:
    rss = psutil.Process(os.getpid()).memory_info().rss / 2**20
    LOGGER.debug(f"Resident memory {rss:.1f} MiB.")
    if rss > limit_mb:
        LOGGER.warning(f"Resident memory {rss:.1f} MiB above the {limit_mb} MiB limit.")
    return rss


def run_trial(config: ExperimentConfig, seed: int) -> list[TrialRow]:
    """
    Replay the stream of one trial and query at every checkpoint.

    Args:
        config (ExperimentConfig): the experiment.
        seed (int): the trial seed.

    Returns:
        list[TrialRow]: one row per checkpoint.
    """
    solver = make_solver(config, seed)
    materialized = list(_stream(config, seed)) if config.oracle else None

    rows: list[TrialRow] = []
    N = 0

    def checkpoint(final: bool):
        start = time.perf_counter()
        estimate = solver.query()
        wall = time.perf_counter() - start
        oracle = ratio_value = None
        if materialized is not None:
            oracle = oracle_value(config, WindowView.of(materialized, config.window, N))
            ratio_value = ratio(estimate.value, oracle) if estimate.ok else None
        first = window_start(N, config.window)
        rows.append(
            TrialRow(
                seed=seed,
                window=len(rows),
                N=N,
                estimate=estimate.value,
                status=str(estimate.status),
                level=estimate.level,
                oracle=oracle,
                ratio=ratio_value,
                space=solver.space_budget().total,
                levels=sum(1 for lv in solver.engine.levels if lv.left <= first),
                wall=wall if config.timings else None,
                final=final,
            )
        )
        check_memory(config.profile.memory_limit_mb)

    for value in _stream(config, seed):
        solver.ingest(value)
        N += 1
        if N % config.every == 0:
            checkpoint(final=False)
    if N > 0:
        if rows and rows[-1].N == N:
            rows[-1] = replace(rows[-1], final=True)
        else:
            checkpoint(final=True)
    return rows


def run_experiment(config: ExperimentConfig, output: Path | None = None) -> Report:
    """
    Run every trial of a config and collect the report.

    Args:
        config (ExperimentConfig): the experiment.
        output (Path | None): where to write the TSV report.

    Returns:
        Report: the rows of every trial and the summary.
    """
    # builds a solver once so bad parameters fail before any stream is read
    make_solver(config, config.seeds[0])
    LOGGER.info(
        f"Running {len(config.seeds)} {config.problem} trials, W={config.window}, "
        f"profile {config.profile.name}."
    )

    start = time.perf_counter()
    rows: list[TrialRow] = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            results = executor.map(run_trial, [config] * len(config.seeds), config.seeds)
            for trial in tqdm(results, total=len(config.seeds), desc="trials"):
                rows += trial
    else:
        for seed in tqdm(config.seeds, desc="trials"):
            rows += run_trial(config, seed)
    LOGGER.info(f"{len(rows)} queries in {time.perf_counter() - start:.2f}s.")

    report = Report(config, rows)
    if output is not None:
        report.write(output)
    return report
