import logging
from pathlib import Path
from typing import Annotated, Any

import typer
from rich.logging import RichHandler

from winsketch.constants import (
    ClusterMethod,
    CoverRecovery,
    DiversityKind,
    DivSolver,
    HashMode,
    Problem,
    StreamKind,
)
from winsketch.experiments import ExperimentConfig, Report, oracle_value, run_experiment
from winsketch.oracles import WindowView
from winsketch.profiles import ProfileRegistry
from winsketch.streams import (
    PROBLEM_FORMATS,
    StreamFormatError,
    generate_stream,
    read_stream,
    write_stream,
)

FORMAT = "%(message)s"
logging.basicConfig(
    level=logging.INFO,
    format=FORMAT,
    datefmt="[%X]",
    handlers=[RichHandler(markup=True)],
)

LOGGER = logging.getLogger(__name__)

app = typer.Typer(no_args_is_help=True)

StreamOpt = Annotated[
    Path | None,
    typer.Option(
        "--stream",
        "-s",
        exists=True,
        dir_okay=False,
        help="Stream file. A synthetic stream is generated when omitted.",
    ),
]
LengthOpt = Annotated[int, typer.Option(help="Length of the synthetic stream.")]
WindowOpt = Annotated[int, typer.Option("--window", "-w", help="Window size W.")]
EpsOpt = Annotated[float, typer.Option(help="Approximation parameter.")]
DeltaOpt = Annotated[float, typer.Option(help="Failure probability per level.")]
SeedOpt = Annotated[int, typer.Option(help="First trial seed.")]
TrialsOpt = Annotated[int, typer.Option(help="Number of trials, one seed each.")]
ProfileOpt = Annotated[str, typer.Option(help="Constant profile.")]
OracleOpt = Annotated[bool, typer.Option("--oracle", help="Compare with brute force.")]
CheckpointOpt = Annotated[
    int | None, typer.Option(help="Query every this many items (default W/2).")
]
TimingsOpt = Annotated[bool, typer.Option("--timings", help="Report query wall time.")]
WorkersOpt = Annotated[int, typer.Option(help="Parallel trial processes.")]
OutputOpt = Annotated[
    Path | None, typer.Option("--output", "-o", dir_okay=False, help="Report file.")
]
KOpt = Annotated[int, typer.Option("--k", "-k", help="Solution size.")]
DeltaGridOpt = Annotated[int, typer.Option(help="Point domain is [delta-grid]^d.")]
DimOpt = Annotated[int, typer.Option("--d", "-d", help="Dimension.")]


@app.callback()
def main(
    verbose: Annotated[
        bool, typer.Option("--verbose", "-v", help="Log debug messages.")
    ] = False,
):
    """
    Sliding-window sketches for coverage, diversity and clustering.
    """
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def _experiment(
    problem: Problem,
    params: dict[str, Any],
    generator: StreamKind,
    generator_params: dict[str, Any],
    stream: Path | None,
    window: int,
    eps: float,
    delta: float,
    seed: int,
    trials: int,
    profile: str,
    oracle: bool,
    checkpoint: int | None,
    timings: bool,
    workers: int,
    output: Path | None,
) -> Report:
    try:
        config = ExperimentConfig(
            problem=problem,
            window=window,
            eps=eps,
            delta=delta,
            seeds=tuple(range(seed, seed + trials)),
            params=params,
            profile=ProfileRegistry().get(profile),
            stream=stream,
            generator=None if stream is not None else generator,
            generator_params={} if stream is not None else generator_params,
            oracle=oracle,
            checkpoint=checkpoint,
            timings=timings,
            workers=workers,
        )
        report = run_experiment(config, output)
    except StreamFormatError as e:
        LOGGER.error(f"Malformed stream: {e}")
        raise typer.Exit(1)
    except ValueError as e:
        LOGGER.error(str(e))
        raise typer.Exit(2)

    for key, value in report.summary().items():
        LOGGER.info(f"{key}: {value}")
    return report


@app.command()
def toy(
    stream: StreamOpt = None,
    median: Annotated[
        bool, typer.Option("--median", help="Toy 1-median instead of counting ones.")
    ] = False,
    length: LengthOpt = 2000,
    prob: Annotated[float, typer.Option(help="Probability of a 1 (synthetic).")] = 0.5,
    window: WindowOpt = 1000,
    eps: EpsOpt = 0.2,
    delta: DeltaOpt = 0.05,
    seed: SeedOpt = 0,
    trials: TrialsOpt = 1,
    profile: ProfileOpt = "desk",
    oracle: OracleOpt = False,
    checkpoint: CheckpointOpt = None,
    timings: TimingsOpt = False,
    workers: WorkersOpt = 1,
    output: OutputOpt = None,
):
    """
    Count ones or solve the toy 1-median over a window of bits.
    """
    _experiment(
        Problem.MEDIAN if median else Problem.ONES,
        {},
        StreamKind.BITS,
        {"length": length, "prob": prob},
        stream,
        window,
        eps,
        delta,
        seed,
        trials,
        profile,
        oracle,
        checkpoint,
        timings,
        workers,
        output,
    )


@app.command()
def kcover(
    n: Annotated[int, typer.Option("--n", "-n", help="Number of sets.")],
    m: Annotated[int, typer.Option("--m", "-m", help="Number of elements.")],
    k: KOpt = 2,
    stream: StreamOpt = None,
    length: LengthOpt = 1000,
    recovery: Annotated[
        CoverRecovery, typer.Option(help="Solver on the sketch graph.")
    ] = CoverRecovery.EXACT,
    hash_mode: Annotated[
        HashMode, typer.Option("--hash", help="Element sampling hash.")
    ] = HashMode.PRF,
    window: WindowOpt = 256,
    eps: EpsOpt = 0.25,
    delta: DeltaOpt = 0.1,
    seed: SeedOpt = 0,
    trials: TrialsOpt = 1,
    profile: ProfileOpt = "desk",
    oracle: OracleOpt = False,
    checkpoint: CheckpointOpt = None,
    timings: TimingsOpt = False,
    workers: WorkersOpt = 1,
    output: OutputOpt = None,
):
    """
    Maximum k-coverage over a window of (set, element) edges.
    """
    _experiment(
        Problem.KCOVER,
        {"n": n, "m": m, "k": k, "recovery": recovery, "hash_mode": hash_mode},
        StreamKind.EDGES,
        {"length": length, "n": n, "m": m},
        stream,
        window,
        eps,
        delta,
        seed,
        trials,
        profile,
        oracle,
        checkpoint,
        timings,
        workers,
        output,
    )


@app.command()
def diversity(
    kind: Annotated[DiversityKind, typer.Option(help="Diversity function.")],
    k: KOpt = 4,
    t: Annotated[int, typer.Option(help="Trees or cycles of the t-variants.")] = 1,
    d: DimOpt = 2,
    delta_grid: DeltaGridOpt = 64,
    stream: StreamOpt = None,
    length: LengthOpt = 400,
    solver: Annotated[DivSolver, typer.Option(help="Solver on the kept points.")] = (
        DivSolver.EXACT
    ),
    window: WindowOpt = 256,
    eps: EpsOpt = 0.25,
    delta: DeltaOpt = 0.1,
    seed: SeedOpt = 0,
    trials: TrialsOpt = 1,
    profile: ProfileOpt = "desk",
    oracle: OracleOpt = False,
    checkpoint: CheckpointOpt = None,
    timings: TimingsOpt = False,
    workers: WorkersOpt = 1,
    output: OutputOpt = None,
):
    """
    Diversity maximization over a window of points of [delta-grid]^d.
    """
    _experiment(
        Problem.DIVERSITY,
        {
            "kind": kind,
            "k": k,
            "t": t,
            "d": d,
            "delta_grid": delta_grid,
            "solver": solver,
        },
        StreamKind.MIXTURE,
        {"length": length, "d": d, "delta_grid": delta_grid},
        stream,
        window,
        eps,
        delta,
        seed,
        trials,
        profile,
        oracle,
        checkpoint,
        timings,
        workers,
        output,
    )


@app.command()
def cluster(
    k: KOpt = 2,
    p: Annotated[float, typer.Option("--p", "-p", help="Cost exponent.")] = 2.0,
    d: DimOpt = 2,
    delta_grid: DeltaGridOpt = 64,
    stream: StreamOpt = None,
    length: LengthOpt = 200,
    method: Annotated[
        ClusterMethod, typer.Option(help="Solver on the coreset.")
    ] = ClusterMethod.EXHAUSTIVE,
    jl: Annotated[
        float | None, typer.Option("--jl", help="Project points with this eps first.")
    ] = None,
    window: WindowOpt = 100,
    eps: EpsOpt = 0.3,
    delta: DeltaOpt = 0.1,
    seed: SeedOpt = 0,
    trials: TrialsOpt = 1,
    profile: ProfileOpt = "desk",
    oracle: OracleOpt = False,
    checkpoint: CheckpointOpt = None,
    timings: TimingsOpt = False,
    workers: WorkersOpt = 1,
    output: OutputOpt = None,
):
    """
    l_p k-clustering over a window of points of [delta-grid]^d.
    """
    params = {"k": k, "p": p, "d": d, "delta_grid": delta_grid, "method": method}
    if jl is not None:
        params["jl_eps"] = jl
    _experiment(
        Problem.CLUSTER,
        params,
        StreamKind.MIXTURE,
        {"length": length, "d": d, "delta_grid": delta_grid},
        stream,
        window,
        eps,
        delta,
        seed,
        trials,
        profile,
        oracle,
        checkpoint,
        timings,
        workers,
        output,
    )


@app.command()
def gen(
    kind: Annotated[StreamKind, typer.Argument(help="Generator.")],
    output: Annotated[Path, typer.Argument(dir_okay=False, help="Stream file to write.")],
    length: Annotated[int, typer.Option(help="Number of items.")] = 1000,
    n: Annotated[int, typer.Option("--n", help="Number of sets.")] = 16,
    m: Annotated[int, typer.Option("--m", help="Number of elements.")] = 64,
    k: Annotated[int, typer.Option("--k", help="Copies of the cover construction.")] = 1,
    d: DimOpt = 2,
    delta_grid: DeltaGridOpt = 64,
    clusters: Annotated[int, typer.Option(help="Mixture components.")] = 3,
    spread: Annotated[float, typer.Option(help="Mixture standard deviation.")] = 2.0,
    prob: Annotated[float, typer.Option(help="Probability of a 1.")] = 0.5,
    seed: Annotated[int, typer.Option(help="Generator seed.")] = 0,
):
    """
    Write a synthetic stream file.
    """
    params = {
        "length": length,
        "n": n,
        "m": m,
        "k": k,
        "d": d,
        "delta_grid": delta_grid,
        "clusters": clusters,
        "spread": spread,
        "prob": prob,
    }
    try:
        fmt, items = generate_stream(kind, seed, **params)
    except ValueError as e:
        LOGGER.error(str(e))
        raise typer.Exit(2)
    count = write_stream(output, items, fmt)
    LOGGER.info(f"Wrote {count} {fmt} items to {output}.")


@app.command()
def verify(
    problem: Annotated[Problem, typer.Argument(help="Problem to solve.")],
    stream: Annotated[
        Path, typer.Argument(exists=True, dir_okay=False, help="Stream file.")
    ],
    window: WindowOpt = 1000,
    n: Annotated[int, typer.Option("--n", help="Number of sets (kcover).")] = 16,
    k: KOpt = 2,
    kind: Annotated[
        DiversityKind, typer.Option(help="Diversity function.")
    ] = DiversityKind.EDGE,
    t: Annotated[int, typer.Option(help="Trees or cycles of the t-variants.")] = 1,
    p: Annotated[float, typer.Option("--p", help="Clustering cost exponent.")] = 2.0,
):
    """
    Print the brute-force optimum of the last window of a stream file.
    """
    try:
        items = list(read_stream(stream, PROBLEM_FORMATS[problem]))
        config = ExperimentConfig(
            problem=problem,
            window=window,
            eps=0.5,
            delta=0.5,
            params={"n": n, "k": k, "kind": kind, "t": t, "p": p},
            stream=stream,
        )
        value = oracle_value(config, WindowView.of(items, window))
    except StreamFormatError as e:
        LOGGER.error(f"Malformed stream: {e}")
        raise typer.Exit(1)
    except ValueError as e:
        LOGGER.error(str(e))
        raise typer.Exit(2)
    LOGGER.info(f"{problem} optimum of the last {min(window, len(items))} items: {value}")


if __name__ == "__main__":
    app()
