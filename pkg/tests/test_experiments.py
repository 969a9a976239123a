import math

import pytest

from winsketch.constants import Problem, StreamKind
from winsketch.experiments import (
    COLUMNS,
    ExperimentConfig,
    Report,
    TrialRow,
    check_memory,
    ratio,
    run_experiment,
    run_trial,
    within_guarantee,
)
from winsketch.streams import write_stream


def toy_config(**kwargs) -> ExperimentConfig:
    values = dict(
        problem=Problem.ONES,
        window=40,
        eps=0.2,
        delta=0.05,
        seeds=(0, 1),
        generator=StreamKind.BITS,
        generator_params={"length": 100},
        checkpoint=25,
        oracle=True,
    )
    values.update(kwargs)
    return ExperimentConfig(**values)


def row(**kwargs) -> TrialRow:
    values = dict(
        seed=0,
        window=0,
        N=10,
        estimate=1.0,
        status="ok",
        level=1.0,
        oracle=1.0,
        ratio=1.0,
        space=1,
        levels=1,
    )
    values.update(kwargs)
    return TrialRow(**values)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError, match="Exactly one of a stream file and a generator"):
        toy_config(stream=tmp_path / "bits.txt")
    with pytest.raises(ValueError, match="Exactly one of a stream file and a generator"):
        toy_config(generator=None)
    with pytest.raises(ValueError, match="Window size must be at least 1"):
        toy_config(window=0)
    with pytest.raises(ValueError, match="eps must lie in"):
        toy_config(eps=1.5)
    with pytest.raises(ValueError, match="At least one seed is required"):
        toy_config(seeds=())
    with pytest.raises(ValueError, match="Checkpoint interval 0 is not positive"):
        toy_config(checkpoint=0)
    with pytest.raises(ValueError, match="Worker count must be positive"):
        toy_config(workers=0)


def test_checkpoint_interval_defaults_to_half_window():
    assert toy_config(checkpoint=None).every == 20
    assert toy_config(checkpoint=None, window=1).every == 1
    assert toy_config().every == 25


def test_ratio():
    assert ratio(0.0, 0.0) == 1.0
    assert ratio(1.0, 0.0) == math.inf
    assert ratio(3.0, 2.0) == 1.5


def test_within_guarantee():
    config = toy_config()
    assert within_guarantee(row(ratio=1.1), config)
    assert not within_guarantee(row(ratio=1.3), config)
    assert not within_guarantee(row(status="fail"), config)
    assert not within_guarantee(row(ratio=None), config)

    kcover = toy_config(problem=Problem.KCOVER, eps=0.25)
    assert within_guarantee(row(ratio=0.3), kcover)
    assert not within_guarantee(row(ratio=1.3), kcover)


def test_run_trial_on_short_windows_is_exact():
    rows = run_trial(toy_config(), seed=3)
    assert [r.N for r in rows] == [25, 50, 75, 100]
    assert [r.final for r in rows] == [False, False, False, True]
    assert [r.window for r in rows] == [0, 1, 2, 3]
    for r in rows:
        assert r.status == "ok"
        assert r.level == 1.0
        assert r.estimate == r.oracle
        assert r.ratio == 1.0
        assert r.wall is None


def test_run_trial_adds_final_checkpoint():
    rows = run_trial(toy_config(checkpoint=30), seed=0)
    assert [r.N for r in rows] == [30, 60, 90, 100]
    assert rows[-1].final


def test_empty_stream_gives_no_rows(tmp_path):
    path = tmp_path / "bits.txt"
    write_stream(path, [], "bits")
    config = toy_config(stream=path, generator=None, generator_params={})

    report = run_experiment(config)
    assert report.rows == []
    summary = report.summary()
    assert summary["queries"] == 0
    assert summary["ok_rate"] is None
    assert summary["success_rate"] is None


def test_report_summary():
    report = run_experiment(toy_config())
    summary = report.summary()
    assert summary["trials"] == 2
    assert summary["queries"] == 8
    assert summary["ok_rate"] == 1.0
    assert summary["fails"] == 0
    assert summary["success_rate"] == 1.0
    assert summary["final_success_rate"] == 1.0
    assert summary["ratio_p50"] == 1.0


def test_report_tsv_is_reproducible(tmp_path):
    output = tmp_path / "report.tsv"
    config = toy_config(problem=Problem.MEDIAN)
    report = run_experiment(config, output)

    text = output.read_text()
    assert text == report.to_tsv()
    assert text == run_experiment(config).to_tsv()

    lines = text.splitlines()
    assert lines[0].startswith("# config {")
    assert lines[1].split("\t") == list(COLUMNS)
    assert len(lines[2].split("\t")) == len(COLUMNS)
    assert lines[10] == ""
    assert lines[11] == "trials\t2"


def test_report_tsv_with_timings():
    report = run_experiment(toy_config(timings=True, seeds=(0,)))
    lines = report.to_tsv().splitlines()
    assert lines[1].split("\t") == list(COLUMNS) + ["wall"]
    assert all(r.wall is not None and r.wall >= 0 for r in report.rows)


def test_report_cells():
    config = toy_config(oracle=False)
    report = Report(config, [row(estimate=float("nan"), level=None, status="fail")])
    data = report.to_tsv().splitlines()[2].split("\t")
    assert data[COLUMNS.index("estimate")] == ""
    assert data[COLUMNS.index("level")] == ""
    assert data[COLUMNS.index("status")] == "fail"
    assert report.summary() == {"trials": 2, "queries": 1, "ok_rate": 0.0, "fails": 1}


def test_generator_must_match_problem_format():
    config = toy_config(
        problem=Problem.KCOVER,
        params={"n": 3, "m": 4, "k": 1},
        generator=StreamKind.BITS,
    )
    with pytest.raises(ValueError, match="does not produce bits streams"):
        run_experiment(config)


def test_kcover_counterexample_final_window():
    config = ExperimentConfig(
        problem=Problem.KCOVER,
        window=5,
        eps=0.25,
        delta=0.1,
        params={"n": 2, "m": 10, "k": 1},
        generator=StreamKind.COVER_COUNTEREXAMPLE,
        generator_params={"m": 5},
        oracle=True,
    )
    (final,) = [r for r in run_experiment(config).rows if r.final]
    assert final.N == 15
    assert final.oracle == 5.0
    assert final.estimate == 5.0


def test_check_memory():
    assert check_memory(1e9) > 0


@pytest.mark.slow
def test_parallel_trials_match_sequential():
    sequential = run_experiment(toy_config(seeds=(0, 1, 2)))
    parallel = run_experiment(toy_config(seeds=(0, 1, 2), workers=2))
    assert parallel.rows == sequential.rows
