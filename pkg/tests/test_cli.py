import logging

from typer.testing import CliRunner

from winsketch.cli import app
from winsketch.streams import read_stream, write_stream

runner = CliRunner()


def test_gen_writes_stream(tmp_path):
    path = tmp_path / "bits.txt"
    result = runner.invoke(app, ["gen", "bits", str(path), "--length", "20"])
    assert result.exit_code == 0
    assert len(list(read_stream(path, "bits"))) == 20

    path = tmp_path / "points.txt"
    result = runner.invoke(app, ["gen", "diversity-counterexample", str(path)])
    assert result.exit_code == 0
    assert len(list(read_stream(path, "points"))) == 4


def test_gen_rejects_bad_parameters(tmp_path):
    path = tmp_path / "edges.txt"
    result = runner.invoke(app, ["gen", "cover-counterexample", str(path), "--m", "0"])
    assert result.exit_code == 2
    assert not path.exists()


def test_verify_prints_optimum(tmp_path, caplog):
    path = tmp_path / "edges.txt"
    runner.invoke(app, ["gen", "cover-counterexample", str(path), "--m", "5"])

    with caplog.at_level(logging.INFO):
        result = runner.invoke(
            app, ["verify", "kcover", str(path), "-w", "15", "--n", "2", "-k", "1"]
        )
    assert result.exit_code == 0
    assert "kcover optimum of the last 15 items: 10.0" in caplog.text


def test_verify_rejects_invalid_k(tmp_path):
    path = tmp_path / "edges.txt"
    write_stream(path, [(0, 1), (1, 2)], "edges")
    result = runner.invoke(app, ["verify", "kcover", str(path), "--n", "2", "-k", "3"])
    assert result.exit_code == 2


def test_toy_with_stream_file(tmp_path):
    stream = tmp_path / "bits.txt"
    output = tmp_path / "report.tsv"
    write_stream(stream, [1, 0, 1, 1] * 10, "bits")

    result = runner.invoke(
        app,
        ["toy", "--stream", str(stream), "-w", "10", "--oracle", "-o", str(output)],
    )
    assert result.exit_code == 0
    lines = output.read_text().splitlines()
    assert lines[0].startswith("# config")
    assert "success_rate\t1" in lines


def test_malformed_stream_exits_with_code_1(tmp_path):
    stream = tmp_path / "bits.txt"
    stream.write_text("0\n1\n2\n")
    result = runner.invoke(app, ["toy", "--stream", str(stream), "-w", "10"])
    assert result.exit_code == 1


def test_invalid_config_exits_with_code_2():
    result = runner.invoke(app, ["toy", "--window", "0"])
    assert result.exit_code == 2


def test_diversity_on_counterexample(tmp_path):
    stream = tmp_path / "points.txt"
    output = tmp_path / "report.tsv"
    runner.invoke(app, ["gen", "diversity-counterexample", str(stream)])

    result = runner.invoke(
        app,
        [
            "diversity",
            "--kind",
            "remote-edge",
            "-k",
            "2",
            "-d",
            "4",
            "--delta-grid",
            "2",
            "--stream",
            str(stream),
            "-w",
            "4",
            "--oracle",
            "-o",
            str(output),
        ],
    )
    assert result.exit_code == 0
    assert "final_success_rate\t1" in output.read_text().splitlines()
