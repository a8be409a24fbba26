import json
import logging

import pytest
from splitorch import __version__
from splitorch.cli import main
from splitorch.report import SUMMARY_COLUMNS, read_summary_csv, render_svg

SINGLE_NODE = {
    "name": "single",
    "model": {
        "uniform": {
            "num_layers": 4,
            "compute_cost": 1e9,
            "weight_bytes": 1e9,
            "activation_out_bits": 1e6,
            "privacy_critical": [0, -1],
        }
    },
    "topology": {
        "nodes": [
            {"id": "only", "compute_rate": 8e12, "mem_capacity": 8e9, "trusted": True}
        ]
    },
    "baseline": {"boundaries": [], "placement": ["only"]},
}


@pytest.fixture(autouse=True)
def detach_cli_logging():
    yield
    logger = logging.getLogger("splitorch")
    for handler in list(logger.handlers):
        if getattr(handler, "_splitorch", False):
            logger.removeHandler(handler)
    logger.setLevel(logging.NOTSET)


@pytest.fixture
def single_node(tmp_path):
    path = tmp_path / "single.json"
    path.write_text(json.dumps(SINGLE_NODE))
    return str(path)


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == __version__


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "urban_5g_mec", "--duration-s", "30", "--out", str(out)])
    assert code == 0
    for name in ("requests.csv", "kpi.csv", "events.jsonl"):
        assert (out / name).is_file()

    captured = capsys.readouterr()
    assert captured.out.startswith("urban_5g_mec (adaptive, seed 0)")
    assert "reconfigured: 1 time(s)" in captured.out
    assert "[splitorch] INFO: Running urban_5g_mec" in captured.err

    events = [
        json.loads(line) for line in (out / "events.jsonl").read_text().splitlines()
    ]
    assert events[0]["kind"] == "resplit"
    assert events[0]["migration_cleared"] is False
    assert events[0]["t"] == 2.0


def test_run_is_byte_stable(tmp_path):
    for name in ("one", "two"):
        main(
            [
                "run",
                "urban_5g_mec",
                "--seed",
                "7",
                "--duration-s",
                "30",
                "--out",
                str(tmp_path / name),
            ]
        )
    for name in ("requests.csv", "kpi.csv", "events.jsonl"):
        assert (tmp_path / "one" / name).read_bytes() == (
            tmp_path / "two" / name
        ).read_bytes()


def test_run_static_mode(tmp_path, capsys):
    out = tmp_path / "static"
    argv = ["run", "urban_5g_mec", "--mode", "static", "--duration-s", "30"]
    main([*argv, "--out", str(out)])
    assert "reconfigured: 0 time(s)" in capsys.readouterr().out
    assert (out / "events.jsonl").read_text() == ""


def test_sweep(tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main(
        [
            "sweep",
            "urban_5g_mec",
            "--bandwidths",
            "20,200",
            "--duration-s",
            "30",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    for cell in ("static_20mbps", "adaptive_20mbps", "static_200mbps"):
        assert (out / cell / "requests.csv").is_file()

    summary = out / "summary.csv"
    assert summary.read_text().splitlines()[0] == ",".join(SUMMARY_COLUMNS)
    rows = read_summary_csv(summary)
    assert [row["bandwidth_mbps"] for row in rows] == [20.0, 200.0]
    # the chart is reproducible from the summary alone
    svg = (out / "latency_vs_bandwidth.svg").read_text()
    assert svg == render_svg(rows)

    stdout = capsys.readouterr().out
    assert "20 Mb/s within 150 ms: static no, adaptive yes" in stdout
    # compliance goes to stdout, the summary keeps the numeric columns
    assert "200 Mb/s within 150 ms: static no, adaptive yes" in stdout
    assert "adaptive_meets_l_max" not in SUMMARY_COLUMNS


def test_solve_single_node_is_identity(single_node, capsys):
    assert main(["solve", single_node]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["scenario"] == "single"
    assert doc["t"] == 0.0
    assert doc["scheme"]["boundaries"] == []
    assert doc["placement"] == ["only"]
    assert doc["cost"]["privacy_violations"] == 0


def test_solve_debug_logging(single_node, capsys):
    main(["solve", single_node, "--debug", "--at", "5"])
    captured = capsys.readouterr()
    assert json.loads(captured.out)["t"] == 5.0
    assert "[splitorch] DEBUG: split_revision:" in captured.err


def test_invalid_override_exits_one(single_node, capsys):
    assert main(["solve", single_node, "--max-segments", "9"]) == 1
    assert "max_segments: must be within [1, 4]" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv, message",
    [
        (["run", "missing.json"], "cannot read file"),
        (["run", "rural"], "no bundled scenario"),
    ],
)
def test_errors_exit_one(argv, message, capsys):
    assert main(argv) == 1
    err = capsys.readouterr().err
    assert err.startswith("splitorch: error: ")
    assert message in err


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "urban_5g_mec", "--seed", "-1"],
        ["sweep", "urban_5g_mec", "--bandwidths", "20,fast"],
        ["sweep", "urban_5g_mec", "--bandwidths", "0"],
        ["run", "urban_5g_mec", "--mode", "sometimes"],
        [],
    ],
)
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert "usage: splitorch" in capsys.readouterr().err
