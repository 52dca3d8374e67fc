"""Command-line interface: config loading, subcommand round trips."""

import json

import numpy as np
import pytest

from gjnexact.cli import build_parser, load_config, main

MM1_TOML = """
[network]
arrival = ["exp(rate=0.5)"]
service = ["exp(rate=1.0)"]
routing = [[0.0]]
"""

TANDEM_JSON = {
    "arrival": ["exp(rate=0.4)", None],
    "service": ["erlang(k=2, rate=2.4)", "exp(rate=0.9)"],
    "routing": [[0.0, 1.0], [0.0, 0.0]],
}


@pytest.fixture()
def mm1_toml(tmp_path):
    p = tmp_path / "mm1.toml"
    p.write_text(MM1_TOML)
    return str(p)


@pytest.fixture()
def tandem_json(tmp_path):
    p = tmp_path / "tandem.json"
    p.write_text(json.dumps(TANDEM_JSON))
    return str(p)


def test_load_config_toml_and_json(mm1_toml, tandem_json):
    spec = load_config(mm1_toml)
    assert spec.d == 1 and spec.arrival[0].rate == 0.5
    spec2 = load_config(tandem_json)
    assert spec2.d == 2
    assert spec2.arrival[1] is None
    assert spec2.service[0].kind == "erlang"


def test_flat_toml_without_table(tmp_path):
    p = tmp_path / "flat.toml"
    p.write_text(
        'arrival = ["exp(rate=0.5)"]\nservice = ["exp(rate=1.0)"]\nrouting = [[0.0]]\n'
    )
    assert load_config(str(p)).d == 1


def test_validate_command(mm1_toml, capsys):
    assert main(["validate", "--config", mm1_toml]) == 0
    out = capsys.readouterr().out
    assert "stable: yes" in out
    assert "utilization" in out


def test_sample_jsonl_schema(mm1_toml, tmp_path, capsys):
    out = tmp_path / "s.jsonl"
    rc = main(
        ["sample", "--config", mm1_toml, "--n", "5", "--seed", "31", "--out", str(out)]
    )
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 5
    for i, line in enumerate(lines):
        row = json.loads(line)
        assert row["index"] == i
        assert len(row["y"]) == 1 and row["y"][0] >= 0
        assert len(row["residual_service"]) == 1
        assert row["residual_arrival"][0] > 0
        assert row["tau"] <= 0.0
        assert row["rounds"] >= 1
        assert row["draws"] > 0


def test_sample_null_residual_for_missing_stream(tandem_json, tmp_path):
    out = tmp_path / "t.jsonl"
    main(["sample", "--config", tandem_json, "--n", "3", "--seed", "8", "--out", str(out)])
    for line in out.read_text().strip().splitlines():
        row = json.loads(line)
        assert row["residual_arrival"][0] is not None
        assert row["residual_arrival"][1] is None  # no external stream there


def test_sample_then_analyze_roundtrip(mm1_toml, tmp_path, capsys):
    out = tmp_path / "s.jsonl"
    main(["sample", "--config", mm1_toml, "--n", "200", "--seed", "1", "--out", str(out)])
    capsys.readouterr()
    hist = tmp_path / "h.csv"
    rc = main(
        ["analyze", "--in", str(out), "--config", mm1_toml, "--hist", str(hist)]
    )
    assert rc == 0
    txt = capsys.readouterr().out
    assert "samples: 200" in txt
    assert "truth 1.0000" in txt
    header = hist.read_text().splitlines()[0]
    assert header.startswith("k,count_0")


def test_analyze_without_oracle_for_non_markovian(tandem_json, tmp_path, capsys):
    out = tmp_path / "t.jsonl"
    main(["sample", "--config", tandem_json, "--n", "50", "--seed", "2", "--out", str(out)])
    capsys.readouterr()
    rc = main(["analyze", "--in", str(out), "--config", tandem_json])
    assert rc == 0
    captured = capsys.readouterr()
    assert "no closed-form oracle" in captured.err
    assert "truth" not in captured.out
    assert "independence 0,1" in captured.out


def test_sample_stdout_when_no_outfile(mm1_toml, capsys):
    rc = main(["sample", "--config", mm1_toml, "--n", "2", "--seed", "3"])
    assert rc == 0
    captured = capsys.readouterr()
    rows = [json.loads(x) for x in captured.out.strip().splitlines()]
    assert [r["index"] for r in rows] == [0, 1]
    assert "sample mean" in captured.err


def test_sample_deterministic_across_runs(mm1_toml, tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    main(["sample", "--config", mm1_toml, "--n", "8", "--seed", "77", "--out", str(a)])
    main(["sample", "--config", mm1_toml, "--n", "8", "--seed", "77", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_baseline_command(mm1_toml, capsys):
    rc = main(
        [
            "baseline",
            "--config",
            mm1_toml,
            "--burn-in",
            "50",
            "--horizon",
            "500",
            "--seed",
            "4",
            "--n",
            "100",
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "approximate" in out
    assert "mean occupancy" in out


def test_benchmark_single_column_small(capsys):
    rc = main(["benchmark", "--n", "60", "--seed", "12", "--columns", "0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "column 0" in out
    assert "truth 0.4286" in out


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    with pytest.raises(SystemExit):
        main(["sample", "--config", "x.toml"])  # missing required --seed


def test_unstable_config_raises(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text(
        'arrival = ["exp(rate=2.0)"]\nservice = ["exp(rate=1.0)"]\nrouting = [[0.0]]\n'
    )
    from gjnexact.network import Unstable

    with pytest.raises(Unstable):
        main(["validate", "--config", str(p)])
