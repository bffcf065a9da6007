import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from paneitz_lab import cli_reporting
from paneitz_lab.cli_reporting import Check, dumps17, main
from paneitz_lab.morse_analyzer import CurvatureField


@pytest.fixture
def files(tmp_path, quad5, quad6):
    out = {}
    for name, K in (("q5", quad5), ("q6", quad6), ("const", CurvatureField.constant(6))):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(K.to_dict()))
        out[name] = str(p)
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 6, "terms": [')
    out["bad"] = str(bad)
    return out


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_json_floats_round_trip(x):
    text = dumps17({"x": x, "schema": "paneitz-lab/1"})
    assert json.loads(text)["x"] == x


def test_json_keys_sorted_and_numpy_converted():
    text = dumps17({"b": np.float64(0.1), "a": np.arange(2), "c": {"z": True, "y": None}})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": [0, 1], "b": 0.1, "c": {"y": None, "z": True}}


def test_usage_errors_exit_64(files, capsys):
    assert main(["crit", "--n", "7"]) == 64
    assert main(["crit"]) == 64
    assert main(["bogus"]) == 64
    assert main(["crit", "--input", files["bad"]]) == 64
    assert "invalid JSON" in capsys.readouterr().err
    assert main(["crit", "--input", files["q5"], "--n", "6"]) == 64
    assert main(["verify", "--mc-samples", "5"]) == 64


def test_crit_csv_table(files, capsys):
    assert main(["crit", "--input", files["q6"], "--format", "csv"]) == 0
    out = capsys.readouterr()
    rows = list(csv.reader(io.StringIO(out.out)))
    assert rows[0][:2] == ["index", "x0"] and len(rows) == 1 + 14
    assert "\r\n" in out.out
    assert "consistent" in out.err


def test_crit_json_has_schema(files, capsys):
    assert main(["crit", "--input", files["q5"]]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["schema"] == "paneitz-lab/1" and len(d["points"]) == 12
    assert d["euler_sum"] == 0


def test_constant_field_is_a_hypothesis_violation(files, capsys):
    assert main(["crit", "--input", files["const"]]) == 3
    assert "Morse" in capsys.readouterr().err


def test_analyze_dimension_gate(files, capsys):
    assert main(["analyze", "--input", files["q5"], "--samples", "1"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert [r["theorem"] for r in d["reports"]] == ["t:1", "t:2"]
    assert main(["analyze", "--input", files["q6"], "--samples", "1"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert [r["theorem"] for r in d["reports"]] == ["t:4", "t:5", "t:3"]
    assert len(d["condition_H"]) == 15
    assert "error" in d["euler_trace"]


def test_lone_maximum_makes_the_index_criterion_inconclusive(tmp_path, capsys):
    # the maximum of a Morse K is always first class, so l = 0 cannot occur;
    # a lone maximum of index 5 gives the forbidden sum -1
    K = CurvatureField.from_terms(5, [([0] * 6, 1.0), ([1, 0, 0, 0, 0, 0], 0.05)])
    p = tmp_path / "lin.json"
    p.write_text(json.dumps(K.to_dict()))
    assert main(["analyze", "--input", str(p), "--samples", "0"]) == 0
    d = json.loads(capsys.readouterr().out)
    t1 = d["reports"][0]
    assert t1["index_sum"] == -1 and t1["conclusion"] == "criterion-inconclusive"


def test_verify_failure_exits_2(monkeypatch, capsys):
    monkeypatch.setattr(cli_reporting, "run_verify_suite",
                        lambda *a, **k: [Check("forced", 1.0, "< 0", False)])
    assert main(["verify"]) == 2
    assert "FAIL" in capsys.readouterr().err


def test_flow_out_of_regime_exits_4(files):
    assert main(["flow", "--input", files["q6"], "--p", "2", "--eps-max", "1e-9",
                 "--samples", "1"]) == 4


def test_flow_outputs_are_byte_identical(files, tmp_path):
    args = ["flow", "--input", files["q5"], "--samples", "4", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "flow_summary.json" in names and len(names) == 5
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    summary = json.loads((tmp_path / "a" / "flow_summary.json").read_text())
    for run in summary["runs"]:
        if run["outcome"] == "blowup":
            rec = summary["records"][run["record_id"]]
            assert rec["tau"] == run["tau"]
