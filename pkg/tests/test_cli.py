import json
import subprocess
import sys

import pytest

from mwumech.cli import main
from mwumech.report import dumps, format_float, strip_timings


def _write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


TWO_BY_TWO = {
    "items": 2,
    "players": [{"type": "single_minded", "bundle": [0], "value": 6}, {"type": "single_minded", "bundle": [0, 1], "value": 5}],
    "epsilon0": 0.5,
    "alpha_mode": "exact",
    "seed": 1,
}


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_cover(tmp_path, capsys):
    path = _write(tmp_path, "c.json", {"m": 2, "n": 2, "A": [1, 2, 2, 1], "b": [1, 1], "c": [1, 1]})
    code, out, _ = _run(["solve-cover", "--input", path, "--epsilon", "0.1"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["passed"]
    assert rep["result"]["objective"] <= 1.4 * 2 / 3


def test_solve_pack(tmp_path, capsys):
    path = _write(tmp_path, "p.json", {"m": 1, "n": 1, "A": [1], "b": [1], "c": [1]})
    code, out, _ = _run(["solve-pack", "--input", path], capsys)
    assert code == 0 and json.loads(out)["result"]["objective"] >= 0.75


def test_decompose_worked_example(tmp_path, capsys):
    doc = {"domain": {"items": 2, "players": [{"type": "single_minded", "bundle": [0], "value": 1},
                                              {"type": "single_minded", "bundle": [1], "value": 1}]},
           "x_star": [1.0, 0.5], "epsilon": 0.25}
    code, out, _ = _run(["decompose", "--input", _write(tmp_path, "d.json", doc)], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["residual_norm"] <= 1e-9
    assert sum(t["lambda"] for t in rep["terms"]) == pytest.approx(1, abs=1e-12)


def test_decompose_contract_failure_exits_1(tmp_path, capsys):
    doc = {"domain": {"items": 3, "players": [{"type": "single_minded", "bundle": [0, 1], "value": 1},
                                              {"type": "single_minded", "bundle": [1, 2], "value": 1},
                                              {"type": "single_minded", "bundle": [0, 2], "value": 1}]},
           "x_star": [0.5, 0.5, 0.5], "alpha": 1.0}
    code, _, err = _run(["decompose", "--input", _write(tmp_path, "d.json", doc)], capsys)
    assert code == 1 and "ContractError" in err


def test_decompose_rejects_point_outside_q(tmp_path, capsys):
    doc = {"domain": TWO_BY_TWO, "x_star": [1.0, 1.0]}
    code, _, _ = _run(["decompose", "--input", _write(tmp_path, "d.json", doc)], capsys)
    assert code == 2


def test_mechanism_audit_two_by_two(tmp_path, capsys):
    code, out, _ = _run(["mechanism", "audit", "--input", _write(tmp_path, "i.json", TWO_BY_TWO)], capsys)
    rep = json.loads(out)
    assert code == 0 and all(rep["flags"].values())


def test_mechanism_run_and_determinism(tmp_path, capsys):
    path = _write(tmp_path, "i.json", TWO_BY_TWO)
    _, a, _ = _run(["mechanism", "run", "--input", path, "--seed", "5"], capsys)
    _, b, _ = _run(["mechanism", "run", "--input", path, "--seed", "5"], capsys)
    ra, rb = json.loads(a), json.loads(b)
    assert ra["passed"] and "realized" in ra["outcome"]
    assert dumps(strip_timings(ra)) == dumps(strip_timings(rb))


def test_audit_csv(tmp_path, capsys):
    code, out, _ = _run(["mechanism", "audit", "--input", _write(tmp_path, "i.json", TWO_BY_TWO), "--format", "csv",
                         "--grid", "0,1,2"], capsys)
    lines = out.strip().splitlines()
    assert code == 0 and lines[0].startswith("player,factor")
    assert len(lines) == 1 + 2 * 3


def test_csv_only_for_audit(tmp_path, capsys):
    path = _write(tmp_path, "i.json", TWO_BY_TWO)
    code, _, _ = _run(["mechanism", "run", "--input", path, "--format", "csv"], capsys)
    assert code == 2


def test_gen_and_output_file(tmp_path, capsys):
    out = tmp_path / "inst.json"
    code, _, _ = _run(["gen", "--kind", "single_minded_uniform", "--n", "3", "--m", "4", "--seed", "7", "--output", str(out)], capsys)
    inst = json.loads(out.read_text())
    assert code == 0 and len(inst["players"]) == 3
    code, _, _ = _run(["gen", "--kind", "single_minded_uniform", "--n", "0", "--m", "4"], capsys)
    assert code == 2


def test_malformed_json_reports_position(tmp_path, capsys):
    path = _write(tmp_path, "bad.json", '{"m": 1,\n  "n": ]')
    code, _, err = _run(["solve-cover", "--input", path], capsys)
    assert code == 2 and "line 2, column 8" in err


def test_input_errors(tmp_path, capsys):
    assert _run(["solve-cover", "--input", str(tmp_path / "missing.json")], capsys)[0] == 2
    assert _run(["solve-cover"], capsys)[0] == 2
    bad = _write(tmp_path, "neg.json", {"m": 1, "n": 1, "A": [-1], "b": [1], "c": [1]})
    assert _run(["solve-cover", "--input", bad], capsys)[0] == 2
    ok = _write(tmp_path, "ok.json", {"m": 1, "n": 1, "A": [1], "b": [1], "c": [1]})
    assert _run(["solve-cover", "--input", ok, "--epsilon", "0.9"], capsys)[0] == 2
    assert _run(["mechanism", "run", "--input", _write(tmp_path, "e.json", TWO_BY_TWO), "--epsilon0", "0.8"], capsys)[0] == 2


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve-cover", "--bogus"])
    assert exc.value.code == 2


def test_log_env(tmp_path, capsys, monkeypatch):
    ok = _write(tmp_path, "ok.json", {"m": 1, "n": 1, "A": [1], "b": [1], "c": [1]})
    monkeypatch.setenv("MWUMECH_LOG", "trace")
    code, out, err = _run(["solve-cover", "--input", ok], capsys)
    assert code == 0 and "covering" in err and json.loads(out)
    monkeypatch.setenv("MWUMECH_LOG", "loud")
    assert _run(["solve-cover", "--input", ok], capsys)[0] == 2


def test_float_format_round_trips():
    for x in (0.1, 1 / 3, 1e-300, 2.0, 123456789.123, -0.0):
        assert float(format_float(x)) == x
    assert format_float(2.0) == "2.0"
    assert json.loads(dumps({"a": [1, 0.1, True, None], "b": {"c": float("inf")}})) == {
        "a": [1, 0.1, True, None], "b": {"c": "Infinity"}}


def test_console_script_entry(tmp_path):
    path = _write(tmp_path, "ok.json", {"m": 1, "n": 1, "A": [1], "b": [1], "c": [1]})
    res = subprocess.run([sys.executable, "-m", "mwumech.cli", "solve-cover", "--input", path],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["passed"]
