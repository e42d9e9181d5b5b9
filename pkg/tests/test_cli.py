import json

import pytest

from buresqfi.cli import main


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_jump_example2(capsys):
    assert main(["jump", "example2", "--at=0,0", "--dir=0,1"]) == 0
    doc = _json(capsys)
    assert doc["delta"][0][0] == pytest.approx(-2.0)
    assert main(["jump", "example2", "--at=0,0", "--dir=1,0"]) == 0
    assert _json(capsys)["delta"][0][0] == pytest.approx(0.0)


def test_jump_full_rank_point(capsys):
    assert main(["jump", "example1", "--at", "0.5", "--dir", "1"]) == 0
    assert _json(capsys)["delta"] == [[0.0]]


def test_jump_confirm(capsys):
    assert main(["jump", "example2", "--at=0,0", "--dir=0,1", "--confirm"]) == 0
    conf = _json(capsys)["numeric_confirmation"]
    assert conf["residual"] < 1e-3
    assert len(conf["steps"]) == 5


def test_jump_bad_input(capsys):
    assert main(["jump", "nope", "--at=0", "--dir=1"]) == 2
    assert main(["jump", "example2", "--at=0", "--dir=1"]) == 2
    assert main(["jump", "example2", "--at=0,0", "--dir=0,0"]) == 2
    assert main(["jump", "example2", "--at=x,0", "--dir=0,1"]) == 2


def test_jump_numerical_failure_exit_code(capsys):
    # low curvature along this direction drives the vanishing eigenvalue below the zero threshold
    args = ["jump", "random-rank-deficient(3,1,9)",
            "--at=-0.17014098147108514,-0.4337982756283477",
            "--dir=-0.8028369359828766,0.2428499070790021"]
    assert main(args) == 0
    capsys.readouterr()
    assert main(args + ["--confirm"]) == 3
    assert "ExtrapolationDiverged" in capsys.readouterr().err


def test_regularize(capsys, tmp_path):
    out = tmp_path / "r.json"
    assert main(["regularize", "example1", "--at", "1.5707963267948966", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert abs(doc["extrapolated_limit"][0][0]) < 1e-4
    assert doc["limit_plus_twice_hessian_sum"][0][0] == pytest.approx(4.0, abs=1e-4)
    assert main(["regularize", "example1", "--at", "0.3", "--schedule", "0.1,0.2"]) == 2


def test_verify(capsys):
    assert main(["verify", "--seed", "1", "--trials", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 9 and all(line.startswith("PASS") for line in lines)
    assert main(["verify", "--trials", "0"]) == 2


def test_list_families(capsys):
    assert main(["list-families"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert {"example1", "example2", "example3-regularized", "fig2-pathological",
            "pure-qubit-rotation", "random-full-rank"} <= set(names)


def test_run_errors(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[family]\nname = 3\n")
    assert main(["run", str(bad)]) == 2
    assert "family.name" in capsys.readouterr().err
    assert main(["run", str(bad), "--threads", "0"]) == 2


def test_run_numerical_failure_writes_partial_output(tmp_path):
    sc = tmp_path / "s.toml"
    sc.write_text("""
[family]
name = "example1"
[probe]
kind = "sweep"
start = 0.0001
stop = 0.3
count = 3
[quantities]
names = ["regularization"]
""")
    out = tmp_path / "o.csv"
    assert main(["run", str(sc), "--out", str(out)]) == 3
    lines = out.read_text().splitlines()
    assert len(lines) == 4
    assert ",error:ExtrapolationDiverged," in lines[1]
    assert ",ok," in lines[2] and ",ok," in lines[3]


def test_no_command():
    assert main([]) == 2
