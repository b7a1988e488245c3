import csv
import io
import json

import pytest

from ssep import spectral
from ssep.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_tstar_row(capsys):
    code, out, _ = run(capsys, "tstar", "--n", "256", "--p", "0.5")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1
    assert float(rows[0]["t_star"]) == spectral.t_star(256, 0.5)
    assert float(rows[0]["t_star_asymptotic"]) == spectral.t_star_asymptotic(256, 0.5)


def test_tstar_table(capsys):
    code, out, _ = run(capsys, "tstar", "--n", "16,64", "--p", "0.1 0.5", "--format", "json")
    assert code == 0
    payload = json.loads(out)
    assert [(r["N"], r["p"]) for r in payload["rows"]] == [(16, 0.1), (16, 0.5), (64, 0.1), (64, 0.5)]


def test_verify_nd_exits_zero(capsys):
    code, out, _ = run(capsys, "verify", "nd", "--n", "4", "--p", "0.3", "--q", "0.7")
    assert code == 0
    assert "exact_nd,true" in out


def test_missing_n_is_usage_error(capsys):
    code, _, err = run(capsys, "verify", "nd")
    assert code == 1
    assert "usage" in err


@pytest.mark.parametrize("argv", [["frobnicate"], ["tstar", "--n", "4", "--p", "0.5", "--bogus"], [],
                                  ["exact", "--n", "13", "--p", "0.3"], ["exact", "--n", "3", "--p", "1.5"]])
def test_invalid_invocations_exit_one(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert "usage" in err


def test_check_failure_exits_two(capsys, monkeypatch):
    from ssep import harness

    def failing(*args, **kwargs):
        return harness.SuiteReport("nd", [harness.CheckResult("forced", False, {})])

    monkeypatch.setattr(harness, "verify_nd_suite", failing)
    code, _, _ = run(capsys, "verify", "nd", "--n", "3")
    assert code == 2


def test_exact_curve(capsys):
    code, out, _ = run(capsys, "exact", "--n", "3", "--p", "0.3", "--q", "0.6", "--times", "0,0.1,0.5",
                       "--format", "json")
    assert code == 0
    payload = json.loads(out)
    ds = [r["d"] for r in payload["rows"]]
    assert len(ds) == 3 and ds[0] >= ds[1] >= ds[2]
    assert "0.25" in payload["metadata"]["t_mix"]


def test_simulate_and_skeleton_commands(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--n", "3", "--p", "0.3", "--q", "0.6", "--t", "0.1",
                       "--replicas", "500", "--method", "coupled")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert sum(int(r["count"]) for r in rows) == 500
    sk = tmp_path / "sk.json"
    assert main(["skeleton", "sample", "--n", "4", "--p", "0.3", "--q", "0.6", "--t", "0.3",
                 "--colors", "RRGB", "--out", str(sk)]) == 0
    code, out, _ = run(capsys, "skeleton", "replay", "--skeleton", str(sk), "--colors", "RRGB")
    assert code == 0
    assert out.startswith("time,R,B,G,L\n")
    code, _, err = run(capsys, "skeleton", "replay", "--skeleton", str(sk), "--colors", "RRRR")
    assert code == 1


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": {"n_sites": 4, "p": 0.3, "q": 0.3}, "times": [0.0, 0.2],
                               "format": "json"}))
    code, out, _ = run(capsys, "profile", "--config", str(cfg))
    assert code == 0
    assert [r["t"] for r in json.loads(out)["rows"]] == [0.0, 0.2]
    code, out, _ = run(capsys, "profile", "--config", str(cfg), "--n", "3", "--format", "csv")
    assert code == 0 and out.startswith("t,d_exact")


def test_output_is_deterministic(capsys, tmp_path):
    argv = ["profile", "--n", "5", "--p", "0.3", "--q", "0.3", "--mode", "simulate", "--replicas", "300",
            "--seed", "17", "--format", "json"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(argv[:-4] + ["--seed", "18", "--format", "json", "--out", str(b)]) == 0
    assert a.read_bytes() != b.read_bytes()
