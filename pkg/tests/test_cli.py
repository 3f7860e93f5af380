import json
import subprocess
import sys

import pytest

from oscitopo.cli import run_command


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = run_command([*args, "--out", str(out)])
    return code, out


def test_field_eval(tmp_path):
    code, out = _run(tmp_path, "f.json", "field-eval", "--system", "moore-spiegel", "--state", "1,2,3")
    assert code == 0
    data = json.loads(out.read_text())
    assert data["field"] == [2.0, 3.0, -3.0 - (27 - 100 + 100) * 2.0 - 27.0]


def test_simulate_csv_is_byte_identical(tmp_path):
    args = ("simulate", "--system", "nose-hoover", "--Q", "1", "--init", "0,5,0", "--t", "5", "--format", "csv")
    _, a = _run(tmp_path, "a.csv", *args)
    _, b = _run(tmp_path, "b.csv", *args)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "t,x,y,z"
    meta = json.loads((tmp_path / "a.meta.json").read_text())
    assert meta["n_samples"] == len(a.read_text().splitlines()) - 1


def test_config_round_trip(tmp_path):
    code, first = _run(tmp_path, "first.json", "degree", "--system", "moore-spiegel", "--T", "27", "--R", "100",
                       "--center", "0,0,0", "--radius", "0.01", "--subdivision", "4")
    assert code == 0
    code, second = _run(tmp_path, "second.json", "degree", "--config", str(first))
    assert code == 0
    a, b = json.loads(first.read_text()), json.loads(second.read_text())
    assert a["degree"] == b["degree"] == -1
    a["config"].pop("out"), b["config"].pop("out")
    assert a == b


def test_flags_override_config(tmp_path):
    _, first = _run(tmp_path, "first.json", "index", "--system", "moore-spiegel", "--T", "27", "--point", "0,0,0")
    _, second = _run(tmp_path, "second.json", "index", "--config", str(first), "--T", "-5")
    assert json.loads(first.read_text())["index"] == -1
    assert json.loads(second.read_text())["index"] == 1


def test_find_orbit_hopf(tmp_path):
    code, out = _run(tmp_path, "o.json", "find-orbit", "--system", "hopf", "--guess", "1.2,0.3")
    assert code == 0
    orbit = json.loads(out.read_text())
    assert abs(orbit["period"] - 6.283185307179586) < 1e-8


def test_sweep_exit_csv(tmp_path):
    code, out = _run(tmp_path, "s.csv", "sweep-exit", "--system", "moore-spiegel", "--arc", "l1",
                     "--s", "0.1,0.5", "--format", "csv")
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "s,t_exit,exit_surface,x,y,z" and len(lines) == 3


def test_parse_field(tmp_path):
    src = tmp_path / "field.txt"
    src.write_text("xdot = y\nydot = -x - a*y\nzdot = -z\na = 0.5\n")
    code, out = _run(tmp_path, "p.json", "parse-field", "--field-file", str(src))
    assert code == 0 and json.loads(out.read_text())["parameters"] == ["a"]
    src.write_text("xdot = y +\nydot = x\nzdot = z\n")
    assert run_command(["parse-field", "--field-file", str(src)]) == 2


def test_usage_errors_exit_2(capsys):
    assert run_command(["degree", "--no-such-flag"]) == 2
    assert run_command(["degree", "--system", "moore-spiegel", "--radius", "-1"]) == 2
    capsys.readouterr()
    assert run_command(["verify-claims", "--only", "bogus"]) == 2
    assert json.loads(capsys.readouterr().err)["kind"] == "input"


def test_verify_claims_subset_and_mutation(tmp_path):
    code, out = _run(tmp_path, "ok.json", "verify-claims", "--only", "index-origin,census-ms")
    assert code == 0
    report = json.loads(out.read_text())
    assert report["overall"] == "Pass" and report["config"]["command"] == "verify-claims"
    code, out = _run(tmp_path, "bad.json", "verify-claims", "--only", "index-origin", "--mutate", "flip-index-sign")
    assert code == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "oscitopo", "index", "--system", "moore-spiegel",
                           "--point", "0,0,0"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["index"] == -1


@pytest.mark.parametrize("command", ["spectrum", "avoidance", "manifold", "section-map", "classify-orbit", "simulate"])
def test_commands_have_help(command, capsys):
    assert run_command([command, "--help"]) == 0
    assert "--system" in capsys.readouterr().out


def test_claim_reports_are_byte_identical(tmp_path):
    args = ("verify-claims", "--only", "census-ms,routh-hurwitz,orbit-oracle")
    _, a = _run(tmp_path, "a.json", *args)
    _, b = _run(tmp_path, "b.json", *args)
    assert a.read_bytes().replace(b"a.json", b"b.json") == b.read_bytes()
