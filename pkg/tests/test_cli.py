import json
import subprocess
import sys

import pytest

from rotortree.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_appendix(capsys):
    code, out, _ = run(capsys, "analyze", "appendix")
    assert code == 0
    assert "classification = positive_recurrent" in out
    assert "rho_M = 0.967" in out
    assert "M = [[3/5, 3/5, 4/5, 0, 0], [1/2, 0, 0, 0, 0]" in out


def test_analyze_subtree(capsys):
    code, out, _ = run(capsys, "analyze", "appendix_subtree")
    assert code == 0 and "transient" in out and "rho_M = 1.093" in out
    assert "predicted_limit" not in out


def test_analyze_sqrt2_json(capsys):
    code, out, err = run(capsys, "analyze", "sqrt2", "--json")
    doc = json.loads(out)
    assert code == 0
    assert doc["predicted_limit"] == pytest.approx(0.2928932188, abs=1e-9)
    assert doc["V"] == [["2", "2"], ["1", "2"]]
    assert "not primitive" in err


def test_corrupted_file_exits_2(capsys, tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("n_types = 2\nword.1 = [2, 7]\nword.2 = [1]\n")
    code, _, err = run(capsys, "verify", str(p))
    assert code == 2 and "position 2" in err
    code, _, err = run(capsys, "analyze", str(tmp_path / "missing.toml"))
    assert code == 2 and "cannot read" in err


def test_usage_errors_exit_2(capsys):
    assert run(capsys, "simulate", "sqrt2", "--steps", "0")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "simulate", "sqrt2", "--root", "3", "--seed", "1")[0] == 2
    assert run(capsys, "simulate", "sqrt2", "--seed", "-4")[0] == 2


def test_simulate_is_byte_identical(capsys, tmp_path):
    args = ["simulate", "sqrt2", "--seed", "1", "--steps", "100000", "--stride", "1000"]
    c1, out1, _ = run(capsys, *args, "--out", str(tmp_path / "a"), "--trace", str(tmp_path / "a.csv"))
    c2, out2, _ = run(capsys, *args, "--out", str(tmp_path / "b"), "--trace", str(tmp_path / "b.csv"))
    assert c1 == c2 == 0 and out1 == out2
    for name in ("series.csv", "returns.csv", "summary.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = (tmp_path / "a" / "series.csv").read_text().splitlines()
    assert rows[0] == "n,range" and len(rows) == 101


def test_simulate_reports_density(capsys):
    code, out, _ = run(capsys, "simulate", "sqrt2", "--seed", "2", "--steps", "1000000", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["violations"] == 0
    assert abs(doc["range_density"] - 0.29289) < 0.02


def test_simulate_stops_at_returns(capsys):
    code, out, _ = run(capsys, "simulate", "sqrt2", "--seed", "3", "--returns", "4", "--json")
    doc = json.loads(out)
    assert doc["returns"] == 4 and doc["steps"] == doc["return_times"][-1]


def test_simulate_random_seed_is_printed(capsys):
    code, out, err = run(capsys, "simulate", "sqrt2", "--steps", "100")
    assert code == 0 and err.startswith("seed = ")
    seed = int(err.split()[2])
    assert f"seed = {seed}" in out


def test_simulate_transient_cap(capsys, tmp_path):
    code, out, err = run(
        capsys, "simulate", "appendix_subtree", "--seed", "1", "--steps", "10000000",
        "--max-vertices", "20000", "--out", str(tmp_path),
    )
    assert code == 0
    assert "transient" in err and "cap exhausted" in err
    assert len((tmp_path / "series.csv").read_text().splitlines()) > 2


def test_verify_appendix(capsys):
    code, out, _ = run(
        capsys, "verify", "appendix", "--seed", "1", "--replicas", "3", "--returns", "3"
    )
    assert code == 0, out
    assert "verify_identities: pass" in out and "moment_check: pass" in out


def test_verify_sqrt2_palindromic(capsys):
    code, out, _ = run(capsys, "verify", "sqrt2", "--seed", "1", "--replicas", "3",
                       "--returns", "8", "--samples", "2000")
    assert code == 0 and "2M=D: exact pass" in out


def test_palindromic_command(capsys):
    code, out, _ = run(capsys, "palindromic", "sqrt2")
    assert code == 0 and "2M=D: exact pass" in out and "FAIL" not in out
    code, _, err = run(capsys, "palindromic", "appendix")
    assert code == 2 and "not palindromic" in err
    code, out, _ = run(capsys, "palindromic", "palindrome_critical")
    assert code == 0 and "psi >= 2" in out


def test_experiment_exit_codes(capsys, tmp_path):
    code, out, _ = run(capsys, "experiment", "lln", "binary", "--seed", "1", "--steps", "100")
    assert code == 2 and "not-applicable" in out
    code, _, _ = run(capsys, "experiment", "lln", "sqrt2", "--seed", "1", "--steps", "1000",
                     "--replicas", "2", "--tolerance", "1e-12")
    assert code == 1
    code, out, _ = run(capsys, "experiment", "lln", "sqrt2", "--seed", "1", "--steps", "100000",
                       "--replicas", "3", "--out", str(tmp_path))
    assert code == 0 and (tmp_path / "series.csv").exists() and (tmp_path / "summary.txt").exists()


def test_law_file_override(capsys, tmp_path):
    law = tmp_path / "law.toml"
    law.write_text("rotor.1 = [1, 0, 0]\nrotor.2 = [0, 1]\n")
    code, out, _ = run(capsys, "analyze", "sqrt2", "--law", str(law), "--json")
    doc = json.loads(out)
    assert code == 0 and doc["M"] == [["0", "2"], ["0", "0"]]
    code, out, _ = run(capsys, "analyze", "binary_biased", "--law", "uniform", "--json")
    assert json.loads(out)["M"] == [["1"]]
    law.write_text("rotor.1 = [1, 0]\nrotor.2 = [0, 1]\n")
    code, _, err = run(capsys, "analyze", "sqrt2", "--law", str(law))
    assert code == 2 and "expected 3" in err


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "rotortree.cli", "analyze", "binary"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and "null_recurrent" in proc.stdout
