import argparse
import csv

import pytest

from simplexsbp.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main, parse_sizes
from simplexsbp.utils import Utility


def test_parse_sizes():
    assert parse_sizes("12") == [12]
    assert parse_sizes("4,8,16") == [4, 8, 16]
    assert parse_sizes("4:32:x2") == [4, 8, 16, 32]
    assert parse_sizes("4:32:×2") == [4, 8, 16, 32]
    assert parse_sizes("4:16:+4") == [4, 8, 12, 16]


@pytest.mark.parametrize("text", ["a", "1", "4:32:x1", "4:32:/2", ""])
def test_parse_sizes_rejects(text):
    with pytest.raises(argparse.ArgumentTypeError):
        parse_sizes(text)


def test_unsupported_degree_is_a_usage_error(tmp_path):
    assert main(["cubature", "--p", "5", "--out", str(tmp_path)]) == EXIT_USAGE


def test_unknown_command_is_a_usage_error():
    assert main(["bogus"]) == EXIT_USAGE


def test_verify_and_replay(tmp_path):
    assert main(["verify", "--p", "1", "--out", str(tmp_path)]) == EXIT_OK
    report = Utility.read_json(tmp_path / "verify_d2_p1.json")
    assert report["tau"] >= 1
    manifest = Utility.read_json(tmp_path / "manifest_verify.json")
    assert manifest["exit_code"] == EXIT_OK
    assert manifest["outputs"] == [str(tmp_path / "verify_d2_p1.json")]

    assert main(["replay", str(tmp_path / "manifest_verify.json"), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "manifest_replay.json").exists()


def test_cubature_and_build_ops(tmp_path):
    assert main(["cubature", "--p", "2", "--out", str(tmp_path)]) == EXIT_OK
    rule = Utility.read_json(tmp_path / "cubature_d2_p2.json")
    assert [orbit["kind"] for orbit in rule["orbits"]] == ["vertices", "mid-edge", "centroid"]

    assert main(["build-ops", "--p", "2", "--out", str(tmp_path)]) == EXIT_OK
    ops = Utility.read_json(tmp_path / "operators_d2_p2.json")
    assert len(ops["Qx"]) == 7


def test_spectrum(tmp_path):
    assert main(["spectrum", "--scheme", "csbp", "--p", "1", "--n", "4", "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "spectrum_csbp_p1_N4.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["re", "im"]
    assert len(rows) == 1 + 16


def test_energy(tmp_path):
    argv = ["energy", "--scheme", "csbp", "--p", "1", "--n", "4", "--final-time", "0.1", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK
    assert (tmp_path / "energy_csbp_p1_N4.csv").exists()


def test_converge(tmp_path):
    argv = ["converge", "--scheme", "dsbp", "--p", "2", "--n", "4,8", "--min-rate", "0", "--fields", "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK
    with open(tmp_path / "convergence_dsbp_p2.csv") as f:
        rows = list(csv.DictReader(f))
    assert [int(row["N"]) for row in rows] == [4, 8]
    assert float(rows[1]["normalized_error"]) < float(rows[0]["normalized_error"])
    assert all(float(row["cpu_time"]) >= 0.0 for row in rows)
    manifest = Utility.read_json(tmp_path / "manifest_converge.json")
    assert manifest["parameters"]["slope"] > 0
    assert manifest["parameters"]["rate_window"][0] == 0.0
    assert "seed" not in manifest

    with open(tmp_path / "fields_dsbp_p2_N4.csv") as f:
        field = list(csv.DictReader(f))
    assert len(field) == 2 * 4 * 4 * 7
    row = field[0]
    assert float(row["error"]) == pytest.approx(float(row["u"]) - float(row["exact"]))


def test_converge_outside_the_rate_window_fails(tmp_path):
    argv = ["converge", "--scheme", "dsbp", "--p", "2", "--n", "4,8", "--min-rate", "10", "--out", str(tmp_path)]
    assert main(argv) == EXIT_FAILURE
    assert Utility.read_json(tmp_path / "manifest_converge.json")["exit_code"] == EXIT_FAILURE


def test_spectrum_of_dsbp_is_a_usage_error(tmp_path):
    assert main(["spectrum", "--scheme", "dsbp", "--p", "1", "--n", "4", "--out", str(tmp_path)]) == EXIT_USAGE
    assert not (tmp_path / "manifest_spectrum.json").exists()
