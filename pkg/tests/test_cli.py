import csv
import filecmp
import os
from pathlib import Path

import numpy as np
import pytest

from plapsys.cli import main
from plapsys.config import RunConfig, parse_config
from plapsys.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
GOLDEN_CFG = ROOT / "presets" / "golden.cfg"


def read_csv(path):
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults_match_preset():
    assert parse_config(GOLDEN_CFG.read_text()).items() == RunConfig().items()
    assert parse_config("").items() == RunConfig().items()
    assert RunConfig().delta == pytest.approx(0.02)


def test_echo_round_trips():
    cfg = parse_config("p = 2.5\nmesh.kind = interval\neps.schedule = 0.5, 0.25\n")
    assert parse_config(cfg.echo()).items() == cfg.items()


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("p = 2\nbogus\n", 2, "key = value"),
        ("# c\nfoo = 1\n", 2, "unknown key"),
        ("p = 2\np = 3\n", 2, "duplicate"),
        ("q =\n", 1, "missing value"),
        ("\n\nmesh.n = 2.5\n", 3, "bad value"),
        ("mesh.kind = square\n", 1, "bad value"),
        ("eps.schedule = 1e-2, 1e-1\n", 1, "strictly decreasing"),
        ("solver.damping = 1\n", 1, "damping"),
        ("mesh.L = 1\nmesh.delta = 0.6\n", 2, "mesh.delta"),
    ],
)
def test_parse_errors_name_the_line(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert fragment in str(info.value)
    assert str(info.value).startswith(f"line {line}:")


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == 1


def test_malformed_config_exits_1(tmp_path, capsys):
    assert main(["solve", "--config", write_cfg(tmp_path, "p 2\n"), "--out", str(tmp_path / "o")]) == 1
    assert "line 1" in capsys.readouterr().err


def test_missing_config_exits_1(tmp_path):
    assert main(["eigen", "--config", str(tmp_path / "nope.cfg")]) == 1


def test_eigen_linear_interval(tmp_path):
    cfg = write_cfg(tmp_path, "p = 2\nq = 2\nmesh.kind = interval\nmesh.n = 1024\n")
    out = tmp_path / "out"
    assert main(["eigen", "--config", cfg, "--out", str(out)]) == 0
    head, rows = read_csv(out / "eigen_summary.csv")
    assert head == ["lambda_p", "lambda_q"]
    lam = float(rows[0][0])
    assert abs(lam - np.pi**2) / np.pi**2 < 1e-3
    head, rows = read_csv(out / "eigen.csv")
    assert head == ["node_coordinate", "phi_p", "phi_q"]
    data = np.array(rows, dtype=float)
    assert data.shape == (1024, 3)
    np.testing.assert_array_equal(data[:, 1], data[:, 2])


def test_output_header_echoes_config(tmp_path):
    out = tmp_path / "out"
    main(["eigen", "--config", str(GOLDEN_CFG), "--out", str(out)])
    lines = (out / "eigen.csv").read_text().splitlines()
    assert lines[0].startswith("# plapsys")
    assert "# command = eigen" in lines
    assert "# mesh.delta = 0.02" in lines


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden")
    code = main(["solve", "--config", str(GOLDEN_CFG), "--out", str(out)])
    return code, out


def test_solve_golden(solved):
    code, out = solved
    assert code == 0
    for name in ("ledger.csv", "solution.csv", "trace.csv", "certificate.txt"):
        assert (out / name).exists(), name
    assert not (out / "FAILED").exists()
    head, rows = read_csv(out / "solution.csv")
    assert head == ["node", "u", "v", "u_lo", "u_hi", "u_hat", "d"]
    data = np.array(rows, dtype=float)
    assert np.all(data[:, 3] <= data[:, 1]) and np.all(data[:, 1] <= data[:, 4])
    head, rows = read_csv(out / "ledger.csv")
    assert head == ["constant", "value", "slack"]
    assert [r[0] for r in rows[:6]] == ["C", "Lambda", "rho", "m", "eta", "R"]
    head, rows = read_csv(out / "trace.csv")
    assert [float(r[0]) for r in rows] == [1e-1, 1e-2, 1e-3, 1e-4, 0.0]


def test_solve_is_deterministic(solved, tmp_path):
    _, first = solved
    again = tmp_path / "again"
    assert main(["solve", "--config", str(GOLDEN_CFG), "--out", str(again)]) == 0
    for name in ("ledger.csv", "solution.csv", "trace.csv", "certificate.txt"):
        assert filecmp.cmp(first / name, again / name, shallow=False), name


def test_gate_failure_exits_2(tmp_path):
    cfg = write_cfg(tmp_path, GOLDEN_CFG.read_text().replace("beta1 = 0.5", "beta1 = 1.2"))
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 2
    assert (out / "FAILED").exists()
    assert "# FAILED at" in (out / "certificate.txt").read_text()
    assert not (out / "solution.csv").exists()


def test_second_needs_solution(tmp_path, capsys):
    assert main(["second", "--config", str(GOLDEN_CFG), "--out", str(tmp_path / "empty")]) == 1
    assert "run solve first" in capsys.readouterr().err


def test_second_reports_not_found(solved):
    _, out = solved
    code = main(["second", "--config", str(GOLDEN_CFG), "--out", str(out)])
    assert code == 3
    head, rows = read_csv(out / "second.csv")
    assert rows[-1][1] in ("False", "0", "false")
    head, rows = read_csv(out / "second_attempts.csv")
    assert len(rows) >= 9
    assert not (out / "second_solution.csv").exists()


def test_certify_golden(tmp_path):
    out = tmp_path / "cert"
    assert main(["certify", "--config", str(GOLDEN_CFG), "--out", str(out)]) == 0
    text = (out / "certificate.txt").read_text()
    assert "\tfail\t" not in text
    for name in ("comparison fuzz", "rectangle membership"):
        assert name in text
    assert os.path.getsize(out / "certificate.txt") > 0
