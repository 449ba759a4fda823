"""Command-line interface: exit codes, outputs, and error reporting."""

import csv

import pytest

from swiptrelay.cli import _parse_grid, main


def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_parse_grid_forms():
    assert _parse_grid("pmax=2:8:2") == ("pmax", (2.0, 4.0, 6.0, 8.0))
    assert _parse_grid("rt_min=1.5") == ("rt_min", (1.5,))
    with pytest.raises(ValueError):
        _parse_grid("pmax")
    with pytest.raises(ValueError):
        _parse_grid("pmax=1:8")
    with pytest.raises(ValueError):
        _parse_grid("pmax=1:8:0")


def test_solve_success(tmp_path, capsys):
    code, out, _ = run(["solve", "--seed", "7", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "ee_bits_per_hz_joule" in out and "alpha" in out
    with open(tmp_path / "trace.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["iteration", "ee", "alpha"]
    assert len(rows) > 1


def test_solve_infeasible_names_constraint(tmp_path, capsys):
    code, _, err = run(["solve", "--seed", "0", "--out", str(tmp_path),
                        "--set", "rt_min=100"], capsys)
    assert code == 2
    assert "ERR_INFEASIBLE" in err and "rate_tr" in err


def test_solve_nonconvergence_exit_code(tmp_path, capsys):
    code, out, _ = run(["solve", "--seed", "0", "--out", str(tmp_path),
                        "--set", "solver.max_outer_iters=1"], capsys)
    assert code == 3
    assert "ERR_NOCONVERGE" in out


def test_unknown_config_key(tmp_path, capsys):
    code, _, err = run(["solve", "--out", str(tmp_path),
                        "--set", "bogus_key=1"], capsys)
    assert code == 1
    assert "ERR_CONFIG" in err


def test_bad_override_format(tmp_path, capsys):
    code, _, err = run(["solve", "--out", str(tmp_path), "--set", "rt_min"], capsys)
    assert code == 1
    assert "ERR_CONFIG" in err


def test_missing_config_file(tmp_path, capsys):
    code, _, err = run(["solve", "--config", str(tmp_path / "nope.cfg"),
                        "--out", str(tmp_path)], capsys)
    assert code == 1


def test_bad_grid_spec(tmp_path, capsys):
    code, _, err = run(["sweep", "--grid", "nonsense=1:2:1",
                        "--realizations", "1", "--out", str(tmp_path)], capsys)
    assert code == 1
    assert "grid key" in err


def test_sweep_writes_csv(tmp_path, capsys):
    code, out, _ = run(["sweep", "--grid", "pmax=4:8:4", "--realizations", "2",
                        "--seed", "1", "--out", str(tmp_path),
                        "--set", "solver.alt_tol=1e-4",
                        "--set", "solver.dinkelbach_tol=1e-4",
                        "--set", "solver.inner_tol=1e-5"], capsys)
    assert code == 0
    with open(tmp_path / "records.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) - 1 == 2 * 2 * 3  # grid x realizations x baselines
    assert (tmp_path / "aggregates.csv").exists()


def test_convergence_command(tmp_path, capsys):
    code, out, _ = run(["convergence", "--realizations", "3", "--out", str(tmp_path),
                        "--set", "solver.alt_tol=1e-4",
                        "--set", "solver.dinkelbach_tol=1e-4",
                        "--set", "solver.inner_tol=1e-5"], capsys)
    assert code == 0
    assert "final EE spread" in out
    assert (tmp_path / "convergence_traces.csv").exists()


def test_feasibility_command(tmp_path, capsys):
    code, out, _ = run(["feasibility", "--grid", "rt_min=1:2:1",
                        "--realizations", "3", "--out", str(tmp_path),
                        "--set", "solver.alt_tol=1e-4",
                        "--set", "solver.inner_tol=1e-5"], capsys)
    assert code == 0
    assert "fraction=" in out


def test_multistart_command(tmp_path, capsys):
    code, out, _ = run(["multistart", "--grid", "snr=10", "-k", "2",
                        "--realizations", "1", "--out", str(tmp_path),
                        "--set", "solver.alt_tol=1e-4",
                        "--set", "solver.dinkelbach_tol=1e-4",
                        "--set", "solver.inner_tol=1e-5"], capsys)
    assert code == 0
    assert (tmp_path / "records.csv").exists()


def test_multistart_rejects_non_snr_grid(tmp_path, capsys):
    code, _, err = run(["multistart", "--grid", "pmax=1:2:1",
                        "--out", str(tmp_path)], capsys)
    assert code == 1


def test_props_check(tmp_path, capsys):
    code, out, _ = run(["props-check", "--seed", "0", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "0 failed" in out
