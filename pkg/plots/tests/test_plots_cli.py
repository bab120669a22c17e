"""Command-line interface round trips."""

import csv

import pytest

from nslqr_plots.cli import main
from nslqr_plots.frames import RESULT_COLUMNS


@pytest.fixture
def sweep(tmp_path):
    rows = []
    cell = 0
    for horizon in (512, 1024, 2048):
        for seed in range(2):
            rows.append(
                [cell, "dynlqr", horizon, 0.0, seed, 2.0 * horizon**0.6, 0, 0, 1.0]
            )
            cell += 1
    with (tmp_path / "results.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        writer.writerows(rows)
    return tmp_path


def test_scaling_command(sweep, tmp_path, capsys):
    out = tmp_path / "fig.png"
    rc = main(["scaling", "--in", str(sweep), "--out", str(out)])
    assert rc == 0
    assert out.is_file()
    assert "slope 0.600" in capsys.readouterr().err


def test_compare_command(sweep, tmp_path):
    out = tmp_path / "cmp.png"
    assert main(["compare", "--in", str(sweep), "--out", str(out)]) == 0
    assert out.is_file()


def test_regret_command_fails_without_traces(sweep, tmp_path, capsys):
    rc = main(["regret", "--in", str(sweep), "--out", str(tmp_path / "r.png")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_missing_results_dir(tmp_path, capsys):
    rc = main(["scaling", "--in", str(tmp_path), "--out", str(tmp_path / "x.png")])
    assert rc == 1
