"""Loading and validating harness CSV output.

The harness writes one results.csv per sweep (one row per cell) and,
optionally, per-cell trace_<cell>.csv files with per-step columns.  This
module reads only those documented columns; regret values are taken from
the files, never recomputed.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import MissingColumns, PlotsError

RESULT_COLUMNS = [
    "cell", "controller", "T", "V_T", "seed",
    "regret", "restarts", "stab_steps", "wall_ms",
]
TRACE_COLUMNS = ["t", "cost", "jstar", "sigma2", "cum_regret"]

_RESULT_TYPES = {
    "cell": int, "controller": str, "T": int, "V_T": float, "seed": int,
    "regret": float, "restarts": int, "stab_steps": int, "wall_ms": float,
}


@dataclass(frozen=True)
class ResultsFrame:
    """Parsed results.csv rows plus any per-cell traces found beside it."""

    rows: list[dict]
    traces: dict[int, list[dict]]

    def controllers(self) -> list[str]:
        seen = []
        for row in self.rows:
            if row["controller"] not in seen:
                seen.append(row["controller"])
        return seen

    def group_by(self, *keys) -> dict[tuple, list[dict]]:
        groups: dict[tuple, list[dict]] = {}
        for row in self.rows:
            groups.setdefault(tuple(row[k] for k in keys), []).append(row)
        return groups


def _read_csv(path: Path, required: list[str], types: dict) -> list[dict]:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumns(f"{path.name}: missing columns {missing}")
        rows = []
        for raw in reader:
            try:
                rows.append({c: types.get(c, str)(raw[c]) for c in required})
            except ValueError as exc:
                raise MissingColumns(f"{path.name}: unparsable row: {exc}") from exc
    return rows


def load_results(results_dir) -> ResultsFrame:
    """Read results.csv and all trace_<cell>.csv files in a sweep directory."""
    directory = Path(results_dir)
    results_path = directory / "results.csv"
    if not results_path.is_file():
        raise PlotsError(f"no results.csv in {directory}")
    rows = _read_csv(results_path, RESULT_COLUMNS, _RESULT_TYPES)
    trace_types = {c: (int if c == "t" else float) for c in TRACE_COLUMNS}
    traces = {}
    for path in sorted(directory.glob("trace_*.csv")):
        stem = path.stem.removeprefix("trace_")
        if not stem.isdigit():
            continue
        traces[int(stem)] = _read_csv(path, TRACE_COLUMNS, trace_types)
    return ResultsFrame(rows=rows, traces=traces)
