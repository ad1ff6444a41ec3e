"""Append-only CSV telemetry for optimization runs."""

from __future__ import annotations

import csv
from pathlib import Path

PG_COLUMNS = [
    "k", "nu", "lambda", "lambda_max", "g_nu", "g_theta_norm", "g_lambda",
    "mean_g", "cvar_g", "mean_j", "cvar_j",
]
AC_COLUMNS = ["k", "nu", "lambda", "lambda_max", "td_abs", "critic_residual"]


class TelemetryWriter:
    """Writes dict rows to CSV with a fixed column order; floats use repr
    so identical runs emit identical bytes."""

    def __init__(self, path: str | Path, columns: list[str]):
        self.path = Path(path)
        self.columns = columns
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(columns)

    def log(self, row: dict) -> None:
        self._writer.writerow([_fmt(row.get(c)) for c in self.columns])

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        self._fh.flush()
        self._fh.close()

    def __enter__(self) -> "TelemetryWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)
