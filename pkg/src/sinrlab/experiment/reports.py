"""Schema-checked CSV and JSON result files."""

from __future__ import annotations

import csv
import json
import math
import subprocess
from pathlib import Path
from typing import Iterable, Sequence


class SchemaError(ValueError):
    pass


def _check_row(row: Sequence, header: Sequence[str], where: str) -> list:
    if len(row) != len(header):
        raise SchemaError(f"{where}: {len(row)} columns, header has {len(header)}")
    out = []
    for name, value in zip(header, row):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if not math.isfinite(value):
                raise SchemaError(f"{where}: non-finite value in column {name}")
            value = repr(float(value)) if isinstance(value, float) else str(value)
        out.append(value)
    return out


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write rows after checking column count and finiteness; floats use ``repr``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    checked = [_check_row(r, header, f"{path.name} row {i}") for i, r in enumerate(rows)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(checked)
    return path


def read_csv(path, header: Sequence[str] | None = None) -> tuple[list[str], list[list[float]]]:
    """Read a numeric CSV back, validating its header, width and values."""
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        found = next(r, None)
        if found is None:
            raise SchemaError(f"{path}: empty file")
        if header is not None and list(found) != list(header):
            raise SchemaError(f"{path}: header {found}, expected {list(header)}")
        rows = []
        for i, row in enumerate(r):
            if len(row) != len(found):
                raise SchemaError(f"{path} row {i}: {len(row)} columns, header has {len(found)}")
            try:
                vals = [float(x) for x in row]
            except ValueError as exc:
                raise SchemaError(f"{path} row {i}: {exc}") from exc
            if not all(math.isfinite(v) for v in vals):
                raise SchemaError(f"{path} row {i}: non-finite value")
            rows.append(vals)
    return list(found), rows


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() or "unknown"
