"""Plain-text table output shared by the CLI and the analysis reports.

Every table is written as CSV with ``#``-prefixed provenance header lines, or
as a JSON mirror holding the same header, column names and rows. Floats are
rendered with ``repr`` (shortest string that round-trips the double exactly),
so identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = ["fmt", "read_csv", "render_csv", "render_json", "write_table"]


def fmt(value: Any) -> str:
    """Render one cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def _json_cell(value: Any) -> Any:
    if value is None:
        return None
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else fmt(v)
    return str(value)


def _header_line(header: dict) -> str:
    return "# " + " ".join(f"{k}={fmt(v)}" for k, v in header.items())


def render_csv(header: dict, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    lines = [_header_line(header), ",".join(columns)]
    lines.extend(",".join(fmt(c) for c in row) for row in rows)
    return "\n".join(lines) + "\n"


def render_json(header: dict, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    # json.dumps renders floats with repr, matching the CSV cells
    doc = {
        "header": {k: _json_cell(v) for k, v in header.items()},
        "columns": list(columns),
        "rows": [[_json_cell(c) for c in row] for row in rows],
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def write_table(
    path: str | Path,
    header: dict,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    fmt_name: str = "csv",
) -> Path:
    """Write one table; the file suffix follows ``fmt_name``."""
    path = Path(path).with_suffix("." + fmt_name)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    if fmt_name == "csv":
        text = render_csv(header, columns, rows)
    elif fmt_name == "json":
        text = render_json(header, columns, rows)
    else:
        raise ValueError(f"unknown output format {fmt_name!r}")
    path.write_text(text, encoding="utf-8")
    return path


def read_csv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    """Parse a table written by :func:`write_table` (cells stay strings)."""
    header: dict[str, str] = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            for tok in line[1:].split():
                k, _, v = tok.partition("=")
                header[k] = v
        elif not columns:
            columns = line.split(",")
        elif line:
            rows.append(line.split(","))
    return header, columns, rows
