"""CSV output with the run configuration echoed as comment lines."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence], echo: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in echo:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows, echo=()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows, echo), encoding="utf-8")
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Header and data rows, skipping ``#`` comment lines."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
