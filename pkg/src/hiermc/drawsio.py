"""Delimited draws output: one CSV per chain, fixed diagnostic columns first.

Header order is part of the format:
``chain,iter,lp__,accept_stat__,stepsize__,int_steps__,treedepth__,divergent__,energy__``
followed by the constrained parameter columns in model declaration order.
Floats are written with 17 significant digits so a written file reads back
bit-for-bit; absent fields are written empty.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .diagnostics import DrawMatrix

FIXED_COLUMNS = (
    "chain", "iter", "lp__", "accept_stat__", "stepsize__",
    "int_steps__", "treedepth__", "divergent__", "energy__",
)
_INT_STATS = {"int_steps__", "treedepth__", "divergent__"}
_STAT_BY_COLUMN = {
    "accept_stat__": "accept_stat",
    "stepsize__": "stepsize",
    "int_steps__": "int_steps",
    "treedepth__": "treedepth",
    "divergent__": "divergent",
    "energy__": "energy",
}


def _fmt(value: float, as_int: bool) -> str:
    if value is None:
        return ""
    v = float(value)
    if np.isnan(v):
        return ""
    if as_int:
        return str(int(v))
    return f"{v:.17g}"


def chain_csv_path(output_dir: str | Path, name: str, chain: int) -> Path:
    return Path(output_dir) / f"{name}-chain{chain}.csv"


def write_chain_csv(path: str | Path, draws: DrawMatrix, chain: int) -> Path:
    """Write one chain (0-based index) of a DrawMatrix to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join(FIXED_COLUMNS + tuple(draws.names))
    lines = [header]
    n = draws.draws
    values = draws.values[chain]
    lp = draws.lp[chain]
    stats = {col: draws.stats.get(key) for col, key in _STAT_BY_COLUMN.items()}
    for i in range(n):
        cells = [str(chain + 1), str(i + 1), _fmt(float(lp[i]), False)]
        for col in FIXED_COLUMNS[3:]:
            arr = stats[col]
            if arr is None:
                cells.append("")
            else:
                cells.append(_fmt(float(arr[chain, i]), col in _INT_STATS))
        cells.extend(_fmt(float(v), False) for v in values[i])
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_draws(output_dir: str | Path, name: str, draws: DrawMatrix) -> list[Path]:
    """Write every chain of a DrawMatrix; returns the per-chain paths."""
    return [
        write_chain_csv(chain_csv_path(output_dir, name, c + 1), draws, c)
        for c in range(draws.chains)
    ]


def read_draws(paths: list[str | Path]) -> DrawMatrix:
    """Read per-chain CSVs (as written by :func:`write_draws`) into a DrawMatrix."""
    if not paths:
        raise ValueError("read_draws: need at least one CSV path")
    per_chain = []
    names: list[str] | None = None
    for p in paths:
        p = Path(p)
        text = p.read_text().splitlines()
        if not text:
            raise ValueError(f"{p}: empty draws file")
        header = text[0].split(",")
        if tuple(header[: len(FIXED_COLUMNS)]) != FIXED_COLUMNS:
            raise ValueError(f"{p}: unexpected header {header[:9]}")
        file_names = header[len(FIXED_COLUMNS):]
        if names is None:
            names = file_names
        elif names != file_names:
            raise ValueError(f"{p}: parameter columns differ across chain files")
        rows = [line.split(",") for line in text[1:] if line]
        per_chain.append(rows)
    lengths = {len(rows) for rows in per_chain}
    if len(lengths) > 1:
        raise ValueError(f"chain files have differing draw counts: {sorted(lengths)}")
    n = lengths.pop()
    c = len(per_chain)
    d = len(names)
    values = np.empty((c, n, d))
    lp = np.empty((c, n))
    stats = {key: np.full((c, n), np.nan) for key in _STAT_BY_COLUMN.values()}

    def parse(cell: str) -> float:
        return float(cell) if cell != "" else float("nan")

    for ci, rows in enumerate(per_chain):
        for ri, cells in enumerate(rows):
            lp[ci, ri] = parse(cells[2])
            for k, col in enumerate(FIXED_COLUMNS[3:], start=3):
                stats[_STAT_BY_COLUMN[col]][ci, ri] = parse(cells[k])
            for j in range(d):
                values[ci, ri, j] = parse(cells[len(FIXED_COLUMNS) + j])
    return DrawMatrix(names=list(names), values=values, lp=lp, stats=stats)


def write_table_csv(path: str | Path, rows: list[dict], columns: list[str]) -> Path:
    """Small helper for plot-ready tables: one dict per row, fixed column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            v = row.get(col, "")
            if isinstance(v, (float, np.floating)):
                cells.append(_fmt(float(v), False))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table_csv(path: str | Path) -> list[dict]:
    text = Path(path).read_text().splitlines()
    columns = text[0].split(",")
    rows = []
    for line in text[1:]:
        if not line:
            continue
        cells = line.split(",")
        row = {}
        for col, cell in zip(columns, cells):
            try:
                row[col] = float(cell) if cell != "" else float("nan")
            except ValueError:
                row[col] = cell
        rows.append(row)
    return rows
