"""Delimited-text input/output.

Input matrices are tab or comma separated (autodetected), genes as columns
with a header row of gene ids and a first column of sample ids. All output
files are UTF-8 with LF line endings; floats are written with the shortest
representation that round-trips exactly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .model import ExpressionMatrix

# fixed output names, so downstream scripts never have to guess
PVALUES_FILE = "pvalues.tsv"
DE_CALLS_FILE = "de_calls.tsv"
ADJUSTED_FILE = "what_adjusted.tsv"
RLE_FILE = "rle.tsv"
EIGRATIO_FILE = "eigratio.tsv"
MANIFEST_FILE = "run_manifest"


def fmt(x: float) -> str:
    """Round-trip exact decimal representation of a float."""
    return repr(float(x))


def _detect_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def _read_lines(path) -> List[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [ln for ln in text.split("\n") if ln.strip() != ""]


def read_table(path) -> Tuple[np.ndarray, Tuple[str, ...], Tuple[str, ...]]:
    """Parse a delimited table with a header row and row-id first column.

    Returns (values, column_ids, row_ids). Raises ValueError on ragged rows
    or non-numeric cells.
    """
    lines = _read_lines(path)
    if len(lines) < 2:
        raise ValueError(f"{path}: need a header row and at least one data row")
    delim = _detect_delimiter(lines[0])
    header = lines[0].split(delim)
    col_ids = tuple(c.strip() for c in header[1:])
    if not col_ids:
        raise ValueError(f"{path}: header row has no data columns")
    row_ids: List[str] = []
    rows: List[List[float]] = []
    for idx, ln in enumerate(lines[1:], start=2):
        cells = ln.split(delim)
        if len(cells) != len(col_ids) + 1:
            raise ValueError(
                f"{path}: line {idx} has {len(cells)} fields, expected {len(col_ids) + 1}"
            )
        row_ids.append(cells[0].strip())
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}: line {idx}: {exc}") from None
    return np.array(rows, dtype=float), col_ids, tuple(row_ids)


def read_matrix(path) -> ExpressionMatrix:
    """Read an expression matrix (samples x genes) from delimited text."""
    values, gene_ids, sample_ids = read_table(path)
    return ExpressionMatrix(values, gene_ids, sample_ids)


def write_table(
    path,
    values: np.ndarray,
    col_ids: Sequence[str],
    row_ids: Sequence[str],
    corner: str = "sample",
) -> None:
    values = np.asarray(values, dtype=float)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join([corner, *col_ids]) + "\n")
        for rid, row in zip(row_ids, values):
            fh.write("\t".join([rid, *(fmt(v) for v in row)]) + "\n")


def write_matrix(path, y: ExpressionMatrix) -> None:
    write_table(path, y.values, y.gene_ids, y.sample_ids)


def read_id_list(path) -> Tuple[str, ...]:
    """One id per line; blank lines and '#' comments are skipped."""
    ids = []
    for ln in Path(path).read_text(encoding="utf-8").split("\n"):
        ln = ln.strip()
        if ln and not ln.startswith("#"):
            ids.append(ln)
    if not ids:
        raise ValueError(f"{path}: empty id list")
    return tuple(ids)


def write_id_list(path, ids: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in ids:
            fh.write(f"{i}\n")


def ids_to_indices(gene_ids: Sequence[str], wanted: Iterable[str], what: str) -> Tuple[int, ...]:
    """Map gene ids to 0-based column indices, preserving order."""
    lookup = {g: j for j, g in enumerate(gene_ids)}
    out = []
    for w in wanted:
        if w not in lookup:
            raise ValueError(f"{what} id {w!r} not present in the matrix header")
        out.append(lookup[w])
    return tuple(out)


def read_covariate(path, sample_ids: Optional[Sequence[str]] = None) -> np.ndarray:
    """Two-column file (sample id, value); aligned to sample_ids if given."""
    lines = _read_lines(path)
    delim = _detect_delimiter(lines[0])
    first = lines[0].split(delim)
    start = 0
    try:
        float(first[1])
    except (ValueError, IndexError):
        start = 1  # header row
    pairs: Dict[str, float] = {}
    order: List[str] = []
    for idx, ln in enumerate(lines[start:], start=start + 1):
        cells = ln.split(delim)
        if len(cells) != 2:
            raise ValueError(f"{path}: line {idx} has {len(cells)} fields, expected 2")
        sid = cells[0].strip()
        try:
            pairs[sid] = float(cells[1])
        except ValueError as exc:
            raise ValueError(f"{path}: line {idx}: {exc}") from None
        order.append(sid)
    if sample_ids is None:
        return np.array([pairs[s] for s in order], dtype=float)
    missing = [s for s in sample_ids if s not in pairs]
    if missing:
        raise ValueError(f"{path}: covariate missing sample ids {missing[:5]}")
    return np.array([pairs[s] for s in sample_ids], dtype=float)


def write_covariate(path, sample_ids: Sequence[str], x: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sample\tvalue\n")
        for sid, v in zip(sample_ids, np.asarray(x, dtype=float)):
            fh.write(f"{sid}\t{fmt(v)}\n")


def read_factor_matrix(path, sample_ids: Sequence[str]) -> np.ndarray:
    """Read a sample-by-factor table and align rows to sample_ids."""
    values, _, row_ids = read_table(path)
    lookup = {s: i for i, s in enumerate(row_ids)}
    missing = [s for s in sample_ids if s not in lookup]
    if missing:
        raise ValueError(f"{path}: factor table missing sample ids {missing[:5]}")
    return values[[lookup[s] for s in sample_ids]]


def write_factor_matrix(path, w: np.ndarray, sample_ids: Sequence[str]) -> None:
    w = np.asarray(w, dtype=float)
    cols = [f"w{j + 1:02d}" for j in range(w.shape[1])]
    write_table(path, w, cols, sample_ids)


def write_pvalues(path, gene_ids: Sequence[str], pvalues: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("gene\tpvalue\n")
        for g, p in zip(gene_ids, np.asarray(pvalues, dtype=float)):
            fh.write(f"{g}\t{fmt(p)}\n")


def write_de_calls(
    path,
    gene_ids: Sequence[str],
    pvalues: np.ndarray,
    indices: Sequence[int],
    threshold: float,
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("gene\tpvalue\tthreshold\n")
        for j in indices:
            fh.write(f"{gene_ids[j]}\t{fmt(pvalues[j])}\t{fmt(threshold)}\n")


def write_rle(path, sample_ids: Sequence[str], rle) -> None:
    """Plot-ready per-chip records: chip id, median, q1, q3, iqr."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("chip\tmedian\tq1\tq3\tiqr\n")
        for i, sid in enumerate(sample_ids):
            fh.write(
                "\t".join(
                    [
                        sid,
                        fmt(rle.medians[i]),
                        fmt(rle.q1[i]),
                        fmt(rle.q3[i]),
                        fmt(rle.iqr[i]),
                    ]
                )
                + "\n"
            )


def write_eigratio(path, ratios: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("m\tcumulative_ratio\n")
        for m, r in enumerate(np.asarray(ratios, dtype=float), start=1):
            fh.write(f"{m}\t{fmt(r)}\n")


def write_manifest(path, manifest: Dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def read_manifest(path) -> Dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Generic delimited writer; floats formatted exactly, the rest via str."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            cells = [fmt(c) if isinstance(c, float) else str(c) for c in row]
            fh.write("\t".join(cells) + "\n")
