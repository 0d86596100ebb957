"""CSV ingestion and emission for matrices and adjacency data.

All files are UTF-8, LF-terminated, header-free dense CSV unless a
function says otherwise.  Missing adjacency entries are the literal
token NA (case insensitive; empty cells also count as missing).
"""

from __future__ import annotations

import csv

import numpy as np

from .exceptions import Asymmetric, NonBinary, ParseError, Ragged

_NA_TOKENS = {"na", "nan", ""}


def load_matrix_csv(path, kind: str = "numeric") -> np.ndarray:
    """Read a dense CSV as floats; ``kind='adjacency'`` validates a network.

    Adjacency matrices must be square with entries 0, 1, or NA; mutually
    observed entries must agree across the diagonal.  NA becomes NaN.
    """
    if kind not in ("numeric", "adjacency"):
        raise ParseError(f"unknown matrix kind {kind!r}")
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            parsed = []
            for cell in row:
                token = cell.strip()
                if token.lower() in _NA_TOKENS:
                    parsed.append(np.nan)
                    continue
                try:
                    parsed.append(float(token))
                except ValueError as exc:
                    raise ParseError(
                        f"{path}:{lineno}: cannot parse {cell!r} as a number"
                    ) from exc
            rows.append(parsed)
    if not rows:
        raise ParseError(f"{path}: empty file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise Ragged(f"{path}: rows have inconsistent lengths")
    m = np.array(rows, dtype=float)

    if kind == "adjacency":
        if m.shape[0] != m.shape[1]:
            raise ParseError(f"{path}: adjacency must be square, got {m.shape}")
        observed = ~np.isnan(m)
        vals = m[observed]
        if not np.all((vals == 0.0) | (vals == 1.0)):
            raise NonBinary(f"{path}: adjacency entries must be 0, 1, or NA")
        off = ~np.eye(m.shape[0], dtype=bool)
        both = observed & observed.T & off
        if not np.array_equal(m[both], m.T[both]):
            raise Asymmetric(f"{path}: observed entries disagree across the diagonal")
    return m


def write_matrix_csv(path, m: np.ndarray) -> None:
    """Write a dense matrix; floats use repr so reads round-trip exactly."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    with open(path, "w", newline="\n") as fh:
        for row in m:
            fh.write(",".join(_format(v) for v in row) + "\n")


def _format(v: float) -> str:
    if np.isnan(v):
        return "NA"
    return repr(float(v))
