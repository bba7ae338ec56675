"""File formats: model JSON, matrix/data CSV, report JSON and Graphviz DOT."""

from __future__ import annotations

import csv
import io as _io
import json
import sys
from contextlib import contextmanager
from typing import Optional, Sequence

import numpy as np

from .errors import MalformedModelError, ParseError
from .model import Pscm

FLOAT_FMT = "%.17g"


@contextmanager
def _open(path, mode="r"):
    """``"-"`` means stdin/stdout."""
    if path == "-" or path is None:
        yield sys.stdin if "r" in mode else sys.stdout
    else:
        with open(path, mode, newline="" if "b" not in mode else None) as fh:
            yield fh


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x)


# -- CSV matrices -----------------------------------------------------------------


def parse_matrix_csv(text: str, header: bool = False, path: str = "<input>"):
    """Parse a dense real matrix.  Returns ``(matrix, header_row_or_None)``."""
    rows = list(csv.reader(_io.StringIO(text)))
    names = None
    start = 0
    if header:
        if not rows:
            raise ParseError("missing header row", path, 1)
        names = [c.strip() for c in rows[0]]
        start = 1
    data = []
    width = None
    for ln, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"not a number: {cell.strip()!r}", path, ln, col) from None
            if not np.isfinite(v):
                raise ParseError(f"non-finite value {cell.strip()!r}", path, ln, col)
            vals.append(v)
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"expected {width} fields, found {len(vals)}", path, ln, min(len(vals), width) + 1)
        data.append(vals)
    if not data:
        raise ParseError("no data rows", path)
    if names is not None and len(names) != width:
        raise ParseError(f"header has {len(names)} fields, rows have {width}", path, 1)
    return np.array(data, dtype=float), names


def read_matrix_csv(path, header: bool = False):
    with _open(path) as fh:
        text = fh.read()
    return parse_matrix_csv(text, header=header, path=str(path))


def write_matrix_csv(M, path, header: Optional[Sequence[str]] = None):
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in np.atleast_2d(M):
            w.writerow([FLOAT_FMT % v for v in row])


# -- model JSON ---------------------------------------------------------------------


def model_to_dict(model: Pscm) -> dict:
    return {
        "p": model.p,
        "m": model.m,
        "order": list(model.order),
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "meta": _jsonable(model.meta),
    }


def model_from_dict(d: dict, path: str = "<input>") -> Pscm:
    if not isinstance(d, dict):
        raise ParseError("model file must hold a JSON object", path)
    for key in ("A", "B"):
        if key not in d:
            raise ParseError(f"missing field {key!r}", path)
    try:
        A = np.array(d["A"], dtype=float)
        B = np.array(d["B"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"A and B must be dense numeric matrices: {exc}", path) from None
    if B.ndim != 2:
        raise ParseError("B must be a 2-D matrix", path)
    p, m = B.shape
    if "p" in d and d["p"] != p:
        raise ParseError(f"p={d['p']} but B has {p} rows", path)
    if "m" in d and d["m"] != m:
        raise ParseError(f"m={d['m']} but B has {m} columns", path)
    try:
        return Pscm(A, B, d.get("order"), meta=d.get("meta") or {})
    except MalformedModelError as exc:
        raise ParseError(str(exc), path) from None


def read_model(path) -> Pscm:
    with _open(path) as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, str(path), exc.lineno, exc.colno) from None
    return model_from_dict(d, str(path))


def write_json(obj, path):
    with _open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_model(model: Pscm, path):
    write_json(model_to_dict(model), path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


# -- DOT -------------------------------------------------------------------------


def to_dot(A, B=None, names: Optional[Sequence[str]] = None, source_names: Optional[Sequence[str]] = None,
           weights: bool = True, graph_name: str = "pscm") -> str:
    """Render a causal graph.  Observed variables are circles, sources squares.

    Causal edges (from ``A``) are solid; exogenous edges (from ``B``, if
    given) are dashed.  Node and edge order is fixed by index.
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    names = list(names) if names is not None else [f"x{i + 1}" for i in range(p)]
    lines = [f"digraph {graph_name} {{", "  rankdir=TB;"]
    for nm in names:
        lines.append(f'  "{nm}" [shape=circle];')
    if B is not None:
        B = np.asarray(B, dtype=float)
        m = B.shape[1]
        source_names = list(source_names) if source_names is not None else [f"s{j + 1}" for j in range(m)]
        for nm in source_names:
            lines.append(f'  "{nm}" [shape=square];')
    for i in range(p):
        for j in range(p):
            if A[i, j] != 0:
                label = f' label="{A[i, j]:.3g}"' if weights else ""
                lines.append(f'  "{names[j]}" -> "{names[i]}" [style=solid{"," if label else ""}{label}];')
    if B is not None:
        for j in range(B.shape[1]):
            for i in range(p):
                if B[i, j] != 0:
                    label = f' label="{B[i, j]:.3g}"' if weights else ""
                    lines.append(f'  "{source_names[j]}" -> "{names[i]}" [style=dashed{"," if label else ""}{label}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def model_to_dot(model: Pscm, names=None, **kw) -> str:
    return to_dot(model.A, model.B, names=names, **kw)
