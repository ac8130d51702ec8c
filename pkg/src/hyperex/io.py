"""Model files (JSON) and output helpers.

A model file looks like::

    {"vertices": [1, 2, 3, 4],
     "edges": [[1, 2, 3, 4]],
     "measures": [{"edge": 0, "weights": {"2+2": 0.9, "4": 0.1}}]}

Instead of ``measures`` a file may give ``weights``: one table used for
every edge, or a list with one table per edge.  Keys are cycle types
written as "2+2", "3", or "id".
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .model import Model
from .perm import format_type, parse_type


class ModelParseError(ValueError):
    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


def _weights(table, where: str) -> dict:
    if not isinstance(table, dict):
        raise ModelParseError("weight table must be an object", where)
    out = {}
    for key, w in table.items():
        try:
            t = parse_type(str(key))
        except ValueError as e:
            raise ModelParseError(str(e), f"{where}.{key}") from None
        if not isinstance(w, (int, float)) or isinstance(w, bool):
            raise ModelParseError("weight must be a number", f"{where}.{key}")
        out[t] = out.get(t, 0.0) + float(w)
    return out


def _measures(items, E) -> list:
    """``[{"edge": i, "weights": {...}}, ...]`` -> one table per edge, in edge order."""
    if not isinstance(items, list):
        raise ModelParseError("measures must be a list", "$.measures")
    tables: dict = {}
    for n, item in enumerate(items):
        where = f"$.measures[{n}]"
        if not isinstance(item, dict) or "edge" not in item or "weights" not in item:
            raise ModelParseError("each measure needs 'edge' and 'weights'", where)
        i = item["edge"]
        if not isinstance(i, int) or not 0 <= i < len(E):
            raise ModelParseError(f"edge index {i!r} out of range", where + ".edge")
        if i in tables:
            raise ModelParseError(f"edge {i} has two measures", where + ".edge")
        tables[i] = item["weights"]
    missing = [i for i in range(len(E)) if i not in tables]
    if missing:
        raise ModelParseError(f"no measure for edges {missing}", "$.measures")
    return [tables[i] for i in range(len(E))]


def model_from_dict(data) -> Model:
    if not isinstance(data, dict):
        raise ModelParseError("model must be a JSON object", "$")
    for key in ("vertices", "edges"):
        if key not in data:
            raise ModelParseError(f"missing field {key!r}", "$")
    if ("weights" in data) == ("measures" in data):
        raise ModelParseError("give exactly one of 'weights' or 'measures'", "$")
    V, E = data["vertices"], data["edges"]
    if not isinstance(V, list) or not V:
        raise ModelParseError("vertices must be a non-empty list", "$.vertices")
    if not isinstance(E, list) or not E:
        raise ModelParseError("edges must be a non-empty list", "$.edges")
    for i, e in enumerate(E):
        if not isinstance(e, list):
            raise ModelParseError("edge must be a list of vertices", f"$.edges[{i}]")
    W = data["weights"] if "weights" in data else _measures(data["measures"], E)
    if isinstance(W, list):
        if len(W) != len(E):
            raise ModelParseError(f"{len(W)} weight tables for {len(E)} edges", "$.weights")
        tables = [_weights(w, f"$.weights[{i}]") for i, w in enumerate(W)]
    else:
        tables = _weights(W, "$.weights")
    try:
        return Model.build(V, E, tables)
    except ValueError as e:
        raise ModelParseError(str(e), "$") from None


def parse_model(text: str) -> Model:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelParseError(e.msg, f"line {e.lineno} column {e.colno}") from None
    return model_from_dict(data)


def load_model(path) -> Model:
    return parse_model(Path(path).read_text())


def model_to_dict(model: Model) -> dict:
    return {
        "vertices": list(model.vertices),
        "edges": [list(e) for e in model.edges],
        "weights": [{format_type(t): w for t, w in m.weights} for m in model.measures],
    }


def rows_to_csv(rows: list[dict]) -> str:
    """Flat CSV of a list of records; nested values are JSON-encoded."""
    if not rows:
        return ""
    cols: list = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols)
    w.writeheader()
    for r in rows:
        w.writerow({c: json.dumps(v) if isinstance(v, (list, dict)) else v for c, v in r.items()})
    return buf.getvalue()
