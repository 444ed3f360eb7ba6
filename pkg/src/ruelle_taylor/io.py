"""Reproducible result files: CSV with 17 significant digits, matrix JSON, config hashes."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

HASH_PREFIX = "# config_sha256="
TEXT_COLUMNS = {"status", "agree"}


class ParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


def config_hash(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows, digest: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if digest:
            fh.write(f"{HASH_PREFIX}{digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path, required=()) -> tuple[list, list, str | None]:
    """(header, rows, digest).  Numeric cells become floats; errors carry the line number."""
    digest, header, rows = None, None, []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if line.startswith("#"):
                if line.startswith(HASH_PREFIX):
                    digest = line[len(HASH_PREFIX):].strip()
                continue
            cells = next(csv.reader([line]))
            if header is None:
                header = cells
                missing = [c for c in required if c not in header]
                if missing:
                    raise ParseError(path, lineno, f"missing column(s) {', '.join(missing)}")
                continue
            if len(cells) != len(header):
                raise ParseError(path, lineno, f"expected {len(header)} fields, found {len(cells)}")
            row = []
            for name, c in zip(header, cells):
                if name in TEXT_COLUMNS:
                    row.append(c)
                    continue
                try:
                    row.append(float(c))
                except ValueError:
                    raise ParseError(path, lineno, f"column {name!r}: cannot parse {c!r}") from None
            rows.append(row)
    return header or [], rows, digest


def matrix_to_json(M) -> dict:
    M = np.asarray(M, dtype=complex)
    return {"rows": M.shape[0], "cols": M.shape[1], "re": M.real.ravel().tolist(), "im": M.imag.ravel().tolist()}


def matrix_from_json(d: dict) -> np.ndarray:
    try:
        r, c = int(d["rows"]), int(d["cols"])
        re = np.asarray(d["re"], dtype=float)
        im = np.asarray(d.get("im", np.zeros(r * c)), dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"malformed matrix record: {e}") from None
    if re.size != r * c or im.size != r * c:
        raise ValueError(f"matrix record has {re.size} entries, expected {r * c}")
    return (re + 1j * im).reshape(r, c)


def write_json(path, data, digest: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if digest:
        data = {"config_sha256": digest, **data}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=False, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")
