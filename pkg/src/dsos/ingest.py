"""CSV ingestion (RFC 4180, header row required)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import Dataset
from .errors import DataError

MISSING = {"", "na", "nan", "null", "none", "?"}


@dataclass
class IngestOptions:
    label_column: Optional[str] = None
    origin_column: Optional[str] = None
    one_hot: bool = False
    test_values: Tuple[str, ...] = ("test", "1", "true", "te")


def read_csv(path) -> Tuple[List[str], List[List[str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    try:
        with path.open(newline="", encoding="utf-8-sig") as f:
            rows = list(csv.reader(f, strict=True))
    except (csv.Error, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot parse CSV: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file (a header row is required)")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    body = [r for r in rows[1:] if r]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(r)} fields, header has {len(header)}")
    return header, body


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING


def _parse_float(cell: str) -> Optional[float]:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _encode(columns: Sequence[str], rows: List[List[str]], source: Sequence[str],
            one_hot: bool) -> Tuple[np.ndarray, List[str]]:
    # source[i] names where row i came from, for diagnostics
    out, names = [], []
    for j, name in enumerate(columns):
        cells = [r[j].strip() for r in rows]
        for i, c in enumerate(cells):
            if _is_missing(c):
                raise DataError(f"missing value at {source[i]}, column {name!r}")
        vals = [_parse_float(c) for c in cells]
        if all(v is not None for v in vals):
            out.append(np.array(vals, dtype=float))
            names.append(name)
            continue
        if not one_hot:
            i = next(k for k, v in enumerate(vals) if v is None)
            raise DataError(f"non-numeric value {cells[i]!r} at {source[i]}, column {name!r} "
                            "(use one-hot encoding for categorical columns)")
        for level in sorted(set(cells)):
            out.append(np.array([c == level for c in cells], dtype=float))
            names.append(f"{name}={level}")
    return np.column_stack(out) if out else np.empty((len(rows), 0)), names


def _label(header, rows, column, path) -> np.ndarray:
    if column not in header:
        raise DataError(f"{path}: label column {column!r} not found")
    j = header.index(column)
    cells = [r[j].strip() for r in rows]
    for i, c in enumerate(cells):
        if _is_missing(c):
            raise DataError(f"missing label at row {i + 1}, column {column!r}")
    vals = [_parse_float(c) for c in cells]
    if all(v is not None for v in vals):
        return np.array(vals, dtype=float)
    return np.array(cells, dtype=object).astype(str)


def ingest_two_files(train_path, test_path, options: Optional[IngestOptions] = None) -> Tuple[Dataset, List[str]]:
    """Origins assigned by file. Both headers must match exactly."""
    options = options or IngestOptions()
    h_tr, r_tr = read_csv(train_path)
    h_te, r_te = read_csv(test_path)
    if h_tr != h_te:
        only_tr = [c for c in h_tr if c not in h_te]
        only_te = [c for c in h_te if c not in h_tr]
        detail = f"only in train: {only_tr}; only in test: {only_te}"
        if not only_tr and not only_te:
            detail = "same columns in a different order"
        raise DataError(f"header mismatch between {train_path} and {test_path} ({detail})")
    if not r_tr or not r_te:
        raise DataError("both train and test files need at least one data row")
    rows = r_tr + r_te
    source = [f"{train_path} row {i + 1}" for i in range(len(r_tr))] + \
             [f"{test_path} row {i + 1}" for i in range(len(r_te))]
    feats = [c for c in h_tr if c != options.label_column]
    idx = [h_tr.index(c) for c in feats]
    X, names = _encode(feats, [[r[j] for j in idx] for r in rows], source, options.one_hot)
    label = None
    if options.label_column:
        label = np.concatenate([_label(h_tr, r_tr, options.label_column, train_path),
                                _label(h_te, r_te, options.label_column, test_path)])
    is_test = np.r_[np.zeros(len(r_tr), bool), np.ones(len(r_te), bool)]
    return Dataset(X, is_test, label), names


def ingest_origin_column(path, options: IngestOptions) -> Tuple[Dataset, List[str]]:
    """Single file; ``options.origin_column`` marks test rows (test/1/true/te)."""
    header, rows = read_csv(path)
    if not options.origin_column or options.origin_column not in header:
        raise DataError(f"{path}: origin column {options.origin_column!r} not found")
    if not rows:
        raise DataError(f"{path}: no data rows")
    j = header.index(options.origin_column)
    is_test = np.array([r[j].strip().lower() in options.test_values for r in rows])
    if is_test.all() or not is_test.any():
        side = "train" if is_test.all() else "test"
        raise DataError(f"{path}: the {side} side is empty (origin column {options.origin_column!r})")
    drop = {options.origin_column, options.label_column}
    feats = [c for c in header if c not in drop]
    idx = [header.index(c) for c in feats]
    source = [f"{path} row {i + 1}" for i in range(len(rows))]
    X, names = _encode(feats, [[r[k] for k in idx] for r in rows], source, options.one_hot)
    label = _label(header, rows, options.label_column, path) if options.label_column else None
    return Dataset(X, is_test, label), names


def dataset_summary(data: Dataset) -> Dict[str, object]:
    return {
        "n_rows": data.n_rows,
        "n_columns": data.n_features,
        "n_train": data.n_train,
        "n_test": data.n_test,
        "has_label": data.label is not None,
        "sha256": data.fingerprint(),
    }
