"""
File formats for signals, sparse estimates, run reports and trial tables.

Signals are UTF-8 CSV with a `re,im` header, one sample per line, written in
scientific notation with 17 significant digits so a double survives the round
trip bit for bit. Sparse estimates use `index,re,im`. Run reports are JSON
with a fixed key set.
"""

import dataclasses
import json
import logging
import math
import os
import re
from typing import Iterable, List, Sequence, Type

import numpy as np
import pandas as pd

from src.asap import SparseEstimate
from src.errors import OutputPathError, SignalFileError
from src.hankel_core import ComplexSignal


# ================================
# CONFIGURATION CONSTANTS
# ================================

FLOAT_FORMAT = "%.16e"        # 17 significant digits
SIGNAL_COLUMNS = ["re", "im"]
SPARSE_COLUMNS = ["index", "re", "im"]
REPORT_KEYS = ("params", "n", "r", "err_trace", "sigma1_trace", "iterations", "converged", "wall_ms")

_PARSER_LINE = re.compile(r"line (\d+)")


# ================================
# OUTPUT PATHS
# ================================

def ensure_writable(path: str) -> str:
    """
    Create the parent directory of ``path`` and check it can be written.

    Called before any computation so a bad --out fails fast.

    Raises:
        OutputPathError: If the directory cannot be created or written.
    """
    parent = os.path.dirname(os.path.abspath(path)) or "."
    try:
        os.makedirs(parent, exist_ok=True)
    except OSError as e:
        raise OutputPathError(f"Cannot create output directory {parent}: {e}") from e
    if not os.access(parent, os.W_OK):
        raise OutputPathError(f"Output directory {parent} is not writable")
    if os.path.isdir(path):
        raise OutputPathError(f"Output path {path} is a directory")
    return path


# ================================
# CSV PARSING
# ================================

def _read_table(path: str, columns: Sequence[str], allow_empty: bool = False) -> pd.DataFrame:
    """
    Read a CSV as strings and check the header; line numbers are 1-based.

    Blank lines are kept while parsing so row i of the frame is line i + 2.
    Trailing blank lines are dropped, blank lines between samples are rejected.
    """
    try:
        df = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False,
                         skip_blank_lines=False, encoding="utf-8")
    except FileNotFoundError:
        raise
    except pd.errors.EmptyDataError as e:
        raise SignalFileError("file is empty", line=1) from e
    except pd.errors.ParserError as e:
        match = _PARSER_LINE.search(str(e))
        raise SignalFileError(str(e), line=int(match.group(1)) if match else None) from e
    except UnicodeDecodeError as e:
        raise SignalFileError(f"not valid UTF-8: {e}") from e

    header = [str(c).strip() for c in df.columns]
    if header != list(columns):
        raise SignalFileError(f"expected header '{','.join(columns)}', got '{','.join(header)}'", line=1)

    if df.empty:
        blank = np.zeros(0, dtype=bool)
    else:
        blank = (df.apply(lambda col: col.fillna("").str.strip()) == "").all(axis=1).to_numpy()
    filled = np.flatnonzero(~blank)
    df = df.iloc[:filled[-1] + 1] if filled.size else df.iloc[:0]
    gaps = np.flatnonzero(blank[:len(df)])
    if gaps.size:
        raise SignalFileError("blank line between samples", line=int(gaps[0]) + 2)
    if df.empty and not allow_empty:
        raise SignalFileError("no samples after the header", line=2)
    return df


def _parse_column(df: pd.DataFrame, column: str, integer: bool = False) -> np.ndarray:
    # Python's float() rounds correctly, which the 17-digit round trip relies on.
    parse = int if integer else float
    out = np.empty(len(df), dtype=np.int64 if integer else np.float64)
    for row, raw in enumerate(df[column].tolist()):
        try:
            value = parse(str(raw).strip())
        except ValueError:
            value = None
        if value is None or not math.isfinite(value):
            raise SignalFileError(f"invalid {column} value '{raw}'", line=row + 2)
        out[row] = value
    return out


# ================================
# SIGNALS AND SPARSE ESTIMATES
# ================================

def read_signal(path: str) -> ComplexSignal:
    """
    Load a complex signal from a `re,im` CSV file.

    Raises:
        SignalFileError: Empty file, wrong header or an unparsable value
            (message carries the 1-based line number).
    """
    df = _read_table(path, SIGNAL_COLUMNS)
    signal = _parse_column(df, "re") + 1j * _parse_column(df, "im")
    logging.info(f"Loaded {signal.size} samples from {path}")
    return signal


def write_signal(path: str, x) -> None:
    x = np.asarray(x, dtype=np.complex128)
    ensure_writable(path)
    pd.DataFrame({"re": x.real, "im": x.imag}).to_csv(path, index=False, float_format=FLOAT_FORMAT)


def write_sparse(path: str, s: SparseEstimate) -> None:
    ensure_writable(path)
    pd.DataFrame({
        "index": s.support.astype(np.int64),
        "re": s.values.real,
        "im": s.values.imag,
    }).to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_sparse(path: str, n: int) -> SparseEstimate:
    """Load an `index,re,im` file; a header-only file is the empty estimate."""
    df = _read_table(path, SPARSE_COLUMNS, allow_empty=True)
    if df.empty:
        return SparseEstimate.empty(n)
    idx = _parse_column(df, "index", integer=True)
    if np.any(idx < 0) or np.any(idx >= n):
        raise SignalFileError(f"support index out of range [0, {n})")
    order = np.argsort(idx, kind="stable")
    values = _parse_column(df, "re") + 1j * _parse_column(df, "im")
    return SparseEstimate(n=n, support=idx[order], values=values[order])


# ================================
# RUN REPORTS
# ================================

def _clean_json(obj):
    """Replace NaN/Inf with None so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return None
    return obj


def write_report(path: str, report: dict) -> None:
    missing = [k for k in REPORT_KEYS if k not in report]
    if missing:
        raise SignalFileError(f"report is missing keys {missing}")
    ensure_writable(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_clean_json(report), f, indent=2, ensure_ascii=False)


def read_report(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        try:
            report = json.load(f)
        except json.JSONDecodeError as e:
            raise SignalFileError(e.msg, line=e.lineno) from e
    missing = [k for k in REPORT_KEYS if k not in report]
    if missing:
        raise SignalFileError(f"report is missing keys {missing}")
    return report


# ================================
# TRIAL TABLES
# ================================

def write_trials(path: str, records: Iterable) -> pd.DataFrame:
    """Write dataclass records (one row each) to CSV and return the frame."""
    rows = [r.to_dict() if hasattr(r, "to_dict") else dataclasses.asdict(r) for r in records]
    df = pd.DataFrame(rows)
    ensure_writable(path)
    df.to_csv(path, index=False, float_format="%.17g", na_rep="nan")
    return df


def _coerce(value, kind):
    if kind is bool:
        if isinstance(value, str):
            return value.strip().lower() == "true"
        return bool(value)
    if kind is int:
        return int(value)
    if kind is float:
        return float(value)
    return str(value)


def read_trials(path: str, record_type: Type) -> List:
    """
    Parse a trial CSV back into ``record_type`` instances.

    Columns are matched to dataclass fields by name and cast with the field's
    annotation, so write_trials -> read_trials reproduces the records.
    """
    df = pd.read_csv(path, keep_default_na=False, dtype=str)
    fields = {f.name: f.type for f in dataclasses.fields(record_type)}
    unknown = [c for c in df.columns if c not in fields]
    if unknown:
        raise SignalFileError(f"unexpected trial columns {unknown}", line=1)
    records = []
    for i, row in enumerate(df.to_dict(orient="records")):
        try:
            records.append(record_type(**{k: _coerce(v, fields[k]) for k, v in row.items()}))
        except (TypeError, ValueError) as e:
            raise SignalFileError(str(e), line=i + 2) from e
    return records
