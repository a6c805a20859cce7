"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from sklearn.utils.validation import check_array

from .errors import InputError

_BINARY_LITERALS = {"0", "1"}


def check_columns(frame: pd.DataFrame, names: Iterable[str]) -> None:
    missing = [n for n in names if n not in frame.columns]
    if missing:
        raise InputError(f"columns {missing} not found; available: {list(frame.columns)}")


def is_binary_column(col: pd.Series) -> bool:
    if col.dtype == object:
        return set(col.astype(str).str.strip().unique()) <= _BINARY_LITERALS
    return bool(np.isin(col.to_numpy(), (0, 1)).all())


def check_binary_frame(frame: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    """Return ``frame[columns]`` as int8, rejecting anything but 0/1.

    String columns (as read from CSV with ``dtype=str``) must hold the literal
    tokens ``0`` and ``1``; ``1.0`` or ``true`` are rejected.
    """
    check_columns(frame, columns)
    out = {}
    for c in columns:
        col = frame[c]
        if col.dtype == object:
            vals = col.astype(str).str.strip()
            bad = ~vals.isin(_BINARY_LITERALS)
        else:
            vals = col
            bad = ~col.isin((0, 1))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise InputError(f"column {c} row {row}: non-binary value {col.iloc[row]!r}")
        out[c] = vals.astype(np.int8).to_numpy()
    if not len(frame):
        raise InputError("no data rows")
    return pd.DataFrame(out, columns=list(columns))


def check_numeric_frame(frame: pd.DataFrame, columns: Sequence[str], min_rows: int = 2) -> pd.DataFrame:
    """Return ``frame[columns]`` as finite floats."""
    check_columns(frame, columns)
    try:
        data = frame[list(columns)].apply(pd.to_numeric)
    except (ValueError, TypeError) as exc:
        raise InputError(f"non-numeric data: {exc}") from None
    try:
        arr = check_array(data.to_numpy(dtype=float), ensure_min_samples=min_rows)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return pd.DataFrame(arr, columns=list(columns), index=frame.index)


def check_probability(name: str, value: float, open_interval: bool = False) -> float:
    value = float(value)
    ok = 0.0 < value < 1.0 if open_interval else 0.0 <= value <= 1.0
    if not ok:
        raise InputError(f"{name} must be a probability, got {value!r}")
    return value
