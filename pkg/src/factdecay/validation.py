"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np


def check_quad_array(X) -> np.ndarray:
    """Validate and convert an array-like of quadruples to int64 (n, 4).

    Rows are (head id, relation id, tail id, day index); all fields must
    be non-negative integers.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != 4:
        raise ValueError(
            f"expected quadruples of shape (n, 4): head, relation, tail, day; "
            f"got shape {X.shape}"
        )
    if X.shape[0] == 0:
        raise ValueError("empty quadruple array")
    if not np.issubdtype(X.dtype, np.integer):
        rounded = np.rint(np.asarray(X, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(X, dtype=np.float64)):
            raise ValueError("quadruple fields must be integers")
        X = rounded
    X = np.ascontiguousarray(X, dtype=np.int64)
    if X.min() < 0:
        raise ValueError("quadruple fields must be non-negative")
    return X


def check_binary_labels(y, n_rows: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_rows,):
        raise ValueError(f"expected {n_rows} labels, got shape {y.shape}")
    y = y.astype(np.int64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 (active) or 1 (inactive)")
    return y
