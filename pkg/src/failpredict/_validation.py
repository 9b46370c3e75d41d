"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_bits(X, n_features: int | None = None) -> np.ndarray:
    """Return ``X`` as a 2-D uint8 array of 0/1 values."""
    X = check_array(X, dtype=None, ensure_2d=True)
    if not np.isin(X, (0, 1)).all():
        raise ValueError("bit matrix must only contain 0 and 1")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    return X.astype(np.uint8)


def check_features(X, n_features: int | None = None) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    return X


def check_labels(y, n_samples: int, n_classes: int | None = None) -> tuple[np.ndarray, int]:
    """Accept integer class indices or one-hot rows; return indices and class count."""
    y = np.asarray(y)
    if y.ndim == 2:
        if not np.isin(y, (0, 1)).all() or not (y.sum(axis=1) == 1).all():
            raise ValueError("2-D labels must be one-hot rows")
        if n_classes is not None and y.shape[1] != n_classes:
            raise ValueError(f"one-hot labels have {y.shape[1]} columns, expected {n_classes}")
        n_classes = y.shape[1]
        y = y.argmax(axis=1)
    elif y.ndim == 1:
        if y.size and (y.min() < 0 or not np.all(np.equal(np.mod(y, 1), 0))):
            raise ValueError("class labels must be non-negative integers")
        y = y.astype(np.int64)
        if n_classes is None:
            n_classes = int(y.max()) + 1 if y.size else 0
        elif y.size and y.max() >= n_classes:
            raise ValueError(f"label {int(y.max())} outside {n_classes} classes")
    else:
        raise ValueError(f"labels must be 1-D or 2-D, got shape {y.shape}")
    if y.shape[0] != n_samples:
        raise ValueError(f"{y.shape[0]} labels for {n_samples} samples")
    return y, n_classes
