"""Business prioritization of predicted failures.

Pairwise importance judgments are turned into weights with the power
method (AHP). Weights and classifier probabilities are both flattened by a
shape-preserving filter before being multiplied, so neither factor alone
dominates the prioritized argmax.
"""
from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

# Power-method stopping tolerance (max-norm between successive L1-normalized
# iterates). 1e-3 is what the published weight vector was generated with; pass
# a smaller tol for a fully converged eigenvector.
POWER_TOL = 1e-3
POWER_MAX_ITER = 10_000

DEFAULT_DELTA_P = 1e-3
DEFAULT_DELTA_W = 1e-5

RECIPROCITY_TOL = 1e-9


class ConvergenceError(RuntimeError):
    pass


class PairwiseMatrixError(ValueError):
    def __init__(self, message: str, cell: tuple[int, int] | None = None):
        super().__init__(message)
        self.cell = cell


def validate_pairwise(c) -> np.ndarray:
    """Check a pairwise comparison matrix, naming the first offending cell."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
        raise PairwiseMatrixError(f"pairwise matrix must be square, got shape {c.shape}")
    n = c.shape[0]
    for i in range(n):
        for j in range(n):
            v = c[i, j]
            if not np.isfinite(v) or v <= 0:
                raise PairwiseMatrixError(f"cell [{i}][{j}]={v!r} is not a positive number", (i, j))
            if i == j and abs(v - 1.0) > RECIPROCITY_TOL:
                raise PairwiseMatrixError(f"diagonal cell [{i}][{i}]={v!r} must be 1", (i, j))
            if j > i and abs(v * c[j, i] - 1.0) > RECIPROCITY_TOL * max(1.0, v, c[j, i]):
                raise PairwiseMatrixError(
                    f"cell [{i}][{j}]={v!r} is not the reciprocal of [{j}][{i}]={c[j, i]!r}", (i, j)
                )
    return c


def principal_eigenvector(c, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> np.ndarray:
    """AHP weights: power iteration from the uniform vector, L1-normalized."""
    c = validate_pairwise(c)
    n = c.shape[0]
    w = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = c @ w
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - w)) < tol:
            return nxt
        w = nxt
    raise ConvergenceError(f"power iteration did not reach tol={tol} in {max_iter} iterations")


def shape_filter(values, delta: float, return_steps: bool = False):
    """Shrink the spread of ``values`` without changing their order.

    Repeatedly move ``delta`` off the current maximum and add ``delta`` to
    every other element, stopping at the last state before the relative
    order of the input would break. Ties count as a break. Between the
    maximum and the runner-up, whose gap is the one that closes, a gap of
    ``1e-6 * delta`` or less also counts as a tie so floating-point residue
    does not buy an extra step. Inputs that already contain ties (or have
    one element) come back unchanged.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    lam = np.array(values, dtype=np.float64)
    if lam.ndim != 1 or lam.size < 1:
        raise ValueError("shape_filter takes a non-empty 1-D vector")
    steps = 0
    if lam.size > 1:
        # iterate in sorted order: the maximum is the last slot, the runner-up the one before
        order = np.argsort(lam, kind="stable")
        cur = lam[order]
        if np.all(np.diff(cur) > 0):
            tie_gap = 1e-6 * delta
            while True:
                cand = cur + delta
                cand[-1] = cur[-1] - delta
                if cand[-1] - cand[-2] <= tie_gap or not np.all(np.diff(cand) > 0):
                    break
                cur = cand
                steps += 1
            lam[order] = cur
    return (lam, steps) if return_steps else lam


def prioritized_argmax(probs, weights, delta_p: float = DEFAULT_DELTA_P,
                       delta_w: float = DEFAULT_DELTA_W) -> tuple[int, np.ndarray]:
    """Index (0-based) of the business-prioritized failure and the combined scores.

    ``probs`` may carry the invalid class as an extra last entry; it is
    dropped before combining.
    """
    probs = np.asarray(probs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if probs.shape[0] == weights.shape[0] + 1:
        probs = probs[:-1]
    if probs.shape != weights.shape:
        raise ValueError(f"{probs.shape[0]} valid-class probabilities for {weights.shape[0]} weights")
    combined = shape_filter(weights, delta_w) * shape_filter(probs, delta_p)
    return int(np.argmax(combined)), combined


# -- pairwise matrix file ---------------------------------------------------

def _parse_cell(value) -> float:
    if isinstance(value, str):
        return float(Fraction(value.strip()))
    return float(value)


def pairwise_from_dict(doc: dict) -> np.ndarray:
    rows = doc["rows"]
    n = doc.get("f_max", len(rows))
    if len(rows) != n:
        raise PairwiseMatrixError(f"f_max={n} but {len(rows)} rows given")
    try:
        c = np.array([[_parse_cell(v) for v in row] for row in rows], dtype=np.float64)
    except (ValueError, ZeroDivisionError) as exc:
        raise PairwiseMatrixError(f"unparseable pairwise cell: {exc}") from exc
    return validate_pairwise(c)


def load_pairwise(path) -> np.ndarray:
    """Read ``{"f_max": n, "rows": [[...], ...]}``; cells may be numbers or "a/b" strings."""
    return pairwise_from_dict(json.loads(Path(path).read_text()))


def save_pairwise(c, path) -> None:
    c = validate_pairwise(c)
    rows = [[str(Fraction(v).limit_denominator(10_000)) if i != j else "1" for j, v in enumerate(r)]
            for i, r in enumerate(c)]
    Path(path).write_text(json.dumps({"f_max": c.shape[0], "rows": rows}) + "\n")


class ShapePreservingFilter(TransformerMixin, BaseEstimator):
    """Row-wise :func:`shape_filter` as a stateless transformer."""

    def __init__(self, delta=DEFAULT_DELTA_P):
        self.delta = delta

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        return np.stack([shape_filter(row, self.delta) for row in X])


class FailurePrioritizer(BaseEstimator):
    """Re-rank classifier probabilities with AHP business weights.

    ``fit`` takes the pairwise comparison matrix; ``predict`` takes rows of
    probabilities (with or without the trailing invalid class) and returns
    0-based indices of the prioritized failures.
    """

    def __init__(self, delta_p=DEFAULT_DELTA_P, delta_w=DEFAULT_DELTA_W, tol=POWER_TOL,
                 max_iter=POWER_MAX_ITER):
        self.delta_p = delta_p
        self.delta_w = delta_w
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, pairwise, y=None):
        self.weights_ = principal_eigenvector(pairwise, self.tol, self.max_iter)
        self.filtered_weights_ = shape_filter(self.weights_, self.delta_w)
        return self

    def combined_scores(self, probs) -> np.ndarray:
        check_is_fitted(self, "weights_")
        probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        return np.stack([prioritized_argmax(p, self.weights_, self.delta_p, self.delta_w)[1]
                         for p in probs])

    def predict(self, probs) -> np.ndarray:
        return self.combined_scores(probs).argmax(axis=1)
