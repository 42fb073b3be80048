"""Evaluation metrics: top-k accuracy, empirical MSE, thresholded accuracy, log-log slope."""

from collections.abc import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from zeroshotlab.errors import BadK, DimensionMismatch, EmptySample, TooFewValues

Predictor = Callable[[NDArray[np.float64]], ArrayLike]


def topk_accuracy(predictions: ArrayLike, labels: ArrayLike, k: int) -> float:
    """Fraction of examples whose true class is among the k highest scores.

    Args:
        predictions: Score vectors, shape (n, C).
        labels: True classes, shape (n,).
        k: Number of top classes to consider; equal scores rank by lower index.

    Returns:
        Accuracy between 0.0 and 1.0.
    """
    scores = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    truth = np.asarray(labels, dtype=np.int64)
    n_classes = scores.shape[1]
    if k < 1 or k > n_classes:
        raise BadK(f"k must lie in 1..{n_classes}, got {k}")
    if truth.shape != (scores.shape[0],):
        raise DimensionMismatch(f"{truth.shape[0]} labels for {scores.shape[0]} score vectors")
    if truth.size == 0:
        return 0.0
    top = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(top == truth[:, None], axis=1)))


def mse_on(predictor: Predictor | ArrayLike, reference: Predictor | ArrayLike, test_xs: ArrayLike) -> float:
    """Mean squared difference of two predictors over the test points.

    Either argument may be a callable evaluated on ``test_xs`` or a precomputed vector
    of values at those points.
    """
    xs = np.asarray(test_xs, dtype=np.float64)
    if xs.shape[0] == 0:
        raise EmptySample("empty test set")

    def values(fn: Predictor | ArrayLike) -> NDArray[np.float64]:
        out = np.asarray(fn(xs) if callable(fn) else fn, dtype=np.float64).ravel()
        if out.shape[0] != xs.shape[0]:
            raise DimensionMismatch(f"{out.shape[0]} values for {xs.shape[0]} test points")
        return out

    return float(np.mean((values(predictor) - values(reference)) ** 2))


def threshold_accuracy(scores: ArrayLike, labels: ArrayLike, threshold: float = 0.5) -> float:
    """Accuracy of predicting class 1 when the score exceeds ``threshold``."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(labels, dtype=np.int64).ravel()
    if s.shape != truth.shape:
        raise DimensionMismatch(f"{s.shape[0]} scores for {truth.shape[0]} labels")
    if s.size == 0:
        raise EmptySample("no scores")
    return float(np.mean((s > threshold).astype(np.int64) == truth))


def loglog_slope(xs: ArrayLike, ys: ArrayLike) -> float:
    """Least-squares slope of log y against log x over positive pairs."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionMismatch("x and y must have equal length")
    keep = (x > 0) & (y > 0)
    if int(keep.sum()) < 2:
        raise TooFewValues("need at least two positive pairs for a slope")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])
