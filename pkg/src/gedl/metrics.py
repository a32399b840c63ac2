"""Classification, calibration and OOD-detection metrics."""

import numpy as np

__all__ = ["accuracy", "aupr", "ece", "brier"]


def accuracy(probs, labels):
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("empty input")
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def aupr(scores, positives):
    """Area under the precision-recall curve, larger score = more positive.

    Non-interpolated: sum over distinct score thresholds of
    (recall gain) x (precision at that threshold).  Tied scores enter the
    ranked list together, so a tie block contributes one point.
    """
    s = np.asarray(scores, dtype=float)
    pos = np.asarray(positives, dtype=bool)
    if s.shape != pos.shape or s.ndim != 1:
        raise ValueError("scores and positives must be 1-D and the same length")
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == len(pos):
        raise ValueError("need at least one positive and one negative")
    order = np.argsort(-s, kind="mergesort")
    s, pos = s[order], pos[order]
    tp = np.cumsum(pos)
    # last index of every tie block
    ends = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = tp[ends].astype(float)
    precision = tp / (ends + 1.0)
    recall_gain = np.diff(np.r_[0.0, tp]) / n_pos
    return float(np.sum(recall_gain * precision))


def ece(probs, labels, bins=15):
    """Expected calibration error with ``bins`` equal-width confidence bins.

    Bin b covers (b/B, (b+1)/B]; confidence 0 falls into the first bin.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if len(labels) == 0:
        raise ValueError("empty input")
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    idx = np.clip(np.ceil(conf * bins).astype(int) - 1, 0, bins - 1)
    n = len(labels)
    count = np.bincount(idx, minlength=bins)
    gap = np.abs(np.bincount(idx, correct, bins) - np.bincount(idx, conf, bins))
    # sum_b (n_b / N) |acc_b - conf_b| = sum_b |sum correct - sum conf| / N
    return float(np.sum(gap[count > 0]) / n)


def brier(probs, labels):
    """Mean over samples of sum_k (p_k - y_k)^2."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    y = np.zeros_like(probs)
    y[np.arange(len(labels)), labels] = 1.0
    return float(np.mean(np.sum((probs - y) ** 2, axis=1)))
