"""Distributional-uncertainty measures of a Dirichlet and MP/UM scoring."""

import csv
from dataclasses import dataclass

import numpy as np

from . import dirichlet

__all__ = [
    "UncertaintyRecord",
    "RECORD_FIELDS",
    "mutual_information",
    "asymptotic_mi",
    "variance_sum",
    "score",
    "write_records_csv",
    "read_records_csv",
]

RECORD_FIELDS = ("mp", "um", "mi", "var_sum", "label", "is_ood")


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def mutual_information(alpha):
    """I(y; pi) = H(E[pi]) - E[H(pi)] in nats, from closed-form expectations."""
    a = dirichlet.as_alpha(alpha)
    p = dirichlet.mean(a)
    entropy_of_mean = -np.sum(p * np.log(p), axis=-1)
    # E[H(pi)] = -sum_k E[pi_k ln pi_k]
    return _out(entropy_of_mean + np.sum(dirichlet.expected_pi_log_pi(a), axis=-1))


def asymptotic_mi(alpha):
    """Leading-order mutual information (K - 1) / (2 S)."""
    a = dirichlet.as_alpha(alpha)
    return _out((a.shape[-1] - 1) / (2.0 * np.sum(a, axis=-1)))


def variance_sum(alpha):
    """sum_k Var[pi_k] = sum_k p_k (1 - p_k) / (S + 1)."""
    a = dirichlet.as_alpha(alpha)
    S = np.sum(a, axis=-1)
    p = a / S[..., None]
    return _out(np.sum(p * (1.0 - p), axis=-1) / (S + 1.0))


@dataclass(frozen=True)
class UncertaintyRecord:
    """Per-sample uncertainty scores.

    ``mp`` max predictive probability, ``um`` uncertainty mass W/S, ``mi``
    mutual information (nats), ``var_sum`` total marginal variance.  Fields
    hold arrays when scoring a batch.
    """

    mp: np.ndarray
    um: np.ndarray
    mi: np.ndarray
    var_sum: np.ndarray


def score(alpha, W):
    a = dirichlet.as_alpha(alpha)
    S = np.sum(a, axis=-1)
    return UncertaintyRecord(
        mp=_out(np.max(a, axis=-1) / S),
        um=_out(np.asarray(W, dtype=float) / S),
        mi=mutual_information(a),
        var_sum=variance_sum(a),
    )


def write_records_csv(path, record, labels, is_ood):
    """Write one ``mp,um,mi,var_sum,label,is_ood`` row per sample."""
    cols = [np.atleast_1d(getattr(record, f)) for f in RECORD_FIELDS[:4]]
    labels = np.atleast_1d(labels)
    is_ood = np.atleast_1d(is_ood)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for i in range(len(labels)):
            w.writerow([repr(float(c[i])) for c in cols] + [int(labels[i]), int(bool(is_ood[i]))])


def read_records_csv(path):
    """Read a records file back into ``(UncertaintyRecord, labels, is_ood)``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    rec = UncertaintyRecord(*(np.array([float(r[f]) for r in rows]) for f in RECORD_FIELDS[:4]))
    labels = np.array([int(r["label"]) for r in rows])
    is_ood = np.array([r["is_ood"] == "1" for r in rows])
    return rec, labels, is_ood
