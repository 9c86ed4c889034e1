"""Raw key metrics and Shannon mutual information of aligned slot symbols."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .encoding import KeyBatch


class EmptyBatchError(ValueError):
    """Metrics are undefined for a batch without sifted pairs."""


@dataclass(frozen=True)
class KeyMetrics:
    pairs: int
    qber: float
    rkr: float  # bits / s


def key_metrics(batch: KeyBatch, duration: float | None = None) -> KeyMetrics:
    if batch.pairs == 0:
        raise EmptyBatchError("empty key batch: qber and rkr are undefined")
    duration = batch.duration if duration is None else duration
    if not duration > 0:
        raise ValueError("duration must be > 0")
    qber = float(np.count_nonzero(batch.symbols_a != batch.symbols_b)) / batch.pairs
    return KeyMetrics(pairs=batch.pairs, qber=qber, rkr=batch.D * batch.pairs / duration)


def joint_histogram(symbols_a, symbols_b, D: int) -> np.ndarray:
    k = 1 << D
    a = np.asarray(symbols_a, dtype=np.int64)
    b = np.asarray(symbols_b, dtype=np.int64)
    if a.size and (a.min() < 0 or a.max() >= k or b.min() < 0 or b.max() >= k):
        raise ValueError(f"symbols outside [0, {k})")
    return np.bincount(a * k + b, minlength=k * k).reshape(k, k)


def mutual_information(joint) -> float:
    """Plug-in estimate I(A;B) in bits of an empirical joint count table."""
    j = np.asarray(joint, dtype=np.float64)
    total = j.sum()
    if not total > 0:
        raise ValueError("joint histogram is empty")
    p = j / total
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    nz = p > 0
    ratio = p[nz] / (pa @ pb)[nz]
    return max(0.0, float(np.sum(p[nz] * np.log2(ratio))))


def batch_mutual_information(batch: KeyBatch) -> float:
    return mutual_information(joint_histogram(batch.symbols_a, batch.symbols_b, batch.D))


def plugin_bias_bound(n: int, states_a: int, states_b: int, confidence: float = 1.0 - 1e-6) -> float:
    """Upper bound on the plug-in MI of independent variables at the given confidence.

    Under independence 2 n ln2 * I_hat is asymptotically chi-squared with
    (states_a - 1)(states_b - 1) degrees of freedom.
    """
    if n <= 0:
        raise ValueError("n must be > 0")
    dof = (states_a - 1) * (states_b - 1)
    return float(chi2.ppf(confidence, dof)) / (2.0 * n * math.log(2.0))
