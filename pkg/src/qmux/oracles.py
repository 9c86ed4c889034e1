"""Slow, obviously-correct reference implementations used by the test suite and `selftest`."""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np
from scipy.stats import norm


def brute_correlation(a, b, lo: int, bin_width: int, n_bins: int) -> np.ndarray:
    """Histogram of every pairwise difference b - a over [lo, lo + n_bins * bin_width); O(n*m) memory."""
    d = (np.asarray(b, dtype=np.int64)[None, :] - np.asarray(a, dtype=np.int64)[:, None]).ravel() - lo
    d = d[(d >= 0) & (d < n_bins * bin_width)]
    return np.bincount(d // bin_width, minlength=n_bins).astype(np.int64)


def brute_sift(alice: list[tuple[int, int, int]], bob: list[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
    """(frame, slot_a, slot_b) for frames holding exactly one event per side with equal bins."""
    per_a, per_b = defaultdict(list), defaultdict(list)
    for f, s, b in alice:
        per_a[f].append((s, b))
    for f, s, b in bob:
        per_b[f].append((s, b))
    out = []
    for f in sorted(set(per_a) & set(per_b)):
        if len(per_a[f]) == 1 and len(per_b[f]) == 1:
            (sa, ba), (sb, bb) = per_a[f][0], per_b[f][0]
            if ba == bb:
                out.append((f, sa, sb))
    return out


def expected_qber(sigma: float, D: int, I: int, bin_width: int) -> float:
    """QBER of bin-sifted pairs whose Bob tag is the Alice tag plus round(N(0, sigma)).

    Alice's tag is uniform over the integer positions of a frame. A pair is
    kept when both tags fall in the same frame and the bin numbers agree, i.e.
    the shift m in whole bins is a multiple of I; it is an error when m != 0.
    Exact summation over the in-bin position and the bin shift.
    """
    n_bins = (1 << D) * I
    tau = int(bin_width)
    if sigma <= 0:
        return 0.0
    v = np.arange(tau, dtype=np.float64)
    reach = int(math.ceil(12 * sigma / tau)) + 1
    kept = {}
    for m in range(-min(reach, n_bins - 1), min(reach, n_bins - 1) + 1):
        if m % I:
            continue
        lo = m * tau - v
        hi = (m + 1) * tau - v - 1
        p = norm.cdf((hi + 0.5) / sigma) - norm.cdf((lo - 0.5) / sigma)
        kept[m] = float(p.mean()) * (n_bins - abs(m)) / n_bins
    total = sum(kept.values())
    return (total - kept[0]) / total


def adjacent_confusion_mi(K: int, p: float) -> float:
    """I(A;B) for uniform A over K >= 3 symbols and B = A, A+1, A-1 (mod K) w.p. 1-p, p/2, p/2."""
    def h(*ps):
        return -sum(x * math.log2(x) for x in ps if x > 0)

    return math.log2(K) - h(1 - p, p / 2, p / 2)


def adjacent_confusion_joint(K: int, p: float, n: int) -> np.ndarray:
    """Exact expected joint counts (n total) for :func:`adjacent_confusion_mi`."""
    j = np.zeros((K, K))
    for a in range(K):
        j[a, a] += (1 - p) * n / K
        j[a, (a + 1) % K] += p / 2 * n / K
        j[a, (a - 1) % K] += p / 2 * n / K
    return j


def accidental_rate(rate_a: float, rate_b: float, window_ps: float) -> float:
    """Coincidences per second between independent Poisson streams within a window."""
    return rate_a * rate_b * window_ps * 1e-12
