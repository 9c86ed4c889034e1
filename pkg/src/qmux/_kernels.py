"""Compiled inner loops (numba). Callers validate inputs; these do no checking."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def dead_time_mask(t, dead_time):
    keep = np.zeros(t.size, dtype=np.bool_)
    if t.size == 0:
        return keep
    keep[0] = True
    last = t[0]
    for i in range(1, t.size):
        if t[i] - last >= dead_time:
            keep[i] = True
            last = t[i]
    return keep


@njit(cache=True)
def correlate_into(a, b, lo, bin_width, n_bins, counts):
    """Accumulate counts[k] += #{(i, j): b[j] - a[i] in [lo + k*w, lo + (k+1)*w)}.

    Two-pointer sweep over sorted ``a`` and ``b``; the window start pointer only
    moves forward, so the cost is O(len(a) + len(b) + matches).
    """
    hi = lo + bin_width * n_bins
    j0 = 0
    nb = b.size
    for i in range(a.size):
        ai = a[i]
        start = ai + lo
        while j0 < nb and b[j0] < start:
            j0 += 1
        stop = ai + hi
        j = j0
        while j < nb and b[j] < stop:
            counts[(b[j] - start) // bin_width] += 1
            j += 1
    return counts


@njit(cache=True)
def count_matches(a, b, lo, hi):
    """Number of (i, j) with lo <= b[j] - a[i] < hi, for sorted inputs."""
    j0 = 0
    j1 = 0
    nb = b.size
    total = 0
    for i in range(a.size):
        while j0 < nb and b[j0] < a[i] + lo:
            j0 += 1
        if j1 < j0:
            j1 = j0
        while j1 < nb and b[j1] < a[i] + hi:
            j1 += 1
        total += j1 - j0
    return total
