"""Cross-correlation of time-tag streams, Gaussian peak fitting, accidental background."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .timebase import FWHM_PER_SIGMA, TagStream

# smoothing length used only for the peak-prominence test
_PROMINENCE_KERNEL_PS = 20.0


class NoPeakError(ValueError):
    """No prominent coincidence peak: sync lost or the search window is mis-centered."""


@dataclass(frozen=True, eq=False)
class Histogram:
    """Counts of b - a differences in contiguous half-open bins [origin + k w, origin + (k+1) w)."""

    bin_width: int
    origin: int
    counts: np.ndarray

    def __post_init__(self):
        if self.bin_width < 1:
            raise ValueError("bin_width must be >= 1 ps")
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 1 or (c.size and c.min() < 0):
            raise ValueError("counts must be a 1-d array of non-negative integers")
        object.__setattr__(self, "counts", c)

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def span(self) -> tuple[int, int]:
        return self.origin, self.origin + self.bin_width * self.n_bins

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(self.n_bins + 1, dtype=np.int64)

    @property
    def centers(self) -> np.ndarray:
        """Mean of the integer picosecond values a bin can hold (left edge for 1 ps bins)."""
        return self.origin + self.bin_width * np.arange(self.n_bins) + (self.bin_width - 1) / 2.0

    def total(self) -> int:
        return int(self.counts.sum())

    def rows(self):
        return zip(self.centers.tolist(), self.counts.tolist())


@dataclass(frozen=True)
class PeakFit:
    center: float
    fwhm: float
    amplitude: float
    background: float
    center_uncertainty: float

    @property
    def sigma(self) -> float:
        return self.fwhm / FWHM_PER_SIGMA


@dataclass(frozen=True)
class CoincidenceMetrics:
    true_coincidences: float
    accidentals_in_window: float
    car: float


def _as_times(x) -> np.ndarray:
    if isinstance(x, TagStream):
        return x.t
    return np.asarray(x, dtype=np.int64)


def cross_correlate(a, b, search_center: float, half_window: float, bin_width: int = 1) -> Histogram:
    """Histogram of t_b - t_a over [search_center - half_window, search_center + half_window).

    Both inputs must be sorted. The window is widened to a whole number of
    bins. Single sort-merge pass, O(len(a) + len(b) + matches).
    """
    ta, tb = _as_times(a), _as_times(b)
    bin_width = int(bin_width)
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1 ps")
    if not half_window > 0:
        raise ValueError("empty correlation window")
    for name, t in (("a", ta), ("b", tb)):
        if t.size > 1 and np.any(t[1:] < t[:-1]):
            raise ValueError(f"stream {name} is not sorted")
    lo = int(math.floor(search_center - half_window))
    n_bins = int(math.ceil((2.0 * half_window) / bin_width))
    counts = np.zeros(n_bins, dtype=np.int64)
    if ta.size and tb.size:
        _kernels.correlate_into(ta, tb, np.int64(lo), np.int64(bin_width), np.int64(n_bins), counts)
    return Histogram(bin_width=bin_width, origin=lo, counts=counts)


def _smooth(y: np.ndarray, k: int) -> np.ndarray:
    if k <= 1:
        return y
    return np.convolve(y, np.ones(k) / k, mode="same")


def _gauss(x, amp, mu, s, b):
    return amp * np.exp(-0.5 * ((x - mu) / s) ** 2) + b


def _levenberg_marquardt(x, y, p0, max_iter=50, center_tol=0.01):
    """Damped Gauss-Newton on (amplitude, center, sigma, offset); stops when the center step < tol."""
    p = np.array(p0, dtype=np.float64)
    lam = 1e-3
    r = y - _gauss(x, *p)
    cost = float(r @ r)
    for _ in range(max_iter):
        amp, mu, s, _b = p
        e = np.exp(-0.5 * ((x - mu) / s) ** 2)
        jac = np.empty((x.size, 4))
        jac[:, 0] = e
        jac[:, 1] = amp * e * (x - mu) / s**2
        jac[:, 2] = amp * e * (x - mu) ** 2 / s**3
        jac[:, 3] = 1.0
        jtj = jac.T @ jac
        g = jac.T @ r
        while True:
            a = jtj + lam * np.diag(np.diag(jtj) + 1e-12)
            try:
                step = np.linalg.solve(a, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                if lam > 1e12:
                    return p
                continue
            trial = p + step
            if trial[2] <= 0:
                trial[2] = p[2] / 2.0
            r_new = y - _gauss(x, *trial)
            c_new = float(r_new @ r_new)
            if c_new <= cost:
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 4.0
            if lam > 1e12:
                return p
        center_step = abs(trial[1] - p[1])
        p, r, cost = trial, r_new, c_new
        if center_step < center_tol:
            break
    return p


def fit_gaussian_peak(h: Histogram) -> PeakFit:
    """Fit a Gaussian peak on a flat background.

    Background is the median of bins further than 3 initial FWHM estimates
    from the maximum; the background-subtracted counts seed the fit with their
    centroid and RMS width. A peak confined to a single bin (noiseless data)
    returns its centroid directly.
    """
    y_raw = h.counts.astype(np.float64)
    x = h.centers
    bw = h.bin_width
    if y_raw.size < 3 or y_raw.max() <= 0:
        raise NoPeakError("no prominent peak: empty histogram")

    k = max(1, int(round(_PROMINENCE_KERNEL_PS / bw)))
    ys = _smooth(y_raw, k)
    i_max = int(np.argmax(ys))
    med_s = float(np.median(ys))
    peak_sum = ys[i_max] * k
    floor = med_s * k
    if ys[i_max] < 5.0 * med_s or peak_sum < floor + 5.0 * math.sqrt(floor) + 5.0:
        raise NoPeakError("no prominent peak: synchronization lost or search window mis-centered")
    if y_raw.max() < 5.0 * float(np.median(y_raw)):
        raise NoPeakError("no prominent peak: maximum below 5x the median bin")

    # half-maximum crossing on the smoothed counts gives the initial width
    half = med_s + 0.5 * (ys[i_max] - med_s)
    lo = i_max
    while lo > 0 and ys[lo - 1] >= half:
        lo -= 1
    hi = i_max
    while hi < ys.size - 1 and ys[hi + 1] >= half:
        hi += 1
    w0 = max(float(hi - lo + 1) * bw, float(bw))
    x_peak = x[i_max]

    outside = np.abs(x - x_peak) > 3.0 * w0
    background = float(np.median(y_raw[outside])) if outside.any() else float(min(y_raw[0], y_raw[-1]))
    y = y_raw - background

    # all peak counts in one bin (no timing noise): centroid of that bin and its neighbours
    j = int(np.argmax(y))
    near = slice(max(j - 1, 0), min(j + 2, y.size))
    side = np.clip(y[near], 0.0, None)
    if side.sum() - side.max() <= 0.05 * y[j]:
        s = bw / math.sqrt(12.0)
        mu = float(np.sum(x[near] * side) / side.sum())
        return PeakFit(center=mu, fwhm=float(FWHM_PER_SIGMA * s), amplitude=float(y[j]),
                       background=background, center_uncertainty=s / math.sqrt(float(side.sum())))

    region = np.abs(x - x_peak) <= 3.0 * w0
    wts = np.clip(y[region], 0.0, None)
    if wts.sum() <= 0:
        raise NoPeakError("no prominent peak above background")
    mu0 = float(np.sum(x[region] * wts) / wts.sum())
    s0 = float(np.sqrt(np.sum((x[region] - mu0) ** 2 * wts) / wts.sum()))

    if s0 < 0.5 * bw:
        s = max(s0, bw / math.sqrt(12.0))
        n_peak = float(wts.sum())
        return PeakFit(center=mu0, fwhm=float(FWHM_PER_SIGMA * s), amplitude=float(wts.max()),
                       background=background, center_uncertainty=s / math.sqrt(n_peak))

    amp0 = float(max(_smooth(y, max(1, k // 2))[region].max(), 1.0))
    amp, mu, s, b = _levenberg_marquardt(x, y, (amp0, mu0, s0, 0.0))
    s = abs(s)
    lo_span, hi_span = h.span
    if not (amp > 0 and s > 0 and lo_span <= mu < hi_span):
        raise NoPeakError("peak fit did not converge to a valid Gaussian")
    n_peak = amp * s * math.sqrt(2.0 * math.pi) / bw
    return PeakFit(center=float(mu), fwhm=float(FWHM_PER_SIGMA * s), amplitude=float(amp),
                   background=float(background + b), center_uncertainty=float(s / math.sqrt(max(n_peak, 1.0))))


def coincidence_metrics(h: Histogram, fit: PeakFit, window: float) -> CoincidenceMetrics:
    """True coincidences and accidentals inside ``window`` (full width, ps) around the fitted center."""
    if not window > 0:
        raise ValueError("window must be > 0")
    inside = np.abs(h.centers - fit.center) < window / 2.0
    in_window = float(h.counts[inside].sum())
    background = max(fit.background, 0.0)
    accidentals = background * float(inside.sum())
    true = in_window - accidentals
    car = true / accidentals if accidentals > 0 else math.inf
    return CoincidenceMetrics(true_coincidences=true, accidentals_in_window=accidentals, car=car)
