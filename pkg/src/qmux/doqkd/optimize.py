"""Grid search over encoding parameters for the highest secure key rate under a QBER cap."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .encoding import EncodingParams
from .pipeline import QkdSample, run_pipeline
from .security import Baseline, SecurityParams, security_analysis, MIN_PAIRS


@dataclass(frozen=True)
class CandidateScore:
    params: EncodingParams
    pairs: int
    qber: float
    skr: float
    delta_i: float


@dataclass(frozen=True)
class OptimizationResult:
    params: EncodingParams
    cap_violated: bool
    table: tuple[CandidateScore, ...]


def encoding_grid(D: list[int], I: list[int], bin_width: list[int]) -> list[EncodingParams]:
    return [EncodingParams(d, i, t) for d, i, t in itertools.product(D, I, bin_width)]


def score_candidate(sample: QkdSample, enc: EncodingParams, params: SecurityParams, baseline: Baseline,
                    split_seed: int) -> CandidateScore:
    batch = run_pipeline(sample, enc, params, baseline, split_seed)
    if batch.pairs == 0:
        return CandidateScore(enc, 0, math.nan, 0.0, 0.0)
    if batch.pairs < MIN_PAIRS:
        return CandidateScore(enc, batch.pairs, batch.qber, 0.0, 0.0)
    rep = security_analysis(batch, params, baseline)
    return CandidateScore(enc, batch.pairs, batch.qber, rep.skr, rep.delta_i)


def optimize_encoding(candidates: list[EncodingParams], qber_cap: float, sample: QkdSample,
                      params: SecurityParams, baseline: Baseline, split_seed: int = 0) -> OptimizationResult:
    """Highest-SKR candidate with raw QBER <= qber_cap; ties go to smaller D, then I, then bin width.

    If no candidate meets the cap the lowest-QBER one is returned with ``cap_violated`` set.
    """
    if not candidates:
        raise ValueError("empty candidate grid")
    if len(candidates) == 1:
        return OptimizationResult(candidates[0], False, ())
    table = tuple(score_candidate(sample, c, params, baseline, split_seed) for c in candidates)
    ok = [s for s in table if s.pairs > 0 and s.qber <= qber_cap]
    if ok:
        best = min(ok, key=lambda s: (-s.skr, s.params.D, s.params.I, s.params.bin_width))
        return OptimizationResult(best.params, False, table)
    measurable = [s for s in table if s.pairs > 0] or list(table)
    best = min(measurable, key=lambda s: (s.qber if s.pairs else math.inf, s.params.D, s.params.I,
                                          s.params.bin_width))
    return OptimizationResult(best.params, True, table)
