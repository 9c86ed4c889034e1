"""Classical messages exchanged between the two nodes. These are the only cross-node disclosures."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import ClassVar

import numpy as np


@dataclass(frozen=True, eq=False)
class TagDigest:
    """A batch of local timestamps from one detector.

    ``origin`` is subtracted by the receiver before use (0 for time-transfer
    digests, the sender's frame origin for check-subset disclosure).
    """

    kind: ClassVar[str] = "TagDigest"
    epoch: int
    sender: str
    detector: str
    t: np.ndarray
    origin: int = 0


@dataclass(frozen=True)
class TwttReport:
    """Fitted peak of the correlation computed at the sender, or ok=False if no peak was found."""

    kind: ClassVar[str] = "TwttReport"
    epoch: int
    sender: str
    direction: str
    ok: bool
    center: float
    center_uncertainty: float
    fwhm: float


@dataclass(frozen=True, eq=False)
class SiftAnnounce:
    """Frame and bin numbers of the sender's single-event key frames. No slot numbers."""

    kind: ClassVar[str] = "SiftAnnounce"
    epoch: int
    sender: str
    frames: np.ndarray
    bins: np.ndarray


@dataclass(frozen=True)
class BatchConfirm:
    """Alice's summary of the epoch's key batch and of the disclosed check subset."""

    kind: ClassVar[str] = "BatchConfirm"
    epoch: int
    sender: str
    pairs: int
    qber_estimate: float
    check_pairs: int
    check_errors: int
    check_second_moment: float
    check_timing_pairs: int


MESSAGE_TYPES = {cls.kind: cls for cls in (TagDigest, TwttReport, SiftAnnounce, BatchConfirm)}
ProtocolMessage = TagDigest | TwttReport | SiftAnnounce | BatchConfirm


def message_fields(msg) -> dict:
    return {f.name: getattr(msg, f.name) for f in dataclasses.fields(msg)}


def messages_equal(a, b) -> bool:
    if type(a) is not type(b):
        return False
    fa, fb = message_fields(a), message_fields(b)
    for k, va in fa.items():
        vb = fb[k]
        if isinstance(va, np.ndarray) or isinstance(vb, np.ndarray):
            if not np.array_equal(va, vb):
                return False
        elif isinstance(va, float) and isinstance(vb, float) and np.isnan(va) and np.isnan(vb):
            continue
        elif va != vb:
            return False
    return True
