"""Alignment pipeline: calibration, silence-split decoding, completeness
enforcement, and interval extraction around the lattice decoder.

The top-level ``align`` composes the stages in a fixed order: probability
floor, then target boosting, then either hierarchical (silence-split) or
global decoding, then interval extraction with gap-tolerance closing,
then completeness enforcement. All functions are pure: they return new
objects and never mutate their inputs, so utterances can be aligned
concurrently with shared inventories and configs.
"""
from __future__ import annotations

import logging
import math
from bisect import bisect_left
from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasibleAlignmentError
from .lattice import OccupancyRun, StatePath, backtrace_to_occupancy, build_state_path, viterbi
from .phoneset import PhonemeInventory, TargetSequence
from .posterior import Posteriorgram

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignConfig:
    """Tunable knobs for the alignment pipeline.

    Attributes:
        boost_factor: multiplicative probability boost for expected
            phoneme classes (applied as an additive log term).
        floor: minimum probability for expected phoneme classes.
        boost_enabled: apply the boost stage.
        enforce_completeness: guarantee every target phoneme appears in
            the output.
        hierarchical: split the utterance at detected silences and decode
            each speech region independently.
        gap_tolerance_ms: close inter-phoneme gaps shorter than this by
            extending the earlier phoneme; 0 keeps every gap.
        silence_threshold: posterior mass of silence-plus-blank above
            which a frame counts as silent.
        silence_min_duration_ms: shortest silent run worth splitting on.
    """

    boost_factor: float = 5.0
    floor: float = 1e-8
    boost_enabled: bool = True
    enforce_completeness: bool = True
    hierarchical: bool = True
    gap_tolerance_ms: float = 0.0
    silence_threshold: float = 0.5
    silence_min_duration_ms: float = 100.0

    def __post_init__(self):
        if self.boost_factor < 1:
            raise ValueError("boost_factor must be >= 1")
        if not (0 < self.floor < 1):
            raise ValueError("floor must be a probability in (0, 1)")
        if self.gap_tolerance_ms < 0:
            raise ValueError("gap_tolerance_ms must be >= 0")
        if not (0 < self.silence_threshold <= 1):
            raise ValueError("silence_threshold must be in (0, 1]")
        if self.silence_min_duration_ms < 0:
            raise ValueError("silence_min_duration_ms must be >= 0")


@dataclass(frozen=True)
class PhonemeInterval:
    """One aligned phoneme with both boundaries explicit."""

    label: int
    start_ms: float
    end_ms: float
    score: float  # mean per-frame log-probability over the interval
    inserted: bool = False  # placed by completeness enforcement

    def __post_init__(self):
        if not self.start_ms < self.end_ms:
            raise ValueError(f"empty interval [{self.start_ms}, {self.end_ms})")


@dataclass(frozen=True)
class Alignment:
    """Ordered phoneme intervals over one utterance.

    Gaps are not stored: they are derived from the spacing between
    consecutive intervals, so they can never disagree with the intervals.
    Leading and trailing silence (before the first and after the last
    interval) is part of the utterance span but is not a gap.
    """

    intervals: tuple[PhonemeInterval, ...]
    utterance_span_ms: float

    def __post_init__(self):
        for a, b in zip(self.intervals, self.intervals[1:]):
            if b.start_ms < a.end_ms:
                raise ValueError(
                    f"intervals overlap: [{a.start_ms},{a.end_ms}) then [{b.start_ms},{b.end_ms})"
                )

    @property
    def gaps(self) -> list[tuple[int, float]]:
        """(after-interval-index, duration ms) for every positive gap."""
        out = []
        for i, (a, b) in enumerate(zip(self.intervals, self.intervals[1:])):
            d = b.start_ms - a.end_ms
            if d > 0:
                out.append((i, d))
        return out

    @property
    def labels(self) -> list[int]:
        return [iv.label for iv in self.intervals]


def boost_targets(pgram: Posteriorgram, targets: TargetSequence, beta: float) -> Posteriorgram:
    """Add ln(beta) to the logits of every class present in the targets.

    No renormalization happens: the decoder compares path scores, so a
    shared scale factor is immaterial. beta=1 returns the input unchanged.
    """
    if beta < 1:
        raise ValueError("beta must be >= 1")
    if beta == 1.0:
        return pgram
    cols = sorted(set(targets.phoneme_indices()))
    logits = pgram.logits.copy()
    logits[:, cols] += np.float32(math.log(beta))
    return replace(pgram, logits=logits)


def apply_floor(pgram: Posteriorgram, targets: TargetSequence, floor: float) -> Posteriorgram:
    """Raise target-class logits to at least ln(floor).

    Only the expected phonemes are floored; other classes may keep hard
    zeros. This keeps every target reachable for the decoder even where
    the acoustic model assigned zero probability.
    """
    if not (0 < floor < 1):
        raise ValueError("floor must be a probability in (0, 1)")
    cols = sorted(set(targets.phoneme_indices()))
    logits = pgram.logits.copy()
    logits[:, cols] = np.maximum(logits[:, cols], np.float32(math.log(floor)))
    return replace(pgram, logits=logits)


def detect_silence_regions(
    pgram: Posteriorgram,
    cfg: AlignConfig,
    silence_id: int,
    blank_id: int | None = None,
) -> list[tuple[int, int]]:
    """Maximal frame runs where silence posterior mass dominates.

    A frame is silent when exp(logit[silence]) + exp(logit[blank])
    exceeds ``cfg.silence_threshold``. Runs shorter than
    ``cfg.silence_min_duration_ms`` are discarded. Returns disjoint
    (start_frame, end_frame_exclusive) pairs in order.
    """
    if blank_id is None:
        blank_id = pgram.num_classes - 1
    if cfg.silence_min_duration_ms < pgram.frame_hop_ms:
        raise ValueError(
            f"silence_min_duration_ms ({cfg.silence_min_duration_ms}) must be "
            f">= frame hop ({pgram.frame_hop_ms} ms)"
        )
    logits = pgram.logits.astype(np.float64)
    mass = np.exp(logits[:, silence_id]) + np.exp(logits[:, blank_id])
    silent = mass > cfg.silence_threshold
    regions: list[tuple[int, int]] = []
    t = 0
    T = pgram.num_frames
    while t < T:
        if silent[t]:
            start = t
            while t < T and silent[t]:
                t += 1
            if (t - start) * pgram.frame_hop_ms >= cfg.silence_min_duration_ms - 1e-9:
                regions.append((start, t))
        else:
            t += 1
    return regions


def extract_intervals(
    runs: list[OccupancyRun],
    path: StatePath,
    pgram: Posteriorgram,
    cfg: AlignConfig,
) -> Alignment:
    """Turn occupancy runs into timed phoneme intervals.

    A phoneme's onset is the start edge of its first frame and its offset
    the end edge of its last frame, so blank runs between phonemes
    surface as explicit gaps. Gaps shorter than ``cfg.gap_tolerance_ms``
    are closed by extending the earlier phoneme to the next onset.
    Leading and trailing blank runs become edge silence, not gaps.
    """
    intervals: list[PhonemeInterval] = []
    logits = pgram.logits
    for run in runs:
        if path.target_index(run.position) is None:
            continue  # blank occupancy
        score = float(logits[run.start_frame : run.end_frame, run.label].mean(dtype=np.float64))
        intervals.append(
            PhonemeInterval(
                label=run.label,
                start_ms=float(pgram.frame_time(run.start_frame)),
                end_ms=float(pgram.frame_time(run.end_frame)),
                score=score,
            )
        )
    alignment = Alignment(
        intervals=tuple(intervals),
        utterance_span_ms=pgram.num_frames * pgram.frame_hop_ms,
    )
    return close_small_gaps(alignment, cfg.gap_tolerance_ms)


def close_small_gaps(alignment: Alignment, tolerance_ms: float) -> Alignment:
    """Close every gap with duration in (0, tolerance_ms).

    The earlier phoneme's end is extended to the next phoneme's start;
    boundaries stay on the frame grid because both endpoints already are.
    Returns the input object untouched when nothing closes.
    """
    if tolerance_ms <= 0 or len(alignment.intervals) < 2:
        return alignment
    out: list[PhonemeInterval] = [alignment.intervals[0]]
    changed = False
    for nxt in alignment.intervals[1:]:
        prev = out[-1]
        gap = nxt.start_ms - prev.end_ms
        if 0 < gap < tolerance_ms:
            out[-1] = replace(prev, end_ms=nxt.start_ms)
            changed = True
        out.append(nxt)
    if not changed:
        return alignment
    return replace(alignment, intervals=tuple(out))


def _decode_span(
    pgram: Posteriorgram, phoneme_indices: list[int], blank_id: int, cfg: AlignConfig
) -> Alignment:
    path = build_state_path(phoneme_indices, blank_id)
    trace = viterbi(pgram, path)
    runs = backtrace_to_occupancy(trace, path, pgram)
    return extract_intervals(runs, path, pgram, cfg)


def hierarchical_align(
    pgram: Posteriorgram,
    targets: TargetSequence,
    inv: PhonemeInventory,
    cfg: AlignConfig,
) -> Alignment:
    """Silence-split decode: detect silent regions, pair them with the
    silence markers in the targets, and decode each speech chunk on its
    own frame span.

    The pairing only holds when the number of detected regions equals the
    number of markers; on any mismatch, or when any chunk does not fit
    its span, the whole utterance falls back to one global decode with
    the markers dropped.
    """
    blank_id = inv.blank_id
    chunks = targets.chunks()
    regions = detect_silence_regions(pgram, cfg, inv.silence_id, blank_id)

    def global_decode() -> Alignment:
        return _decode_span(pgram, targets.phoneme_indices(), blank_id, cfg)

    if len(regions) != targets.num_markers:
        log.info(
            "detected %d silence regions for %d markers; falling back to global decode",
            len(regions),
            targets.num_markers,
        )
        return global_decode()

    T = pgram.num_frames
    edges = [0]
    for start, end in regions:
        edges.append(start)
        edges.append(end)
    edges.append(T)
    spans = [(edges[2 * i], edges[2 * i + 1]) for i in range(len(chunks))]

    intervals: list[PhonemeInterval] = []
    for chunk, (a, b) in zip(chunks, spans):
        if not chunk:
            continue  # markers with no phonemes between them: span stays silent
        if b - a <= 0:
            return global_decode()
        sub = pgram.slice_frames(a, b)
        try:
            part = _decode_span(sub, chunk, blank_id, cfg)
        except InfeasibleAlignmentError:
            return global_decode()
        intervals.extend(part.intervals)
    return Alignment(
        intervals=tuple(intervals),
        utterance_span_ms=T * pgram.frame_hop_ms,
    )


def enforce_completeness(
    alignment: Alignment, pgram: Posteriorgram, targets: TargetSequence
) -> Alignment:
    """Insert any target phoneme missing from the alignment.

    Each missing phoneme becomes a one-frame interval at the frame with
    the highest logit for its class inside the open window between its
    surviving neighbors. When that window is empty, a frame is taken from
    a multi-frame neighbor (shrinking its edge by one frame); when both
    neighbors are single frames, neighboring intervals are shifted one
    frame toward the nearest free frame. Already-complete alignments are
    returned untouched.

    Raises:
        InfeasibleAlignmentError: more targets than frames (cannot happen
            for alignments produced by this pipeline, whose decoder would
            have rejected the instance first).
    """
    want = targets.phoneme_indices()
    if alignment.labels == want:
        return alignment

    T = pgram.num_frames
    if len(want) > T:
        raise InfeasibleAlignmentError(f"cannot place {len(want)} phonemes in {T} frames")
    hop = pgram.frame_hop_ms
    offset = pgram.frame_offset_ms
    logits = pgram.logits

    def frame_of(ms: float) -> int:
        return int(round((ms - offset) / hop))

    # records: [start_frame, end_frame, label, score-or-None, inserted, target_pos]
    recs: list[list] = []
    tp = 0
    dropped = 0
    for iv in alignment.intervals:
        j = tp
        while j < len(want) and want[j] != iv.label:
            j += 1
        if j == len(want):
            dropped += 1
            continue
        recs.append([frame_of(iv.start_ms), frame_of(iv.end_ms), iv.label, iv.score, iv.inserted, j])
        tp = j + 1
    if dropped:
        log.warning("dropped %d intervals that do not fit the target sequence in order", dropped)

    target_positions = [r[5] for r in recs]

    def steal_frame(idx: int) -> int:
        """Free exactly one frame at the seam before recs[idx]; returns it."""
        left = recs[idx - 1] if idx > 0 else None
        right = recs[idx] if idx < len(recs) else None
        if left is not None and left[1] - left[0] >= 2:
            left[1] -= 1
            left[3] = None
            return left[1]
        if right is not None and right[1] - right[0] >= 2:
            right[0] += 1
            right[3] = None
            return right[0] - 1
        # chains of one-frame intervals: shift toward the nearest free frame
        j = idx
        while j < len(recs):
            room = (recs[j + 1][0] if j + 1 < len(recs) else T) - recs[j][1]
            if room > 0:
                for m in range(j, idx - 1, -1):
                    recs[m][0] += 1
                    recs[m][1] += 1
                    recs[m][3] = None
                return recs[idx][0] - 1
            j += 1
        j = idx - 1
        while j >= 0:
            room = recs[j][0] - (recs[j - 1][1] if j > 0 else 0)
            if room > 0:
                for m in range(j, idx):
                    recs[m][0] -= 1
                    recs[m][1] -= 1
                    recs[m][3] = None
                return recs[idx - 1][1]
            j -= 1
        raise InfeasibleAlignmentError("no free frame available for insertion")

    for k, label in enumerate(want):
        idx = bisect_left(target_positions, k)
        if idx < len(target_positions) and target_positions[idx] == k:
            continue
        lo = recs[idx - 1][1] if idx > 0 else 0
        hi = recs[idx][0] if idx < len(recs) else T
        if lo < hi:
            f = lo + int(np.argmax(logits[lo:hi, label]))
        else:
            f = steal_frame(idx)
        recs.insert(idx, [f, f + 1, label, None, True, k])
        target_positions.insert(idx, k)

    intervals = []
    for start_f, end_f, label, score, inserted, _ in recs:
        if score is None:
            score = float(logits[start_f:end_f, label].mean(dtype=np.float64))
        intervals.append(
            PhonemeInterval(
                label=label,
                start_ms=float(offset + start_f * hop),
                end_ms=float(offset + end_f * hop),
                score=score,
                inserted=inserted,
            )
        )
    return replace(alignment, intervals=tuple(intervals))


def align(
    pgram: Posteriorgram,
    targets: TargetSequence,
    inv: PhonemeInventory,
    cfg: AlignConfig = AlignConfig(),
) -> Alignment:
    """Full alignment pipeline for one utterance.

    Stage order: probability floor, target boost, silence-split or global
    decode, interval extraction with gap closing, completeness
    enforcement, and a final gap-closing pass (enforcement can create new
    sub-tolerance gaps next to inserted phonemes).

    Raises:
        InfeasibleAlignmentError: no legal alignment exists.
        ValueError: posteriorgram class axis does not match the inventory.
    """
    if pgram.head != "phoneme":
        raise ValueError("alignment decodes the phoneme head; group head is data-only")
    if pgram.num_classes != inv.num_classes("phoneme"):
        raise ValueError(
            f"posteriorgram has {pgram.num_classes} classes but the inventory "
            f"defines {inv.num_classes('phoneme')}"
        )
    calibrated = apply_floor(pgram, targets, cfg.floor)
    if cfg.boost_enabled:
        calibrated = boost_targets(calibrated, targets, cfg.boost_factor)
    if cfg.hierarchical:
        alignment = hierarchical_align(calibrated, targets, inv, cfg)
    else:
        alignment = _decode_span(calibrated, targets.phoneme_indices(), inv.blank_id, cfg)
    if cfg.enforce_completeness:
        alignment = enforce_completeness(alignment, calibrated, targets)
    return close_small_gaps(alignment, cfg.gap_tolerance_ms)
