"""Boundary evaluation suite: recall/precision at tolerance, bidirectional
boundary distances, inter-phoneme gap statistics, deletion/insertion
rates, and error-distance histograms.

Boundary matching is nearest-neighbor per boundary, deliberately without
one-to-one exclusivity: each boundary is judged by the distance to its
nearest counterpart. When both the reference and the prediction carry
offsets, recall and the distance statistics pool onsets and offsets into
one boundary multiset; onset-only annotations restrict the pool to
onsets. Corpus-level numbers are computed from summed counts and pooled
distances (never averages of per-utterance percentages), reduced in
sorted utterance-id order so results are reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .pipeline import Alignment

DEFAULT_TOLERANCES_MS = (20.0, 40.0, 60.0)
DEFAULT_MATCH_WINDOW_MS = 100.0


@dataclass(frozen=True)
class BoundarySet:
    """Boundaries of one utterance's phoneme annotation or prediction.

    onsets and labels run in parallel; offsets are optional because many
    reference corpora annotate abutting intervals (onset-only).
    """

    onsets: np.ndarray
    labels: tuple
    offsets: np.ndarray | None = None

    def __post_init__(self):
        onsets = np.asarray(self.onsets, dtype=np.float64)
        object.__setattr__(self, "onsets", onsets)
        if len(self.labels) != len(onsets):
            raise ValueError("labels and onsets must be parallel")
        if np.any(np.diff(onsets) < 0):
            raise ValueError("onsets must be sorted")
        if self.offsets is not None:
            offsets = np.asarray(self.offsets, dtype=np.float64)
            object.__setattr__(self, "offsets", offsets)
            if np.any(np.diff(offsets) < 0):
                raise ValueError("offsets must be sorted")

    @property
    def carries_offsets(self) -> bool:
        return self.offsets is not None

    def all_boundaries(self) -> np.ndarray:
        """Every boundary this set carries, as one sorted array."""
        if self.offsets is None:
            return self.onsets
        return np.sort(np.concatenate([self.onsets, self.offsets]))


def boundaries_from_alignment(alignment: Alignment, label_names=None) -> BoundarySet:
    """Boundary view of an alignment; labels may be mapped to strings."""
    labels = tuple(
        label_names[iv.label] if label_names is not None else iv.label
        for iv in alignment.intervals
    )
    return BoundarySet(
        onsets=np.array([iv.start_ms for iv in alignment.intervals], dtype=np.float64),
        labels=labels,
        offsets=np.array([iv.end_ms for iv in alignment.intervals], dtype=np.float64),
    )


def _nearest_distances(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Distance from each query to its nearest point (points sorted)."""
    idx = np.searchsorted(points, queries)
    left = np.clip(idx - 1, 0, len(points) - 1)
    right = np.clip(idx, 0, len(points) - 1)
    return np.minimum(
        np.abs(queries - points[left]), np.abs(queries - points[right])
    )


def _recall_pools(ref: BoundarySet, pred: BoundarySet) -> tuple[np.ndarray, np.ndarray]:
    if ref.carries_offsets and pred.carries_offsets:
        ref_pool = ref.all_boundaries()
    else:
        ref_pool = ref.onsets
    return ref_pool, pred.all_boundaries()


def recall_at(ref: BoundarySet, pred: BoundarySet, tol_ms: float) -> float:
    """Percent of reference boundaries with a prediction within tol_ms.

    Offsets join the reference pool only when both sets carry them; the
    candidate pool is every boundary the prediction carries.
    """
    if tol_ms <= 0:
        raise ValueError("tolerance must be positive")
    ref_pool, cand = _recall_pools(ref, pred)
    if len(ref_pool) == 0:
        raise ValueError("recall undefined for an empty reference")
    dist = _nearest_distances(ref_pool, cand)
    return 100.0 * float(np.count_nonzero(dist <= tol_ms)) / len(ref_pool)


def precision_at(
    ref: BoundarySet, pred: BoundarySet, tol_ms: float, onset_only: bool = False
) -> float:
    """Percent of predicted boundaries with a reference within tol_ms.

    With onset_only, both pools are restricted to onsets (the convention
    for 20 ms precision against onset-only reference annotations).
    """
    if tol_ms <= 0:
        raise ValueError("tolerance must be positive")
    if onset_only:
        pred_pool, ref_pool = pred.onsets, ref.onsets
    else:
        pred_pool, ref_pool = pred.all_boundaries(), ref.all_boundaries()
    if len(pred_pool) == 0:
        raise ValueError("precision undefined for an empty prediction")
    dist = _nearest_distances(pred_pool, ref_pool)
    return 100.0 * float(np.count_nonzero(dist <= tol_ms)) / len(pred_pool)


def boundary_distances(
    ref: BoundarySet, pred: BoundarySet
) -> tuple[tuple[float, float], tuple[float, float]]:
    """((mean, median) reference-to-predicted, (mean, median) reverse).

    Each direction measures, per boundary, the distance to the nearest
    boundary on the other side, over all carried boundaries.
    """
    ref_pool = ref.all_boundaries()
    pred_pool = pred.all_boundaries()
    if len(ref_pool) == 0 or len(pred_pool) == 0:
        raise ValueError("boundary distances undefined for empty sets")
    k2a = _nearest_distances(ref_pool, pred_pool)
    a2k = _nearest_distances(pred_pool, ref_pool)
    return (
        (float(np.mean(k2a)), float(np.median(k2a))),
        (float(np.mean(a2k)), float(np.median(a2k))),
    )


@dataclass(frozen=True)
class GapStats:
    median_ms: float
    std_ms: float  # sample standard deviation (ddof=1); 0 with < 2 gaps
    pct_gap_per_phone: float


def gap_stats(alignment: Alignment) -> GapStats:
    """Statistics over the positive inter-phoneme gaps of one alignment.

    pct_gap_per_phone counts phonemes preceded by a positive gap; leading
    utterance silence before the first phoneme is edge silence, not a
    gap, so it never counts.
    """
    if not alignment.intervals:
        raise ValueError("gap statistics need at least one interval")
    durations = np.array([d for _, d in alignment.gaps], dtype=np.float64)
    return _gap_stats_from(durations, len(alignment.intervals))


def _gap_stats_from(durations: np.ndarray, num_phonemes: int) -> GapStats:
    if len(durations) == 0:
        return GapStats(0.0, 0.0, 0.0)
    std = float(np.std(durations, ddof=1)) if len(durations) >= 2 else 0.0
    return GapStats(
        median_ms=float(np.median(durations)),
        std_ms=std,
        pct_gap_per_phone=100.0 * len(durations) / num_phonemes,
    )


def deletions_insertions(
    ref: BoundarySet, pred: BoundarySet, match_window_ms: float = DEFAULT_MATCH_WINDOW_MS
) -> tuple[float, float]:
    """Greedy in-order matching of same-label phonemes by onset.

    A reference phoneme and a predicted phoneme match when their labels
    agree and their onsets differ by at most the window; matching never
    crosses. Unmatched reference phonemes are deletions, unmatched
    predictions insertions, each as a percentage of its own side.
    """
    matched = _greedy_matches(ref, pred, match_window_ms)
    n_ref, n_pred = len(ref.onsets), len(pred.onsets)
    deletions = 100.0 * (n_ref - matched) / n_ref if n_ref else 0.0
    insertions = 100.0 * (n_pred - matched) / n_pred if n_pred else 0.0
    return deletions, insertions


def _greedy_matches(ref: BoundarySet, pred: BoundarySet, window_ms: float) -> int:
    i = j = matched = 0
    while i < len(ref.onsets) and j < len(pred.onsets):
        if (
            ref.labels[i] == pred.labels[j]
            and abs(ref.onsets[i] - pred.onsets[j]) <= window_ms
        ):
            matched += 1
            i += 1
            j += 1
        elif pred.onsets[j] < ref.onsets[i]:
            j += 1
        else:
            i += 1
    return matched


@dataclass(frozen=True)
class Histogram:
    """Counts of nearest-boundary error distances.

    bin_edges holds the left edge of each bin; the last bin is the
    overflow bin and extends to infinity. counts sums to the number of
    reference boundaries.
    """

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    bin_width_ms: float

    def to_csv(self) -> str:
        lines = ["bin_start_ms,bin_end_ms,count"]
        for k, (edge, count) in enumerate(zip(self.bin_edges, self.counts)):
            end = "inf" if k == len(self.counts) - 1 else f"{edge + self.bin_width_ms:g}"
            lines.append(f"{edge:g},{end},{count}")
        return "\n".join(lines) + "\n"


def error_histogram(
    ref: BoundarySet, pred: BoundarySet, bin_width_ms: float = 10.0, max_ms: float = 100.0
) -> Histogram:
    """Bin each reference boundary's nearest-prediction distance.

    Regular bins [k*w, (k+1)*w) run up to max_ms; everything at or above
    max_ms lands in the final overflow bin, so counts always total the
    reference boundary count.
    """
    if bin_width_ms <= 0:
        raise ValueError("bin width must be positive")
    ref_pool, cand = _recall_pools(ref, pred)
    if len(ref_pool) == 0:
        raise ValueError("histogram undefined for an empty reference")
    dist = _nearest_distances(ref_pool, cand)
    return _histogram_from(dist, bin_width_ms, max_ms)


def _histogram_from(distances: np.ndarray, bin_width_ms: float, max_ms: float) -> Histogram:
    n_regular = int(np.floor(max_ms / bin_width_ms + 1e-9))
    idx = np.floor(distances / bin_width_ms).astype(np.int64)
    idx = np.minimum(idx, n_regular)  # overflow bin
    counts = np.bincount(idx, minlength=n_regular + 1)
    edges = tuple(k * bin_width_ms for k in range(n_regular + 1))
    return Histogram(
        bin_edges=edges, counts=tuple(int(c) for c in counts), bin_width_ms=bin_width_ms
    )


@dataclass(frozen=True)
class EvalReport:
    """Corpus-level evaluation mirroring the standard report layout."""

    recall: dict[float, float]  # tolerance ms -> percent
    precision: dict[float, float]
    precision_onset_20: float
    known_to_aligned: tuple[float, float]  # mean ms, median ms
    aligned_to_known: tuple[float, float]
    gap_median_ms: float
    gap_std_ms: float
    pct_gap_per_phone: float
    totals: tuple[int, int]  # annotated phonemes, predicted phonemes
    deletions_pct: float
    insertions_pct: float
    histogram: Histogram
    num_utterances: int = 1


def evaluate(
    pairs: Iterable[tuple[str, BoundarySet, BoundarySet, Alignment | None]],
    tolerances_ms: Sequence[float] = DEFAULT_TOLERANCES_MS,
    match_window_ms: float = DEFAULT_MATCH_WINDOW_MS,
    bin_width_ms: float = 10.0,
    hist_max_ms: float = 100.0,
) -> EvalReport:
    """Evaluate a corpus of (utterance id, reference, prediction, optional
    predicted alignment for gap statistics).

    Counts and distances are pooled across utterances in sorted-id order;
    percentages are computed once from the pooled counts.
    """
    ordered = sorted(pairs, key=lambda item: item[0])
    if not ordered:
        raise ValueError("nothing to evaluate")

    k2a_parts: list[np.ndarray] = []
    a2k_parts: list[np.ndarray] = []
    hist_parts: list[np.ndarray] = []
    recall_hits = {t: 0 for t in tolerances_ms}
    recall_total = 0
    prec_hits = {t: 0 for t in tolerances_ms}
    prec_total = 0
    onset_hits = 0
    onset_total = 0
    matched = 0
    n_ref_phones = 0
    n_pred_phones = 0
    gap_parts: list[np.ndarray] = []
    gap_phones = 0

    for _utt, ref, pred, pred_alignment in ordered:
        ref_pool, cand = _recall_pools(ref, pred)
        pred_pool = pred.all_boundaries()
        ref_all = ref.all_boundaries()
        rdist = _nearest_distances(ref_pool, cand)
        pdist = _nearest_distances(pred_pool, ref_all)
        hist_parts.append(rdist)
        for t in tolerances_ms:
            recall_hits[t] += int(np.count_nonzero(rdist <= t))
            prec_hits[t] += int(np.count_nonzero(pdist <= t))
        recall_total += len(ref_pool)
        prec_total += len(pred_pool)
        odist = _nearest_distances(pred.onsets, ref.onsets)
        onset_hits += int(np.count_nonzero(odist <= 20.0))
        onset_total += len(pred.onsets)
        k2a_parts.append(_nearest_distances(ref_all, pred_pool))
        a2k_parts.append(pdist)
        matched += _greedy_matches(ref, pred, match_window_ms)
        n_ref_phones += len(ref.onsets)
        n_pred_phones += len(pred.onsets)
        if pred_alignment is not None:
            gap_parts.append(
                np.array([d for _, d in pred_alignment.gaps], dtype=np.float64)
            )
            gap_phones += len(pred_alignment.intervals)

    k2a = np.concatenate(k2a_parts)
    a2k = np.concatenate(a2k_parts)
    gaps = np.concatenate(gap_parts) if gap_parts else np.array([], dtype=np.float64)
    gs = _gap_stats_from(gaps, gap_phones) if gap_phones else GapStats(0.0, 0.0, 0.0)
    return EvalReport(
        recall={t: 100.0 * recall_hits[t] / recall_total for t in tolerances_ms},
        precision={t: 100.0 * prec_hits[t] / prec_total for t in tolerances_ms},
        precision_onset_20=100.0 * onset_hits / onset_total if onset_total else 0.0,
        known_to_aligned=(float(np.mean(k2a)), float(np.median(k2a))),
        aligned_to_known=(float(np.mean(a2k)), float(np.median(a2k))),
        gap_median_ms=gs.median_ms,
        gap_std_ms=gs.std_ms,
        pct_gap_per_phone=gs.pct_gap_per_phone,
        totals=(n_ref_phones, n_pred_phones),
        deletions_pct=100.0 * (n_ref_phones - matched) / n_ref_phones if n_ref_phones else 0.0,
        insertions_pct=100.0 * (n_pred_phones - matched) / n_pred_phones if n_pred_phones else 0.0,
        histogram=_histogram_from(np.concatenate(hist_parts), bin_width_ms, hist_max_ms),
        num_utterances=len(ordered),
    )


def report_to_json_obj(report: EvalReport) -> dict:
    return {
        "num_utterances": report.num_utterances,
        "recall_pct": {f"{t:g}ms": report.recall[t] for t in report.recall},
        "precision_pct": {f"{t:g}ms": report.precision[t] for t in report.precision},
        "precision_onset_20ms_pct": report.precision_onset_20,
        "known_to_aligned_ms": {
            "mean": report.known_to_aligned[0],
            "median": report.known_to_aligned[1],
        },
        "aligned_to_known_ms": {
            "mean": report.aligned_to_known[0],
            "median": report.aligned_to_known[1],
        },
        "gap_median_ms": report.gap_median_ms,
        "gap_std_ms": report.gap_std_ms,
        "pct_gap_per_phone": report.pct_gap_per_phone,
        "totals": {"annotated": report.totals[0], "predicted": report.totals[1]},
        "deletions_pct": report.deletions_pct,
        "insertions_pct": report.insertions_pct,
        "histogram": {
            "bin_edges_ms": list(report.histogram.bin_edges),
            "counts": list(report.histogram.counts),
            "bin_width_ms": report.histogram.bin_width_ms,
        },
    }


def render_table(report: EvalReport) -> str:
    """Fixed-width text report: boundary detection block, then distance
    and gap analysis block."""
    tols = sorted(report.recall)
    lines = []
    lines.append("Alignment performance and boundary detection")
    header = "  {:<14}".format("") + "".join(f"{f'{t:g}ms':>10}" for t in tols)
    lines.append(header)
    lines.append(
        "  {:<14}".format("Recall (%)")
        + "".join(f"{report.recall[t]:>10.2f}" for t in tols)
    )
    lines.append(
        "  {:<14}".format("Precision (%)")
        + "".join(f"{report.precision[t]:>10.2f}" for t in tols)
    )
    lines.append(f"  Precision at 20ms, onsets only: {report.precision_onset_20:.2f}")
    lines.append(
        f"  Totals: annotated {report.totals[0]}, predicted {report.totals[1]}"
    )
    lines.append(
        f"  Deletions: {report.deletions_pct:.2f}%   Insertions: {report.insertions_pct:.2f}%"
    )
    lines.append("")
    lines.append("Boundary distance and inter-phoneme gap analysis")
    lines.append(
        "  Known to aligned (ms):  mean {:>8.2f}   median {:>8.2f}".format(
            *report.known_to_aligned
        )
    )
    lines.append(
        "  Aligned to known (ms):  mean {:>8.2f}   median {:>8.2f}".format(
            *report.aligned_to_known
        )
    )
    lines.append(
        f"  Gap median: {report.gap_median_ms:.2f} ms   std: {report.gap_std_ms:.2f} ms"
        f"   %gap/phone: {report.pct_gap_per_phone:.2f}"
    )
    lines.append(f"  Utterances: {report.num_utterances}")
    return "\n".join(lines) + "\n"


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_json_obj(report), indent=2) + "\n"
