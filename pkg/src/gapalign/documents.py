"""JSON interchange documents: alignments and target sequences.

Alignment documents carry interval labels as inventory label strings
(not class indices) so they stay meaningful without the inventory, plus
an echo of the configuration that produced them. Target documents list
inventory labels in order with the reserved token "<sil>" marking
structured silence.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import FormatError
from .metrics import BoundarySet
from .phoneset import SILENCE_BREAK, PhonemeInventory, TargetSequence
from .pipeline import AlignConfig, Alignment, PhonemeInterval

#: Reserved label marking a silence marker in targets documents.
SILENCE_TOKEN = "<sil>"


def config_to_json_obj(cfg: AlignConfig) -> dict:
    return {
        "boost_factor": cfg.boost_factor,
        "floor": cfg.floor,
        "boost_enabled": cfg.boost_enabled,
        "enforce_completeness": cfg.enforce_completeness,
        "hierarchical": cfg.hierarchical,
        "gap_tolerance_ms": cfg.gap_tolerance_ms,
        "silence_threshold": cfg.silence_threshold,
        "silence_min_duration_ms": cfg.silence_min_duration_ms,
    }


def alignment_to_doc(
    alignment: Alignment,
    inv: PhonemeInventory,
    utterance_id: str,
    frame_hop_ms: float,
    frame_offset_ms: float = 0.0,
    config: dict | None = None,
) -> dict:
    """Build the JSON document form of an alignment."""
    return {
        "utterance_id": utterance_id,
        "frame_hop_ms": frame_hop_ms,
        "frame_offset_ms": frame_offset_ms,
        "utterance_span_ms": alignment.utterance_span_ms,
        "intervals": [
            {
                "label": inv.label(iv.label),
                "start_ms": iv.start_ms,
                "end_ms": iv.end_ms,
                "score": iv.score,
                "inserted": iv.inserted,
            }
            for iv in alignment.intervals
        ],
        "gaps": [
            {"after_index": i, "duration_ms": d} for i, d in alignment.gaps
        ],
        "config": config if config is not None else {},
    }


def validate_doc(doc: dict) -> dict:
    """Check required fields and interval ordering of a parsed document."""
    for key in ("utterance_id", "frame_hop_ms", "intervals", "config"):
        if key not in doc:
            raise FormatError(f"alignment document missing field {key!r}")
    prev_end = None
    for k, iv in enumerate(doc["intervals"]):
        for key in ("label", "start_ms", "end_ms"):
            if key not in iv:
                raise FormatError(f"interval {k} missing field {key!r}")
        if not iv["start_ms"] < iv["end_ms"]:
            raise FormatError(f"interval {k} is empty or inverted")
        if prev_end is not None and iv["start_ms"] < prev_end:
            raise FormatError(f"interval {k} overlaps its predecessor")
        prev_end = iv["end_ms"]
    return doc


def read_alignment_doc(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return validate_doc(doc)


def doc_boundary_set(doc: dict, onset_only: bool = False) -> BoundarySet:
    """Boundary view of a document for the metrics suite."""
    intervals = doc["intervals"]
    onsets = np.array([iv["start_ms"] for iv in intervals], dtype=np.float64)
    labels = tuple(iv["label"] for iv in intervals)
    offsets = None
    if not onset_only:
        offsets = np.array([iv["end_ms"] for iv in intervals], dtype=np.float64)
    return BoundarySet(onsets=onsets, labels=labels, offsets=offsets)


def doc_alignment(doc: dict, inv: PhonemeInventory | None = None) -> Alignment:
    """Rebuild an Alignment from a document.

    Without an inventory, labels fall back to each interval's position
    index; timing and gap structure (all the metrics suite needs) are
    exact either way.
    """
    intervals = tuple(
        PhonemeInterval(
            label=inv.index(iv["label"]) if inv is not None else k,
            start_ms=float(iv["start_ms"]),
            end_ms=float(iv["end_ms"]),
            score=float(iv.get("score", 0.0)),
            inserted=bool(iv.get("inserted", False)),
        )
        for k, iv in enumerate(doc["intervals"])
    )
    span = doc.get("utterance_span_ms")
    if span is None:
        span = intervals[-1].end_ms if intervals else 0.0
    return Alignment(intervals=intervals, utterance_span_ms=float(span))


def targets_to_doc(
    targets: TargetSequence,
    inv: PhonemeInventory,
    utterance_id: str | None = None,
    raw_g2p: list[str] | None = None,
) -> dict:
    doc = {
        "items": [
            SILENCE_TOKEN if item == SILENCE_BREAK else inv.label(item)
            for item in targets.items
        ],
    }
    if utterance_id is not None:
        doc["utterance_id"] = utterance_id
    if targets.source_text is not None:
        doc["source_text"] = targets.source_text
    if raw_g2p is not None:
        doc["raw_g2p"] = raw_g2p
    return doc


def doc_targets(doc: dict, inv: PhonemeInventory) -> TargetSequence:
    if "items" not in doc:
        raise FormatError("targets document missing field 'items'")
    items = tuple(
        SILENCE_BREAK if label == SILENCE_TOKEN else inv.index(label)
        for label in doc["items"]
    )
    try:
        return TargetSequence(items=items, source_text=doc.get("source_text"))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def read_targets_doc(path, inv: PhonemeInventory) -> TargetSequence:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return doc_targets(doc, inv)


def write_json_atomic(obj: dict, path) -> None:
    """Serialize JSON to a temp file and rename it into place."""
    text = json.dumps(obj, ensure_ascii=False, indent=2) + "\n"
    write_text_atomic(text, path)


def write_text_atomic(text: str, path) -> None:
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
