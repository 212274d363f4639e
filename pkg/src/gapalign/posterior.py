"""Posteriorgram container and serialization.

A posteriorgram is a (T, V) matrix of per-frame class log-probabilities
in natural log, stored as float32. Hard zeros are represented as -inf
and are legal everywhere; NaN is rejected. Frame timing lives here and
nowhere else: frame t covers the half-open span
``[frame_offset_ms + t * hop, frame_offset_ms + (t + 1) * hop)`` and every
downstream module derives boundary times through ``frame_time``.

Two wire formats are supported. The PGRAM binary format is the compact
default; a JSON document form exists for interoperability and debugging
(-inf is encoded as null there, since JSON has no infinities).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError

_MAGIC = b"PGRM"
_VERSION = 1
_HEADER = struct.Struct("<4sBIIHHB")  # magic, version, T, V, hop, offset, head
_HEAD_TAGS = {"phoneme": 0, "group": 1}
_TAG_HEADS = {v: k for k, v in _HEAD_TAGS.items()}

#: Per-frame normalization tolerance: |logsumexp(row)| must not exceed this.
NORMALIZATION_TOL = 1e-3


@dataclass(frozen=True)
class Posteriorgram:
    """Frame-by-class log-probability matrix with frame timing.

    Attributes:
        logits: (T, V) float32 natural-log probabilities; -inf allowed.
        frame_hop_ms: duration of one frame step.
        frame_offset_ms: start time of frame 0.
        head: which classifier head produced the matrix
            ("phoneme" or "group").
    """

    logits: np.ndarray
    frame_hop_ms: float
    frame_offset_ms: float = 0.0
    head: str = "phoneme"

    def __post_init__(self):
        if self.logits.ndim != 2:
            raise ValueError(f"logits must be 2-D, got shape {self.logits.shape}")
        if self.head not in _HEAD_TAGS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.frame_hop_ms <= 0:
            raise ValueError("frame_hop_ms must be positive")
        if self.logits.dtype != np.float32:
            object.__setattr__(self, "logits", self.logits.astype(np.float32))

    @property
    def num_frames(self) -> int:
        return self.logits.shape[0]

    @property
    def num_classes(self) -> int:
        return self.logits.shape[1]

    def frame_time(self, t: int | np.ndarray) -> float | np.ndarray:
        """Start time of frame t in milliseconds (t may exceed T-1 by one,
        which gives the end edge of the final frame)."""
        return self.frame_offset_ms + t * self.frame_hop_ms

    def slice_frames(self, start: int, stop: int) -> "Posteriorgram":
        """Contiguous frame range [start, stop) as a new posteriorgram.

        The slice keeps absolute time: its frame 0 starts where parent
        frame ``start`` starts.
        """
        if not (0 <= start < stop <= self.num_frames):
            raise ValueError(f"bad frame range [{start}, {stop})")
        return replace(
            self,
            logits=self.logits[start:stop].copy(),
            frame_offset_ms=self.frame_offset_ms + start * self.frame_hop_ms,
        )


def from_probabilities(
    probs: np.ndarray,
    frame_hop_ms: float,
    frame_offset_ms: float = 0.0,
    head: str = "phoneme",
) -> Posteriorgram:
    """Build a posteriorgram from probability-space rows.

    Zeros become -inf; negative entries are rejected.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < 0):
        raise ValueError("probabilities must be non-negative")
    with np.errstate(divide="ignore"):
        logits = np.log(probs).astype(np.float32)
    return Posteriorgram(logits, frame_hop_ms, frame_offset_ms, head)


def _logsumexp_rows(logits: np.ndarray) -> np.ndarray:
    x = logits.astype(np.float64)
    peak = np.max(x, axis=1)
    # rows that are all -inf stay -inf without emitting warnings
    safe = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(invalid="ignore"):
        out = safe + np.log(np.sum(np.exp(x - safe[:, None]), axis=1))
    return np.where(np.isfinite(peak), out, -np.inf)


def validate(pgram: Posteriorgram, check_normalization: bool = True) -> None:
    """Reject malformed posteriorgrams.

    Checks, in order: at least one frame, no NaN (reported with frame and
    class position), and per-frame normalization
    |logsumexp(row)| <= 1e-3 when ``check_normalization`` is set.

    Raises:
        FormatError: naming the first offending frame (and class for NaN).
    """
    if pgram.num_frames == 0:
        raise FormatError("posteriorgram has zero frames")
    if pgram.num_classes == 0:
        raise FormatError("posteriorgram has zero classes")
    nan_mask = np.isnan(pgram.logits)
    if nan_mask.any():
        t, v = np.argwhere(nan_mask)[0]
        raise FormatError(f"NaN logit at frame {t}, class {v}")
    if check_normalization:
        lse = _logsumexp_rows(pgram.logits)
        bad = np.abs(lse) > NORMALIZATION_TOL
        if bad.any():
            t = int(np.argmax(bad))
            raise FormatError(
                f"frame {t} is not normalized: logsumexp={lse[t]:.6f} "
                f"(tolerance {NORMALIZATION_TOL})"
            )


def write_pgram(pgram: Posteriorgram, path) -> None:
    """Write the binary PGRAM form.

    Layout: "PGRM" magic, u8 version, u32 frame count, u32 class count,
    u16 frame hop and u16 frame offset (both in tenths of a millisecond),
    u8 head tag, then the float32 row-major matrix. All little endian.
    """
    if pgram.num_frames == 0 or pgram.num_classes == 0:
        raise ValueError("refusing to write an empty posteriorgram")
    hop_tenths = round(pgram.frame_hop_ms * 10)
    off_tenths = round(pgram.frame_offset_ms * 10)
    if not (0 < hop_tenths <= 0xFFFF):
        raise ValueError(f"frame hop {pgram.frame_hop_ms} ms not representable")
    if not (0 <= off_tenths <= 0xFFFF):
        raise ValueError(f"frame offset {pgram.frame_offset_ms} ms not representable")
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        pgram.num_frames,
        pgram.num_classes,
        hop_tenths,
        off_tenths,
        _HEAD_TAGS[pgram.head],
    )
    body = np.ascontiguousarray(pgram.logits, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def read_pgram(path, check_normalization: bool = True) -> Posteriorgram:
    """Read and validate a binary PGRAM file.

    Raises:
        FormatError: bad magic, unsupported version, truncated or oversized
            payload, or validation failure (NaN / unnormalized frames).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError("PGRAM file shorter than its header")
    magic, version, t, v, hop_tenths, off_tenths, head_tag = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise FormatError(f"unsupported PGRAM version {version}")
    if head_tag not in _TAG_HEADS:
        raise FormatError(f"unknown head tag {head_tag}")
    expected = _HEADER.size + 4 * t * v
    if len(blob) != expected:
        raise FormatError(f"PGRAM payload is {len(blob)} bytes, expected {expected}")
    logits = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(t, v).copy()
    pgram = Posteriorgram(
        logits=logits,
        frame_hop_ms=hop_tenths / 10.0,
        frame_offset_ms=off_tenths / 10.0,
        head=_TAG_HEADS[head_tag],
    )
    validate(pgram, check_normalization=check_normalization)
    return pgram


def to_json_obj(pgram: Posteriorgram) -> dict:
    """JSON-ready dict; -inf entries become null."""
    if pgram.num_frames == 0 or pgram.num_classes == 0:
        raise ValueError("refusing to write an empty posteriorgram")
    frames: list[list[float | None]] = []
    for row in pgram.logits:
        frames.append([None if x == -np.inf else float(x) for x in row])
    return {
        "frames": frames,
        "frame_hop_ms": pgram.frame_hop_ms,
        "frame_offset_ms": pgram.frame_offset_ms,
        "head": pgram.head,
    }


def from_json_obj(obj: dict, check_normalization: bool = True) -> Posteriorgram:
    """Parse the JSON document form (null means a hard zero)."""
    try:
        raw_frames = obj["frames"]
        hop = float(obj["frame_hop_ms"])
        offset = float(obj.get("frame_offset_ms", 0.0))
        head = obj.get("head", "phoneme")
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed posteriorgram document: {exc}") from exc
    if not isinstance(raw_frames, list) or not raw_frames:
        raise FormatError("posteriorgram document has no frames")
    width = len(raw_frames[0])
    logits = np.empty((len(raw_frames), width), dtype=np.float32)
    for t, row in enumerate(raw_frames):
        if len(row) != width:
            raise FormatError(f"frame {t} has {len(row)} classes, expected {width}")
        logits[t] = [-np.inf if x is None else float(x) for x in row]
    try:
        pgram = Posteriorgram(logits, hop, offset, head)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    validate(pgram, check_normalization=check_normalization)
    return pgram


def write_json(pgram: Posteriorgram, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_json_obj(pgram), fh)


def read_json(path, check_normalization: bool = True) -> Posteriorgram:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc}") from exc
    return from_json_obj(obj, check_normalization=check_normalization)
