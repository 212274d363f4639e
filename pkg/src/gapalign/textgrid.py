"""Praat TextGrid interchange (long text format, one interval tier).

The writer emits a single "phones" tier in which aligned phonemes carry
their label and everything else (edge silence and inter-phoneme gaps) is
an empty-text interval, which is how Praat-ecosystem tools expect
unlabeled spans. Times are seconds. The parser reads the long format
back and snaps times to milliseconds with 4 decimal places, which makes
conversion lossless for boundaries that live on a millisecond-exact
frame grid.
"""
from __future__ import annotations

import re
from typing import Sequence

from .errors import FormatError
from .pipeline import Alignment

TIER_NAME = "phones"


def _fmt(seconds: float) -> str:
    # repr keeps the shortest digits that round-trip the double
    return repr(float(seconds))


def _escape(text: str) -> str:
    return text.replace('"', '""')


def render_textgrid(alignment: Alignment, label_names: Sequence[str]) -> str:
    """Serialize an alignment as a long-format TextGrid string.

    Args:
        alignment: intervals with integer labels.
        label_names: maps a label index to its display string.
    """
    span_s = alignment.utterance_span_ms / 1000.0
    entries: list[tuple[float, float, str]] = []
    cursor = 0.0
    for iv in alignment.intervals:
        start_s = iv.start_ms / 1000.0
        end_s = iv.end_ms / 1000.0
        if start_s > cursor:
            entries.append((cursor, start_s, ""))
        entries.append((start_s, end_s, label_names[iv.label]))
        cursor = end_s
    if cursor < span_s:
        entries.append((cursor, span_s, ""))
    if not entries:
        entries.append((0.0, span_s, ""))

    xmin = 0.0
    xmax = max(span_s, entries[-1][1])
    lines = [
        'File type = "ooTextFile"',
        'Object class = "TextGrid"',
        "",
        f"xmin = {_fmt(xmin)}",
        f"xmax = {_fmt(xmax)}",
        "tiers? <exists>",
        "size = 1",
        "item []:",
        "    item [1]:",
        '        class = "IntervalTier"',
        f'        name = "{TIER_NAME}"',
        f"        xmin = {_fmt(xmin)}",
        f"        xmax = {_fmt(xmax)}",
        f"        intervals: size = {len(entries)}",
    ]
    for k, (a, b, text) in enumerate(entries, start=1):
        lines.append(f"        intervals [{k}]:")
        lines.append(f"            xmin = {_fmt(a)}")
        lines.append(f"            xmax = {_fmt(b)}")
        lines.append(f'            text = "{_escape(text)}"')
    return "\n".join(lines) + "\n"


_NUM_RE = re.compile(r"=\s*([-+0-9.eE]+)")
_TEXT_RE = re.compile(r'=\s*"(.*)"\s*$')


def _snap_ms(seconds: float) -> float:
    return round(seconds * 1000.0, 4)


def parse_textgrid(text: str) -> dict[str, list[tuple[float, float, str]]]:
    """Parse long-format TextGrid text into tiers of (start_ms, end_ms,
    label) triples.

    Only interval tiers are read. Raises FormatError on files that do not
    look like a long-format TextGrid.
    """
    if "ooTextFile" not in text or "TextGrid" not in text:
        raise FormatError("not a TextGrid document")
    tiers: dict[str, list[tuple[float, float, str]]] = {}
    current: list[tuple[float, float, str]] | None = None
    xmin = xmax = None
    label: str | None = None
    in_interval = False
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("class"):
            m = _TEXT_RE.search(line)
            current = None
            if m and m.group(1) == "IntervalTier":
                current = []
            continue
        if line.startswith("name") and current is not None:
            m = _TEXT_RE.search(line)
            if m is None:
                raise FormatError(f"malformed tier name line: {raw!r}")
            tiers[m.group(1).replace('""', '"')] = current
            continue
        if current is None:
            continue
        if line.startswith("intervals ["):
            in_interval = True
            xmin = xmax = label = None
            continue
        if in_interval and line.startswith("xmin"):
            xmin = float(_NUM_RE.search(line).group(1))
        elif in_interval and line.startswith("xmax"):
            xmax = float(_NUM_RE.search(line).group(1))
        elif in_interval and line.startswith("text"):
            m = _TEXT_RE.search(line)
            if m is None or xmin is None or xmax is None:
                raise FormatError(f"malformed interval near: {raw!r}")
            label = m.group(1).replace('""', '"')
            current.append((_snap_ms(xmin), _snap_ms(xmax), label))
            in_interval = False
    if not tiers:
        raise FormatError("TextGrid contains no interval tiers")
    return tiers


def phone_intervals(text: str) -> list[tuple[float, float, str]]:
    """Non-empty intervals of the "phones" tier, in order, in ms."""
    tiers = parse_textgrid(text)
    if TIER_NAME not in tiers:
        raise FormatError(f'TextGrid has no "{TIER_NAME}" tier')
    return [(a, b, t) for a, b, t in tiers[TIER_NAME] if t != ""]
