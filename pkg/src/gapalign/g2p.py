"""External grapheme-to-phoneme adapter around espeak-ng.

The executable is resolved from the GAPALIGN_ESPEAK_NG environment
variable, falling back to ``espeak-ng`` on PATH. Text is split at
sentence punctuation before calling the tool, so punctuation survives as
silence markers instead of being swallowed by the synthesizer; each
chunk's raw IPA output is kept verbatim for auditability, since symbol
segmentation varies across espeak-ng versions.
"""
from __future__ import annotations

import os
import re
import subprocess

from .errors import ExternalToolError
from .phoneset import DEFAULT_SILENCE_PUNCTUATION

ESPEAK_ENV_VAR = "GAPALIGN_ESPEAK_NG"

_STRESS_MARKS = "ˈˌ"


def espeak_executable() -> str:
    return os.environ.get(ESPEAK_ENV_VAR, "espeak-ng")


def _split_text(text: str, punctuation: frozenset[str]) -> list[str]:
    """Chunk text at punctuation, keeping the punctuation as its own chunk."""
    pattern = "|".join(re.escape(p) for p in sorted(punctuation))
    parts = re.split(f"({pattern})", text)
    return [p.strip() for p in parts if p.strip()]


def _parse_ipa(raw: str) -> list[str]:
    """Split espeak-ng --ipa=3 output into individual symbols.

    With --ipa=3 the tool separates phonemes with underscores inside a
    word and whitespace between words. Leading stress marks are split off
    the symbol they precede (the inventory mapping strips them anyway).
    """
    symbols: list[str] = []
    for word in raw.split():
        for token in word.split("_"):
            token = token.strip().lstrip(_STRESS_MARKS)
            if token:
                symbols.append(token)
    return symbols


def transcribe(
    text: str,
    language: str = "en-us",
    punctuation: frozenset[str] = DEFAULT_SILENCE_PUNCTUATION,
    executable: str | None = None,
) -> tuple[list[str], list[str]]:
    """Convert text to an IPA symbol list via espeak-ng.

    Returns (symbols, raw_outputs): symbols interleave IPA phonemes with
    the punctuation characters themselves (which map_ipa turns into
    silence markers); raw_outputs holds the tool's verbatim IPA line per
    text chunk.

    Raises:
        ExternalToolError: executable missing (the message names
            GAPALIGN_ESPEAK_NG) or exiting nonzero.
    """
    exe = executable or espeak_executable()
    symbols: list[str] = []
    raw_outputs: list[str] = []
    for chunk in _split_text(text, punctuation):
        if chunk in punctuation:
            symbols.append(chunk)
            continue
        cmd = [exe, "-q", "--ipa=3", "-v", language, "--", chunk]
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, timeout=60)
        except FileNotFoundError as exc:
            raise ExternalToolError(
                f"espeak-ng executable {exe!r} not found; install espeak-ng or "
                f"point {ESPEAK_ENV_VAR} at the binary"
            ) from exc
        except subprocess.TimeoutExpired as exc:
            raise ExternalToolError(f"espeak-ng timed out on {chunk!r}") from exc
        if proc.returncode != 0:
            raise ExternalToolError(
                f"espeak-ng failed with exit {proc.returncode}: {proc.stderr.strip()}"
            )
        raw = proc.stdout.strip()
        raw_outputs.append(raw)
        symbols.extend(_parse_ipa(raw))
    return symbols, raw_outputs
