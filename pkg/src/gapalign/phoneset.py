"""Phoneme inventory, phoneme-group inventory, and IPA symbol mapping.

An inventory is loaded from a plain-text document (see ``load_inventory``
for the grammar) rather than hard-coded: the concrete label set is a
replaceable asset that must match whatever acoustic model produced the
posteriorgrams. The default document shipped under ``data/`` defines 67
phonemes in 17 groups; a 5-phoneme toy inventory is included for tests.

The CTC blank is not listed among the phonemes. It always occupies the
trailing class index of each head: ``blank_id == len(phonemes)`` for the
phoneme head and ``len(groups)`` for the group head.
"""
from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass, field
from importlib import resources

from .errors import InventoryError, UnknownSymbolError

log = logging.getLogger(__name__)

EXPECTED_PHONEME_COUNT = 67
EXPECTED_GROUP_COUNT = 17

#: Token value marking a structured pause in a TargetSequence.
SILENCE_BREAK = -1

#: Punctuation that maps to a silence marker by default.
DEFAULT_SILENCE_PUNCTUATION = frozenset({".", ",", ";", ":", "!", "?", "—", "…"})

_SECTIONS = ("PHONEMES", "GROUPS", "GROUPMAP", "IPAMAP", "SPECIAL")


@dataclass(frozen=True)
class PhonemeInventory:
    """Immutable phoneme/group inventory. Safe to share across jobs."""

    phonemes: tuple[str, ...]
    groups: tuple[str, ...]
    group_of: tuple[int, ...]  # phoneme index -> group index
    ipa_map: dict[str, int]  # IPA symbol -> phoneme index
    silence_id: int
    blank_label: str = "<blank>"

    @property
    def blank_id(self) -> int:
        """Class index of the CTC blank on the phoneme head."""
        return len(self.phonemes)

    @property
    def group_blank_id(self) -> int:
        """Class index of the CTC blank on the group head."""
        return len(self.groups)

    def num_classes(self, head: str = "phoneme") -> int:
        """Number of classes (labels plus blank) on the given head."""
        if head == "phoneme":
            return len(self.phonemes) + 1
        if head == "group":
            return len(self.groups) + 1
        raise ValueError(f"unknown head {head!r}")

    def label(self, index: int) -> str:
        if index == self.blank_id:
            return self.blank_label
        return self.phonemes[index]

    def index(self, label: str) -> int:
        try:
            return self._label_index[label]
        except KeyError:
            raise InventoryError(f"unknown phoneme label {label!r}") from None

    # lazily built reverse map; dict lookup without rescanning the tuple
    @property
    def _label_index(self) -> dict[str, int]:
        cached = _LABEL_INDEX_CACHE.get(id(self))
        if cached is None:
            cached = {p: i for i, p in enumerate(self.phonemes)}
            _LABEL_INDEX_CACHE[id(self)] = cached
        return cached


_LABEL_INDEX_CACHE: dict[int, dict[str, int]] = {}


@dataclass(frozen=True)
class TargetSequence:
    """Ordered alignment targets: phoneme indices and silence markers.

    ``items`` holds phoneme class indices (>= 0) interleaved with
    ``SILENCE_BREAK`` markers. The blank class never appears here; it is
    implicit in the decoding lattice.
    """

    items: tuple[int, ...]
    source_text: str | None = None

    def __post_init__(self):
        if not any(i >= 0 for i in self.items):
            raise ValueError("target sequence contains no phonemes")
        if any(i < SILENCE_BREAK for i in self.items):
            raise ValueError("invalid token in target sequence")

    def phoneme_indices(self) -> list[int]:
        """The phoneme tokens in order, markers removed."""
        return [i for i in self.items if i >= 0]

    @property
    def num_markers(self) -> int:
        return sum(1 for i in self.items if i == SILENCE_BREAK)

    def chunks(self) -> list[list[int]]:
        """Phoneme runs split at silence markers; K markers -> K+1 chunks."""
        out: list[list[int]] = [[]]
        for item in self.items:
            if item == SILENCE_BREAK:
                out.append([])
            else:
                out[-1].append(item)
        return out


def load_inventory(text: str, permissive: bool = False) -> PhonemeInventory:
    """Parse and validate an inventory document.

    Grammar (UTF-8, line oriented; ``#`` starts a comment, blank lines are
    ignored)::

        [PHONEMES]   one label per line; line order assigns class indices
        [GROUPS]     one label per line; line order assigns group indices
        [GROUPMAP]   "<phoneme-label> <group-label>" per line, total
        [IPAMAP]     "<ipa-symbol> <phoneme-label>" per line
        [SPECIAL]    "silence <phoneme-label>" (required)
                     "blank <display-label>"   (optional, cosmetic)

    The phoneme/group counts must equal 67/17 unless ``permissive`` is set
    (toy inventories for testing use the flag).

    Raises:
        InventoryError: on duplicate labels, missing group assignments,
            unknown labels, or count mismatches in strict mode.
    """
    sections: dict[str, list[str]] = {name: [] for name in _SECTIONS}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in sections:
                raise InventoryError(f"line {lineno}: unknown section {name!r}")
            current = name
            continue
        if current is None:
            raise InventoryError(f"line {lineno}: content before any section header")
        sections[current].append(line)

    phonemes = tuple(sections["PHONEMES"])
    groups = tuple(sections["GROUPS"])
    if len(set(phonemes)) != len(phonemes):
        dupes = sorted({p for p in phonemes if phonemes.count(p) > 1})
        raise InventoryError(f"duplicate phoneme labels: {dupes}")
    if len(set(groups)) != len(groups):
        raise InventoryError("duplicate group labels")
    if not permissive:
        if len(phonemes) != EXPECTED_PHONEME_COUNT:
            raise InventoryError(
                f"expected {EXPECTED_PHONEME_COUNT} phonemes, found {len(phonemes)} "
                "(pass permissive=True for non-standard inventories)"
            )
        if len(groups) != EXPECTED_GROUP_COUNT:
            raise InventoryError(
                f"expected {EXPECTED_GROUP_COUNT} groups, found {len(groups)} "
                "(pass permissive=True for non-standard inventories)"
            )
    if not phonemes:
        raise InventoryError("inventory defines no phonemes")
    if not groups:
        raise InventoryError("inventory defines no groups")

    phoneme_index = {p: i for i, p in enumerate(phonemes)}
    group_index = {g: i for i, g in enumerate(groups)}

    assigned: dict[int, int] = {}
    for entry in sections["GROUPMAP"]:
        parts = entry.split()
        if len(parts) != 2:
            raise InventoryError(f"malformed GROUPMAP entry {entry!r}")
        p_label, g_label = parts
        if p_label not in phoneme_index:
            raise InventoryError(f"GROUPMAP references unknown phoneme {p_label!r}")
        if g_label not in group_index:
            raise InventoryError(f"GROUPMAP references unknown group {g_label!r}")
        pi = phoneme_index[p_label]
        if pi in assigned:
            raise InventoryError(f"phoneme {p_label!r} assigned to two groups")
        assigned[pi] = group_index[g_label]
    missing = [phonemes[i] for i in range(len(phonemes)) if i not in assigned]
    if missing:
        raise InventoryError(f"phonemes without group assignment: {missing}")
    group_of = tuple(assigned[i] for i in range(len(phonemes)))

    ipa_map: dict[str, int] = {}
    for entry in sections["IPAMAP"]:
        parts = entry.split()
        if len(parts) != 2:
            raise InventoryError(f"malformed IPAMAP entry {entry!r}")
        symbol, p_label = parts
        if p_label not in phoneme_index:
            raise InventoryError(f"IPAMAP references unknown phoneme {p_label!r}")
        if symbol in ipa_map:
            raise InventoryError(f"IPA symbol {symbol!r} mapped twice")
        ipa_map[symbol] = phoneme_index[p_label]

    silence_label: str | None = None
    blank_label = "<blank>"
    for entry in sections["SPECIAL"]:
        parts = entry.split(maxsplit=1)
        if len(parts) != 2:
            raise InventoryError(f"malformed SPECIAL entry {entry!r}")
        key, value = parts
        if key == "silence":
            silence_label = value.strip()
        elif key == "blank":
            blank_label = value.strip()
        else:
            raise InventoryError(f"unknown SPECIAL key {key!r}")
    if silence_label is None:
        raise InventoryError("SPECIAL section must designate a silence phoneme")
    if silence_label not in phoneme_index:
        raise InventoryError(f"silence label {silence_label!r} is not a phoneme")

    return PhonemeInventory(
        phonemes=phonemes,
        groups=groups,
        group_of=group_of,
        ipa_map=ipa_map,
        silence_id=phoneme_index[silence_label],
        blank_label=blank_label,
    )


def load_inventory_path(path, permissive: bool = False) -> PhonemeInventory:
    with open(path, "r", encoding="utf-8") as fh:
        return load_inventory(fh.read(), permissive=permissive)


def default_inventory() -> PhonemeInventory:
    """The 67-phoneme / 17-group inventory shipped with the package."""
    text = resources.files("gapalign.data").joinpath("inventory_ph67.txt").read_text("utf-8")
    return load_inventory(text)


def toy_inventory() -> PhonemeInventory:
    """Tiny 5-phoneme / 2-group inventory intended for tests and demos."""
    text = resources.files("gapalign.data").joinpath("inventory_toy.txt").read_text("utf-8")
    return load_inventory(text, permissive=True)


def strip_diacritics(symbol: str) -> str:
    """Drop stress, length, and articulation modifiers from an IPA symbol.

    Removes combining marks (Mn), modifier letters (Lm, which covers
    stress marks, the length mark, and superscript modifiers), and
    modifier symbols (Sk). The base letters survive, so a diphthong like
    "aɪ" passes through unchanged.
    """
    decomposed = unicodedata.normalize("NFD", symbol)
    kept = [c for c in decomposed if unicodedata.category(c) not in ("Mn", "Lm", "Sk")]
    return unicodedata.normalize("NFC", "".join(kept))


def map_ipa(
    inventory: PhonemeInventory,
    symbols: list[str],
    strict: bool = True,
    punctuation: frozenset[str] = DEFAULT_SILENCE_PUNCTUATION,
    source_text: str | None = None,
) -> TargetSequence:
    """Map an ordered list of IPA symbols to alignment targets.

    Punctuation symbols become silence markers. Unknown symbols fall back
    to a diacritic-stripped lookup; if that also fails, strict mode raises
    and lenient mode skips the symbol with a warning.

    Args:
        inventory: resolved inventory providing the symbol table.
        symbols: IPA symbols in utterance order, one phoneme per entry.
        strict: raise on unmappable symbols instead of skipping them.
        punctuation: symbols treated as structured silence.

    Raises:
        UnknownSymbolError: unmappable symbol in strict mode.
        ValueError: when no phoneme at all survives the mapping.
    """
    items: list[int] = []
    # positions are 1-based in messages: "position 2" is the second symbol
    for pos, symbol in enumerate(symbols, start=1):
        symbol = symbol.strip()
        if not symbol:
            continue
        if symbol in punctuation:
            items.append(SILENCE_BREAK)
            continue
        index = inventory.ipa_map.get(symbol)
        if index is None:
            stripped = strip_diacritics(symbol)
            if stripped and stripped != symbol:
                index = inventory.ipa_map.get(stripped)
        if index is None:
            if strict:
                raise UnknownSymbolError(symbol, pos)
            log.warning("skipping unmappable IPA symbol %r at position %d", symbol, pos)
            continue
        items.append(index)
    return TargetSequence(items=tuple(items), source_text=source_text)
