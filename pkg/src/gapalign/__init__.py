"""Silence-aware CTC forced alignment on posteriorgrams.

Decodes frame-level phoneme log-probabilities against a known phoneme
sequence, keeping explicit inter-phoneme gaps, and ships the matching
boundary evaluation suite.
"""
from .errors import (
    ExternalToolError,
    FormatError,
    GapalignError,
    InfeasibleAlignmentError,
    InventoryError,
    UnknownSymbolError,
)
from .lattice import (
    OccupancyRun,
    StatePath,
    StateTrace,
    backtrace_to_occupancy,
    build_state_path,
    viterbi,
)
from .metrics import (
    BoundarySet,
    EvalReport,
    GapStats,
    Histogram,
    boundaries_from_alignment,
    boundary_distances,
    deletions_insertions,
    error_histogram,
    evaluate,
    gap_stats,
    precision_at,
    recall_at,
)
from .phoneset import (
    SILENCE_BREAK,
    PhonemeInventory,
    TargetSequence,
    default_inventory,
    load_inventory,
    load_inventory_path,
    map_ipa,
    toy_inventory,
)
from .pipeline import (
    AlignConfig,
    Alignment,
    PhonemeInterval,
    align,
    apply_floor,
    boost_targets,
    close_small_gaps,
    detect_silence_regions,
    enforce_completeness,
    extract_intervals,
    hierarchical_align,
)
from .posterior import Posteriorgram, from_probabilities, read_pgram, write_pgram
from .synth import SynthPhone, SynthScenario, generate

__version__ = "0.1.0"

__all__ = [
    "AlignConfig",
    "Alignment",
    "BoundarySet",
    "EvalReport",
    "ExternalToolError",
    "FormatError",
    "GapStats",
    "GapalignError",
    "Histogram",
    "InfeasibleAlignmentError",
    "InventoryError",
    "OccupancyRun",
    "PhonemeInterval",
    "PhonemeInventory",
    "Posteriorgram",
    "SILENCE_BREAK",
    "StatePath",
    "StateTrace",
    "SynthPhone",
    "SynthScenario",
    "TargetSequence",
    "UnknownSymbolError",
    "align",
    "apply_floor",
    "backtrace_to_occupancy",
    "boost_targets",
    "boundaries_from_alignment",
    "boundary_distances",
    "build_state_path",
    "close_small_gaps",
    "default_inventory",
    "deletions_insertions",
    "detect_silence_regions",
    "enforce_completeness",
    "error_histogram",
    "evaluate",
    "extract_intervals",
    "from_probabilities",
    "gap_stats",
    "generate",
    "hierarchical_align",
    "load_inventory",
    "load_inventory_path",
    "map_ipa",
    "precision_at",
    "read_pgram",
    "recall_at",
    "toy_inventory",
    "viterbi",
    "write_pgram",
]
