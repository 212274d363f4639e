"""Blank-interleaved CTC state path and exact Viterbi decoding.

Forced alignment decodes a posteriorgram against the expanded state path
[blank, p1, blank, p2, ..., pS, blank]. Three transitions are legal per
frame: stay on the current state, advance one state, or advance two
states (a blank skip). A two-state advance is banned when it would land
on the same label it left, which both forbids blank-to-blank jumps and
keeps a mandatory blank between repeated phonemes.

Scores are accumulated in float64 left to right, one frame at a time, so
the returned score is bit-identical to summing the winning trace's frame
logits in frame order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasibleAlignmentError
from .posterior import Posteriorgram

# backpointer codes are the position increments themselves
_STAY, _ADVANCE, _SKIP = 0, 1, 2


@dataclass(frozen=True)
class StatePath:
    """Expanded CTC state sequence for a target of length S.

    ``states[i]`` is the class index decoded at lattice position i:
    blanks at even positions, the s-th target phoneme at position 2s+1.
    """

    states: np.ndarray  # (2S+1,) int32 class indices
    blank_id: int

    @property
    def num_targets(self) -> int:
        return (len(self.states) - 1) // 2

    @property
    def num_positions(self) -> int:
        return len(self.states)

    def target_index(self, position: int) -> int | None:
        """Index into the target sequence for a phoneme position, else None."""
        return (position - 1) // 2 if position % 2 == 1 else None

    def min_frames(self) -> int:
        """Fewest frames any legal trace can occupy: one per phoneme plus
        one per mandatory blank between equal neighbors."""
        phonemes = self.states[1::2]
        return len(phonemes) + int(np.sum(phonemes[1:] == phonemes[:-1]))


@dataclass(frozen=True)
class StateTrace:
    """Best-path result: one lattice position per frame plus its score."""

    positions: np.ndarray  # (T,) int32 lattice positions
    score: float


@dataclass(frozen=True)
class OccupancyRun:
    """Maximal run of consecutive frames on one lattice position."""

    position: int
    label: int  # class index decoded during the run
    start_frame: int
    end_frame: int  # exclusive

    @property
    def num_frames(self) -> int:
        return self.end_frame - self.start_frame


def build_state_path(target_indices: Sequence[int], blank_id: int) -> StatePath:
    """Interleave blanks around and between the target phonemes.

    Args:
        target_indices: phoneme class indices in utterance order (S >= 1).
        blank_id: class index of the CTC blank.

    Raises:
        ValueError: empty targets, or blank_id appearing among them.
    """
    targets = np.asarray(list(target_indices), dtype=np.int32)
    if targets.size == 0:
        raise ValueError("cannot build a state path for empty targets")
    if np.any(targets == blank_id):
        raise ValueError("blank is implicit in the lattice and cannot be a target")
    if np.any(targets < 0):
        raise ValueError("negative phoneme index in targets")
    states = np.full(2 * targets.size + 1, blank_id, dtype=np.int32)
    states[1::2] = targets
    return StatePath(states=states, blank_id=blank_id)


def viterbi(pgram: Posteriorgram, path: StatePath) -> StateTrace:
    """Exact best-path decode of the posteriorgram against the state path.

    Recursion per frame: alpha[t, s] = max(alpha[t-1, s], alpha[t-1, s-1],
    alpha[t-1, s-2]) + logit(t, states[s]), with the two-step option
    removed where states[s] == states[s-2]. Starts on position 0 or 1,
    ends on position 2S-1 or 2S. Ties prefer the smaller step
    (stay < advance < skip), and the final-frame tie prefers ending on
    the last phoneme over the trailing blank, so decoding is
    deterministic and biased toward longer occupancy.

    Raises:
        InfeasibleAlignmentError: no legal trace fits, either because T is
            below the minimum trace length or because hard zeros cut every
            surviving path; the message names the offending frame.
        ValueError: a state label outside the posteriorgram's class axis.
    """
    states = path.states
    L = len(states)
    T = pgram.num_frames
    if int(states.max()) >= pgram.num_classes:
        raise ValueError(
            f"state label {int(states.max())} out of range for V={pgram.num_classes}"
        )
    need = path.min_frames()
    if T < need:
        raise InfeasibleAlignmentError(
            f"{T} frames cannot fit {path.num_targets} targets "
            f"(minimum legal trace length is {need})"
        )

    logits = pgram.logits
    # skip transitions are illegal into position s when it repeats the
    # label of s-2 (covers blank->blank and repeated phonemes)
    skip_ok = np.zeros(L, dtype=bool)
    if L > 2:
        skip_ok[2:] = states[2:] != states[:-2]

    # positions below this line at frame t can no longer reach the end
    # even advancing two states per remaining frame
    def reach_floor(t: int) -> int:
        return max(0, (L - 2) - 2 * (T - 1 - t))

    alpha = np.full(L, -np.inf, dtype=np.float64)
    obs = logits[0].astype(np.float64)[states]
    alpha[0] = obs[0]
    alpha[1] = obs[1]
    alpha[: reach_floor(0)] = -np.inf
    if not np.any(alpha > -np.inf):
        raise InfeasibleAlignmentError("no reachable state survives frame 0")

    backptr = np.zeros((T, L), dtype=np.int8)
    cand = np.full((3, L), -np.inf, dtype=np.float64)
    skip_banned = np.flatnonzero(~skip_ok)
    cols = np.arange(L)
    for t in range(1, T):
        cand[0] = alpha
        cand[1, 1:] = alpha[:-1]
        cand[2, 2:] = alpha[:-2]
        cand[2, skip_banned] = -np.inf
        # argmax down the rows [stay, advance, skip] keeps the first
        # maximum, which is exactly the stay < advance < skip preference
        choice = np.argmax(cand, axis=0)
        best = cand[choice, cols]
        obs = logits[t].astype(np.float64)[states]
        alpha = best + obs
        alpha[best == -np.inf] = -np.inf  # guard -inf + inf
        alpha[: reach_floor(t)] = -np.inf
        backptr[t] = choice
        if not np.any(alpha > -np.inf):
            raise InfeasibleAlignmentError(
                f"every surviving path has zero probability at frame {t}"
            )

    end_phoneme, end_blank = L - 2, L - 1
    if alpha[end_phoneme] >= alpha[end_blank]:
        pos = end_phoneme
    else:
        pos = end_blank
    score = float(alpha[pos])
    if score == -np.inf:
        raise InfeasibleAlignmentError(
            f"every surviving path has zero probability at frame {T - 1}"
        )

    positions = np.empty(T, dtype=np.int32)
    positions[T - 1] = pos
    for t in range(T - 1, 0, -1):
        # int() first: int8 steps would clamp the subtraction for L > 127
        pos -= int(backptr[t, pos])
        positions[t - 1] = pos
    return StateTrace(positions=positions, score=score)


def backtrace_to_occupancy(
    trace: StateTrace, path: StatePath, pgram: Posteriorgram
) -> list[OccupancyRun]:
    """Compress the per-frame trace into runs of constant lattice position.

    Runs cover [0, T) exactly, in order, without overlap. Consecutive runs
    sit on strictly increasing positions (skipped blanks simply produce
    adjacent phoneme runs).
    """
    positions = trace.positions
    if len(positions) != pgram.num_frames:
        raise ValueError("trace length does not match posteriorgram frames")
    runs: list[OccupancyRun] = []
    start = 0
    for t in range(1, len(positions) + 1):
        if t == len(positions) or positions[t] != positions[start]:
            pos = int(positions[start])
            runs.append(
                OccupancyRun(
                    position=pos,
                    label=int(path.states[pos]),
                    start_frame=start,
                    end_frame=t,
                )
            )
            start = t
    return runs
