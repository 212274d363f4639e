"""Synthetic posteriorgrams with known ground truth.

Scenarios script an utterance frame by frame: each phoneme gets a
duration, optional blank frames after it (an inter-phoneme gap), and
optionally a silence block that corresponds to a silence marker in the
targets. Edge silence and gap frames are blank-dominant; marker-paired
silence blocks are silence-dominant, which is what the silence detector
keys on. The scripted class receives ``peak`` probability and the rest
of the mass is spread over the other classes by a softmax over seeded
uniform noise, so generation is bit-reproducible given the seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .phoneset import SILENCE_BREAK, PhonemeInventory, TargetSequence
from .pipeline import Alignment, PhonemeInterval
from .posterior import Posteriorgram


@dataclass(frozen=True)
class SynthPhone:
    """One scripted phoneme with its trailing silence."""

    label: str
    frames: int
    gap_after: int = 0  # blank frames after this phoneme
    silence_after: int = 0  # silence-block frames; > 0 also emits a marker


@dataclass(frozen=True)
class SynthScenario:
    """Deterministic recipe for one synthetic utterance."""

    phones: tuple[SynthPhone, ...]
    peak: float = 1.0
    temperature: float = 0.0  # 0 spreads off-mass uniformly
    seed: int = 0
    frame_hop_ms: float = 10.0
    leading_silence_frames: int = 0
    trailing_silence_frames: int = 0
    expected_total_frames: int | None = None

    def __post_init__(self):
        if not self.phones:
            raise ValueError("scenario needs at least one phoneme")
        if not (0 < self.peak <= 1):
            raise ValueError("peak must be in (0, 1]")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.leading_silence_frames < 0 or self.trailing_silence_frames < 0:
            raise ValueError("edge silence must be >= 0 frames")
        for ph in self.phones:
            if ph.frames < 1:
                raise ValueError(f"phoneme {ph.label!r} must last at least one frame")
            if ph.gap_after < 0 or ph.silence_after < 0:
                raise ValueError(f"negative silence after {ph.label!r}")

    def total_frames(self) -> int:
        n = self.leading_silence_frames + self.trailing_silence_frames
        for ph in self.phones:
            n += ph.frames + ph.gap_after + ph.silence_after
        return n


def generate(
    scenario: SynthScenario, inv: PhonemeInventory
) -> tuple[Posteriorgram, Alignment, TargetSequence]:
    """Materialize a scenario against an inventory.

    Returns the posteriorgram, the reference alignment holding the
    scripted intervals exactly, and the target sequence (with silence
    markers where the scenario placed silence blocks).

    Raises:
        ValueError: scenario timing inconsistent (expected_total_frames
            set and different from the scripted sum), or malformed fields.
        InventoryError: a scripted label missing from the inventory.
    """
    T = scenario.total_frames()
    if scenario.expected_total_frames is not None and scenario.expected_total_frames != T:
        raise ValueError(
            f"scenario scripts {T} frames but declares {scenario.expected_total_frames}"
        )
    V = inv.num_classes("phoneme")
    blank = inv.blank_id
    sil = inv.silence_id

    script = np.empty(T, dtype=np.int64)
    t = 0
    script[t : t + scenario.leading_silence_frames] = blank
    t += scenario.leading_silence_frames
    interval_frames: list[tuple[int, int, int]] = []  # class, start, end
    items: list[int] = []
    for ph in scenario.phones:
        c = inv.index(ph.label)
        items.append(c)
        script[t : t + ph.frames] = c
        interval_frames.append((c, t, t + ph.frames))
        t += ph.frames
        script[t : t + ph.gap_after] = blank
        t += ph.gap_after
        if ph.silence_after > 0:
            script[t : t + ph.silence_after] = sil
            t += ph.silence_after
            items.append(SILENCE_BREAK)
    script[t : t + scenario.trailing_silence_frames] = blank

    probs = np.zeros((T, V), dtype=np.float64)
    if scenario.peak == 1.0:
        probs[np.arange(T), script] = 1.0
    else:
        rng = np.random.default_rng(scenario.seed)
        off = 1.0 - scenario.peak
        for i in range(T):
            noise = rng.uniform(size=V - 1)
            if scenario.temperature == 0:
                w = np.full(V - 1, 1.0 / (V - 1))
            else:
                e = np.exp(noise / scenario.temperature)
                w = e / e.sum()
            row = np.empty(V, dtype=np.float64)
            others = np.arange(V) != script[i]
            row[others] = off * w
            row[script[i]] = scenario.peak
            probs[i] = row

    with np.errstate(divide="ignore"):
        logits = np.log(probs).astype(np.float32)
    pgram = Posteriorgram(logits, scenario.frame_hop_ms, 0.0, "phoneme")

    hop = scenario.frame_hop_ms
    intervals = tuple(
        PhonemeInterval(
            label=c,
            start_ms=a * hop,
            end_ms=b * hop,
            score=float(logits[a:b, c].mean(dtype=np.float64)),
        )
        for c, a, b in interval_frames
    )
    reference = Alignment(intervals=intervals, utterance_span_ms=T * hop)
    targets = TargetSequence(items=tuple(items))
    return pgram, reference, targets


def scenario_to_json_obj(scenario: SynthScenario) -> dict:
    obj = {
        "seed": scenario.seed,
        "peak": scenario.peak,
        "temperature": scenario.temperature,
        "frame_hop_ms": scenario.frame_hop_ms,
        "leading_silence_frames": scenario.leading_silence_frames,
        "trailing_silence_frames": scenario.trailing_silence_frames,
        "phones": [
            {
                "label": ph.label,
                "frames": ph.frames,
                "gap_after": ph.gap_after,
                "silence_after": ph.silence_after,
            }
            for ph in scenario.phones
        ],
    }
    if scenario.expected_total_frames is not None:
        obj["total_frames"] = scenario.expected_total_frames
    return obj


def scenario_from_json_obj(obj: dict) -> SynthScenario:
    try:
        phones = tuple(
            SynthPhone(
                label=ph["label"],
                frames=int(ph["frames"]),
                gap_after=int(ph.get("gap_after", 0)),
                silence_after=int(ph.get("silence_after", 0)),
            )
            for ph in obj["phones"]
        )
        return SynthScenario(
            phones=phones,
            peak=float(obj.get("peak", 1.0)),
            temperature=float(obj.get("temperature", 0.0)),
            seed=int(obj.get("seed", 0)),
            frame_hop_ms=float(obj.get("frame_hop_ms", 10.0)),
            leading_silence_frames=int(obj.get("leading_silence_frames", 0)),
            trailing_silence_frames=int(obj.get("trailing_silence_frames", 0)),
            expected_total_frames=(
                int(obj["total_frames"]) if "total_frames" in obj else None
            ),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scenario document: {exc}") from exc


def load_scenario(path) -> SynthScenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_json_obj(json.load(fh))


def save_scenario(scenario: SynthScenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_json_obj(scenario), fh, indent=2)
        fh.write("\n")
