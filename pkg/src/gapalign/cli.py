"""Command-line interface.

Subcommands: align (decode posteriorgrams against targets), eval (score
predicted alignments against references), synth (generate synthetic
fixtures with known truth), g2p (text to targets via espeak-ng), and
bench (throughput measurement).

Exit codes: 0 success, 2 input or format error, 3 infeasible alignment,
4 external tool failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import documents, g2p, metrics, posterior, synth, textgrid
from .errors import (
    ExternalToolError,
    FormatError,
    GapalignError,
    InfeasibleAlignmentError,
    InventoryError,
    UnknownSymbolError,
)
from .phoneset import (
    PhonemeInventory,
    TargetSequence,
    default_inventory,
    load_inventory_path,
    map_ipa,
)
from .pipeline import AlignConfig, align

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_EXTERNAL = 4


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta", type=float, default=5.0, help="probability boost factor")
    p.add_argument("--floor", type=float, default=1e-8, help="minimum target probability")
    p.add_argument("--no-boost", action="store_true", help="disable probability boosting")
    p.add_argument("--no-enforce", action="store_true", help="disable completeness enforcement")
    p.add_argument(
        "--no-hierarchical", action="store_true", help="disable silence-split decoding"
    )
    p.add_argument(
        "--gap-tolerance", type=float, default=0.0, metavar="MS",
        help="close inter-phoneme gaps shorter than this many ms",
    )
    p.add_argument(
        "--silence-threshold", type=float, default=0.5, metavar="P",
        help="posterior mass above which a frame counts as silent",
    )
    p.add_argument(
        "--silence-min-dur", type=float, default=100.0, metavar="MS",
        help="shortest silent run used for hierarchical splitting",
    )


def _add_inventory_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--inventory", type=Path, default=None, help="inventory document path")
    p.add_argument(
        "--permissive-inventory", action="store_true",
        help="accept inventories with non-standard phoneme/group counts",
    )


def _config_from_args(args: argparse.Namespace) -> AlignConfig:
    return AlignConfig(
        boost_factor=args.beta,
        floor=args.floor,
        boost_enabled=not args.no_boost,
        enforce_completeness=not args.no_enforce,
        hierarchical=not args.no_hierarchical,
        gap_tolerance_ms=args.gap_tolerance,
        silence_threshold=args.silence_threshold,
        silence_min_duration_ms=args.silence_min_dur,
    )


def _inventory_from_args(args: argparse.Namespace) -> PhonemeInventory:
    if args.inventory is None:
        return default_inventory()
    return load_inventory_path(args.inventory, permissive=args.permissive_inventory)


def _read_pgram(path: Path) -> posterior.Posteriorgram:
    if path.suffix == ".json":
        return posterior.read_json(path)
    return posterior.read_pgram(path)


def _align_one(
    pgram_path: Path,
    targets_path: Path | None,
    ipa: str | None,
    inv: PhonemeInventory,
    cfg: AlignConfig,
    out_path: Path,
    fmt: str,
    utterance_id: str,
    lenient: bool,
) -> None:
    pgram = _read_pgram(pgram_path)
    if targets_path is not None:
        targets = documents.read_targets_doc(targets_path, inv)
    else:
        targets = map_ipa(inv, ipa.split(), strict=not lenient)
    result = align(pgram, targets, inv, cfg)
    if fmt == "textgrid":
        names = list(inv.phonemes) + [inv.blank_label]
        documents.write_text_atomic(textgrid.render_textgrid(result, names), out_path)
    else:
        doc = documents.alignment_to_doc(
            result,
            inv,
            utterance_id,
            pgram.frame_hop_ms,
            pgram.frame_offset_ms,
            config=documents.config_to_json_obj(cfg),
        )
        documents.write_json_atomic(doc, out_path)


def cmd_align(args: argparse.Namespace) -> int:
    inv = _inventory_from_args(args)
    cfg = _config_from_args(args)
    ext = ".TextGrid" if args.format == "textgrid" else ".align.json"

    if args.pgram.is_dir():
        if args.ipa is not None:
            raise FormatError("inline --ipa cannot be combined with a batch directory")
        if args.targets is None or not args.targets.is_dir():
            raise FormatError("batch alignment needs --targets pointing at a directory")
        args.out.mkdir(parents=True, exist_ok=True)
        jobs = []
        for pgram_path in sorted(args.pgram.glob("*.pgram")):
            stem = pgram_path.stem
            targets_path = args.targets / f"{stem}.targets.json"
            if not targets_path.exists():
                raise FormatError(f"no targets document for utterance {stem!r}")
            jobs.append((stem, pgram_path, targets_path, args.out / f"{stem}{ext}"))
        if not jobs:
            raise FormatError(f"no .pgram files in {args.pgram}")

        def run(job):
            stem, pgram_path, targets_path, out_path = job
            _align_one(
                pgram_path, targets_path, None, inv, cfg, out_path,
                args.format, stem, args.lenient,
            )

        failures: list[tuple[str, Exception]] = []
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            for job, result in zip(jobs, pool.map(_trap(run), jobs)):
                if result is not None:
                    failures.append((job[0], result))
        if failures:
            for stem, exc in failures:
                print(f"{stem}: {exc}", file=sys.stderr)
            return _classify(failures[0][1])
        print(f"aligned {len(jobs)} utterances into {args.out}")
        return EXIT_OK

    utterance_id = args.utterance_id or args.pgram.stem
    out_path = args.out
    if out_path.is_dir():
        out_path = out_path / f"{utterance_id}{ext}"
    _align_one(
        args.pgram, args.targets, args.ipa, inv, cfg, out_path,
        args.format, utterance_id, args.lenient,
    )
    print(f"wrote {out_path}")
    return EXIT_OK


def _trap(fn):
    def wrapper(job):
        try:
            fn(job)
            return None
        except Exception as exc:  # collected and reported per utterance
            return exc

    return wrapper


def cmd_eval(args: argparse.Namespace) -> int:
    pred_docs = {d["utterance_id"]: d for d in map(documents.read_alignment_doc,
                                                   sorted(args.pred.glob("*.json")))}
    ref_docs = {d["utterance_id"]: d for d in map(documents.read_alignment_doc,
                                                  sorted(args.ref.glob("*.json")))}
    missing_pred = sorted(set(ref_docs) - set(pred_docs))
    missing_ref = sorted(set(pred_docs) - set(ref_docs))
    if missing_pred or missing_ref:
        if missing_pred:
            print(f"utterances without predictions: {missing_pred}", file=sys.stderr)
        if missing_ref:
            print(f"utterances without references: {missing_ref}", file=sys.stderr)
        return EXIT_INPUT
    if not ref_docs:
        print("no utterances to evaluate", file=sys.stderr)
        return EXIT_INPUT

    tolerances = tuple(float(t) for t in args.tolerances.split(","))
    pairs = []
    for utt_id in sorted(ref_docs):
        ref_bs = documents.doc_boundary_set(ref_docs[utt_id], onset_only=args.onset_only)
        pred_bs = documents.doc_boundary_set(pred_docs[utt_id])
        pred_alignment = documents.doc_alignment(pred_docs[utt_id])
        pairs.append((utt_id, ref_bs, pred_bs, pred_alignment))

    report = metrics.evaluate(
        pairs,
        tolerances_ms=tolerances,
        match_window_ms=args.match_window,
        bin_width_ms=args.bin_width,
        hist_max_ms=args.hist_max,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    documents.write_text_atomic(metrics.report_to_json(report), args.out / "report.json")
    documents.write_text_atomic(metrics.render_table(report), args.out / "report.txt")
    documents.write_text_atomic(report.histogram.to_csv(), args.out / "histogram.csv")
    if args.per_utterance:
        for utt_id, ref_bs, pred_bs, pred_alignment in pairs:
            single = metrics.evaluate(
                [(utt_id, ref_bs, pred_bs, pred_alignment)],
                tolerances_ms=tolerances,
                match_window_ms=args.match_window,
                bin_width_ms=args.bin_width,
                hist_max_ms=args.hist_max,
            )
            documents.write_text_atomic(
                metrics.report_to_json(single), args.out / f"{utt_id}.eval.json"
            )
    sys.stdout.write(metrics.render_table(report))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    inv = _inventory_from_args(args)
    scenario = synth.load_scenario(args.scenario)
    pgram, reference, targets = synth.generate(scenario, inv)
    args.out.mkdir(parents=True, exist_ok=True)
    utt = args.utterance_id
    posterior.write_pgram(pgram, args.out / f"{utt}.pgram")
    ref_doc = documents.alignment_to_doc(
        reference,
        inv,
        utt,
        pgram.frame_hop_ms,
        pgram.frame_offset_ms,
        config={"synthetic_scenario": synth.scenario_to_json_obj(scenario)},
    )
    documents.write_json_atomic(ref_doc, args.out / f"{utt}.ref.json")
    documents.write_json_atomic(
        documents.targets_to_doc(targets, inv, utterance_id=utt),
        args.out / f"{utt}.targets.json",
    )
    print(f"wrote {utt}.pgram, {utt}.ref.json, {utt}.targets.json to {args.out}")
    return EXIT_OK


def cmd_g2p(args: argparse.Namespace) -> int:
    inv = _inventory_from_args(args)
    symbols, raw = g2p.transcribe(args.text, language=args.lang)
    targets = map_ipa(inv, symbols, strict=not args.lenient, source_text=args.text)
    doc = documents.targets_to_doc(
        targets, inv, utterance_id=args.utterance_id, raw_g2p=raw
    )
    if args.out is not None:
        documents.write_json_atomic(doc, args.out)
        print(f"wrote {args.out}")
    else:
        json.dump(doc, sys.stdout, ensure_ascii=False, indent=2)
        sys.stdout.write("\n")
    return EXIT_OK


def _bench_inventory(num_classes: int) -> PhonemeInventory:
    labels = tuple(f"p{i:03d}" for i in range(num_classes - 1))
    return PhonemeInventory(
        phonemes=labels,
        groups=("all",),
        group_of=(0,) * len(labels),
        ipa_map={},
        silence_id=0,
    )


def cmd_bench(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    V = args.classes
    probs = rng.dirichlet(np.ones(V), size=args.frames)
    logits = np.log(probs).astype(np.float32)
    pgram = posterior.Posteriorgram(logits, args.hop, 0.0, "phoneme")
    inv = _bench_inventory(V)
    target_ids = rng.integers(0, V - 1, size=args.targets)
    targets = TargetSequence(items=tuple(int(i) for i in target_ids))
    cfg = _config_from_args(args)

    timings_ms = []
    for _ in range(args.reps):
        t0 = time.perf_counter()
        align(pgram, targets, inv, cfg)
        timings_ms.append((time.perf_counter() - t0) * 1000.0)
    median_ms = statistics.median(timings_ms)
    audio_ms = args.frames * args.hop
    rtf = median_ms / audio_ms
    print(f"frames={args.frames} targets={args.targets} classes={V} reps={args.reps}")
    print("per-rep ms: " + ", ".join(f"{t:.2f}" for t in timings_ms))
    print(f"median: {median_ms:.2f} ms over {audio_ms:.0f} ms of audio  RTF: {rtf:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gapalign",
        description="Silence-aware forced alignment on posteriorgrams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="align posteriorgrams against known targets")
    p.add_argument("--pgram", type=Path, required=True,
                   help="posteriorgram file (.pgram or .json) or directory of .pgram files")
    p.add_argument("--targets", type=Path, default=None,
                   help="targets document or directory of <id>.targets.json files")
    p.add_argument("--ipa", type=str, default=None,
                   help="inline space-separated IPA symbols instead of --targets")
    p.add_argument("--out", type=Path, required=True, help="output file or directory")
    p.add_argument("--format", choices=("json", "textgrid"), default="json")
    p.add_argument("--utterance-id", type=str, default=None)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers in batch mode")
    p.add_argument("--lenient", action="store_true",
                   help="skip unmappable IPA symbols instead of failing")
    _add_inventory_flags(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="score predicted alignments against references")
    p.add_argument("--pred", type=Path, required=True, help="directory of predicted documents")
    p.add_argument("--ref", type=Path, required=True, help="directory of reference documents")
    p.add_argument("--out", type=Path, default=Path("."), help="report output directory")
    p.add_argument("--tolerances", type=str, default="20,40,60", help="ms, comma-separated")
    p.add_argument("--match-window", type=float, default=100.0,
                   help="onset window for deletion/insertion matching (ms)")
    p.add_argument("--bin-width", type=float, default=10.0, help="histogram bin width (ms)")
    p.add_argument("--hist-max", type=float, default=100.0, help="histogram overflow edge (ms)")
    p.add_argument("--onset-only", action="store_true",
                   help="treat references as onset-only annotations")
    p.add_argument("--per-utterance", action="store_true",
                   help="also write one report per utterance")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic fixture from a scenario")
    p.add_argument("--scenario", type=Path, required=True, help="scenario JSON path")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--utterance-id", type=str, default="synth")
    _add_inventory_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("g2p", help="convert text to a targets document via espeak-ng")
    p.add_argument("--text", type=str, required=True)
    p.add_argument("--lang", type=str, default="en-us")
    p.add_argument("--out", type=Path, default=None, help="targets document path (default stdout)")
    p.add_argument("--utterance-id", type=str, default=None)
    p.add_argument("--lenient", action="store_true")
    _add_inventory_flags(p)
    p.set_defaults(func=cmd_g2p)

    p = sub.add_parser("bench", help="measure alignment throughput on random input")
    p.add_argument("--frames", type=int, default=310)
    p.add_argument("--targets", type=int, default=40)
    p.add_argument("--classes", type=int, default=68)
    p.add_argument("--reps", type=int, default=7)
    p.add_argument("--hop", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def _classify(exc: Exception) -> int:
    if isinstance(exc, InfeasibleAlignmentError):
        return EXIT_INFEASIBLE
    if isinstance(exc, ExternalToolError):
        return EXIT_EXTERNAL
    if isinstance(
        exc,
        (FormatError, InventoryError, UnknownSymbolError, FileNotFoundError,
         NotADirectoryError, ValueError, GapalignError),
    ):
        return EXIT_INPUT
    raise exc


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("GAPALIGN_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped onto exit codes
        code = _classify(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
