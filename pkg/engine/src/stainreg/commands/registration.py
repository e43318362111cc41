# src/stainreg/commands/registration.py
import argparse
import json
import logging
from pathlib import Path

from stainreg.commands import echo_config, prepare_output
from stainreg.config import Settings
from stainreg.data.atomic import atomic_write_text
from stainreg.data.encoders import ResultJSONEncoder
from stainreg.errors import ArgumentError
from stainreg.evalbench.landmarks import SubmissionRecord, format_csv, read_truth, write_submission
from stainreg.raster.image import read_pnm
from stainreg.register.pipeline import (
    diagnostics_row,
    find_bundles,
    format_diagnostics,
    register_batch,
    register_pair,
)
from stainreg.register.results import RegResult
from stainreg.transform.geometry import map_landmarks
from stainreg.transform.io import format_transform, read_transform, write_transform

_log = logging.getLogger(__name__)

FLAGS_HEADER = ("pair_id", "point_id", "confident")


def trace_record(pair_id: str, result: RegResult) -> dict:
    """JSON-ready summary of one registration run."""
    return {
        "pair_id": pair_id,
        "transform": format_transform(result.transform),
        "flags": result.flags,
        "alpha": result.alpha,
        "final_objective": result.final_objective,
        "prealign_scores": result.prealign_scores,
        "objective_trace": result.objective_trace,
        "timings": result.timings,
        "error": result.error,
    }


def register(args: argparse.Namespace, settings: Settings) -> int:
    fixed = read_pnm(args.fixed)
    moving = read_pnm(args.moving)
    pair_id = args.pair_id or Path(args.moving).stem
    result = register_pair(fixed, moving, settings.registration(), pair_id)

    write_transform(result.transform, prepare_output(args.out))
    if args.diagnostics:
        atomic_write_text(prepare_output(args.diagnostics), format_diagnostics([diagnostics_row(pair_id, result)]))
    if args.trace:
        text = json.dumps(trace_record(pair_id, result), cls=ResultJSONEncoder, indent=2, sort_keys=True)
        atomic_write_text(prepare_output(args.trace), text + "\n")
    echo_config(settings, args.out)

    if result.flags.failed:
        _log.warning("Registration of '%s' failed; wrote the identity transform: %s", pair_id, result.error)
    return 0


def batch(args: argparse.Namespace, settings: Settings) -> int:
    if not find_bundles(args.bundles):
        raise ArgumentError(f"No case_* bundles found under '{args.bundles}'")
    outcomes = register_batch(args.bundles, args.out, settings.registration(), settings.runtime.workers)
    echo_config(settings, args.out, directory=True)
    _log.info("Registered %d bundle(s) into %s", len(outcomes), args.out)
    return 0


def map_landmarks_command(args: argparse.Namespace, settings: Settings) -> int:
    if not Path(args.transform).is_file():
        raise ArgumentError(f"Transform file '{args.transform}' does not exist")
    transform = read_transform(args.transform)
    records = read_truth(args.landmarks)
    if not records:
        raise ArgumentError(f"No landmarks in '{args.landmarks}'")

    mapped, confident = map_landmarks(transform, [r.src for r in records])
    submission = [
        SubmissionRecord(r.pair_id, r.point_id, float(x), float(y)) for r, (x, y) in zip(records, mapped, strict=True)
    ]
    out = prepare_output(args.out)
    write_submission(submission, out)

    flags_path = Path(args.flags) if args.flags else out.with_name(f"{out.stem}.flags.csv")
    rows = ([r.pair_id, r.point_id, str(int(ok))] for r, ok in zip(records, confident, strict=True))
    atomic_write_text(prepare_output(flags_path), format_csv(FLAGS_HEADER, rows))
    echo_config(settings, out)

    if not confident.all():
        _log.warning("%d of %d landmark(s) mapped with low confidence", int((~confident).sum()), len(records))
    return 0


def setup(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("register", help="Register one moving image onto a fixed image")
    parser.add_argument("--fixed", required=True, help="Fixed (H&E) image, binary PNM")
    parser.add_argument("--moving", required=True, help="Moving (IHC) image, binary PNM")
    parser.add_argument("--out", required=True, help="Transform file to write")
    parser.add_argument("--diagnostics", help="Optional one-row diagnostics CSV")
    parser.add_argument("--trace", help="Optional JSON record of traces, flags and timings")
    parser.add_argument("--pair-id", help="Pair id used in diagnostics (default: moving file stem)")
    parser.set_defaults(handler=register)

    parser = subparsers.add_parser("batch", help="Register every case bundle in a directory")
    parser.add_argument("--bundles", required=True, help="Directory holding case_* bundles")
    parser.add_argument("--out", required=True, help="Directory receiving transforms, diagnostics and submission")
    parser.set_defaults(handler=batch)

    parser = subparsers.add_parser("map-landmarks", help="Carry source landmarks into the fixed frame")
    parser.add_argument("--transform", required=True)
    parser.add_argument("--landmarks", required=True, help="Truth CSV holding the source landmarks")
    parser.add_argument("--out", required=True, help="Submission CSV to write")
    parser.add_argument("--flags", help="Inversion confidence CSV (default: <out stem>.flags.csv)")
    parser.set_defaults(handler=map_landmarks_command)
