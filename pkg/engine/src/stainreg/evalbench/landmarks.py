# src/stainreg/evalbench/landmarks.py
import csv
import io
import logging
import math
import os
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from stainreg.data.atomic import atomic_write_text
from stainreg.errors import ArgumentError, UnreadableInputError, ValidationError
from stainreg.util import format_float

_log = logging.getLogger(__name__)

TRUTH_HEADER = ("pair_id", "point_id", "src_x", "src_y", "tgt1_x", "tgt1_y", "tgt2_x", "tgt2_y", "mpp")
SUBMISSION_HEADER = ("pair_id", "point_id", "reg_x", "reg_y")
DIMS_HEADER = ("pair_id", "width", "height")

DBA_THRESHOLD_UM = 115.0
MIN_LANDMARKS_PER_PAIR = 10

Key = tuple[str, str]


@dataclass(frozen=True)
class LandmarkRecord:
    """One annotated point: source position (IHC) and two annotator targets (H&E), in pixels."""

    pair_id: str
    point_id: str
    src_x: float
    src_y: float
    tgt1_x: float
    tgt1_y: float
    tgt2_x: float
    tgt2_y: float
    mpp: float

    def __post_init__(self):
        coords = (self.src_x, self.src_y, self.tgt1_x, self.tgt1_y, self.tgt2_x, self.tgt2_y)
        if not all(math.isfinite(c) for c in coords):
            raise ArgumentError(f"Landmark {self.key} has non-finite coordinates")
        if not (math.isfinite(self.mpp) and self.mpp > 0):
            raise ArgumentError(f"Landmark {self.key} has invalid mpp {self.mpp}")

    @property
    def key(self) -> Key:
        return self.pair_id, self.point_id

    @property
    def src(self) -> tuple[float, float]:
        return self.src_x, self.src_y


@dataclass(frozen=True)
class SubmissionRecord:
    """Registered position of one landmark in the H&E frame; both coordinates None when missing."""

    pair_id: str
    point_id: str
    reg_x: float | None = None
    reg_y: float | None = None

    @property
    def key(self) -> Key:
        return self.pair_id, self.point_id

    @property
    def missing(self) -> bool:
        return self.reg_x is None or self.reg_y is None


@dataclass(frozen=True)
class PairDims:
    width: int
    height: int


# --- Distances ---


def dba(record: LandmarkRecord) -> float:
    """Distance between the two annotators, in micrometers."""
    return math.hypot(record.tgt1_x - record.tgt2_x, record.tgt1_y - record.tgt2_y) * record.mpp


def tre(reg: tuple[float, float], record: LandmarkRecord) -> float:
    """Mean distance from a registered point to both annotator targets, in micrometers."""
    d1 = math.hypot(reg[0] - record.tgt1_x, reg[1] - record.tgt1_y)
    d2 = math.hypot(reg[0] - record.tgt2_x, reg[1] - record.tgt2_y)
    return (d1 + d2) / 2.0 * record.mpp


# --- Exclusion Rules ---


def filter_landmarks(
    records: Iterable[LandmarkRecord],
    dba_threshold_um: float = DBA_THRESHOLD_UM,
    min_per_pair: int = MIN_LANDMARKS_PER_PAIR,
) -> tuple[list[LandmarkRecord], list[str]]:
    """
    Drops landmarks whose annotators disagree by more than `dba_threshold_um`,
    then whole pairs left with fewer than `min_per_pair` landmarks.

    Returns the kept records (input order) and the sorted ids of excluded pairs.
    """
    if dba_threshold_um <= 0 or min_per_pair <= 0:
        raise ArgumentError("Exclusion thresholds must be positive")
    records = list(records)
    agreed = [r for r in records if dba(r) <= dba_threshold_um]
    counts = Counter(r.pair_id for r in agreed)
    excluded = sorted({r.pair_id for r in records} - {p for p, n in counts.items() if n >= min_per_pair})
    kept = [r for r in agreed if r.pair_id not in excluded]

    dropped = len(records) - len(agreed)
    if dropped:
        _log.info("Dropped %d of %d landmarks with DBA > %g um", dropped, len(records), dba_threshold_um)
    if excluded:
        _log.warning("Excluded %d pair(s) with fewer than %d landmarks: %s", len(excluded), min_per_pair, excluded)
    return kept, excluded


# --- Missing Landmarks ---


def clamped_source(record: LandmarkRecord, dims: PairDims) -> tuple[float, float]:
    """The unregistered source position capped at the image borders."""
    return (
        min(max(record.src_x, 0.0), dims.width - 1.0),
        min(max(record.src_y, 0.0), dims.height - 1.0),
    )


def resolve_submission(
    truth: Sequence[LandmarkRecord],
    submission: Iterable[SubmissionRecord],
    dims: dict[str, PairDims],
) -> dict[Key, tuple[float, float]]:
    """
    Registered point for every truth record.

    Submitted rows are used as-is; absent or empty rows fall back to the clamped
    source position. Rows for unknown landmarks are ignored with a warning and
    duplicate rows are rejected.
    """
    known = {r.key for r in truth}
    missing_dims = sorted({r.pair_id for r in truth} - dims.keys())
    if missing_dims:
        raise ValidationError(f"No image dimensions for pair(s) {missing_dims}")

    submitted: dict[Key, SubmissionRecord] = {}
    unknown = 0
    for row in submission:
        if row.key in submitted:
            raise ValidationError(f"Duplicate submission row for landmark {row.key}")
        submitted[row.key] = row
        if row.key not in known:
            unknown += 1
    if unknown:
        _log.warning("Ignoring %d submission row(s) for unknown landmarks", unknown)

    resolved: dict[Key, tuple[float, float]] = {}
    fallbacks = 0
    for record in truth:
        row = submitted.get(record.key)
        if row is None or row.missing:
            resolved[record.key] = clamped_source(record, dims[record.pair_id])
            fallbacks += 1
        else:
            assert row.reg_x is not None and row.reg_y is not None
            resolved[record.key] = (row.reg_x, row.reg_y)
    if fallbacks:
        _log.info("%d of %d landmarks missing from the submission; using clamped source", fallbacks, len(truth))
    return resolved


# --- CSV I/O ---


def read_table(path: str | os.PathLike, header: tuple[str, ...]) -> list[tuple[int, list[str]]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as file:
            rows = list(csv.reader(file))
    except OSError as e:
        raise UnreadableInputError(str(path), e) from e
    if not rows or tuple(field.strip() for field in rows[0]) != header:
        raise ValidationError(f"{path}: expected header {','.join(header)}", row=1)
    body = []
    for number, row in enumerate(rows[1:], start=2):
        if not any(field.strip() for field in row):
            continue
        if len(row) != len(header):
            raise ValidationError(f"{path}: expected {len(header)} fields, got {len(row)}", row=number)
        body.append((number, [field.strip() for field in row]))
    return body


def parse_number(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"Column '{column}' is not a number: {text!r}", row=row) from None
    if not math.isfinite(value):
        raise ValidationError(f"Column '{column}' is not finite: {text!r}", row=row)
    return value


def read_truth(path: str | os.PathLike) -> list[LandmarkRecord]:
    records = []
    seen: set[Key] = set()
    for number, row in read_table(path, TRUTH_HEADER):
        values = [
            parse_number(text, number, column) for text, column in zip(row[2:], TRUTH_HEADER[2:], strict=True)
        ]
        if values[-1] <= 0:
            raise ValidationError(f"mpp must be positive, got {values[-1]}", row=number)
        record = LandmarkRecord(row[0], row[1], *values)
        if record.key in seen:
            raise ValidationError(f"Duplicate landmark {record.key}", row=number)
        seen.add(record.key)
        records.append(record)
    _log.debug("Read %d truth landmarks from %s", len(records), path)
    return records


def read_submission(path: str | os.PathLike) -> list[SubmissionRecord]:
    records = []
    seen: set[Key] = set()
    for number, row in read_table(path, SUBMISSION_HEADER):
        pair_id, point_id, x, y = row
        if bool(x) != bool(y):
            raise ValidationError("reg_x and reg_y must both be present or both empty", row=number)
        record = SubmissionRecord(
            pair_id,
            point_id,
            parse_number(x, number, "reg_x") if x else None,
            parse_number(y, number, "reg_y") if y else None,
        )
        if record.key in seen:
            raise ValidationError(f"Duplicate submission row for landmark {record.key}", row=number)
        seen.add(record.key)
        records.append(record)
    return records


def read_dims(path: str | os.PathLike) -> dict[str, PairDims]:
    dims: dict[str, PairDims] = {}
    for number, row in read_table(path, DIMS_HEADER):
        pair_id, width, height = row
        try:
            size = PairDims(int(width), int(height))
        except ValueError:
            raise ValidationError(f"Dimensions must be integers, got {width!r} x {height!r}", row=number) from None
        if size.width < 1 or size.height < 1:
            raise ValidationError(f"Dimensions must be positive, got {size.width} x {size.height}", row=number)
        if pair_id in dims:
            raise ValidationError(f"Duplicate dimensions for pair '{pair_id}'", row=number)
        dims[pair_id] = size
    return dims


def format_csv(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def write_truth(records: Iterable[LandmarkRecord], path: str | os.PathLike) -> None:
    rows = (
        [r.pair_id, r.point_id]
        + [format_float(v) for v in (r.src_x, r.src_y, r.tgt1_x, r.tgt1_y, r.tgt2_x, r.tgt2_y, r.mpp)]
        for r in records
    )
    atomic_write_text(path, format_csv(TRUTH_HEADER, rows))


def write_submission(records: Iterable[SubmissionRecord], path: str | os.PathLike) -> None:
    rows = (
        [r.pair_id, r.point_id]
        + (["", ""] if r.missing else [format_float(r.reg_x), format_float(r.reg_y)])  # type: ignore[arg-type]
        for r in records
    )
    atomic_write_text(path, format_csv(SUBMISSION_HEADER, rows))


def write_dims(dims: dict[str, PairDims], path: str | os.PathLike) -> None:
    rows = ([pair_id, str(d.width), str(d.height)] for pair_id, d in sorted(dims.items()))
    atomic_write_text(path, format_csv(DIMS_HEADER, rows))
