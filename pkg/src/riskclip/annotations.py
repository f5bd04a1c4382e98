"""Temporal annotation records for incident videos, plus the consistency checks.

One annotation describes one video: its 16-class incident label, the temporal
window (incident start t0, incident end t3, optional normal-segment start t4,
video end t5), an optional near-miss end time mu, and the bookkeeping flags
used by the corpus filter (ego involvement, real vs game footage).

The file format is UTF-8 JSON lines, one object per video.  Parsing enforces
structural validity only; ordering problems, gap violations and the like are
*data* reported by :func:`validate_record`, not parse failures.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .taxonomy import NORMAL_CLASS16, taxonomy

NORMAL_GAP_SECONDS = 2.0
GAP_TOLERANCE = 1e-6


class AnnotationError(Exception):
    """Base class for annotation file problems."""


class AnnotationParseError(AnnotationError):
    """A line could not be decoded; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class AnnotationFieldError(AnnotationError):
    """A decoded field is out of range; carries the field name."""

    def __init__(self, line_no: int, fieldname: str, message: str):
        super().__init__(f"line {line_no}: field '{fieldname}': {message}")
        self.line_no = line_no
        self.fieldname = fieldname


@dataclass(frozen=True)
class TemporalWindow:
    """Annotated instants in seconds.

    Validity (0 <= t0 < t3 <= t5, t4 == t3 + 2.0, mu within [t0, t5]) is not
    enforced here; :func:`validate_record` reports breaches as violations.
    t1/t2 are carried through when present but are not used anywhere.
    """

    t0: float
    t3: float
    t5: float
    t4: float | None = None
    mu: float | None = None
    t1: float | None = None
    t2: float | None = None


@dataclass(frozen=True)
class AnnotationRecord:
    """Ground-truth entry for one video."""

    video_id: str
    class16: int
    window: TemporalWindow
    fps: float
    near_miss: bool = False
    ego_involved: bool = True
    real_footage: bool = True


class ViolationCode(str, enum.Enum):
    UNINVOLVED_EGO = "UNINVOLVED_EGO"
    WRONG_CLASS = "WRONG_CLASS"
    VIDEO_GAME = "VIDEO_GAME"
    NORMAL_ON_RISK = "NORMAL_ON_RISK"
    GAP_VIOLATION = "GAP_VIOLATION"
    WINDOW_ORDER = "WINDOW_ORDER"
    MU_OUT_OF_RANGE = "MU_OUT_OF_RANGE"


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    detail: str


@dataclass(frozen=True)
class InconsistencyReport:
    video_id: str
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[ViolationCode]:
        return {v.code for v in self.violations}


def derive_normal_start(t3: float) -> float:
    """Normal-segment start for an incident ending at ``t3``: t3 + 2.0 s."""
    if t3 < 0:
        raise ValueError(f"incident end time must be >= 0, got {t3}")
    return t3 + NORMAL_GAP_SECONDS


def _get(obj: dict, key: str, line_no: int):
    if key not in obj:
        raise AnnotationFieldError(line_no, key, "missing")
    return obj[key]


def _get_time(obj: dict, key: str, line_no: int, required: bool) -> float | None:
    value = _get(obj, key, line_no) if required else obj.get(key)
    if value is None:
        return None
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise AnnotationFieldError(line_no, key, f"expected finite number, got {value!r}")
    return float(value)


def _record_from_obj(obj: dict, line_no: int) -> AnnotationRecord:
    video_id = _get(obj, "video_id", line_no)
    if not isinstance(video_id, str) or not video_id:
        raise AnnotationFieldError(line_no, "video_id", "expected non-empty string")

    raw_class = _get(obj, "class16", line_no)
    if isinstance(raw_class, str):
        try:
            class16 = taxonomy(3).id_of(raw_class)
        except ValueError as exc:
            raise AnnotationFieldError(line_no, "class16", str(exc)) from None
    elif isinstance(raw_class, int) and not isinstance(raw_class, bool):
        class16 = raw_class
    else:
        raise AnnotationFieldError(line_no, "class16", f"expected label or integer id, got {raw_class!r}")
    if not 0 <= class16 < 16:
        raise AnnotationFieldError(line_no, "class16", f"id {class16} out of range [0, 16)")

    fps = _get_time(obj, "fps", line_no, required=True)
    if fps is None or fps <= 0:
        raise AnnotationFieldError(line_no, "fps", f"must be > 0, got {fps}")

    flags = {}
    for key in ("ego_involved", "real_footage", "near_miss"):
        value = _get(obj, key, line_no)
        if not isinstance(value, bool):
            raise AnnotationFieldError(line_no, key, f"expected boolean, got {value!r}")
        flags[key] = value

    window = TemporalWindow(
        t0=_get_time(obj, "t0", line_no, required=True),
        t3=_get_time(obj, "t3", line_no, required=True),
        t5=_get_time(obj, "t5", line_no, required=True),
        t4=_get_time(obj, "t4", line_no, required=False),
        mu=_get_time(obj, "mu", line_no, required=False),
        t1=_get_time(obj, "t1", line_no, required=False),
        t2=_get_time(obj, "t2", line_no, required=False),
    )
    if flags["near_miss"] and window.mu is None:
        raise AnnotationFieldError(line_no, "mu", "required when near_miss is true")

    return AnnotationRecord(video_id=video_id, class16=class16, window=window, fps=fps, **flags)


def parse_annotations(path: str | Path) -> list[AnnotationRecord]:
    """Parse a JSON-lines annotation file, preserving record order."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationParseError(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise AnnotationParseError(line_no, "expected a JSON object")
            records.append(_record_from_obj(obj, line_no))
    return records


def record_to_obj(record: AnnotationRecord) -> dict:
    w = record.window
    obj = {
        "video_id": record.video_id,
        "class16": record.class16,
        "t0": w.t0,
        "t3": w.t3,
        "t4": w.t4,
        "t5": w.t5,
        "mu": w.mu,
        "fps": record.fps,
        "ego_involved": record.ego_involved,
        "real_footage": record.real_footage,
        "near_miss": record.near_miss,
    }
    if w.t1 is not None:
        obj["t1"] = w.t1
    if w.t2 is not None:
        obj["t2"] = w.t2
    return obj


def serialize_annotations(records: Iterable[AnnotationRecord], path: str | Path) -> None:
    """Write records as JSON lines; parse(serialize(parse(x))) is a fixed point."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_obj(record), sort_keys=True))
            fh.write("\n")


# Human-supplied override file: {"video_id": [{"code": "...", "detail": "..."}]}.
Overrides = Mapping[str, Sequence[Violation]]


def load_overrides(path: str | Path) -> dict[str, list[Violation]]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    overrides: dict[str, list[Violation]] = {}
    for video_id, entries in raw.items():
        overrides[video_id] = [
            Violation(ViolationCode(e["code"]), e.get("detail", "marked by override file"))
            for e in entries
        ]
    return overrides


def validate_record(record: AnnotationRecord, overrides: Overrides | None = None) -> InconsistencyReport:
    """Run all consistency checks on one record.

    Violations are data, not failures.  WRONG_CLASS has no automatic rule
    (it needs a human watching the video) and comes only from ``overrides``;
    NORMAL_ON_RISK is emitted automatically when a Normal-labelled record
    still asserts a risk event (near-miss flag set), and from overrides.
    """
    w = record.window
    violations: list[Violation] = []

    if not record.ego_involved:
        violations.append(Violation(ViolationCode.UNINVOLVED_EGO, "ego vehicle not involved"))
    if not record.real_footage:
        violations.append(Violation(ViolationCode.VIDEO_GAME, "footage is not from a real camera"))
    if record.class16 == NORMAL_CLASS16 and record.near_miss:
        violations.append(
            Violation(ViolationCode.NORMAL_ON_RISK, "labelled Normal but a near-miss event is recorded")
        )

    ordered = 0 <= w.t0 < w.t3 <= w.t5 and (w.t4 is None or w.t4 < w.t5)
    if not ordered:
        violations.append(
            Violation(
                ViolationCode.WINDOW_ORDER,
                f"expected 0 <= t0 < t3 <= t5 (and t4 < t5), got t0={w.t0} t3={w.t3} t4={w.t4} t5={w.t5}",
            )
        )
    if w.t4 is not None and abs(w.t4 - (w.t3 + NORMAL_GAP_SECONDS)) > GAP_TOLERANCE:
        violations.append(
            Violation(
                ViolationCode.GAP_VIOLATION,
                f"t4 must be t3 + {NORMAL_GAP_SECONDS}, got gap {w.t4 - w.t3}",
            )
        )
    if record.near_miss and w.mu is None:
        violations.append(Violation(ViolationCode.MU_OUT_OF_RANGE, "near_miss set but mu missing"))
    elif w.mu is not None and not w.t0 <= w.mu <= w.t5:
        violations.append(
            Violation(ViolationCode.MU_OUT_OF_RANGE, f"mu={w.mu} outside [{w.t0}, {w.t5}]")
        )

    if overrides:
        violations.extend(overrides.get(record.video_id, ()))

    return InconsistencyReport(video_id=record.video_id, violations=tuple(violations))


_REMOVAL_CODES = {ViolationCode.UNINVOLVED_EGO, ViolationCode.VIDEO_GAME}


def filter_corpus(records: Sequence[AnnotationRecord]) -> list[AnnotationRecord]:
    """Drop uninvolved-ego and video-game records; keep order. Idempotent."""
    return [r for r in records if not (validate_record(r).codes() & _REMOVAL_CODES)]
