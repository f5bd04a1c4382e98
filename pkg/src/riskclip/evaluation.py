"""Evaluation: confusion matrices, accuracy modes, timelines, report files.

Accuracy comes in two flavours: plain top-1 and one-vs-rest macro accuracy
(the mean over classes of binary accuracy when class k is "positive" and the
rest "negative").  Timelines slide a fixed-length window over a full video,
one prediction per stride.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Mapping, Sequence

import cv2
import numpy as np

from .annotations import AnnotationRecord, InconsistencyReport, validate_record
from .s3d import ClassifierParams, predict
from .taxonomy import map_class, taxonomy, taxonomy_size
from .video import FrameSource, frame_index, frames_to_unit

AccuracyMode = Literal["top1", "ovr-macro"]

# Band colors for timeline strips, indexed by class id; -1 renders gray.
PALETTE: tuple[tuple[int, int, int], ...] = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
)
_GRAY = (96, 96, 96)


class UndefinedMetricError(ValueError):
    """Raised when a metric has no value (e.g. zero samples)."""


class ExternalValidationError(ValueError):
    """External corpus rejected: one InconsistencyReport per failing record."""

    def __init__(self, reports: Sequence[InconsistencyReport]):
        self.reports = tuple(reports)
        ids = ", ".join(r.video_id for r in self.reports)
        super().__init__(f"external corpus rejected; inconsistent records: {ids}")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix; rows are ground truth, columns predictions."""

    counts: np.ndarray

    def __post_init__(self):
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {c.shape}")
        if not np.issubdtype(c.dtype, np.integer) or (c < 0).any():
            raise ValueError("confusion matrix entries must be non-negative integers")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def per_class_binary(self, k: int) -> tuple[int, int, int, int]:
        """(TN, FN, TP, FP) treating class k as positive."""
        if not 0 <= k < self.num_classes:
            raise ValueError(f"class {k} outside [0, {self.num_classes})")
        tp = int(self.counts[k, k])
        fn = int(self.counts[k].sum()) - tp
        fp = int(self.counts[:, k].sum()) - tp
        tn = self.total - tp - fn - fp
        return tn, fn, tp, fp


def confusion(truth: Sequence[int], predicted: Sequence[int], num_classes: int) -> ConfusionMatrix:
    t = np.asarray(truth, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError(f"truth and predictions must be equal-length 1-d, got {t.shape} vs {p.shape}")
    if t.size and not ((0 <= t) & (t < num_classes)).all():
        raise ValueError("truth label outside class range")
    if p.size and not ((0 <= p) & (p < num_classes)).all():
        raise ValueError("predicted label outside class range")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts=counts)


def accuracy(matrix: ConfusionMatrix, mode: AccuracyMode = "top1") -> float:
    total = matrix.total
    if total == 0:
        raise UndefinedMetricError("accuracy undefined for an empty confusion matrix")
    if mode == "top1":
        return float(np.trace(matrix.counts)) / total
    if mode == "ovr-macro":
        per_class = [
            (tn + tp) / total
            for tn, fn, tp, fp in map(matrix.per_class_binary, range(matrix.num_classes))
        ]
        return float(np.mean(per_class))
    raise ValueError(f"unknown accuracy mode {mode!r}")


def select_best(scores: Sequence[tuple[int, float]]) -> int:
    """Model index with the highest accuracy; ties go to the lowest index."""
    if not scores:
        raise ValueError("no candidates to select from")
    return min(scores, key=lambda item: (-item[1], item[0]))[0]


@dataclass(frozen=True)
class TimelineReport:
    """Sliding-window predictions over one video.

    predictions[i] covers frames [first_frame + i*stride - clip_len,
    first_frame + i*stride); truth holds a per-frame class id with -1
    outside any annotated window.
    """

    video_id: str
    clip_len: int
    stride: int
    first_frame: int
    frame_count: int
    predictions: np.ndarray
    truth: np.ndarray


def truth_track(record: AnnotationRecord, frame_count: int, level: int) -> np.ndarray:
    """Per-frame class ids: incident window, then the post-incident normal
    window, -1 elsewhere."""
    track = np.full(frame_count, -1, dtype=np.int64)
    w, fps = record.window, record.fps
    normal_id = taxonomy_size(level) - 1
    i0, i1 = frame_index(w.t0, fps), frame_index(w.t3, fps)
    track[max(i0, 0) : min(i1, frame_count)] = map_class(record.class16, level)
    if w.t4 is not None:
        n0, n1 = frame_index(w.t4, fps), frame_index(w.t5, fps)
        track[max(n0, 0) : min(n1, frame_count)] = normal_id
    return track


def sliding_timeline(
    params: ClassifierParams,
    source: FrameSource,
    record: AnnotationRecord | None = None,
    level: int = 1,
    stride: int = 1,
) -> TimelineReport:
    """One prediction per window end f in [clip_len, frame_count]."""
    length = params.clip_len
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if source.frame_count < length:
        raise ValueError(
            f"video {source.video_id} has {source.frame_count} frames; "
            f"need at least {length} for one window"
        )
    frames = frames_to_unit(source.read_range(range(source.frame_count)), params.input_size)
    ends = range(length, source.frame_count + 1, stride)
    predictions = np.array([predict(params, frames[f - length : f])[0] for f in ends], dtype=np.int64)
    truth = (
        truth_track(record, source.frame_count, level)
        if record is not None
        else np.full(source.frame_count, -1, dtype=np.int64)
    )
    return TimelineReport(
        video_id=source.video_id,
        clip_len=length,
        stride=stride,
        first_frame=length,
        frame_count=source.frame_count,
        predictions=predictions,
        truth=truth,
    )


@dataclass(frozen=True)
class CrossValReport:
    level: int
    n_clips: int
    matrix: ConfusionMatrix
    top1: float


def cross_validate_external(
    params: ClassifierParams,
    records: Sequence[AnnotationRecord],
    corpus_root: str | Path,
    level: int = 1,
    overrides: Mapping[str, Sequence] | None = None,
) -> CrossValReport:
    """Score incident clips from a foreign corpus without retraining.

    Every record must pass consistency validation first; otherwise the whole
    corpus is rejected.
    """
    from .video import open_corpus_video, sample_window  # local: avoids cycle at import

    if not records:
        raise ValueError("external corpus is empty")
    if params.num_classes != taxonomy_size(level):
        raise ValueError(
            f"model has {params.num_classes} classes but level {level} "
            f"needs {taxonomy_size(level)}"
        )
    bad = [
        report
        for report in (validate_record(r, overrides) for r in records)
        if not report.ok
    ]
    if bad:
        raise ExternalValidationError(bad)

    truths, preds = [], []
    for record in records:
        src = open_corpus_video(corpus_root, record.video_id)
        window = range(
            frame_index(record.window.t0, record.fps),
            frame_index(record.window.t3, record.fps),
        )
        clip = sample_window(
            src, window, params.clip_len, "uniform-stride",
            label=map_class(record.class16, level), size=params.input_size,
        )
        truths.append(clip.label)
        preds.append(predict(params, clip)[0])
    matrix = confusion(truths, preds, params.num_classes)
    return CrossValReport(level=level, n_clips=len(records), matrix=matrix, top1=accuracy(matrix))


@dataclass(frozen=True)
class ResultRow:
    method: str
    clip_len: int
    phi: str
    accuracy: float


def _phi_order(phi: str) -> tuple:
    digits = "".join(ch for ch in phi if ch.isdigit())
    return (int(digits) if digits else 0, phi)


def render_reports(
    out_dir: str | Path,
    results: Sequence[ResultRow],
    confusions: Mapping[str, ConfusionMatrix] | None = None,
    timelines: Sequence[TimelineReport] = (),
) -> list[Path]:
    """Write results.csv, per-model confusion CSVs, and timeline CSV+PNG pairs.

    Output bytes are a pure function of the inputs; an empty result list
    still produces a header-only results.csv.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    results_path = out / "results.csv"
    with open(results_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "clip_len", "phi", "accuracy"])
        for row in sorted(results, key=lambda r: (_phi_order(r.phi), r.method, r.clip_len)):
            writer.writerow([row.method, row.clip_len, row.phi, f"{row.accuracy:.4f}"])
    written.append(results_path)

    for phi in sorted(confusions or {}, key=_phi_order):
        matrix = (confusions or {})[phi]
        path = out / f"confusion_{phi}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["truth\\pred"] + list(range(matrix.num_classes)))
            for k, row_counts in enumerate(matrix.counts):
                writer.writerow([k] + [int(v) for v in row_counts])
        written.append(path)

    for timeline in sorted(timelines, key=lambda t: t.video_id):
        written.extend(_render_timeline(out, timeline))
    return written


def _timeline_band(timeline: TimelineReport) -> np.ndarray:
    """Two stacked strips, one column per frame: predictions over truth."""
    band_h, width = 24, timeline.frame_count
    img = np.zeros((2 * band_h, width, 3), dtype=np.uint8)
    img[:] = _GRAY
    pred_of_frame = np.full(width, -1, dtype=np.int64)
    for i, p in enumerate(timeline.predictions):
        end = timeline.first_frame + i * timeline.stride
        pred_of_frame[end - 1] = p
    # carry each prediction forward until the next window end
    last = -1
    for f in range(width):
        if pred_of_frame[f] >= 0:
            last = pred_of_frame[f]
        elif f >= timeline.first_frame - 1:
            pred_of_frame[f] = last
    for f in range(width):
        if pred_of_frame[f] >= 0:
            img[:band_h, f] = PALETTE[pred_of_frame[f] % len(PALETTE)]
        if timeline.truth[f] >= 0:
            img[band_h:, f] = PALETTE[timeline.truth[f] % len(PALETTE)]
    return img


def _render_timeline(out: Path, timeline: TimelineReport) -> list[Path]:
    csv_path = out / f"timeline_{timeline.video_id}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_end", "predicted", "truth_at_end"])
        for i, p in enumerate(timeline.predictions):
            end = timeline.first_frame + i * timeline.stride
            writer.writerow([end, int(p), int(timeline.truth[end - 1])])

    png_path = out / f"timeline_{timeline.video_id}.png"
    img = _timeline_band(timeline)
    ok = cv2.imwrite(str(png_path), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))
    if not ok:
        raise OSError(f"failed to write {png_path}")
    return [csv_path, png_path]


def class_labels(level: int) -> tuple[str, ...]:
    return taxonomy(level).labels
