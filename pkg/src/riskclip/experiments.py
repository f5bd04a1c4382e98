"""The experiment grid: annotation source x training corpus x clip length.

Nine models.  phi1-phi3 train on original clips under the shipped baseline
annotations, phi4-phi6 on original clips under the corrected annotations,
phi7-phi9 on the style-augmented corpus (originals plus both translated
copies of every training clip).  Validation and test clips are always
original footage, shared per seed across cells so accuracies compare.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .annotations import AnnotationRecord, filter_corpus, parse_annotations
from .cst import CstConfig, DomainCodec, save_codec, train_cst, translate
from .evaluation import (
    ConfusionMatrix,
    ResultRow,
    TimelineReport,
    accuracy,
    confusion,
    render_reports,
    select_best,
    sliding_timeline,
)
from .s3d import build_classifier, load_classifier, predict, save_classifier
from .seeds import derive_seed
from .splits import ClipRef, SplitMode, split_dataset
from .taxonomy import map_class, taxonomy_size
from .training import RunLog, TrainConfig, train_classifier
from .video import VideoClip, extract_incident_clip, extract_normal_clip, open_corpus_video, read_manifest, sample_window

ANNOTATION_FILES = {"baseline": "annotations_baseline.jsonl", "reannotation": "annotations.jsonl"}


@dataclass(frozen=True)
class MatrixCell:
    phi: str
    annotation: str  # "baseline" | "reannotation"
    corpus: str  # "originals-only" | "augmented"
    clip_len: int
    method: str


MATRIX: tuple[MatrixCell, ...] = tuple(
    MatrixCell(
        phi=f"phi{i + 1}",
        annotation="baseline" if i < 3 else "reannotation",
        corpus="augmented" if i >= 6 else "originals-only",
        clip_len=(16, 32, 64)[i % 3],
        method=("s3d/baseline-annotations", "s3d/originals", "s3d/cst-augmented")[i // 3],
    )
    for i in range(9)
)


@dataclass(frozen=True)
class MatrixConfig:
    level: int = 1
    seeds: tuple[int, ...] = (0,)
    split_mode: SplitMode = "grouped"
    preset: str = "toy"
    input_size: tuple[int, int] = (32, 32)
    train: TrainConfig = field(default_factory=TrainConfig)
    cst: CstConfig = field(default_factory=CstConfig)
    save_checkpoints: bool = True

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.level not in (1, 2, 3):
            raise ValueError(f"level must be 1, 2 or 3, got {self.level}")


@dataclass
class RunRecord:
    phi: str
    seed: int
    test_accuracy: float
    checkpoint: Path | None
    log: RunLog
    test_video_ids: tuple[str, ...]


@dataclass
class MatrixResult:
    rows: list[ResultRow]
    confusions: dict[str, ConfusionMatrix]
    runs: list[RunRecord]
    skipped: dict[str, str]
    out_dir: Path

    def mean_accuracy(self, phi: str) -> float:
        accs = [r.test_accuracy for r in self.runs if r.phi == phi]
        if not accs:
            raise KeyError(phi)
        return sum(accs) / len(accs)


def load_corpus_records(corpus_root: str | Path, annotation: str) -> list[AnnotationRecord]:
    """Parse one annotation variant and drop out-of-scope records."""
    path = Path(corpus_root) / ANNOTATION_FILES[annotation]
    if not path.exists():
        raise FileNotFoundError(f"no {annotation} annotations at {path}")
    return filter_corpus(parse_annotations(path))


def assemble_clips(
    corpus_root: str | Path,
    records: Sequence[AnnotationRecord],
    clip_len: int,
    level: int,
    input_size: tuple[int, int],
) -> list[VideoClip]:
    """Incident and post-gap normal clips for every record, uniform-stride.

    Incident clips carry the record's class mapped to ``level``; normal
    segments carry the level's Normal id.  Records whose windows fall off
    the video are skipped rather than fatal.
    """
    manifest = read_manifest(Path(corpus_root) / "manifest.json")
    normal_id = taxonomy_size(level) - 1
    clips: list[VideoClip] = []
    for record in records:
        if record.video_id not in manifest:
            continue
        src = open_corpus_video(corpus_root, record.video_id)
        domain = manifest[record.video_id].domain
        w = record.window
        try:
            incident = extract_incident_clip(src, w.t0, w.t3)
        except Exception:
            continue
        clips.append(
            sample_window(
                src, incident, clip_len, "uniform-stride",
                label=map_class(record.class16, level), domain=domain,
                size=input_size, clip_id=f"{record.video_id}/incident",
            )
        )
        if w.t4 is None:
            continue
        try:
            normal = extract_normal_clip(src, w.t4, w.t5)
        except Exception:
            continue
        clips.append(
            sample_window(
                src, normal, clip_len, "uniform-stride",
                label=normal_id, domain=domain,
                size=input_size, clip_id=f"{record.video_id}/normal",
            )
        )
    return clips


def _partition(clips: Sequence[VideoClip], mode: SplitMode, seed: int):
    refs = [ClipRef(c.clip_id, c.source_video_id, c.provenance) for c in clips]
    assignment = split_dataset(refs, mode=mode, seed=seed)
    buckets: dict[str, list[VideoClip]] = {"train": [], "test": [], "validate": []}
    for clip in clips:
        buckets[assignment.partition_of(clip.clip_id)].append(clip)
    return buckets["train"], buckets["test"], buckets["validate"]


def _augment_training_set(train_clips: Sequence[VideoClip], codec: DomainCodec) -> list[VideoClip]:
    out: list[VideoClip] = []
    for clip in train_clips:
        f1, f2 = translate(codec, clip)
        out += [clip, f1, f2]
    return out


def train_codec_for_seed(
    corpus_root: str | Path,
    records: Sequence[AnnotationRecord],
    config: MatrixConfig,
    seed: int,
) -> DomainCodec:
    """Style codec for one seed, trained on training-split original frames."""
    clips = assemble_clips(corpus_root, records, 32, config.level, config.input_size)
    train_clips, _, _ = _partition(clips, config.split_mode, seed)
    day = [c for c in train_clips if c.domain == "day"]
    night = [c for c in train_clips if c.domain == "night"]
    if not day or not night:
        raise ValueError("need training clips from both day and night to fit the style codec")
    cst_cfg = replace(config.cst, seed=derive_seed(seed, "cst"))
    codec, _ = train_cst(day, night, cst_cfg)
    return codec


def _evaluate_split(params, clips: Sequence[VideoClip]) -> tuple[float, ConfusionMatrix]:
    truths = [c.label for c in clips]
    preds = [predict(params, c)[0] for c in clips]
    matrix = confusion(truths, preds, params.num_classes)
    return accuracy(matrix), matrix


def run_experiment_matrix(
    corpus_root: str | Path,
    out_dir: str | Path,
    config: MatrixConfig = MatrixConfig(),
    cells: Sequence[MatrixCell] = MATRIX,
) -> MatrixResult:
    """Train and score every grid cell; cells whose data is missing are
    skipped with a reason, never fatal.

    Writes runs/<phi>/seed<k>/ trees (checkpoint, runlog.csv, config.json)
    plus results.csv and per-model confusion CSVs under ``out_dir``.
    """
    out = Path(out_dir)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)

    records: dict[str, list[AnnotationRecord]] = {}
    load_errors: dict[str, str] = {}
    for annotation in ("baseline", "reannotation"):
        try:
            records[annotation] = load_corpus_records(corpus_root, annotation)
        except (FileNotFoundError, ValueError) as err:
            records[annotation] = []
            load_errors[annotation] = str(err)

    codecs: dict[int, DomainCodec] = {}
    result = MatrixResult(rows=[], confusions={}, runs=[], skipped={}, out_dir=out)

    for cell in cells:
        cell_records = records.get(cell.annotation) or []
        if not cell_records:
            result.skipped[cell.phi] = load_errors.get(
                cell.annotation, f"no usable {cell.annotation} records"
            )
            continue

        accs, matrices = [], []
        failure = None
        for seed in config.seeds:
            try:
                clips = assemble_clips(
                    corpus_root, cell_records, cell.clip_len, config.level, config.input_size
                )
                train_clips, test_clips, val_clips = _partition(clips, config.split_mode, seed)
                if not train_clips or not test_clips:
                    raise ValueError("split produced an empty train or test partition")
                if cell.corpus == "augmented":
                    if seed not in codecs:
                        codecs[seed] = train_codec_for_seed(
                            corpus_root, records["reannotation"], config, seed
                        )
                        if config.save_checkpoints:
                            save_codec(runs_dir / f"codec_seed{seed}.ckpt", codecs[seed])
                    train_clips = _augment_training_set(train_clips, codecs[seed])
            except (FileNotFoundError, ValueError) as err:
                failure = str(err)
                break

            train_cfg = replace(
                config.train,
                clip_len=cell.clip_len,
                seed=derive_seed(seed, "run", cell.phi),
                dataset_mode=cell.corpus,  # type: ignore[arg-type]
            )
            params = build_classifier(
                taxonomy_size(config.level), cell.clip_len, preset=config.preset,
                input_size=config.input_size, seed=derive_seed(seed, "init", cell.phi),
            )
            params, log = train_classifier(params, train_clips, val_clips, train_cfg, model_id=cell.phi)
            test_acc, matrix = _evaluate_split(params, test_clips)

            run_dir = runs_dir / cell.phi / f"seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            checkpoint = None
            if config.save_checkpoints:
                checkpoint = run_dir / "classifier.ckpt"
                save_classifier(checkpoint, params)
            log.to_csv(run_dir / "runlog.csv")
            _write_resolved_config(run_dir / "config.json", cell, config, train_cfg, seed)

            accs.append(test_acc)
            matrices.append(matrix)
            result.runs.append(
                RunRecord(
                    phi=cell.phi, seed=seed, test_accuracy=test_acc, checkpoint=checkpoint,
                    log=log, test_video_ids=tuple(sorted({c.source_video_id for c in test_clips})),
                )
            )

        if failure is not None:
            result.skipped[cell.phi] = failure
            result.runs = [r for r in result.runs if r.phi != cell.phi]
            continue

        mean_acc = sum(accs) / len(accs)
        result.rows.append(ResultRow(cell.method, cell.clip_len, cell.phi, mean_acc))
        summed = matrices[0].counts.copy()
        for m in matrices[1:]:
            summed += m.counts
        result.confusions[cell.phi] = ConfusionMatrix(counts=summed)

    render_reports(out, result.rows, result.confusions)
    if result.skipped:
        with open(out / "skipped.json", "w", encoding="utf-8") as fh:
            json.dump(result.skipped, fh, indent=1, sort_keys=True)
    return result


def _write_resolved_config(path: Path, cell: MatrixCell, config: MatrixConfig, train_cfg: TrainConfig, seed: int) -> None:
    obj = {
        "phi": cell.phi,
        "method": cell.method,
        "annotation": cell.annotation,
        "corpus": cell.corpus,
        "clip_len": cell.clip_len,
        "seed": seed,
        "level": config.level,
        "split_mode": config.split_mode,
        "preset": config.preset,
        "input_size": list(config.input_size),
        "train": {
            "batch_size": train_cfg.batch_size,
            "lr0": train_cfg.lr0,
            "lr_decay_factor": train_cfg.lr_decay_factor,
            "milestones": list(train_cfg.milestones),
            "momentum": train_cfg.momentum,
            "weight_decay": train_cfg.weight_decay,
            "epochs": train_cfg.epochs,
            "schedule": train_cfg.schedule,
            "derived_seed": train_cfg.seed,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)


def run_all(
    corpus_root: str | Path,
    out_dir: str | Path,
    config: MatrixConfig = MatrixConfig(),
    timeline_stride: int = 1,
    cells: Sequence[MatrixCell] = MATRIX,
) -> MatrixResult:
    """Full pipeline: the nine-cell grid, then a sliding timeline for one
    test video of the best model."""
    result = run_experiment_matrix(corpus_root, out_dir, config, cells)
    if not result.rows:
        return result

    scores = [(int(row.phi.lstrip("phi")), row.accuracy) for row in result.rows]
    best_phi = f"phi{select_best(scores)}"
    best_run = max(
        (r for r in result.runs if r.phi == best_phi),
        key=lambda r: (r.test_accuracy, -r.seed),
    )
    if best_run.checkpoint is None or not best_run.test_video_ids:
        return result

    params = load_classifier(best_run.checkpoint)
    video_id = best_run.test_video_ids[0]
    by_id = {r.video_id: r for r in load_corpus_records(corpus_root, "reannotation")}
    timelines: list[TimelineReport] = []
    src = open_corpus_video(corpus_root, video_id)
    if src.frame_count >= params.clip_len:
        timelines.append(
            sliding_timeline(params, src, by_id.get(video_id), config.level, timeline_stride)
        )
    render_reports(result.out_dir, result.rows, result.confusions, timelines)
    return result
