"""Command line entry point wiring the pipeline end to end.

Workflows: validate annotations, cut clips, synthesize a test corpus, fit the
style codec, translate clips, train classifiers (one cell or the whole
grid), evaluate, and render timelines.

Exit codes: 0 success, 1 validation failure, 2 usage error, 3 runtime error.
A JSON config file may supply any flag's value; explicit flags win.  The
RISKCLIP_OUT environment variable sets the default output root.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .annotations import (
    load_overrides,
    parse_annotations,
    validate_record,
)
from .augment import AugmentConfig, IDENTITY
from .cst import CstConfig, load_codec, save_codec, train_cst, translate
from .evaluation import (
    ExternalValidationError,
    accuracy,
    confusion,
    cross_validate_external,
    render_reports,
    sliding_timeline,
)
from .experiments import (
    MATRIX,
    MatrixConfig,
    assemble_clips,
    load_corpus_records,
    run_all,
    run_experiment_matrix,
)
from .s3d import load_classifier, predict
from .splits import ClipRef, split_dataset
from .synthetic import CorpusSpec, generate_synthetic_corpus
from .taxonomy import taxonomy_size
from .training import TrainConfig
from .video import CLIP_LENGTHS, open_corpus_video

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _out_root() -> Path:
    return Path(os.environ.get("RISKCLIP_OUT", "."))


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return obj


def _resolve(args: argparse.Namespace, config: dict, key: str, default=None):
    """Flag if given, else config-file field, else default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key, default)


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args: argparse.Namespace, config: dict) -> int:
    annotations = Path(_resolve(args, config, "annotations"))
    overrides = None
    overrides_path = _resolve(args, config, "overrides")
    if overrides_path:
        overrides = load_overrides(overrides_path)
    records = parse_annotations(annotations)
    reports = [validate_record(r, overrides) for r in records]
    bad = [r for r in reports if not r.ok]

    report_path = _resolve(args, config, "report", str(annotations) + ".report.json")
    obj = {
        "annotations": str(annotations),
        "records": len(records),
        "inconsistent": len(bad),
        "reports": [
            {
                "video_id": r.video_id,
                "violations": [{"code": v.code.value, "detail": v.detail} for v in r.violations],
            }
            for r in bad
        ],
    }
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
    print(f"{len(records)} records, {len(bad)} inconsistent -> {report_path}")
    for r in bad:
        print(f"  {r.video_id}: {', '.join(sorted(c.value for c in r.codes()))}")
    return EXIT_OK if not bad else EXIT_VALIDATION


def cmd_clip(args: argparse.Namespace, config: dict) -> int:
    corpus = Path(_resolve(args, config, "corpus"))
    clip_len = int(_resolve(args, config, "clip_len", 32))
    level = int(_resolve(args, config, "level", 1))
    out = Path(_resolve(args, config, "out", _out_root() / "clips"))
    size = _resolve(args, config, "input_size")
    size = tuple(size) if size else None

    records = load_corpus_records(corpus, _resolve(args, config, "annotation", "reannotation"))
    video_id = _resolve(args, config, "video_id")
    if video_id:
        records = [r for r in records if r.video_id == video_id]
        if not records:
            raise FileNotFoundError(f"no record for video {video_id}")
    clips = assemble_clips(corpus, records, clip_len, level, size or (32, 32))
    out.mkdir(parents=True, exist_ok=True)
    for clip in clips:
        name = clip.clip_id.replace("/", "_") + ".npz"
        np.savez_compressed(out / name, frames=clip.frames, label=clip.label)
    print(f"wrote {len(clips)} clips (L={clip_len}) -> {out}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, config: dict) -> int:
    try:
        spec = CorpusSpec(
            n_videos=int(_resolve(args, config, "n_videos", 8)),
            classes=tuple(int(c) for c in _resolve(args, config, "classes", (1, 10, 14, 15))),
            fps=float(_resolve(args, config, "fps", 10.0)),
            resolution=tuple(int(v) for v in _resolve(args, config, "resolution", (32, 32))),
            night_fraction=float(_resolve(args, config, "night_fraction", 0.5)),
        )
    except (ValueError, TypeError) as err:
        print(f"invalid corpus spec: {err}", file=sys.stderr)
        return EXIT_USAGE
    seed = int(_resolve(args, config, "seed", 0))
    out = Path(_resolve(args, config, "out", _out_root() / "synthetic-corpus"))
    paths = generate_synthetic_corpus(spec, seed, out)
    print(f"{spec.n_videos} videos -> {paths.root}")
    return EXIT_OK


def _cst_config(args: argparse.Namespace, config: dict) -> CstConfig:
    return CstConfig(
        steps=int(_resolve(args, config, "steps", 200)),
        lr=float(_resolve(args, config, "lr", 1e-3)),
        batch_size=int(_resolve(args, config, "batch_size", 4)),
        preset=_resolve(args, config, "preset", "toy"),
        seed=int(_resolve(args, config, "seed", 0)),
    )


def cmd_cst_train(args: argparse.Namespace, config: dict) -> int:
    corpus = Path(_resolve(args, config, "corpus"))
    size = tuple(_resolve(args, config, "input_size", (32, 32)))
    records = load_corpus_records(corpus, _resolve(args, config, "annotation", "reannotation"))
    clips = assemble_clips(corpus, records, 32, 1, size)
    day = [c for c in clips if c.domain == "day"]
    night = [c for c in clips if c.domain == "night"]
    if not day or not night:
        raise ValueError("corpus must contain both day and night videos")
    codec, history = train_cst(day, night, _cst_config(args, config))
    out = Path(_resolve(args, config, "out", _out_root() / "codec.ckpt"))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_codec(out, codec)
    if history:
        print(f"step 1 total {history[0].total:.4f} -> step {len(history)} total {history[-1].total:.4f}")
    print(f"codec ({codec.steps_trained} steps{', diverged' if codec.diverged else ''}) -> {out}")
    return EXIT_OK


def cmd_translate(args: argparse.Namespace, config: dict) -> int:
    corpus = Path(_resolve(args, config, "corpus"))
    codec = load_codec(_resolve(args, config, "codec"))
    out = Path(_resolve(args, config, "out", _out_root() / "translated"))
    clip_len = int(_resolve(args, config, "clip_len", 32))
    records = load_corpus_records(corpus, _resolve(args, config, "annotation", "reannotation"))
    video_id = _resolve(args, config, "video_id")
    if video_id:
        records = [r for r in records if r.video_id == video_id]
    clips = assemble_clips(corpus, records, clip_len, 1, codec.image_size)
    out.mkdir(parents=True, exist_ok=True)
    for clip in clips:
        f1, f2 = translate(codec, clip)
        for fake in (f1, f2):
            name = fake.clip_id.replace("/", "_") + ".npz"
            np.savez_compressed(out / name, frames=fake.frames, label=fake.label)
    print(f"translated {len(clips)} clips -> {out}")
    return EXIT_OK


def _matrix_config(args: argparse.Namespace, config: dict) -> MatrixConfig:
    augment = AugmentConfig() if _resolve(args, config, "augment", True) else IDENTITY
    train_cfg = TrainConfig(
        batch_size=int(_resolve(args, config, "batch_size", 2)),
        lr0=float(_resolve(args, config, "lr0", 0.1)),
        lr_decay_factor=float(_resolve(args, config, "lr_decay_factor", 10.0)),
        milestones=tuple(int(m) for m in _resolve(args, config, "milestones", (30, 50))),
        momentum=float(_resolve(args, config, "momentum", 0.9)),
        weight_decay=float(_resolve(args, config, "weight_decay", 1e-7)),
        epochs=int(_resolve(args, config, "epochs", 60)),
        augment=augment,
        early_stop_train_acc=_resolve(args, config, "early_stop_train_acc"),
    )
    cst_cfg = CstConfig(
        steps=int(_resolve(args, config, "cst_steps", 200)),
        lr=float(_resolve(args, config, "cst_lr", 1e-3)),
        batch_size=int(_resolve(args, config, "cst_batch_size", 4)),
        preset=_resolve(args, config, "preset", "toy"),
    )
    return MatrixConfig(
        level=int(_resolve(args, config, "level", 1)),
        seeds=tuple(int(s) for s in _resolve(args, config, "seeds", (0,))),
        split_mode=_resolve(args, config, "split_mode", "grouped"),
        preset=_resolve(args, config, "preset", "toy"),
        input_size=tuple(int(v) for v in _resolve(args, config, "input_size", (32, 32))),
        train=train_cfg,
        cst=cst_cfg,
    )


def cmd_train(args: argparse.Namespace, config: dict) -> int:
    corpus = Path(_resolve(args, config, "corpus"))
    phi = _resolve(args, config, "phi", "phi5")
    cells = [c for c in MATRIX if c.phi == phi]
    if not cells:
        print(f"unknown model id {phi!r}; use phi1..phi9", file=sys.stderr)
        return EXIT_USAGE
    out = Path(_resolve(args, config, "out", _out_root() / "train-out"))
    result = run_experiment_matrix(corpus, out, _matrix_config(args, config), cells)
    if phi in result.skipped:
        print(f"{phi} skipped: {result.skipped[phi]}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{phi} mean test accuracy {result.mean_accuracy(phi):.4f} -> {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: dict) -> int:
    params = load_classifier(_resolve(args, config, "checkpoint"))
    corpus = Path(_resolve(args, config, "corpus"))
    level = int(_resolve(args, config, "level", 1))
    if params.num_classes != taxonomy_size(level):
        raise ValueError(
            f"checkpoint has {params.num_classes} classes; level {level} needs {taxonomy_size(level)}"
        )

    external = _resolve(args, config, "external", False)
    if external:
        records = load_corpus_records(corpus, _resolve(args, config, "annotation", "reannotation"))
        try:
            report = cross_validate_external(params, records, corpus, level)
        except ExternalValidationError as err:
            print(f"rejected: {err}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"external top-1 accuracy {report.top1:.4f} over {report.n_clips} clips")
        return EXIT_OK

    records = load_corpus_records(corpus, _resolve(args, config, "annotation", "reannotation"))
    clips = assemble_clips(corpus, records, params.clip_len, level, params.input_size)
    partition = _resolve(args, config, "partition", "all")
    if partition != "all":
        refs = [ClipRef(c.clip_id, c.source_video_id, c.provenance) for c in clips]
        assignment = split_dataset(
            refs,
            mode=_resolve(args, config, "split_mode", "grouped"),
            seed=int(_resolve(args, config, "split_seed", 0)),
        )
        partition_ids = getattr(assignment, partition)
        clips = [c for c in clips if c.clip_id in partition_ids]
    if not clips:
        raise ValueError("nothing to evaluate")
    truths = [c.label for c in clips]
    preds = [predict(params, c)[0] for c in clips]
    matrix = confusion(truths, preds, params.num_classes)
    top1 = accuracy(matrix)
    ovr = accuracy(matrix, "ovr-macro")
    print(f"top-1 {top1:.4f}  ovr-macro {ovr:.4f}  ({len(clips)} clips, {partition})")
    out = _resolve(args, config, "out")
    if out:
        render_reports(out, [], confusions={"eval": matrix})
        print(f"confusion -> {Path(out) / 'confusion_eval.csv'}")
    return EXIT_OK


def cmd_timeline(args: argparse.Namespace, config: dict) -> int:
    params = load_classifier(_resolve(args, config, "checkpoint"))
    corpus = Path(_resolve(args, config, "corpus"))
    video_id = _resolve(args, config, "video_id")
    if not video_id:
        print("a video id is required", file=sys.stderr)
        return EXIT_USAGE
    level = int(_resolve(args, config, "level", 1))
    stride = int(_resolve(args, config, "stride", 1))
    out = Path(_resolve(args, config, "out", _out_root() / "timeline"))
    records = {r.video_id: r for r in load_corpus_records(corpus, "reannotation")}
    src = open_corpus_video(corpus, video_id)
    timeline = sliding_timeline(params, src, records.get(video_id), level, stride)
    render_reports(out, [], timelines=[timeline])
    print(f"{len(timeline.predictions)} predictions -> {out / f'timeline_{video_id}.csv'}")
    return EXIT_OK


def cmd_run_all(args: argparse.Namespace, config: dict) -> int:
    corpus = Path(_resolve(args, config, "corpus"))
    out = _resolve(args, config, "out")
    if out is None:
        stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
        out = _out_root() / "riskclip-runs" / stamp
    out = Path(out)
    matrix_cfg = _matrix_config(args, config)

    if getattr(args, "dry_run", False):
        print(f"out: {out}")
        print(f"level {matrix_cfg.level}, seeds {list(matrix_cfg.seeds)}, "
              f"split {matrix_cfg.split_mode}, epochs {matrix_cfg.train.epochs}")
        for cell in MATRIX:
            print(f"  {cell.phi}: {cell.method} annotation={cell.annotation} "
                  f"corpus={cell.corpus} L={cell.clip_len}")
        return EXIT_OK

    result = run_all(corpus, out, matrix_cfg, int(_resolve(args, config, "stride", 1)))
    for row in result.rows:
        print(f"  {row.phi}: {row.method} L={row.clip_len} accuracy {row.accuracy:.4f}")
    for phi, reason in sorted(result.skipped.items()):
        print(f"  {phi}: skipped ({reason})")
    print(f"reports -> {out}")
    if not result.rows:
        print("every cell was skipped", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--out", help="output path")
    p.add_argument("--seed", type=int, help="global seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskclip",
        description="Traffic risk video pipeline: annotate, clip, translate, train, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check annotation consistency")
    _add_common(p)
    p.add_argument("annotations", nargs="?", help="JSON-lines annotation file")
    p.add_argument("--overrides", help="manual violation overrides (JSON)")
    p.add_argument("--report", help="where to write the report JSON")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("clip", help="cut incident/normal clips to .npz files")
    _add_common(p)
    p.add_argument("corpus", nargs="?", help="corpus root (manifest + frames)")
    p.add_argument("--video-id", dest="video_id")
    p.add_argument("--clip-len", dest="clip_len", type=int, choices=CLIP_LENGTHS)
    p.add_argument("--level", type=int, choices=(1, 2, 3))
    p.add_argument("--annotation", choices=("baseline", "reannotation"))
    p.set_defaults(func=cmd_clip)

    p = sub.add_parser("synth", help="render a synthetic test corpus")
    _add_common(p)
    p.add_argument("--n-videos", dest="n_videos", type=int)
    p.add_argument("--classes", type=int, nargs="+")
    p.add_argument("--fps", type=float)
    p.add_argument("--resolution", type=int, nargs=2)
    p.add_argument("--night-fraction", dest="night_fraction", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cst-train", help="fit the day/night style codec")
    _add_common(p)
    p.add_argument("corpus", nargs="?")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--preset", choices=("toy", "paper-ish"))
    p.add_argument("--input-size", dest="input_size", type=int, nargs=2)
    p.add_argument("--annotation", choices=("baseline", "reannotation"))
    p.set_defaults(func=cmd_cst_train)

    p = sub.add_parser("translate", help="emit style-translated copies of clips")
    _add_common(p)
    p.add_argument("corpus", nargs="?")
    p.add_argument("--codec", help="codec checkpoint")
    p.add_argument("--video-id", dest="video_id")
    p.add_argument("--clip-len", dest="clip_len", type=int, choices=CLIP_LENGTHS)
    p.add_argument("--annotation", choices=("baseline", "reannotation"))
    p.set_defaults(func=cmd_translate)

    def add_matrix_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--level", type=int, choices=(1, 2, 3))
        p.add_argument("--seeds", type=int, nargs="+")
        p.add_argument("--split-mode", dest="split_mode", choices=("independent", "grouped"))
        p.add_argument("--preset", choices=("toy", "paper-ish"))
        p.add_argument("--input-size", dest="input_size", type=int, nargs=2)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr0", type=float)
        p.add_argument("--milestones", type=int, nargs="*")
        p.add_argument("--cst-steps", dest="cst_steps", type=int)
        p.add_argument("--no-augment", dest="augment", action="store_false", default=None)
        p.add_argument("--early-stop-train-acc", dest="early_stop_train_acc", type=float)

    p = sub.add_parser("train", help="train one grid cell (phi1..phi9)")
    _add_common(p)
    p.add_argument("corpus", nargs="?")
    p.add_argument("--phi", help="model id, phi1..phi9")
    add_matrix_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus")
    _add_common(p)
    p.add_argument("corpus", nargs="?")
    p.add_argument("--checkpoint")
    p.add_argument("--level", type=int, choices=(1, 2, 3))
    p.add_argument("--partition", choices=("all", "train", "test", "validate"))
    p.add_argument("--split-mode", dest="split_mode", choices=("independent", "grouped"))
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--annotation", choices=("baseline", "reannotation"))
    p.add_argument("--external", action="store_true", default=None,
                   help="treat the corpus as foreign: validate, then score incident clips")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("timeline", help="sliding-window predictions for one video")
    _add_common(p)
    p.add_argument("corpus", nargs="?")
    p.add_argument("--checkpoint")
    p.add_argument("--video-id", dest="video_id")
    p.add_argument("--level", type=int, choices=(1, 2, 3))
    p.add_argument("--stride", type=int)
    p.set_defaults(func=cmd_timeline)

    p = sub.add_parser("run-all", help="run the full nine-cell experiment grid")
    _add_common(p)
    p.add_argument("corpus", nargs="?")
    add_matrix_flags(p)
    p.add_argument("--stride", type=int, help="timeline stride")
    p.add_argument("--dry-run", dest="dry_run", action="store_true")
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(getattr(args, "config", None))
        required_ok = _check_required(args, config)
        if required_ok is not None:
            return required_ok
        return args.func(args, config)
    except (FileNotFoundError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


_REQUIRED = {
    "cmd_validate": ("annotations",),
    "cmd_clip": ("corpus",),
    "cmd_cst_train": ("corpus",),
    "cmd_translate": ("corpus", "codec"),
    "cmd_train": ("corpus",),
    "cmd_eval": ("corpus", "checkpoint"),
    "cmd_timeline": ("corpus", "checkpoint", "video_id"),
    "cmd_run_all": ("corpus",),
}


def _check_required(args: argparse.Namespace, config: dict) -> int | None:
    """Usage error when a required value came from neither flag nor config."""
    for key in _REQUIRED.get(args.func.__name__, ()):
        if _resolve(args, config, key) is None:
            print(f"error: {key.replace('_', '-')} is required", file=sys.stderr)
            return EXIT_USAGE
    return None


if __name__ == "__main__":
    sys.exit(main())
