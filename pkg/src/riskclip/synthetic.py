"""Deterministic procedural corpus for desk-scale runs.

Each video is a road-like background (gradient, trapezoid, scrolling lane
dashes).  Risk-class videos show a class-colored rectangle that slides into
the ego's path during the annotated incident window and is absent elsewhere,
so incident clips carry a clean class signal while post-gap segments look
like Normal footage.  Night videos are globally darkened with headlight
blobs.  Same spec + seed produces byte-identical frames, manifest and
annotations.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .annotations import (
    AnnotationRecord,
    TemporalWindow,
    serialize_annotations,
    validate_record,
)
from .seeds import rng_for
from .video import FRAME_NAME, ManifestEntry, write_manifest

# One distinct, saturated RGB color per 16-class id; Normal (15) draws nothing.
CLASS_COLORS = [
    (230, 40, 40), (250, 120, 0), (240, 220, 0), (130, 230, 0),
    (0, 200, 60), (0, 220, 170), (0, 190, 240), (0, 110, 250),
    (60, 40, 250), (150, 0, 240), (220, 0, 200), (250, 0, 120),
    (160, 90, 40), (240, 170, 120), (120, 120, 250), (0, 0, 0),
]

NORMAL_CLASS = 15


@dataclass(frozen=True)
class CorpusSpec:
    n_videos: int = 8
    classes: tuple[int, ...] = (1, 10, 14, 15)  # pedestrian, car, self-accident, normal
    fps: float = 10.0
    resolution: tuple[int, int] = (64, 64)  # (height, width)
    night_fraction: float = 0.5

    def __post_init__(self):
        if self.n_videos < 1:
            raise ValueError("n_videos must be >= 1")
        if not self.classes or any(not 0 <= c < 16 for c in self.classes):
            raise ValueError(f"classes must be 16-class ids, got {self.classes}")
        if self.fps <= 0:
            raise ValueError("fps must be > 0")
        if not 0.0 <= self.night_fraction <= 1.0:
            raise ValueError("night_fraction must be in [0, 1]")


@dataclass(frozen=True)
class CorpusPaths:
    root: Path
    manifest: Path
    annotations: Path
    baseline_annotations: Path
    frames_dir: Path


def _background(height: int, width: int, frame_no: int) -> np.ndarray:
    """Road scene, RGB float: sky-to-asphalt gradient, trapezoid, moving dashes."""
    rows = np.linspace(60.0, 110.0, height, dtype=np.float32)[:, None]
    img = np.repeat(rows, width, axis=1)
    img = np.repeat(img[:, :, None], 3, axis=2)

    horizon = height // 3
    top_half, bottom_half = width // 12, width // 2
    road = np.array(
        [
            [width // 2 - top_half, horizon],
            [width // 2 + top_half, horizon],
            [width // 2 + bottom_half, height - 1],
            [width // 2 - bottom_half, height - 1],
        ],
        dtype=np.int32,
    )
    cv2.fillPoly(img, [road], color=(45.0, 45.0, 48.0))

    # Scrolling center dashes give every clip coherent motion.
    period = max(height // 8, 2)
    offset = (frame_no * 2) % period
    for y in range(horizon + offset, height, period):
        cv2.line(img, (width // 2, y), (width // 2, min(y + period // 3, height - 1)), (200.0, 200.0, 60.0), 1)
    return img


def _event_overlay(img: np.ndarray, class16: int, progress: float) -> None:
    """Slide the class-colored rectangle from the frame edge into the ego path."""
    height, width = img.shape[:2]
    size = max(height // 5, 4)
    side = 1 if class16 % 2 else -1
    x_edge = width - size - 1 if side > 0 else 1
    x_center = width // 2 - size // 2
    x = int(round(x_edge + (x_center - x_edge) * progress))
    y = int(round(height * (0.45 + 0.35 * progress)))
    y = min(y, height - size - 1)
    color = tuple(float(c) for c in CLASS_COLORS[class16])
    cv2.rectangle(img, (x, y), (x + size, y + size), color, thickness=-1)


def _night(img: np.ndarray, height: int, width: int, frame_no: int) -> np.ndarray:
    out = img * 0.25
    cy = int(height * 0.75)
    sway = int(3 * np.sin(frame_no / 4.0))
    for cx in (width // 2 - width // 6 + sway, width // 2 + width // 6 + sway):
        cv2.circle(out, (cx, cy), max(width // 16, 2), (235.0, 235.0, 200.0), thickness=-1)
    return out


def render_frame(
    height: int, width: int, frame_no: int, fps: float, class16: int, t0: float, t3: float, domain: str
) -> np.ndarray:
    """One uint8 RGB frame of the procedural scene."""
    img = _background(height, width, frame_no)
    t = frame_no / fps
    if class16 != NORMAL_CLASS and t0 <= t < t3:
        progress = (t - t0) / (t3 - t0)
        _event_overlay(img, class16, progress)
    if domain == "night":
        img = _night(img, height, width, frame_no)
    return np.clip(img, 0.0, 255.0).astype(np.uint8)


def _make_record(video_id: str, class16: int, fps: float, rng: np.random.Generator) -> AnnotationRecord:
    t0 = round(float(rng.uniform(0.8, 1.6)), 1)
    t3 = round(t0 + float(rng.uniform(1.7, 2.4)), 1)  # >= 16 frames at 10 fps
    t4 = t3 + 2.0
    t5 = round(t4 + float(rng.uniform(2.4, 3.2)), 1)
    near_miss = class16 != NORMAL_CLASS and rng.random() < 0.25
    mu = round(float(rng.uniform(t0, t3)), 2) if near_miss else None
    return AnnotationRecord(
        video_id=video_id,
        class16=class16,
        window=TemporalWindow(t0=t0, t3=t3, t4=t4, t5=t5, mu=mu),
        fps=fps,
        near_miss=near_miss,
    )


def perturb_records(records: Sequence[AnnotationRecord], spec: CorpusSpec, seed: int) -> list[AnnotationRecord]:
    """A deliberately sloppier annotation pass over the same videos.

    Windows shift by a few tenths of a second and a quarter of the risk
    videos get a wrong class, emulating a first-pass labelling effort that a
    re-annotation would fix.  Records stay structurally valid.
    """
    rng = rng_for(seed, "baseline-annotations")
    out = []
    for record in records:
        w = record.window
        shift = round(float(rng.uniform(0.2, 0.6)), 1)
        t0 = max(0.0, round(w.t0 - shift, 1))
        t3 = round(w.t3 - shift, 1)
        if t3 <= t0:
            t3 = round(t0 + 0.5, 1)
        t4 = t3 + 2.0
        class16 = record.class16
        if class16 != NORMAL_CLASS and rng.random() < 0.25:
            others = [c for c in spec.classes if c != class16]
            if others:
                class16 = int(others[rng.integers(len(others))])
        out.append(
            dataclasses.replace(
                record,
                class16=class16,
                window=dataclasses.replace(w, t0=t0, t3=t3, t4=t4),
            )
        )
    return out


def generate_synthetic_corpus(spec: CorpusSpec, seed: int, out_root: str | Path) -> CorpusPaths:
    """Write frames, manifest, annotations and a perturbed baseline variant."""
    root = Path(out_root)
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    height, width = spec.resolution

    records, entries = [], []
    for i in range(spec.n_videos):
        video_id = f"syn_{i:04d}"
        class16 = spec.classes[i % len(spec.classes)]
        rng = rng_for(seed, "video", video_id)
        record = _make_record(video_id, class16, spec.fps, rng)
        report = validate_record(record)
        if not report.ok:
            raise AssertionError(f"generator produced an invalid record: {report.violations}")
        records.append(record)

        # Domain flips per class cycle, not per video, so no class is tied to
        # one domain: with 4 classes and night_fraction 0.5, videos 0-3 are
        # day, 4-7 night, and every class gets one of each.
        block = i // len(spec.classes)
        is_night = int((block + 1) * spec.night_fraction) > int(block * spec.night_fraction)
        domain = "night" if is_night else "day"
        frame_count = int(round(record.window.t5 * spec.fps))
        video_dir = frames_dir / video_id
        video_dir.mkdir(exist_ok=True)
        for frame_no in range(frame_count):
            frame = render_frame(
                height, width, frame_no, spec.fps, class16, record.window.t0, record.window.t3, domain
            )
            cv2.imwrite(str(video_dir / FRAME_NAME.format(frame_no)), cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
        entries.append(
            ManifestEntry(
                video_id=video_id,
                frame_count=frame_count,
                fps=spec.fps,
                height=height,
                width=width,
                domain=domain,
            )
        )

    paths = CorpusPaths(
        root=root,
        manifest=root / "manifest.json",
        annotations=root / "annotations.jsonl",
        baseline_annotations=root / "annotations_baseline.jsonl",
        frames_dir=frames_dir,
    )
    write_manifest(paths.manifest, entries, extra={"seed": seed, "generator": corpus_spec_obj(spec)})
    serialize_annotations(records, paths.annotations)
    serialize_annotations(perturb_records(records, spec, seed), paths.baseline_annotations)
    return paths


def corpus_spec_obj(spec: CorpusSpec) -> dict:
    return {
        "n_videos": spec.n_videos,
        "classes": list(spec.classes),
        "fps": spec.fps,
        "resolution": list(spec.resolution),
        "night_fraction": spec.night_fraction,
    }


def corpus_spec_from_obj(obj: dict) -> CorpusSpec:
    return CorpusSpec(
        n_videos=int(obj.get("n_videos", 8)),
        classes=tuple(obj.get("classes", (1, 10, 14, 15))),
        fps=float(obj.get("fps", 10.0)),
        resolution=tuple(obj.get("resolution", (64, 64))),
        night_fraction=float(obj.get("night_fraction", 0.5)),
    )
