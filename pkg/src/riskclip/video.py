"""Frame storage, exact time-to-frame conversion, clip extraction, sampling.

Videos live on disk as frame directories, ``<video_id>/000000.png`` onward,
described by a corpus manifest.  Times convert to frame indices through
``floor(t * fps)`` evaluated in exact rational arithmetic so that fps values
like 29.97 floor the same way on every platform.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Literal, Sequence

import cv2
import numpy as np

CLIP_LENGTHS = (16, 32, 64)

Policy = Literal["head", "uniform-stride", "random"]
Domain = Literal["day", "night"]
Provenance = Literal["original", "f1", "f2"]

FRAME_NAME = "{:06d}.png"


class EmptyVideoError(Exception):
    pass


class ClipRangeError(Exception):
    pass


def frame_index(t: float, fps: float) -> int:
    """floor(t * fps), exact: 3.0 s at 29.97 fps is frame 89, never 90."""
    if fps <= 0:
        raise ValueError(f"fps must be > 0, got {fps}")
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    return math.floor(Fraction(t) * Fraction(fps))


@dataclass
class FrameSource:
    """Readable frame directory plus its declared metadata."""

    video_id: str
    frame_count: int
    fps: float
    resolution: tuple[int, int]  # (height, width)
    root: Path

    def __post_init__(self):
        if self.frame_count < 1:
            raise EmptyVideoError(f"{self.video_id}: no frames")
        if self.fps <= 0:
            raise ValueError(f"{self.video_id}: fps must be > 0, got {self.fps}")

    def frame_path(self, index: int) -> Path:
        return self.root / FRAME_NAME.format(index)

    def read(self, index: int) -> np.ndarray:
        """One frame as uint8 RGB (H, W, 3)."""
        if not 0 <= index < self.frame_count:
            raise ClipRangeError(f"{self.video_id}: frame {index} outside [0, {self.frame_count})")
        bgr = cv2.imread(str(self.frame_path(index)), cv2.IMREAD_COLOR)
        if bgr is None:
            raise IOError(f"unreadable frame: {self.frame_path(index)}")
        return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)

    def read_range(self, frames: range) -> list[np.ndarray]:
        return [self.read(i) for i in frames]


def load_video(path: str | Path, fps: float) -> FrameSource:
    """Open a frame directory; counts frames and probes the resolution."""
    root = Path(path)
    if not root.is_dir():
        raise IOError(f"not a frame directory: {root}")
    frame_count = 0
    while (root / FRAME_NAME.format(frame_count)).exists():
        frame_count += 1
    if frame_count == 0:
        raise EmptyVideoError(f"no frames found under {root}")
    probe = cv2.imread(str(root / FRAME_NAME.format(0)), cv2.IMREAD_COLOR)
    if probe is None:
        raise IOError(f"unreadable frame: {root / FRAME_NAME.format(0)}")
    return FrameSource(
        video_id=root.name,
        frame_count=frame_count,
        fps=fps,
        resolution=(probe.shape[0], probe.shape[1]),
        root=root,
    )


@dataclass
class VideoClip:
    """Fixed-length frame stack ready for a model.

    frames: float array (T, H, W, 3), values in [0, 1].
    provenance: "original" for camera footage, "f1"/"f2" for style-translated
    copies derived from it.
    """

    frames: np.ndarray
    fps: float
    domain: Domain
    provenance: Provenance
    label: int
    source_video_id: str
    clip_id: str = ""

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError(f"frames must be (T, H, W, 3), got {self.frames.shape}")
        if not self.clip_id:
            self.clip_id = f"{self.source_video_id}/{self.provenance}"

    @property
    def length(self) -> int:
        return int(self.frames.shape[0])


def extract_incident_clip(src: FrameSource, t0: float, t3: float) -> range:
    """Frame range [floor(t0 fps), floor(t3 fps)) covering the incident."""
    start, stop = frame_index(t0, src.fps), frame_index(t3, src.fps)
    if not start < stop:
        raise ClipRangeError(f"{src.video_id}: incident window [{t0}, {t3}) maps to empty range [{start}, {stop})")
    if stop > src.frame_count:
        raise ClipRangeError(f"{src.video_id}: incident end frame {stop} beyond video end {src.frame_count}")
    return range(start, stop)


def extract_normal_clip(src: FrameSource, t4: float | None, t5: float) -> range:
    """Frame range [floor(t4 fps), floor(t5 fps)) after the post-incident gap."""
    if t4 is None:
        raise ClipRangeError(f"{src.video_id}: no normal segment (t4 absent)")
    start, stop = frame_index(t4, src.fps), frame_index(t5, src.fps)
    if start >= src.frame_count:
        raise ClipRangeError(f"{src.video_id}: normal start frame {start} beyond video end {src.frame_count}")
    if stop > src.frame_count:
        raise ClipRangeError(f"{src.video_id}: normal end frame {stop} beyond video end {src.frame_count}")
    if not start < stop:
        raise ClipRangeError(f"{src.video_id}: normal window [{t4}, {t5}) maps to empty range [{start}, {stop})")
    return range(start, stop)


def sample_indices(n: int, length: int, policy: Policy, rng: np.random.Generator | None = None) -> list[int]:
    """Pick ``length`` frame offsets from a range of ``n``.

    Ranges shorter than ``length`` repeat the last frame regardless of policy.
    head: the first frames.  uniform-stride: round(k(n-1)/(L-1)), monotone
    with both endpoints included.  random: a contiguous block at a random
    start (needs ``rng``).
    """
    if length not in CLIP_LENGTHS:
        raise ValueError(f"clip length must be one of {CLIP_LENGTHS}, got {length}")
    if n <= 0:
        raise ClipRangeError("cannot sample from an empty range")
    if n < length:
        return list(range(n)) + [n - 1] * (length - n)
    if policy == "head":
        return list(range(length))
    if policy == "uniform-stride":
        return [round(k * (n - 1) / (length - 1)) for k in range(length)]
    if policy == "random":
        if rng is None:
            raise ValueError("random policy needs an rng")
        start = int(rng.integers(0, n - length + 1))
        return list(range(start, start + length))
    raise ValueError(f"unknown sampling policy: {policy}")


def frames_to_unit(frames: Sequence[np.ndarray], size: tuple[int, int] | None = None) -> np.ndarray:
    """Stack uint8 RGB frames into a float32 (T, H, W, 3) array in [0, 1]."""
    out = []
    for frame in frames:
        if size is not None and frame.shape[:2] != size:
            frame = cv2.resize(frame, (size[1], size[0]), interpolation=cv2.INTER_LINEAR)
        out.append(frame.astype(np.float32) / 255.0)
    return np.stack(out)


def sample_window(
    src: FrameSource,
    frames: range,
    length: int,
    policy: Policy,
    rng: np.random.Generator | None = None,
    *,
    label: int,
    domain: Domain = "day",
    provenance: Provenance = "original",
    size: tuple[int, int] | None = None,
    clip_id: str = "",
) -> VideoClip:
    """Read a fixed-length window out of a frame range."""
    offsets = sample_indices(len(frames), length, policy, rng)
    raw = [src.read(frames[o]) for o in offsets]
    return VideoClip(
        frames=frames_to_unit(raw, size),
        fps=src.fps,
        domain=domain,
        provenance=provenance,
        label=label,
        source_video_id=src.video_id,
        clip_id=clip_id,
    )


# ---------------------------------------------------------------------------
# Corpus manifest


@dataclass(frozen=True)
class ManifestEntry:
    video_id: str
    frame_count: int
    fps: float
    height: int
    width: int
    domain: Domain


def write_manifest(path: str | Path, entries: Sequence[ManifestEntry], extra: dict | None = None) -> None:
    payload = {
        "videos": {
            e.video_id: {
                "frame_count": e.frame_count,
                "fps": e.fps,
                "height": e.height,
                "width": e.width,
                "domain": e.domain,
            }
            for e in entries
        }
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_manifest(path: str | Path) -> dict[str, ManifestEntry]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    entries = {}
    for video_id, meta in payload["videos"].items():
        entries[video_id] = ManifestEntry(
            video_id=video_id,
            frame_count=int(meta["frame_count"]),
            fps=float(meta["fps"]),
            height=int(meta["height"]),
            width=int(meta["width"]),
            domain=meta["domain"],
        )
    return entries


def open_corpus_video(corpus_root: str | Path, video_id: str) -> FrameSource:
    """Open one video of a corpus, checking the manifest against the disk."""
    corpus_root = Path(corpus_root)
    entry = read_manifest(corpus_root / "manifest.json").get(video_id)
    if entry is None:
        raise KeyError(f"video {video_id!r} not in manifest")
    src = load_video(corpus_root / "frames" / video_id, fps=entry.fps)
    if src.frame_count != entry.frame_count or src.resolution != (entry.height, entry.width):
        raise IOError(
            f"{video_id}: manifest says {entry.frame_count} frames at "
            f"{(entry.height, entry.width)}, disk has {src.frame_count} at {src.resolution}"
        )
    return src
