"""Per-clip frame augmentations: flip, autocontrast, grayscale, perspective.

Each transform fires once per clip (a single random draw) and is applied
identically to every frame, so motion cues survive; per-frame draws would
flicker.  All outputs stay within [0, 1].
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import cv2
import numpy as np

from .video import VideoClip


@dataclass(frozen=True)
class AugmentConfig:
    p_hflip: float = 0.5
    p_autocontrast: float = 0.5
    p_grayscale: float = 0.5
    p_perspective: float = 0.5
    distortion_scale: float = 0.1

    def __post_init__(self):
        for name in ("p_hflip", "p_autocontrast", "p_grayscale", "p_perspective"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if not 0.0 <= self.distortion_scale <= 1.0:
            raise ValueError(f"distortion_scale must be in [0, 1], got {self.distortion_scale}")


IDENTITY = AugmentConfig(0.0, 0.0, 0.0, 0.0)

LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def hflip(frames: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(frames[:, :, ::-1, :])


def autocontrast(frames: np.ndarray) -> np.ndarray:
    """Stretch each channel's clip-wide range to [0, 1]; flat channels pass."""
    out = frames.copy()
    for c in range(frames.shape[-1]):
        lo = float(frames[..., c].min())
        hi = float(frames[..., c].max())
        if hi > lo:
            out[..., c] = (frames[..., c] - lo) / (hi - lo)
    return out


def grayscale(frames: np.ndarray) -> np.ndarray:
    luma = frames @ LUMA
    return np.repeat(luma[..., None], 3, axis=-1)


def perspective_matrix(height: int, width: int, distortion_scale: float, rng: np.random.Generator) -> np.ndarray:
    """A random inward-corner warp, bounded by distortion_scale.

    Each corner moves toward the image center by up to distortion_scale times
    half the image size along each axis.
    """
    dx = distortion_scale * width / 2.0
    dy = distortion_scale * height / 2.0
    w, h = width - 1.0, height - 1.0
    src = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=np.float32)
    pulls = rng.uniform(0.0, 1.0, size=(4, 2)).astype(np.float32)
    dst = src + pulls * np.array(
        [[dx, dy], [-dx, dy], [-dx, -dy], [dx, -dy]], dtype=np.float32
    )
    return cv2.getPerspectiveTransform(src, dst)


def warp_clip(frames: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    height, width = frames.shape[1:3]
    return np.stack(
        [cv2.warpPerspective(f, matrix, (width, height), flags=cv2.INTER_LINEAR) for f in frames]
    )


def augment_frames(clip: VideoClip, cfg: AugmentConfig, rng: np.random.Generator) -> VideoClip:
    """Apply the configured transforms, one gate draw each, clip-wide."""
    frames = clip.frames
    touched = False

    if rng.random() < cfg.p_hflip:
        frames = hflip(frames)
        touched = True
    if rng.random() < cfg.p_autocontrast:
        frames = autocontrast(frames)
        touched = True
    if rng.random() < cfg.p_grayscale:
        frames = grayscale(frames)
        touched = True
    if rng.random() < cfg.p_perspective:
        height, width = frames.shape[1:3]
        matrix = perspective_matrix(height, width, cfg.distortion_scale, rng)
        frames = warp_clip(frames, matrix)
        touched = True

    if touched:
        frames = np.clip(frames, 0.0, 1.0).astype(np.float32)
    else:
        frames = frames.copy()
    return dataclasses.replace(clip, frames=frames)
