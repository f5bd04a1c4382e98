"""Shared fixtures: one small rendered corpus per test session."""

import numpy as np
import pytest

from riskclip.synthetic import CorpusPaths, CorpusSpec, generate_synthetic_corpus
from riskclip.video import VideoClip

CORPUS_SPEC = CorpusSpec(n_videos=8, classes=(1, 10, 14, 15), fps=10.0, resolution=(32, 32))
CORPUS_SEED = 11


@pytest.fixture(scope="session")
def corpus(tmp_path_factory) -> CorpusPaths:
    root = tmp_path_factory.mktemp("session-corpus")
    return generate_synthetic_corpus(CORPUS_SPEC, CORPUS_SEED, root)


def make_clip(
    rng: np.random.Generator,
    label: int,
    clip_id: str,
    length: int = 16,
    size: int = 8,
    base: float | None = None,
) -> VideoClip:
    """Random in-memory clip; ``base`` biases brightness to make labels separable."""
    frames = rng.random((length, size, size, 3), dtype=np.float32)
    if base is not None:
        frames = np.clip(0.2 * frames + base, 0.0, 1.0).astype(np.float32)
    return VideoClip(
        frames=frames,
        fps=10.0,
        domain="day",
        provenance="original",
        label=label,
        source_video_id=clip_id.split("/")[0],
        clip_id=clip_id,
    )
