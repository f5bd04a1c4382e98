"""Train/test/validate partitioning of clips, 70/20/10.

Two modes.  ``independent`` shuffles and splits each provenance set on its
own, which mirrors the evaluation protocol this reproduces but can put a
style-translated copy of a test clip into training.  ``grouped`` keeps every
clip sharing a source video in one partition and is the leakage-safe default.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .seeds import derive_seed
from .video import Provenance

SPLIT_RATIOS = (0.7, 0.2, 0.1)

SplitMode = Literal["independent", "grouped"]


@dataclass(frozen=True)
class ClipRef:
    """The identity a split decision needs; no pixel data."""

    clip_id: str
    source_video_id: str
    provenance: Provenance = "original"


@dataclass(frozen=True)
class SplitAssignment:
    train: frozenset[str]
    test: frozenset[str]
    validate: frozenset[str]
    seed: int
    mode: SplitMode

    def partition_of(self, clip_id: str) -> str:
        for name in ("train", "test", "validate"):
            if clip_id in getattr(self, name):
                return name
        raise KeyError(clip_id)

    @property
    def size(self) -> int:
        return len(self.train) + len(self.test) + len(self.validate)


def _cut_points(n: int, ratios: tuple[float, float, float]) -> tuple[int, int]:
    n_train = int(np.floor(ratios[0] * n))
    n_test = int(np.floor(ratios[1] * n))
    return n_train, n_train + n_test


def _split_ids(ids: list[str], ratios, rng: np.random.Generator) -> tuple[list[str], list[str], list[str]]:
    order = [ids[i] for i in rng.permutation(len(ids))]
    a, b = _cut_points(len(ids), ratios)
    return order[:a], order[a:b], order[b:]


def split_dataset(
    clips: Sequence[ClipRef],
    ratios: tuple[float, float, float] = SPLIT_RATIOS,
    mode: SplitMode = "grouped",
    seed: int = 0,
) -> SplitAssignment:
    """Assign every clip to exactly one of train/test/validate.

    Deterministic in (clips-as-set, ratios, mode, seed); input order is
    irrelevant because ids are sorted before shuffling.
    """
    if len(clips) < 3:
        raise ValueError(f"need at least 3 clips to split, got {len(clips)}")
    if len({c.clip_id for c in clips}) != len(clips):
        raise ValueError("clip ids must be unique")
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {ratios}")

    train: list[str] = []
    test: list[str] = []
    validate: list[str] = []

    if mode == "independent":
        by_prov: dict[str, list[str]] = {}
        for c in sorted(clips, key=lambda c: c.clip_id):
            by_prov.setdefault(c.provenance, []).append(c.clip_id)
        for provenance, ids in sorted(by_prov.items()):
            rng = np.random.default_rng(derive_seed(seed, "split", provenance))
            a, b, c = _split_ids(ids, ratios, rng)
            train += a
            test += b
            validate += c
    elif mode == "grouped":
        by_source: dict[str, list[str]] = {}
        for c in sorted(clips, key=lambda c: c.clip_id):
            by_source.setdefault(c.source_video_id, []).append(c.clip_id)
        sources = sorted(by_source)
        rng = np.random.default_rng(derive_seed(seed, "split", "grouped"))
        order = [sources[i] for i in rng.permutation(len(sources))]
        n = len(clips)
        n_train, n_train_test = _cut_points(n, ratios)
        for source in order:
            ids = by_source[source]
            if len(train) < n_train:
                train += ids
            elif len(train) + len(test) < n_train_test:
                test += ids
            else:
                validate += ids
    else:
        raise ValueError(f"unknown split mode: {mode}")

    return SplitAssignment(
        train=frozenset(train),
        test=frozenset(test),
        validate=frozenset(validate),
        seed=seed,
        mode=mode,
    )
