"""Separable-3D-convolution video classifier.

Every block factorizes a 3D convolution into a spatial-only (1, k, k)
convolution followed by a temporal-only (k, 1, 1) one, trading a little
accuracy for a large speed win.  Clips enter channels-last, (batch, L, H, W,
3) with values in [0, 1], and leave as one score per class; a global
spatio-temporal average pool ahead of the linear head makes the network
agnostic to input resolution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .seeds import derive_seed
from .video import CLIP_LENGTHS, VideoClip

EXPECTED_CLASS_COUNTS = (4, 7, 16)
TOY_PARAM_BUDGET = 200_000


@dataclass(frozen=True)
class SeparableBlockSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: tuple[int, int, int] = (1, 1, 1)  # (temporal, height, width)
    batch_norm: bool = True
    relu: bool = True


PRESET_BLOCKS: dict[str, tuple[SeparableBlockSpec, ...]] = {
    "toy": (
        SeparableBlockSpec(3, 16, stride=(1, 2, 2)),
        SeparableBlockSpec(16, 24, stride=(2, 2, 2)),
        SeparableBlockSpec(24, 32, stride=(1, 2, 2)),
        SeparableBlockSpec(32, 48, stride=(2, 2, 2)),
    ),
    "paper-ish": (
        SeparableBlockSpec(3, 24, stride=(1, 2, 2)),
        SeparableBlockSpec(24, 32, stride=(1, 2, 2)),
        SeparableBlockSpec(32, 64, stride=(2, 2, 2)),
        SeparableBlockSpec(64, 64),
        SeparableBlockSpec(64, 128, stride=(2, 2, 2)),
        SeparableBlockSpec(128, 128),
        SeparableBlockSpec(128, 256, stride=(2, 2, 2)),
        SeparableBlockSpec(256, 256),
    ),
}

DEFAULT_INPUT_SIZE = {"toy": (64, 64), "paper-ish": (224, 224)}


class SeparableConv3d(nn.Module):
    """Spatial (1, k, k) convolution, then temporal (k, 1, 1)."""

    def __init__(self, spec: SeparableBlockSpec):
        super().__init__()
        k, (st, sh, sw) = spec.kernel, spec.stride
        self.spatial = nn.Conv3d(
            spec.in_channels, spec.out_channels,
            kernel_size=(1, k, k), stride=(1, sh, sw), padding=(0, k // 2, k // 2),
            bias=not spec.batch_norm,
        )
        self.temporal = nn.Conv3d(
            spec.out_channels, spec.out_channels,
            kernel_size=(k, 1, 1), stride=(st, 1, 1), padding=(k // 2, 0, 0),
            bias=not spec.batch_norm,
        )
        self.bn1 = nn.BatchNorm3d(spec.out_channels) if spec.batch_norm else nn.Identity()
        self.bn2 = nn.BatchNorm3d(spec.out_channels) if spec.batch_norm else nn.Identity()
        self.act = nn.ReLU(inplace=True) if spec.relu else nn.Identity()

    def forward(self, x):
        x = self.act(self.bn1(self.spatial(x)))
        return self.act(self.bn2(self.temporal(x)))


class _ClassifierNet(nn.Module):
    def __init__(self, blocks: Sequence[SeparableBlockSpec], num_classes: int):
        super().__init__()
        self.blocks = nn.Sequential(*(SeparableConv3d(spec) for spec in blocks))
        self.pool = nn.AdaptiveAvgPool3d(1)
        self.head = nn.Linear(blocks[-1].out_channels, num_classes)

    def forward(self, x):
        h = self.pool(self.blocks(x)).flatten(1)
        return self.head(h)


@dataclass
class ClassifierParams:
    """The network plus the contract it was built for."""

    net: _ClassifierNet
    preset: str
    num_classes: int
    clip_len: int
    input_size: tuple[int, int]
    blocks: tuple[SeparableBlockSpec, ...]
    seed: int
    epoch: int = 0

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {key: tensor.numpy() for key, tensor in self.net.state_dict().items()}


@dataclass(frozen=True)
class Logits:
    scores: np.ndarray  # (batch, num_classes)

    def __post_init__(self):
        if not np.isfinite(self.scores).all():
            raise FloatingPointError("non-finite logits")


def build_classifier(
    num_classes: int,
    clip_len: int,
    preset: str = "toy",
    input_size: tuple[int, int] | None = None,
    seed: int = 0,
) -> ClassifierParams:
    if num_classes not in EXPECTED_CLASS_COUNTS:
        warnings.warn(f"unusual class count {num_classes}; expected one of {EXPECTED_CLASS_COUNTS}")
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if clip_len not in CLIP_LENGTHS:
        raise ValueError(f"clip_len must be one of {CLIP_LENGTHS}, got {clip_len}")
    if preset not in PRESET_BLOCKS:
        raise ValueError(f"unknown preset {preset!r}; have {sorted(PRESET_BLOCKS)}")
    blocks = PRESET_BLOCKS[preset]
    torch.manual_seed(derive_seed(seed, "classifier-init", preset, num_classes))
    net = _ClassifierNet(blocks, num_classes)
    params = ClassifierParams(
        net=net,
        preset=preset,
        num_classes=num_classes,
        clip_len=clip_len,
        input_size=input_size or DEFAULT_INPUT_SIZE[preset],
        blocks=blocks,
        seed=seed,
    )
    if preset == "toy" and params.parameter_count() > TOY_PARAM_BUDGET:
        raise AssertionError(f"toy preset exceeds budget: {params.parameter_count()}")
    net.eval()
    return params


def _batch_to_tensor(batch: np.ndarray | torch.Tensor, dtype: torch.dtype) -> torch.Tensor:
    if isinstance(batch, np.ndarray):
        batch = torch.from_numpy(np.ascontiguousarray(batch))
    return batch.permute(0, 4, 1, 2, 3).to(dtype)  # (B, 3, L, H, W)


def _check_batch(params: ClassifierParams, batch) -> None:
    if batch.ndim != 5 or batch.shape[-1] != 3:
        raise ValueError(f"batch must be (batch, L, H, W, 3), got {tuple(batch.shape)}")
    if batch.shape[1] != params.clip_len:
        raise ValueError(f"clip length {batch.shape[1]} does not match model contract {params.clip_len}")


def forward(params: ClassifierParams, batch: np.ndarray | torch.Tensor) -> Logits:
    """Inference scores for a channels-last batch."""
    _check_batch(params, batch)
    dtype = next(params.net.parameters()).dtype
    params.net.eval()
    with torch.no_grad():
        scores = params.net(_batch_to_tensor(batch, dtype))
    return Logits(scores=scores.numpy())


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict(params: ClassifierParams, clip: VideoClip | np.ndarray) -> tuple[int, np.ndarray]:
    """Class id (argmax, ties to the lowest id) and the probability vector."""
    frames = clip.frames if isinstance(clip, VideoClip) else clip
    logits = forward(params, frames[None])
    probs = softmax(logits.scores)[0]
    return int(np.argmax(probs)), probs


def save_classifier(path: str | Path, params: ClassifierParams) -> None:
    header = {
        "kind": "classifier",
        "preset": params.preset,
        "num_classes": params.num_classes,
        "clip_len": params.clip_len,
        "input_size": list(params.input_size),
        "seed": params.seed,
        "epoch": params.epoch,
    }
    save_checkpoint(path, header, params.state_arrays())


def load_classifier(path: str | Path) -> ClassifierParams:
    header, arrays = load_checkpoint(path)
    if header.get("kind") != "classifier":
        raise ValueError(f"{path}: not a classifier checkpoint")
    params = build_classifier(
        header["num_classes"],
        header["clip_len"],
        header["preset"],
        input_size=tuple(header["input_size"]),
        seed=header["seed"],
    )
    params.epoch = header["epoch"]
    params.net.load_state_dict({key: torch.from_numpy(arr) for key, arr in arrays.items()})
    params.net.eval()
    return params


def load_pretrained_backbone(params: ClassifierParams, path: str | Path) -> ClassifierParams:
    """Replace all block weights from a checkpoint; the head starts fresh.

    The checkpoint may have been trained for any class count; only non-head
    parameters are taken, so a 400-way model seeds a 16-way one.
    """
    header, arrays = load_checkpoint(path)
    if header.get("kind") != "classifier":
        raise ValueError(f"{path}: not a classifier checkpoint")
    if header.get("preset") != params.preset:
        raise ValueError(f"preset mismatch: checkpoint {header.get('preset')!r} vs model {params.preset!r}")

    current = params.net.state_dict()
    backbone = {key: arr for key, arr in arrays.items() if not key.startswith("head.")}
    mismatches = []
    for key, arr in backbone.items():
        if key not in current:
            mismatches.append(f"{key}: not in model")
        elif tuple(current[key].shape) != arr.shape:
            mismatches.append(f"{key}: checkpoint {arr.shape} vs model {tuple(current[key].shape)}")
    missing = [key for key in current if not key.startswith("head.") and key not in backbone]
    mismatches += [f"{key}: missing from checkpoint" for key in missing]
    if mismatches:
        raise ValueError("incompatible backbone:\n  " + "\n  ".join(mismatches))

    fresh = build_classifier(
        params.num_classes, params.clip_len, params.preset,
        input_size=params.input_size, seed=params.seed,
    )
    state = fresh.net.state_dict()
    for key, arr in backbone.items():
        state[key] = torch.from_numpy(arr)
    fresh.net.load_state_dict(state)
    fresh.net.eval()
    return fresh
