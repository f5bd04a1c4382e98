"""Classifier training: SGD with momentum, milestone learning-rate decay.

The recipe is fixed small-batch SGD (batch 2, lr 0.1 decaying by 10 at the
milestones, momentum 0.9, weight decay 1e-7, up to 60 epochs) minimizing
cross-entropy.  Augmentation touches training clips only; the checkpoint kept
is the one with the best validation accuracy.
"""

from __future__ import annotations

import copy
import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import torch

from .augment import AugmentConfig, augment_frames
from .s3d import ClassifierParams, _batch_to_tensor, forward, softmax
from .seeds import derive_seed, rng_for
from .video import CLIP_LENGTHS, VideoClip

DatasetMode = Literal["originals-only", "augmented"]
Schedule = Literal["milestones", "plateau"]


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 2
    lr0: float = 0.1
    lr_decay_factor: float = 10.0
    milestones: tuple[int, ...] = (30, 50)
    momentum: float = 0.9
    weight_decay: float = 1e-7
    epochs: int = 60
    clip_len: int = 32
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    dataset_mode: DatasetMode = "originals-only"
    schedule: Schedule = "milestones"
    plateau_patience: int = 5
    plateau_threshold: float = 1e-3
    early_stop_train_acc: float | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.lr0 < 0 or self.lr_decay_factor <= 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("hyperparameters must be non-negative (decay factor > 0)")
        if self.clip_len not in CLIP_LENGTHS:
            raise ValueError(f"clip_len must be one of {CLIP_LENGTHS}, got {self.clip_len}")
        if any(m < 0 for m in self.milestones) or list(self.milestones) != sorted(self.milestones):
            raise ValueError(f"milestones must be sorted and non-negative, got {self.milestones}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    lr: float
    seconds: float


@dataclass
class RunLog:
    model_id: str
    entries: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = 0.0
    diverged: bool = False

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "train_acc", "val_acc", "lr", "seconds"])
            for e in self.entries:
                writer.writerow(
                    [e.epoch, f"{e.train_loss:.6f}", f"{e.train_acc:.4f}",
                     f"{e.val_acc:.4f}", f"{e.lr:.6g}", f"{e.seconds:.3f}"]
                )


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """lr0 divided by the decay factor once per milestone already reached."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    drops = sum(1 for m in cfg.milestones if m <= epoch)
    return cfg.lr0 / cfg.lr_decay_factor ** drops


def sgd_step(
    params: dict[str, np.ndarray],
    gradients: dict[str, np.ndarray],
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 1e-7,
    state: dict[str, np.ndarray] | None = None,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """One functional SGD-with-momentum update.

    v <- momentum * v + (grad + weight_decay * param)
    param <- param - lr * v
    """
    if set(params) != set(gradients):
        raise ValueError("params and gradients must share keys")
    state = {} if state is None else state
    new_params, new_state = {}, {}
    for name, p in params.items():
        g = gradients[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != param shape {p.shape}")
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for {name}")
        v = state.get(name, np.zeros_like(p))
        v = momentum * v + (g + weight_decay * p)
        new_params[name] = p - lr * v
        new_state[name] = v
    return new_params, new_state


def _clips_to_batch(clips: Sequence[VideoClip]) -> np.ndarray:
    return np.stack([c.frames for c in clips]).astype(np.float32)


def _evaluate_accuracy(params: ClassifierParams, clips: Sequence[VideoClip]) -> float:
    if not clips:
        return 0.0
    correct = 0
    for clip in clips:
        scores = forward(params, clip.frames[None]).scores
        if int(np.argmax(softmax(scores)[0])) == clip.label:
            correct += 1
    return correct / len(clips)


def train_classifier(
    params: ClassifierParams,
    train_clips: Sequence[VideoClip],
    val_clips: Sequence[VideoClip],
    cfg: TrainConfig,
    model_id: str = "phi",
) -> tuple[ClassifierParams, RunLog]:
    """Cross-entropy training; returns best-validation-accuracy parameters.

    With no validation clips the train accuracy stands in for selection.
    Divergence (non-finite loss) aborts, keeping the best checkpoint so far.
    """
    if not train_clips:
        raise ValueError("training set is empty")
    for clip in list(train_clips) + list(val_clips):
        if not 0 <= clip.label < params.num_classes:
            raise ValueError(f"clip {clip.clip_id}: label {clip.label} outside [0, {params.num_classes})")
        if clip.length != cfg.clip_len:
            raise ValueError(f"clip {clip.clip_id}: length {clip.length} != configured {cfg.clip_len}")

    torch.set_num_threads(1)
    torch.manual_seed(derive_seed(cfg.seed, "train", model_id))
    net = params.net
    criterion = torch.nn.CrossEntropyLoss()
    opt = torch.optim.SGD(
        net.parameters(), lr=cfg.lr0, momentum=cfg.momentum,
        weight_decay=cfg.weight_decay, dampening=0.0, nesterov=False,
    )
    order_rng = np.random.default_rng(derive_seed(cfg.seed, "batch-order", model_id))
    dtype = next(net.parameters()).dtype

    log = RunLog(model_id=model_id)
    best_state = copy.deepcopy(net.state_dict())
    current_lr = cfg.lr0
    plateau_wait, plateau_prev = 0, float("inf")

    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        if cfg.schedule == "milestones":
            current_lr = lr_at(epoch, cfg)
        for group in opt.param_groups:
            group["lr"] = current_lr

        net.train()
        order = order_rng.permutation(len(train_clips))
        losses = []
        diverged = False
        for start in range(0, len(order), cfg.batch_size):
            batch_clips = []
            for idx in order[start : start + cfg.batch_size]:
                clip = train_clips[idx]
                rng = rng_for(cfg.seed, "aug", model_id, epoch, clip.clip_id)
                batch_clips.append(augment_frames(clip, cfg.augment, rng))
            x = _batch_to_tensor(_clips_to_batch(batch_clips), dtype)
            y = torch.tensor([c.label for c in batch_clips])
            opt.zero_grad()
            loss = criterion(net(x), y)
            if not torch.isfinite(loss):
                diverged = True
                break
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))

        if diverged:
            log.diverged = True
            break

        train_loss = float(np.mean(losses)) if losses else float("nan")
        net.eval()
        try:
            train_acc = _evaluate_accuracy(params, train_clips)
            val_acc = _evaluate_accuracy(params, val_clips) if val_clips else train_acc
        except FloatingPointError:
            log.diverged = True
            break
        log.entries.append(
            EpochStats(epoch, train_loss, train_acc, val_acc, current_lr,
                       time.perf_counter() - started)
        )
        if val_acc > log.best_val_acc or log.best_epoch < 0:
            log.best_val_acc = val_acc
            log.best_epoch = epoch
            best_state = copy.deepcopy(net.state_dict())

        if cfg.schedule == "plateau":
            if plateau_prev - train_loss < cfg.plateau_threshold * max(abs(plateau_prev), 1.0):
                plateau_wait += 1
                if plateau_wait >= cfg.plateau_patience:
                    current_lr /= cfg.lr_decay_factor
                    plateau_wait = 0
            else:
                plateau_wait = 0
            plateau_prev = train_loss

        if cfg.early_stop_train_acc is not None and train_acc >= cfg.early_stop_train_acc:
            break

    net.load_state_dict(best_state)
    net.eval()
    params.epoch = log.best_epoch
    return params, log
