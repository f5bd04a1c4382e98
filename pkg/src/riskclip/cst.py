"""Day/night conditional style translation over a shared latent space.

Two per-domain encoders and decoders share their innermost layers, so both
domains meet in one latent space.  Translating a clip runs every frame
through the opposite domain's pathway: f1 = source-decoder(target-encoder),
f2 = target-decoder(source-encoder).  The networks are image-to-image;
frames of one clip are translated independently, which leaves temporal
consistency unregularized (a known limitation).

Training uses the composite objective of shared-latent translators:
within-domain reconstruction, a Gaussian pull on the latent codes,
adversarial realism of the cross-domain outputs, and cycle consistency.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import torch
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .seeds import derive_seed
from .video import VideoClip

CodecDomain = Literal["source", "target"]

MODULE_NAMES = (
    "enc_source", "enc_target", "shared_enc",
    "shared_dec", "dec_source", "dec_target",
)


@dataclass(frozen=True)
class CodecPreset:
    base_channels: int
    latent_channels: int


PRESETS = {
    "toy": CodecPreset(base_channels=8, latent_channels=8),
    "paper-ish": CodecPreset(base_channels=32, latent_channels=64),
}


class _PrivateEncoder(nn.Module):
    """Domain-specific front end: two stride-2 convolutions."""

    def __init__(self, base: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, base, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(base, base * 2, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class _Residual(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        h = torch.relu(self.conv1(x))
        return x + self.conv2(h)


class _SharedEncoder(nn.Module):
    """Innermost encoder layers, common to both domains; emits the code mean."""

    def __init__(self, base: int, latent: int):
        super().__init__()
        self.res = _Residual(base * 2)
        self.to_latent = nn.Conv2d(base * 2, latent, 3, padding=1)

    def forward(self, x):
        return self.to_latent(self.res(x))


class _SharedDecoder(nn.Module):
    """Innermost decoder layers, common to both domains."""

    def __init__(self, base: int, latent: int):
        super().__init__()
        self.from_latent = nn.Conv2d(latent, base * 2, 3, padding=1)
        self.res = _Residual(base * 2)

    def forward(self, z):
        return self.res(torch.relu(self.from_latent(z)))


class _PrivateDecoder(nn.Module):
    """Domain-specific back end: two upsamplings, sigmoid into [0, 1]."""

    def __init__(self, base: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(base * 2, base, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(base, 3, 3, padding=1),
            nn.Sigmoid(),
        )

    def forward(self, h):
        return self.net(h)


class _PatchDiscriminator(nn.Module):
    """Frame -> patch map of realness logits."""

    def __init__(self, base: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base, base * 2, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base * 2, 1, 3, padding=1),
        )

    def forward(self, x):
        return self.net(x)


@dataclass
class DomainCodec:
    """The translator: private encoders/decoders around shared innermost layers."""

    enc_source: _PrivateEncoder
    enc_target: _PrivateEncoder
    shared_enc: _SharedEncoder
    shared_dec: _SharedDecoder
    dec_source: _PrivateDecoder
    dec_target: _PrivateDecoder
    preset: str
    image_size: tuple[int, int]
    latent_dims: tuple[int, int, int] = (0, 0, 0)
    seed: int = 0
    steps_trained: int = 0
    diverged: bool = False

    def modules(self) -> dict[str, nn.Module]:
        return {name: getattr(self, name) for name in MODULE_NAMES}

    def parameters(self):
        for module in self.modules().values():
            yield from module.parameters()

    def eval(self) -> "DomainCodec":
        for module in self.modules().values():
            module.eval()
        return self

    def to_dtype(self, dtype: torch.dtype) -> "DomainCodec":
        for module in self.modules().values():
            module.to(dtype)
        return self

    @property
    def dtype(self) -> torch.dtype:
        return next(self.enc_source.parameters()).dtype

    def encode_frames(self, frames: torch.Tensor, domain: CodecDomain) -> torch.Tensor:
        """(N, 3, H, W) -> latent means (N, C, H/4, W/4)."""
        private = self.enc_source if domain == "source" else self.enc_target
        return self.shared_enc(private(frames))

    def decode_frames(self, z: torch.Tensor, domain: CodecDomain) -> torch.Tensor:
        private = self.dec_source if domain == "source" else self.dec_target
        return private(self.shared_dec(z))


@dataclass
class Discriminators:
    disc_source: _PatchDiscriminator
    disc_target: _PatchDiscriminator

    def parameters(self):
        yield from self.disc_source.parameters()
        yield from self.disc_target.parameters()


@dataclass(frozen=True)
class LatentCode:
    """Per-frame codes, shape (T, channels, height, width)."""

    z: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.z).all():
            raise FloatingPointError("latent code contains non-finite values")


@dataclass(frozen=True)
class CstWeights:
    recon: float = 10.0
    kl: float = 0.01
    adv: float = 1.0
    cyc: float = 10.0


@dataclass(frozen=True)
class CstLossReport:
    recon_s: float
    recon_t: float
    kl_s: float
    kl_t: float
    adv_s: float
    adv_t: float
    cyc_s: float
    cyc_t: float
    total: float


@dataclass(frozen=True)
class CstConfig:
    steps: int = 200
    lr: float = 1e-3
    batch_size: int = 4
    weights: CstWeights = field(default_factory=CstWeights)
    preset: str = "toy"
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0, lr > 0, batch_size >= 1")
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; have {sorted(PRESETS)}")


def build_codec(preset: str = "toy", image_size: tuple[int, int] = (8, 8), seed: int = 0) -> DomainCodec:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
    height, width = image_size
    if height % 4 or width % 4:
        raise ValueError(f"image size must be divisible by 4, got {image_size}")
    p = PRESETS[preset]
    torch.manual_seed(derive_seed(seed, "codec-init", preset))
    codec = DomainCodec(
        enc_source=_PrivateEncoder(p.base_channels),
        enc_target=_PrivateEncoder(p.base_channels),
        shared_enc=_SharedEncoder(p.base_channels, p.latent_channels),
        shared_dec=_SharedDecoder(p.base_channels, p.latent_channels),
        dec_source=_PrivateDecoder(p.base_channels),
        dec_target=_PrivateDecoder(p.base_channels),
        preset=preset,
        image_size=(height, width),
        latent_dims=(p.latent_channels, height // 4, width // 4),
        seed=seed,
    )
    return codec.eval()


def build_discriminators(preset: str = "toy", seed: int = 0) -> Discriminators:
    p = PRESETS[preset]
    torch.manual_seed(derive_seed(seed, "disc-init", preset))
    return Discriminators(
        disc_source=_PatchDiscriminator(p.base_channels),
        disc_target=_PatchDiscriminator(p.base_channels),
    )


def _frames_to_tensor(frames: np.ndarray, dtype: torch.dtype) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(frames)).permute(0, 3, 1, 2).to(dtype)


def _tensor_to_frames(x: torch.Tensor) -> np.ndarray:
    return x.detach().permute(0, 2, 3, 1).numpy().astype(np.float32)


def _check_resolution(codec: DomainCodec, frames: np.ndarray) -> None:
    if frames.shape[1:3] != codec.image_size:
        raise ValueError(f"clip resolution {frames.shape[1:3]} does not match codec {codec.image_size}")


def encode(codec: DomainCodec, clip: VideoClip, domain: CodecDomain) -> LatentCode:
    """Per-frame latent codes; deterministic (no stochastic draw at inference)."""
    _check_resolution(codec, clip.frames)
    with torch.no_grad():
        z = codec.encode_frames(_frames_to_tensor(clip.frames, codec.dtype), domain)
    return LatentCode(z=z.numpy())


def decode(codec: DomainCodec, code: LatentCode, domain: CodecDomain) -> np.ndarray:
    """Latent codes back to frames (T, H, W, 3) in [0, 1]."""
    z = code.z
    if z.ndim != 4 or z.shape[1:] != codec.latent_dims:
        raise ValueError(f"code shape {z.shape} does not match latent dims {codec.latent_dims}")
    with torch.no_grad():
        frames = codec.decode_frames(torch.from_numpy(np.ascontiguousarray(z)).to(codec.dtype), domain)
    return _tensor_to_frames(frames)


def translate(codec: DomainCodec, clip: VideoClip) -> tuple[VideoClip, VideoClip]:
    """One original -> its two fakes: f1 = D_s(E_t(V)), f2 = D_t(E_s(V))."""
    f1_frames = decode(codec, encode(codec, clip, "target"), "source")
    f2_frames = decode(codec, encode(codec, clip, "source"), "target")
    f1 = dataclasses.replace(
        clip, frames=f1_frames, domain="day", provenance="f1", clip_id=f"{clip.clip_id}/f1"
    )
    f2 = dataclasses.replace(
        clip, frames=f2_frames, domain="night", provenance="f2", clip_id=f"{clip.clip_id}/f2"
    )
    return f1, f2


def _mae(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a - b).abs().mean()


def generator_objective(
    codec: DomainCodec,
    discs: Discriminators,
    source_frames: torch.Tensor,
    target_frames: torch.Tensor,
    weights: CstWeights = CstWeights(),
    noise: tuple[torch.Tensor, torch.Tensor] | None = None,
) -> tuple[torch.Tensor, CstLossReport]:
    """Differentiable composite loss plus its itemized report.

    ``noise`` carries the stochastic latent draws used during training; None
    means deterministic codes (inference-style), which keeps finite-difference
    checks well-posed.
    """
    if source_frames.shape[0] == 0 or target_frames.shape[0] == 0:
        raise ValueError("both batches must be non-empty")
    bce = nn.BCEWithLogitsLoss()

    mu_s = codec.encode_frames(source_frames, "source")
    mu_t = codec.encode_frames(target_frames, "target")
    z_s = mu_s + noise[0] if noise is not None else mu_s
    z_t = mu_t + noise[1] if noise is not None else mu_t

    recon_s = _mae(codec.decode_frames(z_s, "source"), source_frames)
    recon_t = _mae(codec.decode_frames(z_t, "target"), target_frames)
    kl_s = (mu_s ** 2).mean()
    kl_t = (mu_t ** 2).mean()

    fake_t = codec.decode_frames(z_s, "target")  # source content in target style
    fake_s = codec.decode_frames(z_t, "source")
    score_s = discs.disc_source(fake_s)
    score_t = discs.disc_target(fake_t)
    adv_s = bce(score_s, torch.ones_like(score_s))
    adv_t = bce(score_t, torch.ones_like(score_t))

    cyc_s = _mae(codec.decode_frames(codec.encode_frames(fake_t, "target"), "source"), source_frames)
    cyc_t = _mae(codec.decode_frames(codec.encode_frames(fake_s, "source"), "target"), target_frames)

    terms = {
        "recon_s": recon_s, "recon_t": recon_t,
        "kl_s": kl_s, "kl_t": kl_t,
        "adv_s": adv_s, "adv_t": adv_t,
        "cyc_s": cyc_s, "cyc_t": cyc_t,
    }
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise FloatingPointError(f"non-finite loss term: {name}")

    total = (
        weights.recon * (recon_s + recon_t)
        + weights.kl * (kl_s + kl_t)
        + weights.adv * (adv_s + adv_t)
        + weights.cyc * (cyc_s + cyc_t)
    )
    report = CstLossReport(
        **{name: float(value.detach()) for name, value in terms.items()},
        total=float(total.detach()),
    )
    return total, report


def cst_loss(
    codec: DomainCodec,
    discs: Discriminators,
    source_frames: np.ndarray | torch.Tensor,
    target_frames: np.ndarray | torch.Tensor,
    weights: CstWeights = CstWeights(),
    noise: tuple[torch.Tensor, torch.Tensor] | None = None,
) -> CstLossReport:
    """Itemized loss over two frame batches; no gradients retained."""
    if isinstance(source_frames, np.ndarray):
        source_frames = _frames_to_tensor(source_frames, codec.dtype)
    if isinstance(target_frames, np.ndarray):
        target_frames = _frames_to_tensor(target_frames, codec.dtype)
    with torch.no_grad():
        _, report = generator_objective(codec, discs, source_frames, target_frames, weights, noise)
    return report


def _discriminator_objective(
    codec: DomainCodec, discs: Discriminators, source_frames: torch.Tensor, target_frames: torch.Tensor,
    noise: tuple[torch.Tensor, torch.Tensor] | None,
) -> torch.Tensor:
    bce = nn.BCEWithLogitsLoss()
    with torch.no_grad():
        mu_s = codec.encode_frames(source_frames, "source")
        mu_t = codec.encode_frames(target_frames, "target")
        z_s = mu_s + noise[0] if noise is not None else mu_s
        z_t = mu_t + noise[1] if noise is not None else mu_t
        fake_s = codec.decode_frames(z_t, "source")
        fake_t = codec.decode_frames(z_s, "target")
    loss = torch.zeros((), dtype=source_frames.dtype)
    for disc, real, fake in (
        (discs.disc_source, source_frames, fake_s),
        (discs.disc_target, target_frames, fake_t),
    ):
        real_score = disc(real)
        fake_score = disc(fake)
        loss = loss + bce(real_score, torch.ones_like(real_score)) + bce(fake_score, torch.zeros_like(fake_score))
    return loss


def _frame_pool(corpus: Sequence[VideoClip | np.ndarray]) -> np.ndarray:
    stacks = []
    for item in corpus:
        frames = item.frames if isinstance(item, VideoClip) else item
        stacks.append(np.asarray(frames, dtype=np.float32))
    return np.concatenate(stacks, axis=0)


def train_cst(
    day_corpus: Sequence[VideoClip | np.ndarray],
    night_corpus: Sequence[VideoClip | np.ndarray],
    config: CstConfig = CstConfig(),
) -> tuple[DomainCodec, list[CstLossReport]]:
    """Adversarial training loop; returns the codec and per-step reports.

    Deterministic given config.seed.  If the total loss stops being finite
    the loop aborts and the parameters from the last finite step are kept.
    """
    if not len(day_corpus) or not len(night_corpus):
        raise ValueError("both corpora must be non-empty")
    day = _frame_pool(day_corpus)
    night = _frame_pool(night_corpus)
    if day.shape[1:] != night.shape[1:]:
        raise ValueError(f"corpora disagree on frame shape: {day.shape[1:]} vs {night.shape[1:]}")

    torch.set_num_threads(1)
    codec = build_codec(config.preset, image_size=day.shape[1:3], seed=config.seed)
    discs = build_discriminators(config.preset, seed=config.seed)
    for module in codec.modules().values():
        module.train()

    gen_opt = torch.optim.Adam(codec.parameters(), lr=config.lr, betas=(0.5, 0.999))
    disc_opt = torch.optim.Adam(discs.parameters(), lr=config.lr, betas=(0.5, 0.999))
    batch_rng = np.random.default_rng(derive_seed(config.seed, "cst-batches"))
    noise_gen = torch.Generator().manual_seed(derive_seed(config.seed, "cst-noise") % (2 ** 63))

    history: list[CstLossReport] = []
    last_good = None
    for step in range(config.steps):
        src = _frames_to_tensor(day[batch_rng.integers(0, len(day), size=config.batch_size)], codec.dtype)
        tgt = _frames_to_tensor(night[batch_rng.integers(0, len(night), size=config.batch_size)], codec.dtype)
        noise_shape = (config.batch_size, *codec.latent_dims)
        noise = (
            torch.randn(noise_shape, generator=noise_gen, dtype=codec.dtype),
            torch.randn(noise_shape, generator=noise_gen, dtype=codec.dtype),
        )

        disc_opt.zero_grad()
        disc_loss = _discriminator_objective(codec, discs, src, tgt, noise)
        disc_loss.backward()
        disc_opt.step()

        gen_opt.zero_grad()
        try:
            total, report = generator_objective(codec, discs, src, tgt, config.weights, noise)
        except FloatingPointError:
            codec.diverged = True
            break
        total.backward()
        gen_opt.step()
        history.append(report)
        last_good = {name: copy.deepcopy(m.state_dict()) for name, m in codec.modules().items()}
        codec.steps_trained = step + 1

    if codec.diverged and last_good is not None:
        for name, state in last_good.items():
            codec.modules()[name].load_state_dict(state)
    return codec.eval(), history


def synthesize_corpus(codec: DomainCodec, originals: Sequence[VideoClip]) -> list[VideoClip]:
    """Originals plus both fakes of each: |X| = 3n, labels inherited."""
    out: list[VideoClip] = []
    for clip in originals:
        f1, f2 = translate(codec, clip)
        out += [clip, f1, f2]
    return out


def save_codec(path: str | Path, codec: DomainCodec) -> None:
    header = {
        "kind": "domain-codec",
        "preset": codec.preset,
        "image_size": list(codec.image_size),
        "latent_dims": list(codec.latent_dims),
        "seed": codec.seed,
        "steps_trained": codec.steps_trained,
        "diverged": codec.diverged,
    }
    params = {}
    for name, module in codec.modules().items():
        for key, tensor in module.state_dict().items():
            params[f"{name}.{key}"] = tensor.numpy()
    save_checkpoint(path, header, params)


def load_codec(path: str | Path) -> DomainCodec:
    header, params = load_checkpoint(path)
    if header.get("kind") != "domain-codec":
        raise ValueError(f"{path}: not a codec checkpoint")
    codec = build_codec(header["preset"], tuple(header["image_size"]), seed=header["seed"])
    codec.steps_trained = header["steps_trained"]
    codec.diverged = header["diverged"]
    for name, module in codec.modules().items():
        prefix = f"{name}."
        state = {
            key[len(prefix):]: torch.from_numpy(params[key])
            for key in params
            if key.startswith(prefix)
        }
        module.load_state_dict(state)
    return codec.eval()
