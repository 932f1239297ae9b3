"""Desk-scale substrate: a trainable toy noise predictor and synthetic clip
generators, so every pipeline mechanism is verifiable on a CPU in minutes.

Textures are 16x16x3. "Smooth" samples (band-limited noise) stand in for the
reconstruction model's training distribution; "grating" samples (sharp
high-frequency stripes) are the out-of-distribution control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
import torch
import torch.nn as nn

from .errors import NumericError, UsageError
from .manifest import ClipRecord, DatasetManifest
from .predictors import NoisePredictor, PredictorSpec, register_predictor
from .sampling import LatentState, reconstruct
from .schedule import NoiseSchedule, SamplerConfig, config_digest
from .tensorio import write_tensor

RESOLUTION = (16, 16)
CHANNELS = 3


@dataclass(frozen=True)
class ToyDistribution:
    kind: str = "smooth"  # "smooth" or "grating"
    resolution: tuple[int, int] = RESOLUTION
    channels: int = CHANNELS
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("smooth", "grating"):
            raise UsageError(f"unknown toy distribution kind {self.kind!r}")

    def sample(self, n: int, seed_offset: int = 0) -> np.ndarray:
        """n samples, float32, values in [-1, 1]. Deterministic per seed."""
        rng = np.random.default_rng(self.seed + seed_offset)
        h, w = self.resolution
        if self.kind == "smooth":
            low = rng.standard_normal((n, 4, 4, self.channels)).astype(np.float32)
            out = np.stack([
                cv2.resize(low[i], (w, h), interpolation=cv2.INTER_LINEAR)
                for i in range(n)])
            return np.clip(out * 0.7, -1.0, 1.0)
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
        out = np.empty((n, h, w, self.channels), dtype=np.float32)
        for i in range(n):
            fx = rng.integers(3, 8)
            fy = rng.integers(0, 4)
            phase = rng.uniform(0, 2 * math.pi)
            wave = np.sin(2 * math.pi * (fx * xs + fy * ys) / w + phase)
            out[i] = 0.9 * np.sign(wave)[..., None]
        return out.astype(np.float32)


class _EpsNet(nn.Module):
    """Small conv noise predictor with a sinusoidal timestep embedding."""

    def __init__(self, channels: int = CHANNELS, width: int = 48, emb_dim: int = 64):
        super().__init__()
        self.emb_dim = emb_dim
        self.temb = nn.Linear(emb_dim, width)
        self.conv1 = nn.Conv2d(channels, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.conv3 = nn.Conv2d(width, channels, 3, padding=1)
        self.act = nn.SiLU()

    def _embed(self, t: torch.Tensor) -> torch.Tensor:
        half = self.emb_dim // 2
        freqs = torch.exp(torch.arange(half, dtype=torch.float32)
                          * (-math.log(10000.0) / max(half - 1, 1)))
        angles = t.float()[:, None] * freqs[None, :]
        return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        emb = self.temb(self._embed(t))[:, :, None, None]
        h = self.act(self.conv1(x) + emb)
        h = self.act(self.conv2(h))
        return self.conv3(h)


class ToyPredictor(NoisePredictor):
    """NoisePredictor backed by a small torch conv net at 16x16."""

    resolution = RESOLUTION
    channels = CHANNELS
    shareable = True  # inference is stateless under no_grad

    def __init__(self, net: _EpsNet | None = None):
        self.net = net or _EpsNet()
        self.net.eval()
        n_params = sum(p.numel() for p in self.net.parameters())
        if n_params > 100_000:
            raise UsageError(f"toy predictor exceeds parameter budget: {n_params}")

    def predict(self, x: np.ndarray, t: int) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float32)
        tensor = torch.from_numpy(np.transpose(arr, (2, 0, 1)))[None]
        with torch.no_grad():
            eps = self.net(tensor, torch.tensor([t]))
        out = np.transpose(eps[0].numpy(), (1, 2, 0))
        return out.astype(x.dtype, copy=False)

    def save(self, ckpt_dir) -> Path:
        from .detector.checkpoint import save_checkpoint

        return save_checkpoint(self.net, ckpt_dir, {"kind": "toy_predictor"})

    @classmethod
    def load(cls, ckpt_dir) -> "ToyPredictor":
        from .detector.checkpoint import load_into

        net = _EpsNet()
        load_into(net, ckpt_dir)
        return cls(net)


@dataclass
class ToyTrainBudget:
    steps: int = 600
    batch_size: int = 64
    lr: float = 2e-3
    seed: int = 0
    val_samples: int = 128
    loss_ceiling: float = 0.9


def train_toy_predictor(dist: ToyDistribution, schedule: NoiseSchedule,
                        budget: ToyTrainBudget | None = None) -> ToyPredictor:
    """Standard denoising objective: predict eps from noised samples."""
    if schedule.total_steps > 200:
        raise UsageError(
            f"toy training expects total_steps <= 200, got {schedule.total_steps}"
        )
    budget = budget or ToyTrainBudget()
    torch.manual_seed(budget.seed)
    net = _EpsNet()
    opt = torch.optim.Adam(net.parameters(), lr=budget.lr)
    sqrt_abar = torch.from_numpy(np.sqrt(schedule.alpha_bars)).float()
    sqrt_1m = torch.from_numpy(np.sqrt(1.0 - schedule.alpha_bars)).float()

    val_x0 = torch.from_numpy(
        np.transpose(dist.sample(budget.val_samples, seed_offset=990_001),
                     (0, 3, 1, 2)))
    val_gen = torch.Generator().manual_seed(budget.seed + 1)
    val_t = torch.randint(0, schedule.total_steps, (budget.val_samples,),
                          generator=val_gen)
    val_eps = torch.randn(val_x0.shape, generator=val_gen)

    def val_loss() -> float:
        xt = sqrt_abar[val_t][:, None, None, None] * val_x0 \
             + sqrt_1m[val_t][:, None, None, None] * val_eps
        with torch.no_grad():
            pred = net(xt, val_t + 1)
        return float(torch.mean((pred - val_eps) ** 2))

    initial_val = val_loss()
    gen = torch.Generator().manual_seed(budget.seed + 2)
    net.train()
    for step in range(budget.steps):
        x0 = torch.from_numpy(
            np.transpose(dist.sample(budget.batch_size, seed_offset=step),
                         (0, 3, 1, 2)))
        t = torch.randint(0, schedule.total_steps, (budget.batch_size,),
                          generator=gen)
        eps = torch.randn(x0.shape, generator=gen)
        xt = sqrt_abar[t][:, None, None, None] * x0 \
             + sqrt_1m[t][:, None, None, None] * eps
        loss = torch.mean((net(xt, t + 1) - eps) ** 2)
        if not torch.isfinite(loss):
            raise NumericError(f"non-finite toy training loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
    net.eval()
    final_val = val_loss()
    if final_val > budget.loss_ceiling:
        raise NumericError(
            f"toy predictor held-out loss {final_val:.4f} above ceiling "
            f"{budget.loss_ceiling}"
        )
    predictor = ToyPredictor(net)
    predictor.initial_val_loss = initial_val
    predictor.val_loss = final_val
    return predictor


def generate_fake_frame(predictor: ToyPredictor, schedule: NoiseSchedule,
                        config: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """One frame sampled by the deterministic reverse pass from pure noise."""
    h, w = predictor.resolution
    noise = rng.standard_normal((h, w, predictor.channels)).astype(np.float32)
    t_last = config.timesteps(schedule)[-1]
    frame = reconstruct(LatentState(noise, t_last), predictor, schedule, config)
    return np.clip(frame, -1.0, 1.0)


def _drift(frame: np.ndarray, magnitude: float, rng: np.random.Generator) -> np.ndarray:
    if magnitude == 0.0:
        return frame.copy()
    low = rng.standard_normal((4, 4, frame.shape[2])).astype(np.float32)
    bump = cv2.resize(low, frame.shape[1::-1], interpolation=cv2.INTER_LINEAR)
    return np.clip(frame + magnitude * bump.reshape(frame.shape), -1.0, 1.0)


def _to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.clip((frame + 1.0) * 127.5, 0, 255).astype(np.uint8)


def make_toy_clips(dist_real: ToyDistribution, predictor: ToyPredictor,
                   n_clips: int, out_root, schedule: NoiseSchedule,
                   config: SamplerConfig, clip_length: int = 8,
                   drift: float = 0.05, split: str = "train",
                   seed: int = 0, id_prefix: str = "clip") -> list[ClipRecord]:
    """Balanced real/fake clips with seeded frame-to-frame drift, written
    through the standard directory layout."""
    from .video import write_clip_frames

    if n_clips < 2:
        raise UsageError(f"need at least 2 clips for a balanced set, got {n_clips}")
    out_root = Path(out_root)
    records = []
    rng = np.random.default_rng(seed)
    for k in range(n_clips):
        fake = k % 2 == 1
        source = "toy_fake" if fake else "toy_real"
        label = "fake" if fake else "real"
        clip_id = f"{id_prefix}_{split}_{k:04d}"
        frame = (generate_fake_frame(predictor, schedule, config, rng) if fake
                 else dist_real.sample(1, seed_offset=seed * 131_071 + k)[0])
        frames = [frame]
        for _ in range(clip_length - 1):
            frames.append(_drift(frames[-1], drift, rng))
        clip_dir = out_root / source / label / clip_id
        paths = write_clip_frames([_to_uint8(f) for f in frames], clip_dir)
        h, w = dist_real.resolution
        records.append(ClipRecord(
            clip_id=clip_id, source=source, label=label, split=split,
            frame_paths=paths, frame_count=clip_length, fps=8.0,
            source_resolution=(w, h),
        ))
    return records


def _write_synthetic_clip(out_root: Path, source: str, label: str, split: str,
                          clip_id: str, frames: np.ndarray,
                          dire_maps: np.ndarray) -> ClipRecord:
    from .video import write_clip_frames

    clip_dir = Path(out_root) / source / label / clip_id
    paths = write_clip_frames([_to_uint8(f) for f in frames], clip_dir)
    dire_path = clip_dir / "dire.dvtn"
    write_tensor(dire_maps.astype(np.float32), dire_path)
    h, w = frames.shape[1:3]
    return ClipRecord(
        clip_id=clip_id, source=source, label=label, split=split,
        frame_paths=paths, frame_count=len(frames), fps=8.0,
        source_resolution=(w, h), dire_path=str(dire_path),
    )


def make_separable_dataset(out_root, n_clips: int = 48, clip_length: int = 8,
                           resolution: tuple[int, int] = RESOLUTION,
                           seed: int = 0,
                           test_fraction: float = 0.25) -> DatasetManifest:
    """Frame-separable sanity set: fake clips carry bright blobs in their
    error maps, real clips near-zero maps. Any competent frame classifier
    should saturate on it."""
    rng = np.random.default_rng(seed)
    h, w = resolution
    records = []
    n_test = max(2, int(n_clips * test_fraction))
    for k in range(n_clips):
        fake = k % 2 == 1
        split = "test_in" if k >= n_clips - n_test else "train"
        base = np.abs(rng.normal(0.05, 0.02, (clip_length, h, w, CHANNELS)))
        if fake:
            for t in range(clip_length):
                cy, cx = rng.integers(3, h - 3), rng.integers(3, w - 3)
                base[t, cy - 3:cy + 3, cx - 3:cx + 3, :] += 1.4
        dire = np.clip(base, 0.0, 2.0)
        frames = rng.uniform(-0.2, 0.2, (clip_length, h, w, CHANNELS)).astype(np.float32)
        records.append(_write_synthetic_clip(
            Path(out_root), "toy_fake" if fake else "toy_real",
            "fake" if fake else "real", split, f"sep_{k:04d}", frames, dire))
    return DatasetManifest(records, config_digest=config_digest(
        {"dataset": "separable", "n_clips": n_clips, "seed": seed}))


def make_temporal_dataset(out_root, n_clips: int = 48, clip_length: int = 10,
                          resolution: tuple[int, int] = RESOLUTION,
                          seed: int = 0, amplitude: float = 0.6,
                          test_fraction: float = 0.25) -> DatasetManifest:
    """Temporal toy set: per-frame error level is +/-amplitude around 1.0;
    real clips hold the level constant, fake clips alternate its sign every
    frame. Single-frame marginals are identical across classes, so only a
    temporal model can separate them."""
    rng = np.random.default_rng(seed)
    h, w = resolution
    records = []
    n_test = max(2, int(n_clips * test_fraction))
    for k in range(n_clips):
        fake = k % 2 == 1
        split = "test_in" if k >= n_clips - n_test else "train"
        start_sign = 1.0 if rng.random() < 0.5 else -1.0
        levels = np.array([
            start_sign * ((-1.0) ** t if fake else 1.0) * amplitude
            for t in range(clip_length)])
        noise = rng.normal(0.0, 0.02, (clip_length, h, w, CHANNELS))
        dire = np.clip(1.0 + levels[:, None, None, None] + noise, 0.0, 2.0)
        frames = np.zeros((clip_length, h, w, CHANNELS), dtype=np.float32)
        records.append(_write_synthetic_clip(
            Path(out_root), "toy_fake" if fake else "toy_real",
            "fake" if fake else "real", split, f"tmp_{k:04d}", frames, dire))
    return DatasetManifest(records, config_digest=config_digest(
        {"dataset": "temporal", "n_clips": n_clips, "seed": seed}))


register_predictor(PredictorSpec(
    name="toy", resolution=RESOLUTION, channels=CHANNELS,
    checkpoint="", factory=lambda ckpt: ToyPredictor.load(ckpt),
    requires_checkpoint=True,
))
