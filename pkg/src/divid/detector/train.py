"""Two-phase detector training.

Phase 1 fine-tunes the CNN backbone with a per-frame binary head on fused
inputs. Phase 2 freezes the backbone and trains the LSTM plus sequence head
on fixed-length windows of consecutive frames, with per-frame binary
cross-entropy averaged over timesteps.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from ..batching import make_batches
from ..errors import NumericError, UsageError
from ..manifest import DatasetManifest
from ..schedule import config_digest
from .checkpoint import load_into, save_checkpoint
from .inputs import load_frame_input
from .model import DetectorModel

PHASES = ("cnn", "lstm")


@dataclass
class TrainConfig:
    phase: str = "cnn"
    fusion_mode: str = "dire_only"
    input_resolution: tuple[int, int] = (256, 256)
    batch_size: int = 128
    seq_len: int = 4
    epochs: int = 2
    lr: float = 1e-4
    weight_decay: float = 0.0
    seed: int = 0
    max_steps: int | None = None
    pretrained_backbone: bool = False
    freeze_backbone: bool = True
    deterministic: bool = True
    log_path: str | None = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise UsageError(f"phase must be one of {PHASES}, got {self.phase!r}")

    def digest(self) -> str:
        return config_digest(asdict(self))


class _MetricsLog:
    def __init__(self, path, phase: str, seed: int):
        self.fh = open(path, "a") if path else None
        self.phase = phase
        self.seed = seed

    def record(self, step: int, loss: float, lr: float):
        if self.fh:
            self.fh.write(json.dumps({"step": step, "phase": self.phase,
                                      "loss": loss, "lr": lr, "seed": self.seed}) + "\n")

    def close(self):
        if self.fh:
            self.fh.close()


def _seed_everything(config: TrainConfig):
    torch.manual_seed(config.seed)
    np.random.seed(config.seed % (2 ** 32))
    if config.deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)


def _check_finite(loss: torch.Tensor, step: int, phase: str):
    if not torch.isfinite(loss):
        raise NumericError(f"non-finite loss {loss.item()} at {phase} step {step}")


def train_cnn_phase(manifest: DatasetManifest, config: TrainConfig,
                    out_dir) -> Path:
    """Frame-level fine-tuning; returns the backbone checkpoint directory."""
    if not manifest.by_split("train"):
        raise UsageError("training split is empty")
    _seed_everything(config)
    model = DetectorModel(config.fusion_mode, config.input_resolution,
                          pretrained_backbone=config.pretrained_backbone)
    backbone = model.backbone
    backbone.train()
    opt = torch.optim.Adam(backbone.parameters(), lr=config.lr,
                           weight_decay=config.weight_decay)
    bce = torch.nn.BCEWithLogitsLoss()
    log = _MetricsLog(config.log_path, "cnn", config.seed)
    step = 0
    final_loss = float("nan")
    try:
        for epoch in range(config.epochs):
            for batch in make_batches(manifest, "frame", config.batch_size,
                                      seed=config.seed + epoch, split="train"):
                x = torch.from_numpy(np.stack([
                    load_frame_input(ref, config.fusion_mode, config.input_resolution)
                    for ref in batch]))
                y = torch.tensor([ref.label for ref in batch], dtype=torch.float32)
                logits = backbone(x)
                loss = bce(logits, y)
                _check_finite(loss, step, "cnn")
                opt.zero_grad()
                loss.backward()
                opt.step()
                final_loss = loss.item()
                log.record(step, final_loss, config.lr)
                step += 1
                if config.max_steps and step >= config.max_steps:
                    raise StopIteration
    except StopIteration:
        pass
    finally:
        log.close()
    snapshot = asdict(config) | {"digest": config.digest(), "final_loss": final_loss,
                                 "steps": step}
    return save_checkpoint(backbone, out_dir, snapshot)


def _frame_features(backbone, refs, config, cache: dict) -> torch.Tensor:
    missing = [r for r in refs if (r.clip.clip_id, r.frame_index) not in cache]
    if missing:
        x = torch.from_numpy(np.stack([
            load_frame_input(r, config.fusion_mode, config.input_resolution)
            for r in missing]))
        with torch.no_grad():
            feats = backbone.features(x)
        for r, f in zip(missing, feats):
            cache[(r.clip.clip_id, r.frame_index)] = f
    return torch.stack([cache[(r.clip.clip_id, r.frame_index)] for r in refs])


def train_lstm_phase(manifest: DatasetManifest, backbone_checkpoint,
                     config: TrainConfig, out_dir) -> tuple[DetectorModel, Path]:
    """Sequence training over frozen backbone features; returns (model, ckpt dir)."""
    if backbone_checkpoint is None:
        raise UsageError("phase lstm requires a phase-cnn checkpoint")
    if not manifest.by_split("train"):
        raise UsageError("training split is empty")
    _seed_everything(config)
    model = DetectorModel(config.fusion_mode, config.input_resolution)
    ckpt_config = load_into(model.backbone, backbone_checkpoint)
    if ckpt_config.get("fusion_mode") not in (None, config.fusion_mode):
        raise UsageError(
            f"checkpoint fusion mode {ckpt_config.get('fusion_mode')!r} != "
            f"requested {config.fusion_mode!r}"
        )
    if config.freeze_backbone:
        model.backbone.requires_grad_(False)
    model.backbone.eval()  # keep batch-norm statistics fixed

    eligible = [c for c in manifest.by_split("train")
                if c.frame_count >= config.seq_len]
    if not eligible:
        raise UsageError(
            f"no training clips of length >= seq_len {config.seq_len}"
        )

    params = list(model.lstm.parameters()) + list(model.seq_head.parameters())
    if not config.freeze_backbone:
        params += list(model.backbone.parameters())
    opt = torch.optim.Adam(params, lr=config.lr, weight_decay=config.weight_decay)
    bce = torch.nn.BCEWithLogitsLoss()
    log = _MetricsLog(config.log_path, "lstm", config.seed)
    feature_cache: dict = {}
    step = 0
    final_loss = float("nan")
    try:
        for epoch in range(config.epochs):
            for batch in make_batches(manifest, "sequence", config.batch_size,
                                      seq_len=config.seq_len,
                                      seed=config.seed + epoch, split="train"):
                feats = torch.stack([
                    _frame_features(model.backbone, seq.frames(), config, feature_cache)
                    for seq in batch])  # N x T x 2048
                y = torch.tensor([seq.label for seq in batch], dtype=torch.float32)
                hiddens = model.lstm.run_sequence(feats)
                logits = model.seq_head(hiddens).squeeze(-1)  # N x T
                loss = bce(logits, y.unsqueeze(1).expand_as(logits))
                _check_finite(loss, step, "lstm")
                opt.zero_grad()
                loss.backward()
                opt.step()
                final_loss = loss.item()
                log.record(step, final_loss, config.lr)
                step += 1
                if config.max_steps and step >= config.max_steps:
                    raise StopIteration
    except StopIteration:
        pass
    finally:
        log.close()
    snapshot = asdict(config) | {"digest": config.digest(), "final_loss": final_loss,
                                 "steps": step,
                                 "backbone_checkpoint": str(backbone_checkpoint)}
    ckpt = save_checkpoint(model, out_dir, snapshot)
    return model, ckpt


def load_detector(ckpt_dir) -> DetectorModel:
    """Rebuild a DetectorModel from a phase-lstm checkpoint directory."""
    from .checkpoint import load_state

    state, config = load_state(ckpt_dir)
    model = DetectorModel(config["fusion_mode"],
                          tuple(config["input_resolution"]))
    model.load_state_dict(state)
    model.eval()
    return model
