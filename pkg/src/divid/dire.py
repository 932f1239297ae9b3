"""Per-frame and per-clip reconstruction-error maps.

A DIRE map is |x0 - R(I(x0))|: the absolute difference between a frame and
its deterministic invert-then-reconstruct image. Values live in [0, 2] since
both operands are normalized to [-1, 1].
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DataError, DividError, UsageError
from .manifest import ClipRecord
from .predictors import NoisePredictor
from .sampling import invert, reconstruct
from .schedule import NoiseSchedule, SamplerConfig
from .video import read_clip_frame


@dataclass(frozen=True)
class FrameTensor:
    pixels: np.ndarray                    # H x W x C float32 in [-1, 1]
    source_resolution: tuple[int, int]    # original (width, height)
    frame_index: int = 0


@dataclass(frozen=True)
class DireMap:
    values: np.ndarray                    # H x W x C, nonnegative, <= 2
    dire_config: tuple[int, int]          # (total_steps, ddim_steps)
    frame_index: int = 0


@dataclass(frozen=True)
class DireSequence:
    maps: tuple[DireMap, ...]
    clip_id: str = ""

    def __post_init__(self):
        idx = [m.frame_index for m in self.maps]
        if idx and idx != list(range(idx[0], idx[0] + len(idx))):
            raise UsageError(f"frame indices not consecutive ascending: {idx}")

    def stacked(self) -> np.ndarray:
        return np.stack([m.values for m in self.maps])


def preprocess_frame(raw: np.ndarray, target_resolution: tuple[int, int],
                     frame_index: int = 0) -> FrameTensor:
    """Center-crop to the largest square, bilinear-resize, rescale to [-1, 1]."""
    if raw is None or raw.size == 0:
        raise DataError(f"undecodable frame at index {frame_index}")
    th, tw = target_resolution
    if th <= 0 or tw <= 0:
        raise UsageError(f"target resolution must be positive, got {target_resolution}")
    if raw.ndim == 2:
        raw = raw[:, :, None]
    h, w = raw.shape[:2]
    side = min(h, w)
    y0 = (h - side) // 2
    x0 = (w - side) // 2
    crop = raw[y0:y0 + side, x0:x0 + side]
    if (side, side) != (th, tw):
        crop = cv2.resize(crop, (tw, th), interpolation=cv2.INTER_LINEAR)
        if crop.ndim == 2:
            crop = crop[:, :, None]
    pixels = crop.astype(np.float32) / 127.5 - 1.0
    return FrameTensor(pixels, source_resolution=(w, h), frame_index=frame_index)


def compute_dire(frame: FrameTensor, predictor: NoisePredictor,
                 schedule: NoiseSchedule, config: SamplerConfig) -> DireMap:
    if config.eta != 0.0:
        raise UsageError("DIRE extraction requires eta = 0")
    # float64 through the round trip so the error map reflects the predictor,
    # not accumulated single-precision rounding
    x0 = frame.pixels.astype(np.float64)
    try:
        noisy = invert(x0, predictor, schedule, config)
        rec = reconstruct(noisy, predictor, schedule, config)
    except DividError as e:
        raise type(e)(f"frame {frame.frame_index}: {e}") from e
    # Reconstructions are unbounded for out-of-distribution inputs; clip back
    # to the pixel range so the error map stays within [0, 2].
    rec = np.clip(rec, -1.0, 1.0)
    values = np.abs(x0 - rec).astype(frame.pixels.dtype)
    return DireMap(values, (schedule.total_steps, config.ddim_steps),
                   frame.frame_index)


def compute_clip_dire(clip: ClipRecord, predictor: NoisePredictor,
                      schedule: NoiseSchedule, config: SamplerConfig,
                      workers: int = 1) -> DireSequence:
    """One DIRE map per frame, order preserved. Frames are independent, so
    extraction parallelizes across a thread pool; non-shareable predictors
    are replicated per worker."""
    if clip.frame_count == 0:
        raise UsageError(f"clip {clip.clip_id} has no frames")
    target = predictor.resolution

    def one(args):
        idx, path, pred = args
        raw = read_clip_frame(path)
        frame = preprocess_frame(raw, target, frame_index=idx)
        return compute_dire(frame, pred, schedule, config)

    if workers <= 1:
        maps = [one((i, p, predictor)) for i, p in enumerate(clip.frame_paths)]
    else:
        preds = [predictor if predictor.shareable else predictor.replicate()
                 for _ in range(workers)]
        jobs = [(i, p, preds[i % workers]) for i, p in enumerate(clip.frame_paths)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            maps = list(pool.map(one, jobs))
    return DireSequence(tuple(maps), clip_id=clip.clip_id)
