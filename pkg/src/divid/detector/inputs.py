"""Loading fused frame inputs from manifest records."""

from __future__ import annotations

import numpy as np

from ..batching import FrameRef, SequenceRef
from ..dire import preprocess_frame
from ..errors import DataError, UsageError
from ..manifest import ClipRecord
from ..tensorio import read_tensor
from ..video import read_clip_frame
from .model import fuse_inputs

_dire_cache: dict[str, np.ndarray] = {}


def clear_cache() -> None:
    _dire_cache.clear()


def _clip_dire(clip: ClipRecord) -> np.ndarray:
    if not clip.dire_path:
        raise UsageError(f"clip {clip.clip_id}: no DIRE extracted")
    if clip.dire_path not in _dire_cache:
        arr = read_tensor(clip.dire_path)
        if arr.shape[0] != clip.frame_count:
            raise DataError(
                f"clip {clip.clip_id}: DIRE frames {arr.shape[0]} != "
                f"clip frames {clip.frame_count}"
            )
        _dire_cache[clip.dire_path] = arr.astype(np.float32)
    return _dire_cache[clip.dire_path]


def load_frame_input(ref: FrameRef, fusion_mode: str,
                     resolution: tuple[int, int]) -> np.ndarray:
    """One fused frame as C x H x W float32."""
    rgb = None
    dire = None
    if fusion_mode in ("rgb_only", "dire_plus_rgb"):
        raw = read_clip_frame(ref.path)
        rgb = preprocess_frame(raw, resolution, ref.frame_index).pixels
    if fusion_mode in ("dire_only", "dire_plus_rgb"):
        dire = _clip_dire(ref.clip)[ref.frame_index]
    fused = fuse_inputs(rgb, dire, fusion_mode)
    return np.transpose(fused, (2, 0, 1))


def load_sequence_input(ref: SequenceRef, fusion_mode: str,
                        resolution: tuple[int, int]) -> np.ndarray:
    """One fused window as T x C x H x W float32."""
    return np.stack([load_frame_input(f, fusion_mode, resolution)
                     for f in ref.frames()])


def load_clip_inputs(clip: ClipRecord, fusion_mode: str,
                     resolution: tuple[int, int]) -> np.ndarray:
    ref = SequenceRef(clip, 0, clip.frame_count)
    return load_sequence_input(ref, fusion_mode, resolution)
