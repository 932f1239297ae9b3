"""Video decoding, clip cropping, and frame image persistence."""

from __future__ import annotations

import hashlib
import random
from pathlib import Path

import cv2
import numpy as np

from .errors import DataError

DEFAULT_CLIP_LENGTH = 25


def extract_frames(video_locator) -> list[np.ndarray]:
    """Decode a video into RGB uint8 frames in presentation order."""
    path = Path(video_locator)
    if not path.exists():
        raise DataError(f"video not found: {video_locator}")
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise DataError(f"cannot decode video: {video_locator}")
    frames = []
    while True:
        ok, bgr = cap.read()
        if not ok:
            break
        frames.append(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
    cap.release()
    if not frames:
        raise DataError(f"zero decodable frames in {video_locator}")
    return frames


def video_fps(video_locator) -> float:
    cap = cv2.VideoCapture(str(video_locator))
    fps = cap.get(cv2.CAP_PROP_FPS) if cap.isOpened() else 0.0
    cap.release()
    return float(fps)


def crop_clip(frames: list, clip_length: int = DEFAULT_CLIP_LENGTH,
              seed: int = 0) -> list:
    """Contiguous window of clip_length frames; start drawn uniformly per seed."""
    if len(frames) < clip_length:
        raise DataError(
            f"video too short: {len(frames)} frames < clip length {clip_length}"
        )
    start = random.Random(seed).randrange(len(frames) - clip_length + 1)
    return frames[start:start + clip_length]


def clip_seed(clip_id: str, base_seed: int = 0) -> int:
    """Per-clip crop seed from the clip id, so builds are order-independent."""
    digest = hashlib.sha256(f"{base_seed}:{clip_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def write_clip_frames(frames: list[np.ndarray], clip_dir) -> list[str]:
    """Persist RGB frames as lossless PNGs named frame_%04d.png."""
    clip_dir = Path(clip_dir)
    clip_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        p = clip_dir / f"frame_{i:04d}.png"
        if not cv2.imwrite(str(p), cv2.cvtColor(frame, cv2.COLOR_RGB2BGR)):
            raise DataError(f"failed to write frame image {p}")
        paths.append(str(p))
    return paths


def read_clip_frame(path) -> np.ndarray:
    img = cv2.imread(str(path))
    if img is None:
        raise DataError(f"unreadable frame image: {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def ingest_video(video_locator, clip_dir, clip_length: int = DEFAULT_CLIP_LENGTH,
                 seed: int = 0, clip_id: str | None = None) -> list[str]:
    """Decode, randomly crop to clip_length, and persist one clip."""
    frames = extract_frames(video_locator)
    cid = clip_id or Path(video_locator).stem
    window = crop_clip(frames, clip_length, clip_seed(cid, seed))
    return write_clip_frames(window, clip_dir)
