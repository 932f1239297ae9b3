"""Batch streams over a manifest.

Frame mode yields batches of individual frame references; sequence mode yields
batches of fixed-length windows of consecutive frames, never spanning clip
boundaries. Order is a seeded shuffle; every eligible item appears at most
once per epoch.
"""

from __future__ import annotations

import random
import warnings
from dataclasses import dataclass
from typing import Iterator

from .errors import UsageError
from .manifest import ClipRecord, DatasetManifest


@dataclass(frozen=True)
class FrameRef:
    clip: ClipRecord
    frame_index: int

    @property
    def path(self) -> str:
        return self.clip.frame_paths[self.frame_index]

    @property
    def label(self) -> int:
        return 1 if self.clip.label == "fake" else 0


@dataclass(frozen=True)
class SequenceRef:
    clip: ClipRecord
    start: int
    length: int

    def frames(self) -> list[FrameRef]:
        return [FrameRef(self.clip, self.start + i) for i in range(self.length)]

    @property
    def label(self) -> int:
        return 1 if self.clip.label == "fake" else 0


def make_batches(manifest: DatasetManifest, mode: str, batch_size: int,
                 seq_len: int = 4, seed: int = 0,
                 split: str | None = None) -> Iterator[list]:
    """Yield one epoch of batches. mode: "frame" or "sequence"."""
    if mode not in ("frame", "sequence"):
        raise UsageError(f"mode must be 'frame' or 'sequence', got {mode!r}")
    if batch_size < 1:
        raise UsageError(f"batch_size must be >= 1, got {batch_size}")
    clips = manifest.by_split(split) if split else manifest.entries
    rng = random.Random(seed)

    if mode == "frame":
        items: list = [FrameRef(c, i) for c in clips for i in range(c.frame_count)]
    else:
        if seq_len < 1:
            raise UsageError(f"seq_len must be >= 1, got {seq_len}")
        items = []
        for c in clips:
            if c.frame_count < seq_len:
                warnings.warn(
                    f"clip {c.clip_id} shorter than seq_len {seq_len}; skipped"
                )
                continue
            # non-overlapping consecutive windows
            items.extend(SequenceRef(c, s, seq_len)
                         for s in range(0, c.frame_count - seq_len + 1, seq_len))

    rng.shuffle(items)
    for i in range(0, len(items), batch_size):
        yield items[i:i + batch_size]
