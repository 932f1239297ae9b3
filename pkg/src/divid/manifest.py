"""Dataset manifests: labeled, source-tagged clip records in JSON Lines.

File layout on disk: <root>/<source>/<label>/<clip_id>/frame_%04d.png plus an
optional dire.dvtn. The manifest file starts with a header line
{"schema_version", "config_digest"} followed by one record per line.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import DataError, UsageError

SCHEMA_VERSION = 1

SOURCES = ("vidvrd", "svd", "pika", "gen2", "sora", "youtube", "toy_real", "toy_fake")
LABELS = ("real", "fake")
SPLITS = ("train", "test_in", "test_out")

# sources that only ever produce generated content
_FAKE_ONLY_SOURCES = {"svd", "pika", "gen2", "sora", "toy_fake"}
_REAL_ONLY_SOURCES = {"vidvrd", "youtube", "toy_real"}


@dataclass
class ClipRecord:
    clip_id: str
    source: str
    label: str
    split: str
    frame_paths: list[str]
    frame_count: int
    fps: float
    source_resolution: tuple[int, int]  # (width, height)
    dire_path: str | None = None
    extras: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.source not in SOURCES:
            raise UsageError(f"{self.clip_id}: unknown source {self.source!r}")
        if self.label not in LABELS:
            raise UsageError(f"{self.clip_id}: unknown label {self.label!r}")
        if self.split not in SPLITS:
            raise UsageError(f"{self.clip_id}: unknown split {self.split!r}")
        if self.frame_count != len(self.frame_paths):
            raise UsageError(
                f"{self.clip_id}: frame_count {self.frame_count} != "
                f"{len(self.frame_paths)} frame paths"
            )
        if self.source in _FAKE_ONLY_SOURCES and self.label != "fake":
            raise UsageError(f"{self.clip_id}: source {self.source} implies label fake")
        if self.source in _REAL_ONLY_SOURCES and self.label != "real":
            raise UsageError(f"{self.clip_id}: source {self.source} implies label real")

    def to_json(self) -> str:
        d = asdict(self)
        d["source_resolution"] = list(self.source_resolution)
        d["schema_version"] = SCHEMA_VERSION
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ClipRecord":
        d = json.loads(line)
        d.pop("schema_version", None)
        d["source_resolution"] = tuple(d["source_resolution"])
        rec = cls(**d)
        rec.validate()
        return rec


@dataclass
class DatasetManifest:
    entries: list[ClipRecord]
    schema_version: int = SCHEMA_VERSION
    config_digest: str = ""

    def __post_init__(self):
        seen = set()
        for rec in self.entries:
            if rec.clip_id in seen:
                raise DataError(f"duplicate clip_id {rec.clip_id!r} in manifest")
            seen.add(rec.clip_id)

    def by_split(self, split: str) -> list[ClipRecord]:
        if split not in SPLITS:
            raise UsageError(f"unknown split {split!r}")
        return [r for r in self.entries if r.split == split]

    def counts(self) -> dict[tuple[str, str], dict[str, int]]:
        """(source, split) -> {real: n, fake: n}."""
        out: dict[tuple[str, str], dict[str, int]] = {}
        for rec in self.entries:
            cell = out.setdefault((rec.source, rec.split), {"real": 0, "fake": 0})
            cell[rec.label] += 1
        return out


def write_manifest(manifest: DatasetManifest, path) -> None:
    header = json.dumps(
        {"schema_version": manifest.schema_version,
         "config_digest": manifest.config_digest},
        sort_keys=True,
    )
    lines = [header] + [rec.to_json() for rec in manifest.entries]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty manifest file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: bad manifest header: {e}") from e
    if "clip_id" in header:  # headerless file: all lines are records
        header = {"schema_version": SCHEMA_VERSION, "config_digest": ""}
        records = lines
    else:
        records = lines[1:]
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported schema_version {header.get('schema_version')}")
    try:
        entries = [ClipRecord.from_json(ln) for ln in records]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DataError(f"{path}: malformed record: {e}") from e
    return DatasetManifest(entries, header["schema_version"],
                           header.get("config_digest", ""))


@dataclass(frozen=True)
class ScanRoot:
    path: str
    source: str
    label: str
    split: str


def build_manifest(scan_roots: list[ScanRoot], config_digest: str = "") -> DatasetManifest:
    """Discover clip directories under each tagged root.

    A clip directory is any directory containing frame_*.png files. Empty
    roots produce a warning, not a failure; duplicate clip_ids fail.
    """
    entries: list[ClipRecord] = []
    for root in scan_roots:
        base = Path(root.path)
        if not base.exists():
            raise DataError(f"scan root does not exist: {root.path}")
        found = 0
        for clip_dir in sorted(p for p in base.rglob("*") if p.is_dir()):
            frames = sorted(clip_dir.glob("frame_*.png"))
            if not frames:
                continue
            found += 1
            dire = clip_dir / "dire.dvtn"
            res = _png_resolution(frames[0])
            rec = ClipRecord(
                clip_id=clip_dir.name,
                source=root.source,
                label=root.label,
                split=root.split,
                frame_paths=[str(p) for p in frames],
                frame_count=len(frames),
                fps=0.0,
                source_resolution=res,
                dire_path=str(dire) if dire.exists() else None,
            )
            rec.validate()
            entries.append(rec)
        if found == 0:
            warnings.warn(f"scan root {root.path} ({root.source}/{root.label}) "
                          "contained no clips")
    return DatasetManifest(entries, SCHEMA_VERSION, config_digest)


def _png_resolution(path: Path) -> tuple[int, int]:
    import cv2

    img = cv2.imread(str(path))
    if img is None:
        raise DataError(f"unreadable frame image: {path}")
    h, w = img.shape[:2]
    return (w, h)
