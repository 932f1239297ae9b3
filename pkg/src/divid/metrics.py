"""Per-frame accuracy, average precision, and split-level reports.

Headline metrics pool frames across all clips of a split (no per-clip
voting); a per-clip mean-probability accuracy is reported separately as a
clearly labeled secondary number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from .errors import DataError, UsageError
from .manifest import DatasetManifest

DECISION_THRESHOLD = 0.5

_SOURCE_DISPLAY = {
    "gen2": "Gen-2", "pika": "Pika", "sora": "SORA", "svd": "SVD",
    "vidvrd": "VidVRD", "youtube": "YouTube",
    "toy_real": "Toy-Real", "toy_fake": "Toy-Fake",
}


def threshold_predictions(scores, threshold: float = DECISION_THRESHOLD) -> np.ndarray:
    """Binary decisions: score strictly above threshold counts as fake."""
    return (np.asarray(scores, dtype=np.float64) > threshold).astype(np.int64)


def accuracy(predictions, labels) -> float:
    """Percentage of per-frame binary decisions matching labels."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.size == 0:
        raise UsageError("accuracy undefined on empty input")
    if predictions.shape != labels.shape:
        raise UsageError(f"length mismatch: {predictions.shape} vs {labels.shape}")
    return 100.0 * float(np.mean(predictions == labels))


def average_precision(scores, labels) -> float:
    """Non-interpolated AP over the descending-score ranking, as a percentage.

    Ties break by original index (stable sort on score descending).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise UsageError(f"bad inputs: scores {scores.shape}, labels {labels.shape}")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise DataError("average precision undefined: no positive labels")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    tp = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    precision = tp / ranks
    # delta-recall is 1/n_pos at each positive, 0 elsewhere
    ap = float(np.sum(precision[ranked == 1]) / n_pos)
    return 100.0 * ap


@dataclass
class MetricsReport:
    accuracy: float
    average_precision: float
    n_frames: int
    per_source: dict[str, float] = field(default_factory=dict)
    total_average: float = 0.0
    clip_accuracy: float = 0.0  # secondary: per-clip mean-probability vote
    config_digest: str = ""
    split: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)


def _frame_head_probs(model, clip) -> np.ndarray:
    from .detector.inputs import load_clip_inputs

    inputs = load_clip_inputs(clip, model.fusion_mode, model.input_resolution)
    model.eval()
    with torch.no_grad():
        logits = model.backbone(torch.from_numpy(inputs))
    return torch.sigmoid(logits).numpy()


def evaluate_split(model, manifest: DatasetManifest, split: str,
                   head: str = "sequence", config_digest: str = "") -> MetricsReport:
    """Pooled per-frame metrics over a split, with per-source breakdown.

    head "sequence" scores frames through the LSTM head (CNN+LSTM rows);
    head "frame" uses the backbone's per-frame head (CNN rows).
    """
    from .detector.model import predict_clip

    clips = manifest.by_split(split)
    if not clips:
        raise UsageError(f"split {split!r} is empty")
    if head not in ("sequence", "frame"):
        raise UsageError(f"head must be 'sequence' or 'frame', got {head!r}")
    if model.fusion_mode != "rgb_only":
        missing = [c.clip_id for c in clips if not c.dire_path]
        if missing:
            raise DataError(f"missing DIRE artifacts for clips: {missing}")

    scores, labels, sources = [], [], []
    clip_votes, clip_labels = [], []
    for clip in clips:
        probs = (predict_clip(model, clip) if head == "sequence"
                 else _frame_head_probs(model, clip))
        y = 1 if clip.label == "fake" else 0
        scores.append(probs)
        labels.append(np.full(len(probs), y))
        sources.extend([clip.source] * len(probs))
        clip_votes.append(float(np.mean(probs)))
        clip_labels.append(y)

    scores = np.concatenate(scores)
    labels = np.concatenate(labels)
    sources = np.asarray(sources)
    preds = threshold_predictions(scores)

    per_source = {
        src: accuracy(preds[sources == src], labels[sources == src])
        for src in sorted(set(sources.tolist()))
    }
    return MetricsReport(
        accuracy=accuracy(preds, labels),
        average_precision=average_precision(scores, labels),
        n_frames=int(labels.size),
        per_source=per_source,
        total_average=float(np.mean(list(per_source.values()))),
        clip_accuracy=accuracy(threshold_predictions(clip_votes),
                               np.asarray(clip_labels)),
        config_digest=config_digest,
        split=split,
    )


def render_in_domain_table(report: MetricsReport, detector: str = "CNN+LSTM") -> str:
    """Aligned-column text table with Acc. / AP columns."""
    header = f"{'Detector':<12} {'Acc.':>8} {'AP':>8}"
    rule = "-" * len(header)
    row = f"{detector:<12} {report.accuracy:>8.2f} {report.average_precision:>8.2f}"
    return "\n".join([header, rule, row])


def render_out_domain_table(report: MetricsReport, detector: str = "CNN+LSTM") -> str:
    """Aligned-column table: one accuracy column per source plus Total Avg."""
    names = [_SOURCE_DISPLAY.get(s, s) for s in report.per_source]
    header = f"{'Detector':<12} " + " ".join(f"{n:>10}" for n in names) \
             + f" {'Total Avg.':>11}"
    rule = "-" * len(header)
    cells = " ".join(f"{v:>10.2f}" for v in report.per_source.values())
    row = f"{detector:<12} {cells} {report.total_average:>11.2f}"
    return "\n".join([header, rule, row])


def render_report(report: MetricsReport, detector: str = "CNN+LSTM") -> str:
    table = (render_out_domain_table(report, detector) if report.split == "test_out"
             else render_in_domain_table(report, detector))
    extra = (f"frames: {report.n_frames}   "
             f"clip-level accuracy (secondary, mean-prob vote): "
             f"{report.clip_accuracy:.2f}")
    return table + "\n" + extra
