"""Diffusion-step / DDIM-step sweep: per cell, re-extract reconstruction-error
maps, optionally retrain the detector, and evaluate. Cells are independent;
per-cell failures are recorded and the sweep continues.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path

from .dire import compute_clip_dire
from .errors import UsageError
from .manifest import DatasetManifest
from .metrics import MetricsReport, evaluate_split
from .predictors import NoisePredictor
from .schedule import SamplerConfig, config_digest, default_schedule
from .tensorio import write_tensor

MAX_CELLS = 64


@dataclass
class SweepCell:
    diffusion_steps: int
    ddim_steps: int
    report: MetricsReport | None = None
    error: str = ""


@dataclass
class SweepGrid:
    diffusion_axis: list[int]
    ddim_axis: list[int]
    cells: list[SweepCell]  # row-major: diffusion outer, ddim inner


def extract_manifest_dire(manifest: DatasetManifest, predictor: NoisePredictor,
                          schedule, config: SamplerConfig, out_dir,
                          workers: int = 1) -> DatasetManifest:
    """Extract one DIRE tensor per clip into out_dir; returns a manifest whose
    records point at the new files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = config_digest({"total_steps": schedule.total_steps,
                            "ddim_steps": config.ddim_steps, "eta": config.eta})
    entries = []
    for clip in manifest.entries:
        seq = compute_clip_dire(clip, predictor, schedule, config, workers=workers)
        path = out_dir / f"{clip.clip_id}.dvtn"
        write_tensor(seq.stacked().astype("float32"), path)
        entries.append(dc_replace(clip, dire_path=str(path),
                                  extras=clip.extras | {"dire_digest": digest}))
    return DatasetManifest(entries, manifest.schema_version, manifest.config_digest)


def step_sweep(manifest: DatasetManifest, predictor: NoisePredictor,
               diffusion_steps: list[int], ddim_steps: list[int], out_dir,
               eval_split: str = "test_in", retrain: bool = True,
               train_config=None, model=None, workers: int = 1,
               max_cells: int = MAX_CELLS) -> SweepGrid:
    """Run the full extract -> (re)train -> evaluate loop per grid cell."""
    if not diffusion_steps or not ddim_steps:
        raise UsageError("sweep axes must be nonempty")
    n_cells = len(diffusion_steps) * len(ddim_steps)
    if n_cells > max_cells:
        raise UsageError(f"sweep of {n_cells} cells exceeds budget {max_cells}")
    if retrain and train_config is None:
        raise UsageError("retrain sweep requires a training config")
    if not retrain and model is None:
        raise UsageError("no-retrain sweep requires a trained model")

    out_dir = Path(out_dir)
    cells = []
    for total in diffusion_steps:
        for steps in ddim_steps:
            cell = SweepCell(total, steps)
            cell_dir = out_dir / f"cell_t{total}_s{steps}"
            try:
                schedule = default_schedule(total)
                config = SamplerConfig(ddim_steps=steps, eta=0.0)
                cell_manifest = extract_manifest_dire(
                    manifest, predictor, schedule, config,
                    cell_dir / "dire", workers=workers)
                cell_model = model
                if retrain:
                    cell_model = _train_for_cell(cell_manifest, train_config, cell_dir)
                cell.report = evaluate_split(
                    cell_model, cell_manifest, eval_split,
                    config_digest=config_digest(
                        {"diffusion_steps": total, "ddim_steps": steps}))
            except Exception as e:  # record and continue
                cell.error = f"{type(e).__name__}: {e}"
            cells.append(cell)
    return SweepGrid(list(diffusion_steps), list(ddim_steps), cells)


def _train_for_cell(manifest, train_config, cell_dir):
    from dataclasses import replace

    from .detector.train import train_cnn_phase, train_lstm_phase

    cnn_cfg = replace(train_config, phase="cnn")
    ckpt = train_cnn_phase(manifest, cnn_cfg, cell_dir / "ckpt_cnn")
    lstm_cfg = replace(train_config, phase="lstm")
    model, _ = train_lstm_phase(manifest, ckpt, lstm_cfg, cell_dir / "ckpt_lstm")
    return model


def write_sweep_csv(grid: SweepGrid, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["diffusion_steps", "ddim_steps", "accuracy",
                         "average_precision", "total_average", "n_frames", "error"])
        for cell in grid.cells:
            r = cell.report
            writer.writerow([
                cell.diffusion_steps, cell.ddim_steps,
                f"{r.accuracy:.4f}" if r else "",
                f"{r.average_precision:.4f}" if r else "",
                f"{r.total_average:.4f}" if r else "",
                r.n_frames if r else "",
                cell.error,
            ])
