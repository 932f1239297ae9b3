"""Step-sweep grid: extraction, cell ordering, budgets, failure isolation."""

import csv

import numpy as np
import pytest

from divid.errors import UsageError
from divid.manifest import ClipRecord, DatasetManifest
from divid.metrics import evaluate_split
from divid.predictors import ZeroPredictor
from divid.schedule import SamplerConfig, default_schedule
from divid.sweep import (MAX_CELLS, SweepCell, SweepGrid, extract_manifest_dire,
                         step_sweep, write_sweep_csv)
from divid.tensorio import read_tensor
from divid.video import write_clip_frames


@pytest.fixture()
def disk_manifest(tmp_path, rng):
    records = []
    for i in range(4):
        fake = i % 2 == 1
        source, label = ("toy_fake", "fake") if fake else ("toy_real", "real")
        clip_id = f"sw_{i:04d}"
        frames = [rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
                  for _ in range(4)]
        paths = write_clip_frames(frames, tmp_path / source / label / clip_id)
        records.append(ClipRecord(
            clip_id=clip_id, source=source, label=label, split="test_in",
            frame_paths=paths, frame_count=4, fps=8.0,
            source_resolution=(16, 16)))
    return DatasetManifest(records)


def test_extract_manifest_dire_writes_artifacts(disk_manifest, tmp_path):
    schedule = default_schedule(100)
    cfg = SamplerConfig(ddim_steps=5, eta=0.0)
    out = extract_manifest_dire(disk_manifest, ZeroPredictor(), schedule, cfg,
                                tmp_path / "dire")
    assert len(out.entries) == 4
    for rec in out.entries:
        dire = read_tensor(rec.dire_path)
        assert dire.shape == (4, 16, 16, 3)
        np.testing.assert_allclose(dire, 0.0, atol=1e-9)
        assert "dire_digest" in rec.extras
    # source manifest untouched
    assert all(r.dire_path is None for r in disk_manifest.entries)


def test_single_cell_sweep_matches_direct_eval(disk_manifest, tmp_path,
                                               zero_head_model):
    grid = step_sweep(disk_manifest, ZeroPredictor(), [100], [5],
                      tmp_path / "sweep", retrain=False, model=zero_head_model)
    assert len(grid.cells) == 1
    cell = grid.cells[0]
    assert cell.error == ""
    extracted = extract_manifest_dire(
        disk_manifest, ZeroPredictor(), default_schedule(100),
        SamplerConfig(ddim_steps=5, eta=0.0), tmp_path / "direct")
    direct = evaluate_split(zero_head_model, extracted, "test_in")
    assert cell.report.accuracy == direct.accuracy
    assert cell.report.average_precision == direct.average_precision


def test_sweep_grid_row_major_order(disk_manifest, tmp_path, zero_head_model):
    grid = step_sweep(disk_manifest, ZeroPredictor(), [100, 200], [2, 5],
                      tmp_path / "sweep", retrain=False, model=zero_head_model)
    combos = [(c.diffusion_steps, c.ddim_steps) for c in grid.cells]
    assert combos == [(100, 2), (100, 5), (200, 2), (200, 5)]
    assert all(c.report is not None for c in grid.cells)


def test_sweep_validation():
    m = DatasetManifest([])
    with pytest.raises(UsageError, match="nonempty"):
        step_sweep(m, ZeroPredictor(), [], [5], "/tmp/x", retrain=False,
                   model=object())
    with pytest.raises(UsageError, match="budget"):
        step_sweep(m, ZeroPredictor(), list(range(9)), list(range(8)),
                   "/tmp/x", retrain=False, model=object())
    with pytest.raises(UsageError, match="training config"):
        step_sweep(m, ZeroPredictor(), [10], [5], "/tmp/x", retrain=True)
    with pytest.raises(UsageError, match="trained model"):
        step_sweep(m, ZeroPredictor(), [10], [5], "/tmp/x", retrain=False)
    assert MAX_CELLS == 64


def test_sweep_isolates_cell_failures(disk_manifest, tmp_path,
                                      zero_head_model):
    """A broken cell records its error; the rest of the grid completes."""
    grid = step_sweep(disk_manifest, ZeroPredictor(), [-5, 100], [5],
                      tmp_path / "sweep", retrain=False, model=zero_head_model)
    bad, good = grid.cells
    assert bad.report is None and bad.error != ""
    assert "UsageError" in bad.error
    assert good.report is not None and good.error == ""


def test_write_sweep_csv(tmp_path):
    from divid.metrics import MetricsReport

    grid = SweepGrid([10], [2, 5], [
        SweepCell(10, 2, report=MetricsReport(accuracy=75.0,
                                              average_precision=80.0,
                                              n_frames=16, total_average=75.0)),
        SweepCell(10, 5, error="NumericError: boom"),
    ])
    path = tmp_path / "sweep.csv"
    write_sweep_csv(grid, path)
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 2
    assert rows[0]["diffusion_steps"] == "10"
    assert rows[0]["accuracy"] == "75.0000"
    assert rows[1]["accuracy"] == ""
    assert rows[1]["error"] == "NumericError: boom"
