"""Command-line surface: flags, exit codes, and end-to-end workflows."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from divid.cli import build_parser, run_command
from divid.manifest import read_manifest, write_manifest

GOLDEN_IN = Path(__file__).parent / "data" / "golden_table_in.txt"
GOLDEN_OUT = Path(__file__).parent / "data" / "golden_table_out.txt"


# ------------------------------------------------------------------ flags

def test_extract_dire_flags_parse():
    args = build_parser().parse_args([
        "extract-dire", "--manifest", "m.jsonl", "--output", "out.jsonl",
        "--diffusion-steps", "100", "--ddim-steps", "10", "--eta", "0",
        "--predictor", "zero", "--seed", "1", "--workers", "2",
        "--config", "c.cfg"])
    assert args.diffusion_steps == 100 and args.ddim_steps == 10
    assert args.eta == 0.0 and args.workers == 2


def test_train_flags_parse():
    args = build_parser().parse_args([
        "train", "--manifest", "m.jsonl", "--phase", "lstm",
        "--fusion", "dire+rgb", "--batch-size", "32", "--seq-len", "4",
        "--seed", "0", "--output", "ckpt"])
    assert args.phase == "lstm" and args.fusion == "dire+rgb"
    assert args.batch_size == 32 and args.seq_len == 4


@pytest.mark.parametrize("fusion", ["dire", "rgb", "dire+rgb"])
def test_fusion_choices(fusion):
    args = build_parser().parse_args([
        "train", "--manifest", "m", "--phase", "cnn", "--fusion", fusion,
        "--output", "o"])
    assert args.fusion == fusion


def test_sweep_flags_parse():
    args = build_parser().parse_args([
        "sweep", "--manifest", "m", "--diffusion-steps", "10,20",
        "--ddim-steps", "2,5", "--output", "s.csv"])
    assert args.diffusion_steps == "10,20" and args.ddim_steps == "2,5"


@pytest.mark.parametrize("argv", [
    [],                                          # no subcommand
    ["train", "--manifest", "m", "--output", "o"],       # missing --phase
    ["train", "--manifest", "m", "--phase", "gru", "--output", "o"],
    ["train", "--manifest", "m", "--phase", "cnn", "--fusion", "both",
     "--output", "o"],
    ["eval", "--manifest", "m"],                 # missing --checkpoint
    ["build-manifest", "--output", "o"],         # missing --root
])
def test_bad_invocations_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(argv)
    assert exc.value.code == 2


# ------------------------------------------------------------- exit codes

def test_usage_error_exit_2(tmp_path, out_domain_manifest):
    manifest_path = tmp_path / "m.jsonl"
    write_manifest(out_domain_manifest, manifest_path)
    code = run_command(["extract-dire", "--manifest", str(manifest_path),
                        "--eta", "0.5"])
    assert code == 2


def test_data_error_exit_3(tmp_path):
    code = run_command(["eval", "--manifest", str(tmp_path / "missing.jsonl"),
                        "--checkpoint", "nowhere"])
    assert code == 3


def test_numeric_error_exit_4(tmp_path):
    # zero optimizer steps cannot reach the held-out loss ceiling
    code = run_command(["toy", "train-predictor", "--steps", "0",
                        "--output", str(tmp_path / "ckpt")])
    assert code == 4


def test_bad_root_spec_exit_2(tmp_path):
    code = run_command(["build-manifest", "--output", str(tmp_path / "m"),
                        "--root", "justapath"])
    assert code == 2


# ------------------------------------------------------ dataset workflows

def test_build_manifest_cli(tmp_path, rng, capsys):
    from divid.video import write_clip_frames

    for i in range(3):
        frames = [rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
                  for _ in range(2)]
        write_clip_frames(frames, tmp_path / "vids" / f"c_{i}")
    out = tmp_path / "m.jsonl"
    code = run_command(["build-manifest", "--output", str(out), "--root",
                        f"svd:fake:train:{tmp_path / 'vids'}"])
    assert code == 0
    manifest = read_manifest(out)
    assert len(manifest.entries) == 3
    assert "svd/train: 0 real / 3 fake" in capsys.readouterr().out


def test_toy_generate_separable_cli(tmp_path):
    out = tmp_path / "m.jsonl"
    code = run_command(["toy", "generate", "--kind", "separable",
                        "--n-clips", "4", "--output", str(tmp_path / "data"),
                        "--manifest", str(out)])
    assert code == 0
    manifest = read_manifest(out)
    assert len(manifest.entries) == 4
    assert all(r.dire_path for r in manifest.entries)


def test_toy_generate_clips_requires_checkpoint(tmp_path):
    code = run_command(["toy", "generate", "--kind", "clips",
                        "--n-clips", "2", "--output", str(tmp_path / "d"),
                        "--manifest", str(tmp_path / "m.jsonl")])
    assert code == 2


def test_extract_dire_cli(tmp_path, rng):
    from divid.tensorio import read_tensor
    from divid.video import write_clip_frames
    from divid.manifest import ClipRecord, DatasetManifest

    frames = [rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
              for _ in range(3)]
    paths = write_clip_frames(frames, tmp_path / "c0")
    manifest = DatasetManifest([ClipRecord(
        clip_id="c0", source="toy_real", label="real", split="test_in",
        frame_paths=paths, frame_count=3, fps=8.0,
        source_resolution=(16, 16))])
    in_path = tmp_path / "m.jsonl"
    out_path = tmp_path / "m_dire.jsonl"
    write_manifest(manifest, in_path)
    code = run_command(["extract-dire", "--manifest", str(in_path),
                        "--output", str(out_path), "--diffusion-steps", "100",
                        "--ddim-steps", "5", "--eta", "0"])
    assert code == 0
    updated = read_manifest(out_path)
    dire = read_tensor(updated.entries[0].dire_path)
    assert dire.shape == (3, 16, 16, 3)
    np.testing.assert_allclose(dire, 0.0, atol=1e-9)  # zero predictor default


def test_config_file_feeds_defaults(tmp_path, rng):
    """--config supplies sampler values; explicit flags still win."""
    from divid.schedule import write_sampler_config
    from divid.tensorio import read_tensor
    from divid.video import write_clip_frames
    from divid.manifest import ClipRecord, DatasetManifest

    frames = [rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)]
    paths = write_clip_frames(frames, tmp_path / "c0")
    manifest = DatasetManifest([ClipRecord(
        clip_id="c0", source="toy_real", label="real", split="test_in",
        frame_paths=paths, frame_count=1, fps=8.0,
        source_resolution=(16, 16))])
    in_path = tmp_path / "m.jsonl"
    write_manifest(manifest, in_path)
    cfg = tmp_path / "sampler.cfg"
    write_sampler_config(cfg, {"total_steps": 100, "ddim_steps": 4,
                               "eta": 0.0})
    code = run_command(["extract-dire", "--manifest", str(in_path),
                        "--output", str(tmp_path / "out.jsonl"),
                        "--config", str(cfg)])
    assert code == 0
    rec = read_manifest(tmp_path / "out.jsonl").entries[0]
    assert read_tensor(rec.dire_path).shape == (1, 16, 16, 3)


# --------------------------------------------------- eval / sweep reports

def test_eval_cli_matches_in_domain_golden(tmp_path, capsys,
                                           separable_manifest,
                                           zero_head_checkpoint):
    manifest_path = tmp_path / "m.jsonl"
    write_manifest(separable_manifest, manifest_path)
    report_path = tmp_path / "report.json"
    code = run_command(["eval", "--manifest", str(manifest_path),
                        "--split", "test_in",
                        "--checkpoint", str(zero_head_checkpoint),
                        "--output", str(report_path)])
    assert code == 0
    out = capsys.readouterr().out
    golden = GOLDEN_IN.read_text()
    assert golden in out
    report = json.loads(report_path.read_text())
    assert report["accuracy"] == 50.0
    assert report["n_frames"] == 96


def test_eval_cli_matches_out_domain_golden(tmp_path, capsys,
                                            out_domain_manifest,
                                            zero_head_checkpoint):
    manifest_path = tmp_path / "m.jsonl"
    write_manifest(out_domain_manifest, manifest_path)
    code = run_command(["eval", "--manifest", str(manifest_path),
                        "--split", "test_out",
                        "--checkpoint", str(zero_head_checkpoint)])
    assert code == 0
    assert GOLDEN_OUT.read_text() in capsys.readouterr().out


def test_sweep_cli_grid_csv(tmp_path, out_domain_manifest,
                            zero_head_checkpoint):
    manifest_path = tmp_path / "m.jsonl"
    write_manifest(out_domain_manifest, manifest_path)
    out_csv = tmp_path / "sweep.csv"
    code = run_command(["sweep", "--manifest", str(manifest_path),
                        "--diffusion-steps", "100,200", "--ddim-steps", "2,5",
                        "--split", "test_out",
                        "--detector-checkpoint", str(zero_head_checkpoint),
                        "--output", str(out_csv)])
    assert code == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert [(r["diffusion_steps"], r["ddim_steps"]) for r in rows] == \
        [("100", "2"), ("100", "5"), ("200", "2"), ("200", "5")]
    assert all(r["error"] == "" for r in rows)
    assert all(r["accuracy"] != "" for r in rows)


# ------------------------------------------------------ training workflow

def test_train_and_eval_cli_end_to_end(tmp_path, capsys, separable_manifest,
                                       temporal_manifest):
    sep_path = tmp_path / "sep.jsonl"
    tmp_manifest_path = tmp_path / "temporal.jsonl"
    write_manifest(separable_manifest, sep_path)
    write_manifest(temporal_manifest, tmp_manifest_path)

    cnn_ckpt = tmp_path / "ckpt_cnn"
    code = run_command(["train", "--manifest", str(sep_path), "--phase", "cnn",
                        "--fusion", "dire", "--batch-size", "32",
                        "--epochs", "1", "--lr", "1e-3", "--resolution", "16",
                        "--seed", "0", "--output", str(cnn_ckpt)])
    assert code == 0
    assert (cnn_ckpt / "params.dvtn").exists()
    assert (tmp_path / "metrics.jsonl").exists()

    lstm_ckpt = tmp_path / "ckpt_lstm"
    code = run_command(["train", "--manifest", str(tmp_manifest_path),
                        "--phase", "lstm", "--fusion", "dire",
                        "--batch-size", "16", "--seq-len", "4",
                        "--epochs", "1", "--lr", "1e-3", "--resolution", "16",
                        "--seed", "0",
                        "--backbone-checkpoint", str(cnn_ckpt),
                        "--output", str(lstm_ckpt)])
    assert code == 0

    capsys.readouterr()
    code = run_command(["eval", "--manifest", str(tmp_manifest_path),
                        "--split", "test_in", "--checkpoint", str(lstm_ckpt)])
    assert code == 0
    out = capsys.readouterr().out
    header = out.splitlines()[0].split()
    assert header == ["Detector", "Acc.", "AP"]


def test_train_lstm_requires_backbone_flag(tmp_path, temporal_manifest):
    path = tmp_path / "m.jsonl"
    write_manifest(temporal_manifest, path)
    code = run_command(["train", "--manifest", str(path), "--phase", "lstm",
                        "--output", str(tmp_path / "ckpt")])
    assert code == 2
