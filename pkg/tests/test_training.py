"""Two-phase training, checkpoint persistence, and evaluation plumbing."""

import json

import pytest
import torch

from divid.detector.checkpoint import (load_into, load_state, params_bytes,
                                       save_checkpoint)
from divid.detector.train import (TrainConfig, load_detector, train_cnn_phase,
                                  train_lstm_phase)
from divid.errors import DataError, UsageError
from divid.manifest import DatasetManifest
from divid.metrics import evaluate_split


def test_train_config_validation():
    with pytest.raises(UsageError):
        TrainConfig(phase="both")


def test_train_config_digest_changes_with_values():
    a = TrainConfig(seed=0)
    b = TrainConfig(seed=1)
    assert a.digest() != b.digest()
    assert a.digest() == TrainConfig(seed=0).digest()


# ------------------------------------------------------------ checkpoints

def test_checkpoint_round_trip_bit_exact(tmp_path):
    torch.manual_seed(0)
    module = torch.nn.Sequential(torch.nn.Linear(4, 3), torch.nn.Linear(3, 2))
    save_checkpoint(module, tmp_path / "ckpt", {"note": "x"})
    state, config = load_state(tmp_path / "ckpt")
    assert config == {"note": "x"}
    for name, tensor in module.state_dict().items():
        torch.testing.assert_close(state[name], tensor, rtol=0, atol=0)

    clone = torch.nn.Sequential(torch.nn.Linear(4, 3), torch.nn.Linear(3, 2))
    load_into(clone, tmp_path / "ckpt")
    assert params_bytes(clone) == params_bytes(module)


def test_checkpoint_missing_files(tmp_path):
    with pytest.raises(DataError):
        load_state(tmp_path / "nothing")
    (tmp_path / "partial").mkdir()
    (tmp_path / "partial" / "params.dvtn").write_bytes(b"")
    with pytest.raises(DataError):
        load_state(tmp_path / "partial")


def test_params_bytes_prefix_filter():
    torch.manual_seed(1)
    module = torch.nn.ModuleDict({"a": torch.nn.Linear(2, 2),
                                  "b": torch.nn.Linear(2, 2)})
    full = params_bytes(module)
    only_a = params_bytes(module, prefix="a.")
    assert len(only_a) < len(full)
    assert only_a in full


# ---------------------------------------------------------- phase 1 (CNN)

def test_cnn_phase_empty_split_fails():
    with pytest.raises(UsageError):
        train_cnn_phase(DatasetManifest([]), TrainConfig(), "/tmp/unused")


def test_cnn_phase_overfits_and_logs(separable_manifest, tmp_path):
    """A few steps on the separable set drive the loss well below chance."""
    log = tmp_path / "metrics.jsonl"
    config = TrainConfig(phase="cnn", fusion_mode="dire_only",
                         input_resolution=(16, 16), batch_size=32, epochs=2,
                         lr=1e-3, seed=0, log_path=str(log))
    ckpt = train_cnn_phase(separable_manifest, config, tmp_path / "ckpt")
    entries = [json.loads(ln) for ln in log.read_text().splitlines()]
    assert entries, "metrics log is empty"
    assert set(entries[0]) == {"step", "phase", "loss", "lr", "seed"}
    assert entries[0]["phase"] == "cnn"
    losses = [e["loss"] for e in entries]
    assert min(losses) < 0.1 < losses[0]

    saved = json.loads((ckpt / "config.json").read_text())
    assert saved["fusion_mode"] == "dire_only"
    assert saved["steps"] == len(entries)


def test_cnn_phase_deterministic_given_seed(separable_manifest, tmp_path):
    config = TrainConfig(phase="cnn", fusion_mode="dire_only",
                         input_resolution=(16, 16), batch_size=32, epochs=1,
                         lr=1e-3, seed=3, max_steps=3)
    from divid.detector.model import CnnBackbone

    ckpts = []
    for run in range(2):
        ckpt = train_cnn_phase(separable_manifest, config,
                               tmp_path / f"run{run}")
        net = CnnBackbone(3)
        load_into(net, ckpt)
        ckpts.append(params_bytes(net))
    assert ckpts[0] == ckpts[1]


# --------------------------------------------------------- phase 2 (LSTM)

def test_lstm_phase_requires_checkpoint(temporal_manifest):
    with pytest.raises(UsageError):
        train_lstm_phase(temporal_manifest, None, TrainConfig(phase="lstm"),
                         "/tmp/unused")


def test_lstm_phase_rejects_fusion_mismatch(temporal_manifest, cnn_checkpoint,
                                            tmp_path):
    config = TrainConfig(phase="lstm", fusion_mode="rgb_only",
                         input_resolution=(16, 16), max_steps=1)
    with pytest.raises(UsageError, match="fusion"):
        train_lstm_phase(temporal_manifest, cnn_checkpoint, config,
                         tmp_path / "ckpt")


def test_lstm_phase_rejects_all_short_clips(cnn_checkpoint, tmp_path,
                                            separable_manifest):
    config = TrainConfig(phase="lstm", fusion_mode="dire_only",
                         input_resolution=(16, 16), seq_len=100)
    with pytest.raises(UsageError, match="seq_len"):
        train_lstm_phase(separable_manifest, cnn_checkpoint, config,
                         tmp_path / "ckpt")


def test_lstm_phase_freezes_backbone(lstm_trained, cnn_model):
    model, _ = lstm_trained
    assert params_bytes(model.backbone) == params_bytes(cnn_model.backbone)
    assert all(not p.requires_grad for p in model.backbone.parameters())


def test_load_detector_round_trip(lstm_trained, temporal_manifest):
    model, ckpt = lstm_trained
    loaded = load_detector(ckpt)
    assert loaded.fusion_mode == model.fusion_mode
    assert params_bytes(loaded) == params_bytes(model)
    a = evaluate_split(model, temporal_manifest, "test_in")
    b = evaluate_split(loaded, temporal_manifest, "test_in")
    assert a.accuracy == b.accuracy
    assert a.average_precision == b.average_precision


# ------------------------------------------------------------- evaluation

def test_evaluate_split_empty_split(zero_head_model, separable_manifest):
    with pytest.raises(UsageError):
        evaluate_split(zero_head_model, separable_manifest, "test_out")


def test_evaluate_split_bad_head(zero_head_model, separable_manifest):
    with pytest.raises(UsageError):
        evaluate_split(zero_head_model, separable_manifest, "test_in",
                       head="voting")


def test_evaluate_split_missing_dire_listed(zero_head_model):
    from test_batching import clip

    bare = DatasetManifest([clip(0, 4, split="test_in")])
    with pytest.raises(DataError, match="b_0000"):
        evaluate_split(zero_head_model, bare, "test_in")


def test_evaluate_split_zero_head_is_exactly_chance(zero_head_model,
                                                    separable_manifest):
    """Zeroed sequence head scores every frame 0.5 -> all predicted real."""
    report = evaluate_split(zero_head_model, separable_manifest, "test_in")
    assert report.accuracy == 50.0  # the split is label-balanced
    assert report.n_frames == 96
    assert set(report.per_source) == {"toy_fake", "toy_real"}
    assert report.per_source["toy_real"] == 100.0
    assert report.per_source["toy_fake"] == 0.0
    assert report.total_average == 50.0
