from .model import (CnnBackbone, DetectorModel, LstmCell, fuse_inputs,
                    lstm_cell_reference, predict_clip, sequence_forward)
from .train import TrainConfig, train_cnn_phase, train_lstm_phase

__all__ = [
    "CnnBackbone", "DetectorModel", "LstmCell", "fuse_inputs",
    "lstm_cell_reference", "predict_clip", "sequence_forward",
    "TrainConfig", "train_cnn_phase", "train_lstm_phase",
]
