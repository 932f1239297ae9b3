"""CNN frame-feature extractor, LSTM temporal head, and input fusion.

The backbone is a ResNet50 whose pooled features (2048-d) feed both a
per-frame binary head and a one-layer LSTM with hidden size 2048. Fusion of
RGB and reconstruction-error maps is channel-wise concatenation into a
6-channel first conv layer.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
from torchvision.models import resnet50

from ..errors import UsageError
from ..manifest import ClipRecord

FEATURE_DIM = 2048
FUSION_MODES = ("dire_only", "rgb_only", "dire_plus_rgb")
FUSION_CHANNELS = {"dire_only": 3, "rgb_only": 3, "dire_plus_rgb": 6}


def fuse_inputs(rgb: np.ndarray | None, dire: np.ndarray | None,
                mode: str) -> np.ndarray:
    """Build the backbone input (H x W x C float32 in [-1, 1]).

    DIRE values arrive in raw [0, 2] form and are mapped affinely to [-1, 1].
    """
    if mode not in FUSION_MODES:
        raise UsageError(f"unknown fusion mode {mode!r}")
    if mode == "rgb_only":
        if rgb is None:
            raise UsageError("rgb_only fusion requires an RGB frame")
        return np.asarray(rgb, dtype=np.float32)
    if dire is None:
        raise UsageError(f"{mode} fusion requires a DIRE map")
    dire_norm = np.asarray(dire, dtype=np.float32) - 1.0
    if mode == "dire_only":
        return dire_norm
    if rgb is None:
        raise UsageError("dire_plus_rgb fusion requires an RGB frame")
    rgb = np.asarray(rgb, dtype=np.float32)
    if rgb.shape != dire_norm.shape:
        raise UsageError(f"rgb shape {rgb.shape} != dire shape {dire_norm.shape}")
    return np.concatenate([rgb, dire_norm], axis=-1)


class CnnBackbone(nn.Module):
    """ResNet50 feature extractor plus a frame-level binary head."""

    def __init__(self, in_channels: int = 3, pretrained: bool = False):
        super().__init__()
        if in_channels not in (3, 6):
            raise UsageError(f"backbone supports 3 or 6 input channels, got {in_channels}")
        weights = "IMAGENET1K_V2" if pretrained else None
        net = resnet50(weights=weights)
        if in_channels == 6:
            old = net.conv1
            conv = nn.Conv2d(6, old.out_channels, kernel_size=old.kernel_size,
                             stride=old.stride, padding=old.padding, bias=False)
            with torch.no_grad():
                # duplicate the 3-channel kernels and halve so activations match
                conv.weight.copy_(torch.cat([old.weight, old.weight], dim=1) * 0.5)
            net.conv1 = conv
        net.fc = nn.Identity()
        self.in_channels = in_channels
        self.net = net
        self.frame_head = nn.Linear(FEATURE_DIM, 1)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """phi: N x C x H x W -> N x 2048."""
        return self.net(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Per-frame logits: N x C x H x W -> N."""
        return self.frame_head(self.features(x)).squeeze(-1)


class LstmCell(nn.Module):
    """One-layer LSTM cell with forget/update/output gates.

    candidate: c~ = tanh(W_ca a_prev + W_cx x + b_c)
    gates g in {f, u, o}: g = sigmoid(W_ga a_prev + W_gx x + b_g)
    cell:   c = f * c_prev + u * c~
    hidden: a = o * tanh(c)
    """

    def __init__(self, input_size: int = FEATURE_DIM, hidden_size: int = FEATURE_DIM):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size

        def pair():
            return (nn.Parameter(torch.empty(hidden_size, hidden_size)),
                    nn.Parameter(torch.empty(hidden_size, input_size)),
                    nn.Parameter(torch.zeros(hidden_size)))

        self.W_ca, self.W_cx, self.b_c = pair()
        self.W_fa, self.W_fx, self.b_f = pair()
        self.W_ua, self.W_ux, self.b_u = pair()
        self.W_oa, self.W_ox, self.b_o = pair()
        self.reset_parameters()

    def reset_parameters(self):
        bound = 1.0 / math.sqrt(self.hidden_size)
        for name, p in self.named_parameters():
            if name.startswith("W_"):
                nn.init.uniform_(p, -bound, bound)
            else:
                nn.init.zeros_(p)

    def forward(self, a_prev: torch.Tensor, c_prev: torch.Tensor,
                x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if not (torch.isfinite(a_prev).all() and torch.isfinite(c_prev).all()
                and torch.isfinite(x).all()):
            raise UsageError("non-finite inputs to LSTM cell")
        c_tilde = torch.tanh(a_prev @ self.W_ca.T + x @ self.W_cx.T + self.b_c)
        f = torch.sigmoid(a_prev @ self.W_fa.T + x @ self.W_fx.T + self.b_f)
        u = torch.sigmoid(a_prev @ self.W_ua.T + x @ self.W_ux.T + self.b_u)
        o = torch.sigmoid(a_prev @ self.W_oa.T + x @ self.W_ox.T + self.b_o)
        c = f * c_prev + u * c_tilde
        a = o * torch.tanh(c)
        return a, c

    def run_sequence(self, feats: torch.Tensor) -> torch.Tensor:
        """feats: N x T x input_size -> hidden states N x T x hidden_size.
        State starts at zeros."""
        n = feats.shape[0]
        a = feats.new_zeros(n, self.hidden_size)
        c = feats.new_zeros(n, self.hidden_size)
        hiddens = []
        for t in range(feats.shape[1]):
            a, c = self.forward(a, c, feats[:, t])
            hiddens.append(a)
        return torch.stack(hiddens, dim=1)


def lstm_cell_reference(weights: dict, a_prev, c_prev, x):
    """Scalar reference for one cell step, independent of the tensor path.

    weights: numpy arrays keyed like the LstmCell parameters. Inputs are 1-D
    sequences; returns (a, c) as python lists.
    """
    h = len(weights["b_c"])

    def affine(W_a, W_x, b, i):
        s = b[i]
        for j in range(h):
            s += W_a[i][j] * a_prev[j]
        for j in range(len(x)):
            s += W_x[i][j] * x[j]
        return s

    def sigmoid(v):
        return 1.0 / (1.0 + math.exp(-v))

    a_out, c_out = [], []
    for i in range(h):
        c_tilde = math.tanh(affine(weights["W_ca"], weights["W_cx"], weights["b_c"], i))
        f = sigmoid(affine(weights["W_fa"], weights["W_fx"], weights["b_f"], i))
        u = sigmoid(affine(weights["W_ua"], weights["W_ux"], weights["b_u"], i))
        o = sigmoid(affine(weights["W_oa"], weights["W_ox"], weights["b_o"], i))
        c = f * c_prev[i] + u * c_tilde
        c_out.append(c)
        a_out.append(o * math.tanh(c))
    return a_out, c_out


class DetectorModel(nn.Module):
    """Backbone + LSTM temporal head + per-timestep sequence classifier."""

    def __init__(self, fusion_mode: str = "dire_only",
                 input_resolution: tuple[int, int] = (256, 256),
                 pretrained_backbone: bool = False):
        super().__init__()
        if fusion_mode not in FUSION_MODES:
            raise UsageError(f"unknown fusion mode {fusion_mode!r}")
        self.fusion_mode = fusion_mode
        self.input_resolution = tuple(input_resolution)
        self.backbone = CnnBackbone(FUSION_CHANNELS[fusion_mode],
                                    pretrained=pretrained_backbone)
        self.lstm = LstmCell(FEATURE_DIM, FEATURE_DIM)
        self.seq_head = nn.Linear(FEATURE_DIM, 1)

    def forward(self, clip_inputs: torch.Tensor) -> torch.Tensor:
        return self.sequence_logits(clip_inputs)

    def sequence_logits(self, clip_inputs: torch.Tensor) -> torch.Tensor:
        """N x T x C x H x W (or T x C x H x W) -> per-frame logits N x T (or T)."""
        squeeze = clip_inputs.dim() == 4
        if squeeze:
            clip_inputs = clip_inputs.unsqueeze(0)
        n, t = clip_inputs.shape[:2]
        if t == 0:
            raise UsageError("empty input sequence")
        flat = clip_inputs.reshape(n * t, *clip_inputs.shape[2:])
        feats = self.backbone.features(flat).reshape(n, t, FEATURE_DIM)
        hiddens = self.lstm.run_sequence(feats)
        logits = self.seq_head(hiddens).squeeze(-1)
        return logits.squeeze(0) if squeeze else logits


def sequence_forward(model: DetectorModel, clip_inputs: torch.Tensor) -> torch.Tensor:
    """Per-frame logits for one ordered fused-frame sequence (T x C x H x W)."""
    return model.sequence_logits(clip_inputs)


def predict_clip(model: DetectorModel, clip: ClipRecord) -> np.ndarray:
    """Per-frame fake probabilities for a manifest clip."""
    from .inputs import load_clip_inputs

    if model.fusion_mode != "rgb_only" and not clip.dire_path:
        raise UsageError(
            f"clip {clip.clip_id}: fusion mode {model.fusion_mode} requires "
            "extracted DIRE (dire_path missing)"
        )
    inputs = load_clip_inputs(clip, model.fusion_mode, model.input_resolution)
    model.eval()
    with torch.no_grad():
        logits = model.sequence_logits(torch.from_numpy(inputs))
    return torch.sigmoid(logits).numpy()
