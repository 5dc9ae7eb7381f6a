"""Anti-spoofing classifiers: SE/gated Res2Net family plus an SSL+LSTM head.

All variants are width/depth parameterized so tests run on tiny models while
configuration presets can describe full-scale ones. Forward passes return
per-row log-probabilities over {bona_fide, spoof}; index 0 is bona fide.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

VARIANTS = ("senet", "se_res2net", "scg_res2net", "mlcg_res2net", "gemini_res2net", "ssl_recurrent")
GATE_KINDS = ("se", "scg", "mlcg")

BONA_FIDE_INDEX = 0
SPOOF_INDEX = 1


class ModelConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    variant: str = "se_res2net"
    width: int = 16
    depth: int = 1
    res2net_scale: int = 4
    se_reduction: int = 4
    gemini_time_freq_ratio: Tuple[int, int] = (2, 1)  # (freq stride, time stride)
    recurrent_hidden: int = 192
    encoder_dim: int = 8
    num_classes: int = 2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelConfigError(f"unknown variant {self.variant!r}")
        if self.num_classes != 2:
            raise ModelConfigError("num_classes is fixed at 2")
        if self.variant.endswith("res2net") and self.width % self.res2net_scale != 0:
            raise ModelConfigError(
                f"res2net_scale {self.res2net_scale} must divide width {self.width}"
            )


class ChannelGate(nn.Module):
    """Sigmoid-bounded multiplicative channel gate.

    kind "se" squeezes with a reduction bottleneck; "scg" gates each channel
    from its own pooled statistic; "mlcg" additionally conditions on pooled
    statistics of a reference (lower-level) feature map. The force_open test
    hook makes the gate an exact identity.
    """

    def __init__(self, channels: int, kind: str = "se", reduction: int = 4, ref_channels: int = 0):
        super().__init__()
        if kind not in GATE_KINDS:
            raise ModelConfigError(f"unknown gate kind {kind!r}")
        self.kind = kind
        self.force_open = False
        if kind == "se":
            hidden = max(1, channels // reduction)
            self.fc1 = nn.Linear(channels, hidden)
            self.fc2 = nn.Linear(hidden, channels)
        elif kind == "scg":
            self.fc = nn.Linear(channels, channels)
        else:  # mlcg
            self.fc = nn.Linear(channels + ref_channels, channels)

    def gate_values(self, x: torch.Tensor, ref: Optional[torch.Tensor] = None) -> torch.Tensor:
        pooled = x.mean(dim=(2, 3))
        if self.kind == "se":
            g = self.fc2(F.relu(self.fc1(pooled)))
        elif self.kind == "scg":
            g = self.fc(pooled)
        else:
            if ref is None:
                ref = x
            g = self.fc(torch.cat([pooled, ref.mean(dim=(2, 3))], dim=1))
        return torch.sigmoid(g)

    def forward(self, x: torch.Tensor, ref: Optional[torch.Tensor] = None) -> torch.Tensor:
        if self.force_open:
            return x
        g = self.gate_values(x, ref)
        return x * g[:, :, None, None]


def gate_channels(block_features: torch.Tensor, gate: ChannelGate, ref: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Applies a channel gate; output shape equals input shape."""
    return gate(block_features, ref)


class Res2NetBlock(nn.Module):
    """Hierarchical multi-scale residual block with a channel gate."""

    def __init__(self, channels: int, scale: int, gate_kind: str, se_reduction: int):
        super().__init__()
        self.scale = scale
        self.group_width = channels // scale
        self.conv_in = nn.Conv2d(channels, channels, 1, bias=False)
        self.bn_in = nn.BatchNorm2d(channels)
        self.convs = nn.ModuleList(
            nn.Conv2d(self.group_width, self.group_width, 3, padding=1, bias=False)
            for _ in range(scale - 1)
        )
        self.bns = nn.ModuleList(nn.BatchNorm2d(self.group_width) for _ in range(scale - 1))
        self.conv_out = nn.Conv2d(channels, channels, 1, bias=False)
        self.bn_out = nn.BatchNorm2d(channels)
        self.gate = ChannelGate(channels, gate_kind, se_reduction, ref_channels=channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn_in(self.conv_in(x)))
        groups = torch.split(out, self.group_width, dim=1)
        outputs = [groups[0]]
        prev = None
        for i, (conv, bn) in enumerate(zip(self.convs, self.bns)):
            inp = groups[i + 1] if prev is None else groups[i + 1] + prev
            prev = F.relu(bn(conv(inp)))
            outputs.append(prev)
        out = torch.cat(outputs, dim=1)
        out = self.bn_out(self.conv_out(out))
        out = self.gate(out, ref=x)
        return F.relu(out + x)


class SEBasicBlock(nn.Module):
    """Plain residual block with squeeze-excitation (the senet variant)."""

    def __init__(self, channels: int, se_reduction: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(channels)
        self.gate = ChannelGate(channels, "se", se_reduction)

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        out = self.gate(out)
        return F.relu(out + x)


class ConvClassifier(nn.Module):
    """Shared trunk for the 2D-CNN variants: stem, blocks, pooled linear head."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        w = config.width
        self.stem = nn.Conv2d(1, w, 3, padding=1, bias=False)
        self.stem_bn = nn.BatchNorm2d(w)
        gate_kind = {
            "se_res2net": "se",
            "scg_res2net": "scg",
            "mlcg_res2net": "mlcg",
            "gemini_res2net": "se",
        }.get(config.variant, "se")
        blocks = []
        for _ in range(config.depth):
            if config.variant == "senet":
                blocks.append(SEBasicBlock(w, config.se_reduction))
            else:
                blocks.append(Res2NetBlock(w, config.res2net_scale, gate_kind, config.se_reduction))
        self.blocks = nn.ModuleList(blocks)
        if config.variant == "gemini_res2net":
            fs, ts = config.gemini_time_freq_ratio
            self.pool = nn.MaxPool2d(kernel_size=(fs, ts), stride=(fs, ts))
        else:
            self.pool = None
        self.head = nn.Linear(w, config.num_classes)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        # features: [batch, bins, frames] or [batch, 1, bins, frames]
        if features.dim() == 3:
            features = features.unsqueeze(1)
        x = F.relu(self.stem_bn(self.stem(features)))
        if self.pool is not None:
            x = self.pool(x)
        for block in self.blocks:
            x = block(x)
        x = x.mean(dim=(2, 3))
        return F.log_softmax(self.head(x), dim=-1)


class StubEncoder(nn.Module):
    """Fixed frame encoder standing in for a pretrained SSL model.

    Emits embeddings of the declared dimension by strided linear projection
    of raw samples; used when no real encoder checkpoint is available.
    """

    def __init__(self, dim: int = 8, frame: int = 320):
        super().__init__()
        self.dim = dim
        self.frame = frame
        self.proj = nn.Linear(frame, dim)

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        # wave: [batch, samples] -> [batch, frames, dim]
        n_frames = wave.shape[-1] // self.frame
        framed = wave[:, : n_frames * self.frame].reshape(wave.shape[0], n_frames, self.frame)
        return self.proj(framed)


class SSLRecurrentClassifier(nn.Module):
    """Frozen-or-finetuned frame encoder followed by an LSTM head."""

    def __init__(self, encoder: nn.Module, encoder_dim: int, recurrent_hidden: int = 192, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config or ModelConfig(
            variant="ssl_recurrent", encoder_dim=encoder_dim, recurrent_hidden=recurrent_hidden
        )
        self.encoder = encoder
        self.lstm = nn.LSTM(encoder_dim, recurrent_hidden, batch_first=True)
        self.head = nn.Linear(recurrent_hidden, 2)
        self._encoder_frozen = False

    def set_encoder_frozen(self, frozen: bool) -> None:
        self._encoder_frozen = frozen
        for p in self.encoder.parameters():
            p.requires_grad_(not frozen)

    @property
    def encoder_frozen(self) -> bool:
        return self._encoder_frozen

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        emb = self.encoder(wave)
        out, _ = self.lstm(emb)
        return F.log_softmax(self.head(out[:, -1, :]), dim=-1)


def build_ssl_head(encoder: nn.Module, recurrent_hidden: int = 192, encoder_dim: Optional[int] = None) -> SSLRecurrentClassifier:
    """Couples a frame encoder with an LSTM classifier head."""
    if encoder_dim is None:
        encoder_dim = getattr(encoder, "dim", None)
        if encoder_dim is None:
            raise ModelConfigError("encoder does not declare its embedding dim; pass encoder_dim")
    probe = getattr(encoder, "dim", encoder_dim)
    if probe != encoder_dim:
        raise ModelConfigError(f"encoder emits {probe}-dim frames, expected {encoder_dim}")
    return SSLRecurrentClassifier(encoder, encoder_dim, recurrent_hidden)


def build_model(config: ModelConfig, seed: int) -> nn.Module:
    """Builds a classifier with deterministic initialization for the seed."""
    generator_seed = int.from_bytes(
        hashlib.sha256(f"model:{seed}".encode()).digest()[:4], "big"
    )
    torch.manual_seed(generator_seed)
    if config.variant == "ssl_recurrent":
        encoder = StubEncoder(config.encoder_dim)
        model = SSLRecurrentClassifier(encoder, config.encoder_dim, config.recurrent_hidden, config)
    else:
        model = ConvClassifier(config)
    return model


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def parameter_checksum(model: nn.Module) -> str:
    h = hashlib.sha256()
    for name, p in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()
