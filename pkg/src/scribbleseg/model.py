"""Small encoder-decoder segmentation network.

Four stride-2 encoder stages expose feature maps at 1/2 .. 1/16 of the input
resolution; a light decoder with skip connections brings the head back to full
resolution.  Group normalization keeps single-sample forwards deterministic and
SiLU keeps the network smooth for finite-difference gradient checks.
"""
from __future__ import annotations

import hashlib
import math
import pickle
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

DOWNSAMPLE_FACTOR = 16  # 2**4, one factor of two per encoder stage
CHECKPOINT_FORMAT = "scribbleseg-checkpoint-v1"


def _groups(channels: int) -> int:
    return 4 if channels % 4 == 0 else 1


class _ConvBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1)
        self.norm1 = nn.GroupNorm(_groups(c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.norm2 = nn.GroupNorm(_groups(c_out), c_out)
        self.act = nn.SiLU()

    def forward(self, x):
        x = self.act(self.norm1(self.conv1(x)))
        return self.act(self.norm2(self.conv2(x)))


class _DecoderBlock(nn.Module):
    def __init__(self, c_in: int, c_skip: int, c_out: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in + c_skip, c_out, 3, padding=1)
        self.norm = nn.GroupNorm(_groups(c_out), c_out)
        self.act = nn.SiLU()

    def forward(self, x, skip=None):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        return self.act(self.norm(self.conv(x)))


class SegmentationModel(nn.Module):
    """Encoder-decoder net returning (probabilities, encoder features).

    Encoder level k (k = 1..4) has ``width_base * 2**k`` channels at 1/2**k of
    the input resolution, ordered shallow to deep.
    """

    def __init__(self, width_base: int = 8, in_channels: int = 1, init_seed: int = 0):
        super().__init__()
        if width_base < 4:
            raise ValueError(f"width_base must be >= 4, got {width_base}")
        self.width_base = width_base
        self.in_channels = in_channels
        self.init_seed = init_seed
        c = [width_base * 2 ** k for k in range(1, 5)]
        self.enc1 = _ConvBlock(in_channels, c[0], stride=2)
        self.enc2 = _ConvBlock(c[0], c[1], stride=2)
        self.enc3 = _ConvBlock(c[1], c[2], stride=2)
        self.enc4 = _ConvBlock(c[2], c[3], stride=2)
        self.dec3 = _DecoderBlock(c[3], c[2], c[2])
        self.dec2 = _DecoderBlock(c[2], c[1], c[1])
        self.dec1 = _DecoderBlock(c[1], c[0], c[0])
        self.dec0 = _DecoderBlock(c[0], 0, width_base)
        self.head = nn.Conv2d(width_base, 1, 1)

    @property
    def arch(self) -> dict:
        return {"width_base": self.width_base, "in_channels": self.in_channels,
                "init_seed": self.init_seed}

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, images):
        """Accepts [C, H, W] or [B, C, H, W]; returns (probs, [f1..f4]).

        probs drops the batch dim when the input had none.
        """
        squeeze = images.dim() == 3
        x = images[None] if squeeze else images
        if x.dim() != 4:
            raise ValueError(f"expected [C, H, W] or [B, C, H, W], got shape {tuple(x.shape)}")
        h, w = x.shape[-2:]
        if h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR:
            raise ValueError(
                f"spatial dims must be divisible by {DOWNSAMPLE_FACTOR}, got {h}x{w}")
        f1 = self.enc1(x)
        f2 = self.enc2(f1)
        f3 = self.enc3(f2)
        f4 = self.enc4(f3)
        d = self.dec3(f4, f3)
        d = self.dec2(d, f2)
        d = self.dec1(d, f1)
        d = self.dec0(d)
        probs = torch.sigmoid(self.head(d)[:, 0])
        feats = [f1, f2, f3, f4]
        if squeeze:
            probs = probs[0]
            feats = [f[0] for f in feats]
        return probs, feats


def init_model(width_base: int = 8, seed: int = 0, in_channels: int = 1) -> SegmentationModel:
    """Build a model with deterministic, generator-driven initialization."""
    model = SegmentationModel(width_base=width_base, in_channels=in_channels, init_seed=seed)
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("weight") and p.dim() == 4:
                fan_in = p.shape[1] * p.shape[2] * p.shape[3]
                p.copy_(torch.randn(p.shape, generator=g) * math.sqrt(2.0 / fan_in))
            elif name.endswith("weight"):  # group-norm gain
                p.fill_(1.0)
            else:
                p.zero_()
    return model


def predict_probs(model: SegmentationModel, images: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Numpy convenience wrapper: [N, C, H, W] images -> [N, H, W] probabilities."""
    dtype = next(model.parameters()).dtype
    out = []
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            batch = torch.as_tensor(np.ascontiguousarray(images[i:i + batch_size]), dtype=dtype)
            probs, _ = model(batch)
            out.append(probs.numpy())
    return np.concatenate(out, axis=0)


def checkpoint_bytes(model: SegmentationModel) -> bytes:
    """Canonical serialized form; identical parameters give identical bytes."""
    params = {name: p.detach().cpu().numpy().copy()
              for name, p in model.named_parameters()}
    payload = {"format": CHECKPOINT_FORMAT, "arch": model.arch, "params": params}
    return pickle.dumps(payload, protocol=4)


def model_hash(model: SegmentationModel) -> str:
    return hashlib.sha256(checkpoint_bytes(model)).hexdigest()


def save_checkpoint(model: SegmentationModel, path) -> str:
    """Write the checkpoint and return its sha256 hex digest."""
    data = checkpoint_bytes(model)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path) -> SegmentationModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = pickle.loads(path.read_bytes())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a scribbleseg checkpoint")
    model = SegmentationModel(**payload["arch"])
    with torch.no_grad():
        for name, p in model.named_parameters():
            arr = payload["params"][name]
            p.data = torch.from_numpy(arr.copy())
    return model
