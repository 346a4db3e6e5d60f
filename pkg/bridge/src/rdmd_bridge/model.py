"""Checkpointed noise-prediction models.

A checkpoint is a torch file holding the architecture parameters, the
weights, and the training-schedule descriptor the model was built for.
The schedule descriptor is what the server advertises at handshake time,
so a solver configured with a different schedule is rejected before any
prediction is served.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


class TimeEmbedding(nn.Module):
    """Sinusoidal step embedding followed by a small MLP."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(-math.log(10_000.0) * torch.arange(half, dtype=torch.float32) / half)
        angles = t.float()[:, None] * freqs[None, :]
        emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)
        return self.mlp(emb)


class ResBlock(nn.Module):
    def __init__(self, channels: int, emb_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, channels)
        self.act = nn.SiLU()

    def forward(self, x, emb):
        h = self.act(self.conv1(x))
        h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.act(self.conv2(h))
        return x + h


class TinyUNet(nn.Module):
    """Two-level UNet with time conditioning; small enough for tests."""

    def __init__(self, channels: int, base: int = 16, emb_dim: int = 32):
        super().__init__()
        self.time = TimeEmbedding(emb_dim)
        self.stem = nn.Conv2d(channels, base, 3, padding=1)
        self.enc = ResBlock(base, emb_dim)
        self.down = nn.Conv2d(base, base * 2, 3, stride=2, padding=1)
        self.mid = ResBlock(base * 2, emb_dim)
        self.up = nn.ConvTranspose2d(base * 2, base, 4, stride=2, padding=1)
        self.dec = ResBlock(base, emb_dim)
        self.head = nn.Conv2d(base, channels, 3, padding=1)

    def forward(self, x, t):
        emb = self.time(t)
        h0 = self.enc(self.stem(x), emb)
        h1 = self.mid(self.down(h0), emb)
        h = self.dec(self.up(h1) + h0, emb)
        return self.head(h)


@dataclass
class ModelHandle:
    """A loaded predictor plus the schedule/shape it advertises."""

    kind: str
    t_train: int
    beta_start: float
    beta_end: float
    shape: tuple[int, int, int]
    net: nn.Module | None

    def predict_eps(self, x: np.ndarray, t_index: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(x, dtype=np.float32)
        with torch.no_grad():
            # frames decode to read-only buffers; torch needs its own copy
            xt = torch.from_numpy(np.array(x, dtype=np.float32))[None]
            tt = torch.tensor([t_index], dtype=torch.int64)
            out = self.net(xt, tt)[0]
        return out.numpy().astype(np.float32)


def create_checkpoint(
    path,
    shape: tuple[int, int, int],
    *,
    kind: str = "unet",
    t_train: int = 1000,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
    base: int = 16,
    seed: int = 0,
) -> None:
    """Write a small self-describing checkpoint (random init; no training)."""
    if kind not in ("unet", "zero"):
        raise ValueError(f"unknown model kind {kind!r}")
    payload = {
        "kind": kind,
        "t_train": int(t_train),
        "beta_start": float(beta_start),
        "beta_end": float(beta_end),
        "shape": tuple(int(d) for d in shape),
        "base": int(base),
    }
    if kind == "unet":
        torch.manual_seed(seed)
        net = TinyUNet(shape[0], base=base)
        payload["state_dict"] = net.state_dict()
    torch.save(payload, path)


def load_checkpoint(path) -> ModelHandle:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    for key in ("kind", "t_train", "beta_start", "beta_end", "shape"):
        if key not in payload:
            raise ValueError(f"checkpoint {path} is missing {key!r}")
    kind = payload["kind"]
    shape = tuple(payload["shape"])
    net = None
    if kind == "unet":
        net = TinyUNet(shape[0], base=int(payload.get("base", 16)))
        net.load_state_dict(payload["state_dict"])
        net.eval()
    elif kind != "zero":
        raise ValueError(f"unknown model kind {kind!r}")
    return ModelHandle(
        kind=kind,
        t_train=int(payload["t_train"]),
        beta_start=float(payload["beta_start"]),
        beta_end=float(payload["beta_end"]),
        shape=shape,
        net=net,
    )
