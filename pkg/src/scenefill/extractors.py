"""Pluggable feature extractors for the perceptual loss and the image-distance
metric.

The desk-scale defaults are small frozen convolutional stacks with weights
drawn from a fixed seed, so scores are reproducible without any pretrained
asset. Production runs plug in a real pretrained embedding via the
``torchscript`` adapter: a scripted module mapping (N, 3, H, W) floats in
[0, 1] to (N, d) feature vectors.
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import ConfigurationError


def _seeded_conv_weight(gen: torch.Generator, out_ch: int, in_ch: int, k: int) -> torch.Tensor:
    fan_in = in_ch * k * k
    return torch.randn(out_ch, in_ch, k, k, generator=gen) / fan_in ** 0.5


class ConvFeatureStack(torch.nn.Module):
    """Frozen random conv pyramid; returns one feature volume per level."""

    def __init__(self, in_channels: int = 3, widths: tuple[int, ...] = (16, 32, 64), seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        weights = []
        prev = in_channels
        for w in widths:
            weights.append(torch.nn.Parameter(_seeded_conv_weight(gen, w, prev, 3), requires_grad=False))
            prev = w
        self.weights = torch.nn.ParameterList(weights)
        self.layer_weights = [1.0] * len(widths)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = x
        for w in self.weights:
            h = torch.nn.functional.conv2d(h, w, stride=2, padding=1)
            h = torch.nn.functional.leaky_relu(h, 0.2)
            feats.append(h)
        return feats


class IdentityFeatures:
    """features = [input]; turns feature-space losses into plain pixel losses."""

    layer_weights = [1.0]

    def __call__(self, x: torch.Tensor) -> list[torch.Tensor]:
        return [x]


class ImageEmbedder:
    """Maps an RGB raster to a d-dim vector with a frozen random conv stack.

    Stand-in for a pretrained embedding network at desk scale; distances are
    only meaningful relative to one fixed embedder, which is why the seed is
    part of the configuration.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        gen = torch.Generator().manual_seed(seed)
        self.stack = ConvFeatureStack(in_channels=3, widths=(16, 32, dim), seed=seed)
        self.dim = dim

    def __call__(self, image: np.ndarray) -> np.ndarray:
        x = prepare_image(image)
        with torch.no_grad():
            feats = self.stack(x)[-1]
            vec = feats.mean(dim=(2, 3))[0]
        return vec.numpy().astype(np.float64)


class TorchScriptEmbedder:
    """Adapter for an external scripted embedding network."""

    def __init__(self, path: str):
        try:
            self.module = torch.jit.load(path, map_location="cpu")
        except Exception as exc:
            raise ConfigurationError(f"cannot load torchscript embedder {path}: {exc}") from exc
        self.module.eval()

    def __call__(self, image: np.ndarray) -> np.ndarray:
        x = prepare_image(image)
        with torch.no_grad():
            vec = self.module(x)
        return vec[0].cpu().numpy().astype(np.float64)


def prepare_image(image: np.ndarray) -> torch.Tensor:
    """uint8 or float H x W x 3 raster -> (1, 3, H, W) float tensor in [0, 1]."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ConfigurationError(f"expected H x W x 3 raster, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    t = torch.from_numpy(np.ascontiguousarray(arr.astype(np.float32)))
    return t.permute(2, 0, 1)[None]


def build_image_embedder(config: dict):
    """Factory behind the `--extractor` configuration file."""
    kind = config.get("kind", "random_conv")
    if kind == "random_conv":
        return ImageEmbedder(dim=int(config.get("dim", 64)), seed=int(config.get("seed", 0)))
    if kind == "torchscript":
        if "path" not in config:
            raise ConfigurationError("torchscript embedder config needs a 'path'")
        return TorchScriptEmbedder(config["path"])
    raise ConfigurationError(f"unknown embedder kind {kind!r}")


def build_perceptual_extractor(config: dict | None):
    """Extractor for the boundary perceptual loss; defaults to the frozen stack."""
    config = config or {}
    kind = config.get("kind", "random_conv_stack")
    if kind == "random_conv_stack":
        return ConvFeatureStack(seed=int(config.get("seed", 0)))
    if kind == "identity":
        return IdentityFeatures()
    raise ConfigurationError(f"unknown perceptual extractor kind {kind!r}")
