"""Turn a completed labelmap plus boundary map into an RGB image.

Three backends: ``palette`` (deterministic taxonomy-color fill, always
available), ``learned`` (a small conditional GAN trained on labelmap+boundary
to image pairs), and ``external`` (shell out to any command speaking the
documented PNG formats, e.g. a full image-synthesis network).
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
import threading
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError, InvalidInputError, RenderError, TrainingError
from .extractors import ConvFeatureStack
from .labelmaps import ALL, BoundaryMap, DenseLabelmap, SoftLabelmap, decode_argmax, encode_one_hot
from .losses import LossWeights, combine_bd, feature_l1, feature_matching_loss, generator_adversarial_loss, lsgan_losses
from .models import (
    DiscriminatorSpec,
    GeneratorSpec,
    UNetGenerator,
    build_discriminator,
    generator_state,
)
from .pngio import read_image_png, write_boundary_png, write_dense_png
from .taxonomy import ClassTaxonomy

BACKENDS = ("palette", "learned", "external")

BOUNDARY_DARKEN = 0.6  # boundary pixels keep 60% of the class color

_external_locks: dict[str, threading.Lock] = {}
_external_locks_guard = threading.Lock()


def _as_dense(dense, taxonomy: ClassTaxonomy) -> DenseLabelmap:
    if isinstance(dense, SoftLabelmap):
        decoded = decode_argmax(dense, taxonomy)
        if not isinstance(decoded, DenseLabelmap):
            raise InvalidInputError("soft map decodes to an incomplete labelmap; cannot render")
        return decoded
    if isinstance(dense, DenseLabelmap):
        return dense
    raise InvalidInputError(f"cannot render a {type(dense).__name__}")


def palette_render(dense, boundary: BoundaryMap, taxonomy: ClassTaxonomy) -> np.ndarray:
    """Flat class colors, boundary pixels darkened by 40%. Pure function."""
    hard = _as_dense(dense, taxonomy)
    if hard.shape != boundary.shape:
        raise InvalidInputError(
            f"dimension mismatch: labelmap {hard.shape} vs boundary {boundary.shape}"
        )
    lut = np.zeros((max(taxonomy.class_ids) + 1, 3), dtype=np.float64)
    for c in taxonomy.classes:
        lut[c.class_id] = c.color
    image = lut[hard.data]
    edge = boundary.data.astype(bool)
    image[edge] = np.round(image[edge] * BOUNDARY_DARKEN)
    return image.astype(np.uint8)


# ---------------------------------------------------------------------------
# learned backend
# ---------------------------------------------------------------------------

def _renderer_input(dense: DenseLabelmap, boundary: BoundaryMap, taxonomy: ClassTaxonomy) -> torch.Tensor:
    onehot = encode_one_hot(dense, taxonomy, ALL).data
    stacked = np.concatenate([onehot, boundary.data[None].astype(np.float32)])
    return torch.from_numpy(stacked)


class LearnedRenderer:
    """Wraps a trained labelmap+boundary -> RGB generator."""

    def __init__(self, net: UNetGenerator, taxonomy: ClassTaxonomy):
        self.net = net
        self.taxonomy = taxonomy
        net.eval()

    def __call__(self, dense: DenseLabelmap, boundary: BoundaryMap) -> np.ndarray:
        x = _renderer_input(dense, boundary, self.taxonomy)
        with torch.no_grad():
            rgb = self.net(x)
        return np.round(rgb.numpy().transpose(1, 2, 0) * 255.0).astype(np.uint8)

    def save(self, path) -> None:
        torch.save({"kind": "renderer", "generator": generator_state(self.net, self.taxonomy)}, path)

    @classmethod
    def load(cls, path, taxonomy: ClassTaxonomy | None = None) -> "LearnedRenderer":
        try:
            state = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise CheckpointError(f"cannot read renderer checkpoint {path}: {exc}") from exc
        if state.get("kind") != "renderer":
            raise CheckpointError(f"{path} is not a renderer checkpoint")
        from .models import generator_from_state

        net, stored = generator_from_state(state["generator"], taxonomy)
        return cls(net, taxonomy or stored)


def train_learned_renderer(
    dataset,
    taxonomy: ClassTaxonomy,
    out_path,
    epochs: int = 20,
    lr: float = 1e-3,
    batch_size: int = 8,
    weights: LossWeights | None = None,
    depth: int = 3,
    base_width: int = 16,
    seed: int = 0,
) -> LearnedRenderer:
    """Fit the toy conditional image GAN on (labelmap+boundary, image) pairs.

    Uses the adversarial + feature-matching + perceptual stack (the focal term
    does not apply to non-binary RGB targets). Examples without an image are
    rejected.
    """
    from .labelmaps import extract_boundaries

    weights = weights or LossWeights()
    if not dataset:
        raise TrainingError("dataset is empty")
    tensors = []
    for ex in dataset:
        if ex.image is None:
            raise TrainingError(f"{ex.source_id} has no image; cannot train the renderer")
        x = _renderer_input(ex.dense, extract_boundaries(ex.instances), taxonomy)
        y = torch.from_numpy(ex.image.astype(np.float32).transpose(2, 0, 1) / 255.0)
        tensors.append((x, y))

    torch.manual_seed(seed)
    spec = GeneratorSpec(
        in_channels=taxonomy.num_classes + 1, out_channels=3, depth=depth, base_width=base_width
    )
    net = UNetGenerator(spec, role="renderer", taxonomy_fingerprint=taxonomy.fingerprint())
    disc = build_discriminator(DiscriminatorSpec(2, 3, base_width), spec.in_channels + 3)
    extractor = ConvFeatureStack(seed=seed)
    opt_g = torch.optim.Adam(net.parameters(), lr=lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=lr, betas=(0.5, 0.999))

    net.train()
    for _ in range(epochs):
        for i in range(0, len(tensors), batch_size):
            chunk = tensors[i:i + batch_size]
            x = torch.stack([c[0] for c in chunk])
            y = torch.stack([c[1] for c in chunk])
            fake = net(x)
            fake_out = disc(torch.cat([x, fake], dim=1))
            with torch.no_grad():
                real_out = disc(torch.cat([x, y], dim=1))
            adv = generator_adversarial_loss([s for s, _ in fake_out])
            fm = feature_matching_loss([f for _, f in real_out], [f for _, f in fake_out])
            vgg = feature_l1(fake, y, extractor)
            report = combine_bd(adv, torch.zeros(()), fm, vgg, weights)
            opt_g.zero_grad()
            opt_d.zero_grad()
            report.tensor.backward()
            opt_g.step()

            real_scores = [s for s, _ in disc(torch.cat([x, y], dim=1))]
            fake_scores = [s for s, _ in disc(torch.cat([x, fake.detach()], dim=1))]
            d_loss, _ = lsgan_losses(real_scores, fake_scores)
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()

    renderer = LearnedRenderer(net, taxonomy)
    renderer.save(out_path)
    return renderer


# ---------------------------------------------------------------------------
# external backend
# ---------------------------------------------------------------------------

def external_render(
    dense: DenseLabelmap,
    boundary: BoundaryMap,
    taxonomy: ClassTaxonomy,
    command: str,
) -> np.ndarray:
    """Invoke ``CMD --label in.png --boundary bd.png --out out.png``.

    Invocations are serialized per configured command; the command's stderr is
    surfaced on failure.
    """
    with _external_locks_guard:
        lock = _external_locks.setdefault(command, threading.Lock())
    with lock, tempfile.TemporaryDirectory(prefix="scenefill-render-") as tmp:
        tmp = Path(tmp)
        label_path = tmp / "in.png"
        boundary_path = tmp / "bd.png"
        out_path = tmp / "out.png"
        write_dense_png(dense, label_path)
        write_boundary_png(boundary, boundary_path)
        argv = shlex.split(command) + [
            "--label", str(label_path), "--boundary", str(boundary_path), "--out", str(out_path),
        ]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except FileNotFoundError as exc:
            raise RenderError(f"external renderer {argv[0]!r} not found") from exc
        if proc.returncode != 0:
            raise RenderError(
                f"external renderer exited with {proc.returncode}: {proc.stderr.strip()}"
            )
        if not out_path.exists():
            raise RenderError("external renderer did not produce the output file")
        return read_image_png(out_path)


def render(
    dense,
    boundary: BoundaryMap,
    taxonomy: ClassTaxonomy,
    backend: str = "palette",
    renderer: LearnedRenderer | None = None,
    external_cmd: str | None = None,
) -> np.ndarray:
    """Dispatch to one of the three synthesis backends."""
    if backend == "palette":
        return palette_render(dense, boundary, taxonomy)
    if backend == "learned":
        if renderer is None:
            raise RenderError("learned backend needs a loaded renderer checkpoint")
        hard = _as_dense(dense, taxonomy)
        if hard.shape != boundary.shape:
            raise InvalidInputError("dimension mismatch between labelmap and boundary")
        return renderer(hard, boundary)
    if backend == "external":
        if not external_cmd:
            raise RenderError("external backend needs a configured command")
        hard = _as_dense(dense, taxonomy)
        if hard.shape != boundary.shape:
            raise InvalidInputError("dimension mismatch between labelmap and boundary")
        return external_render(hard, boundary, taxonomy, external_cmd)
    raise RenderError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
