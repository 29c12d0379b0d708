"""Network builders and forward contracts.

Generators are encoder-decoder nets with skip connections and a sigmoid head,
so outputs are probability volumes in (0, 1) by construction. Channel counts
are fixed by the role:

- ``stage1``: things+none -> stuffs            (C_things+1 -> C_stuff)
- ``stage2``: all classes -> things+none       (C -> C_things+1)
- ``single_stage``: all -> all                 (C -> C)
- ``boundary``: all -> (background, boundary)  (C -> 2)

A generator handle is a callable ``(volume, rng=None) -> volume``. Passing a
``torch.Generator`` draws fresh decoder dropout masks from it, which is how
seeded completion variants are produced without touching global RNG state; with
``rng=None`` inference is deterministic.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import CheckpointError, ConfigurationError, InvalidInputError
from .labelmaps import (
    THINGS_PLUS_NONE,
    SoftLabelmap,
    SparseLabelmap,
    channel_semantics_for,
    compose_final,
    encode_one_hot,
    overlay,
)
from .taxonomy import ClassTaxonomy

ROLES = ("stage1", "stage2", "single_stage", "boundary")


@dataclass(frozen=True)
class GeneratorSpec:
    in_channels: int | None = None  # None: derived from role and taxonomy
    out_channels: int | None = None
    depth: int = 5
    base_width: int = 64
    output_activation: str = "sigmoid"
    dropout: float = 0.0

    def __post_init__(self):
        if self.output_activation != "sigmoid":
            raise ConfigurationError("output activation is fixed to sigmoid")
        if self.depth < 1 or self.base_width < 1:
            raise ConfigurationError(f"bad generator spec: depth={self.depth}, base_width={self.base_width}")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(**d)


@dataclass(frozen=True)
class DiscriminatorSpec:
    num_scales: int = 2
    layers_per_scale: int = 3
    base_width: int = 64

    def __post_init__(self):
        if self.num_scales < 1 or self.layers_per_scale < 1 or self.base_width < 1:
            raise ConfigurationError(f"bad discriminator spec: {self}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminatorSpec":
        return cls(**d)


def role_channels(role: str, taxonomy: ClassTaxonomy) -> tuple[int, int]:
    """(input, output) channel counts mandated for each generator role."""
    t, s, c = taxonomy.num_things, taxonomy.num_stuff, taxonomy.num_classes
    contracts = {
        "stage1": (t + 1, s),
        "stage2": (c, t + 1),
        "single_stage": (c, c),
        "boundary": (c, 2),
    }
    if role not in contracts:
        raise ConfigurationError(f"unknown generator role {role!r}; expected one of {ROLES}")
    return contracts[role]


class _SeededDropout(nn.Module):
    """Dropout whose evaluation-time masks can be drawn from a caller RNG."""

    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def forward(self, x: torch.Tensor, rng: torch.Generator | None = None) -> torch.Tensor:
        if self.p <= 0.0:
            return x
        if self.training:
            return F.dropout(x, self.p, training=True)
        if rng is None:
            return x
        keep = (torch.rand(x.shape, generator=rng) >= self.p).to(x.dtype)
        return x * keep / (1.0 - self.p)


class UNetGenerator(nn.Module):
    """Encoder-decoder with skip connections, instance norm, sigmoid head."""

    def __init__(self, spec: GeneratorSpec, role: str, taxonomy_fingerprint: str = ""):
        super().__init__()
        if spec.in_channels is None or spec.out_channels is None:
            raise ConfigurationError("generator spec must have resolved channel counts")
        self.spec = spec
        self.role = role
        self.taxonomy_fingerprint = taxonomy_fingerprint

        d, w = spec.depth, spec.base_width
        widths = [min(w * 2 ** i, 8 * w) for i in range(d)]
        self.downs = nn.ModuleList()
        self.down_norms = nn.ModuleList()
        prev = spec.in_channels
        for i, width in enumerate(widths):
            self.downs.append(nn.Conv2d(prev, width, 4, stride=2, padding=1))
            # no norm on the first block (raw input) or the bottleneck
            use_norm = 0 < i < d - 1
            self.down_norms.append(nn.InstanceNorm2d(width) if use_norm else nn.Identity())
            prev = width

        self.ups = nn.ModuleList()
        self.up_norms = nn.ModuleList()
        self.up_dropouts = nn.ModuleList()
        for i in range(d - 1):
            in_ch = widths[d - 1] if i == 0 else widths[d - 1 - i] * 2
            out_ch = widths[d - 2 - i]
            self.ups.append(nn.ConvTranspose2d(in_ch, out_ch, 4, stride=2, padding=1))
            self.up_norms.append(nn.InstanceNorm2d(out_ch))
            active = spec.dropout > 0.0 and i < min(3, d - 1)
            self.up_dropouts.append(_SeededDropout(spec.dropout if active else 0.0))
        head_in = widths[0] * 2 if d >= 2 else widths[0]
        self.head = nn.ConvTranspose2d(head_in, spec.out_channels, 4, stride=2, padding=1)

    def forward(self, x: torch.Tensor, rng: torch.Generator | None = None) -> torch.Tensor:
        squeeze = x.dim() == 3
        if squeeze:
            x = x[None]
        if x.dim() != 4 or x.shape[1] != self.spec.in_channels:
            raise InvalidInputError(
                f"{self.role} generator expects {self.spec.in_channels} input channels, "
                f"got shape {tuple(x.shape)}"
            )
        step = 2 ** self.spec.depth
        if x.shape[2] % step or x.shape[3] % step:
            raise InvalidInputError(
                f"spatial dims {tuple(x.shape[2:])} must be divisible by 2^depth = {step}"
            )
        skips = []
        h = x
        for i, (conv, norm) in enumerate(zip(self.downs, self.down_norms)):
            if i > 0:
                h = F.leaky_relu(h, 0.2)
            h = norm(conv(h))
            skips.append(h)
        for i, (up, norm, drop) in enumerate(zip(self.ups, self.up_norms, self.up_dropouts)):
            h = drop(norm(up(F.relu(h))), rng=rng)
            h = torch.cat([h, skips[self.spec.depth - 2 - i]], dim=1)
        out = torch.sigmoid(self.head(F.relu(h)))
        return out[0] if squeeze else out


class _PatchDiscriminator(nn.Module):
    def __init__(self, in_channels: int, layers: int, base_width: int):
        super().__init__()
        self.blocks = nn.ModuleList()
        prev = in_channels
        for i in range(layers):
            width = min(base_width * 2 ** i, 8 * base_width)
            block = [nn.Conv2d(prev, width, 4, stride=2, padding=1)]
            if i > 0:
                block.append(nn.InstanceNorm2d(width))
            block.append(nn.LeakyReLU(0.2))
            self.blocks.append(nn.Sequential(*block))
            prev = width
        self.score = nn.Conv2d(prev, 1, 4, stride=1, padding=1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        feats = []
        h = x
        for block in self.blocks:
            h = block(h)
            feats.append(h)
        return self.score(h), feats


class MultiScaleDiscriminator(nn.Module):
    """Patch discriminators over a resolution pyramid.

    forward returns, per scale, a score map and the list of intermediate
    feature volumes (one per layer) used for feature matching; scale s sees
    the input average-pooled down by 2^s.
    """

    def __init__(self, spec: DiscriminatorSpec, in_channels: int):
        super().__init__()
        if in_channels < 1:
            raise ConfigurationError(f"discriminator needs >= 1 input channel, got {in_channels}")
        self.spec = spec
        self.in_channels = in_channels
        self.scales = nn.ModuleList(
            _PatchDiscriminator(in_channels, spec.layers_per_scale, spec.base_width)
            for _ in range(spec.num_scales)
        )

    def forward(self, x: torch.Tensor) -> list[tuple[torch.Tensor, list[torch.Tensor]]]:
        if x.dim() == 3:
            x = x[None]
        if x.shape[1] != self.in_channels:
            raise InvalidInputError(
                f"discriminator expects {self.in_channels} channels, got shape {tuple(x.shape)}"
            )
        outputs = []
        h = x
        for i, scale in enumerate(self.scales):
            if i > 0:
                h = F.avg_pool2d(h, kernel_size=3, stride=2, padding=1, count_include_pad=False)
            outputs.append(scale(h))
        return outputs


def build_generator(spec: GeneratorSpec, role: str, taxonomy: ClassTaxonomy) -> UNetGenerator:
    """Resolve the role's channel contract and construct the network."""
    expected_in, expected_out = role_channels(role, taxonomy)
    if spec.in_channels is not None and spec.in_channels != expected_in:
        raise ConfigurationError(
            f"role {role} requires {expected_in} input channels, spec says {spec.in_channels}"
        )
    if spec.out_channels is not None and spec.out_channels != expected_out:
        raise ConfigurationError(
            f"role {role} requires {expected_out} output channels, spec says {spec.out_channels}"
        )
    resolved = GeneratorSpec(
        in_channels=expected_in,
        out_channels=expected_out,
        depth=spec.depth,
        base_width=spec.base_width,
        output_activation=spec.output_activation,
        dropout=spec.dropout,
    )
    return UNetGenerator(resolved, role, taxonomy.fingerprint())


def build_discriminator(spec: DiscriminatorSpec, in_channels: int) -> MultiScaleDiscriminator:
    return MultiScaleDiscriminator(spec, in_channels)


# ---------------------------------------------------------------------------
# numpy <-> torch bridging
# ---------------------------------------------------------------------------

def soft_to_tensor(soft: SoftLabelmap) -> torch.Tensor:
    return torch.tensor(np.asarray(soft.data), dtype=torch.float32)


def tensor_to_soft(t: torch.Tensor, channel_semantics: tuple[int, ...]) -> SoftLabelmap:
    arr = t.detach().cpu().numpy()
    # sigmoid guarantees (0,1); clip only guards float32 round-off at the edges
    return SoftLabelmap(np.clip(arr, 0.0, 1.0), channel_semantics)


def two_stage_forward(
    sparse: SparseLabelmap,
    g1,
    g2,
    taxonomy: ClassTaxonomy,
    rng: torch.Generator | None = None,
) -> tuple[SoftLabelmap, SoftLabelmap, SoftLabelmap, SoftLabelmap]:
    """Run the full completion pipeline on one sparse map.

    Returns (stuffs, combined_input, things, final): the stuff hallucination,
    the overlay fed to the second stage, the thing hallucination, and the
    composed C-channel map. Input thing pixels always survive to ``final``
    because the compose step stamps them last.
    """
    for generator, expected in ((g1, "stage1"), (g2, "stage2")):
        role = getattr(generator, "role", None)
        if role is not None and role != expected:
            raise ConfigurationError(f"expected a {expected} generator, got role {role!r}")

    with torch.no_grad():
        x1 = soft_to_tensor(encode_one_hot(sparse, taxonomy, THINGS_PLUS_NONE))
        stuffs = tensor_to_soft(g1(x1, rng=rng), taxonomy.stuff_ids)
        combined = overlay(stuffs, sparse, taxonomy)
        things = tensor_to_soft(
            g2(soft_to_tensor(combined), rng=rng),
            channel_semantics_for(taxonomy, THINGS_PLUS_NONE),
        )
    final = compose_final(stuffs, things, sparse, taxonomy)
    return stuffs, combined, things, final


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def generator_state(gen: UNetGenerator, taxonomy: ClassTaxonomy) -> dict:
    return {
        "role": gen.role,
        "spec": gen.spec.to_dict(),
        "state_dict": gen.state_dict(),
        "taxonomy": taxonomy.to_dict(),
        "fingerprint": taxonomy.fingerprint(),
    }


def generator_from_state(state: dict, taxonomy: ClassTaxonomy | None = None) -> tuple[UNetGenerator, ClassTaxonomy]:
    try:
        stored_taxonomy = ClassTaxonomy.from_dict(state["taxonomy"])
        spec = GeneratorSpec.from_dict(state["spec"])
        role = state["role"]
        weights = state["state_dict"]
        fingerprint = state["fingerprint"]
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed generator checkpoint: {exc}") from exc
    if taxonomy is not None and taxonomy.fingerprint() != fingerprint:
        raise CheckpointError(
            "taxonomy fingerprint mismatch: checkpoint was trained against a different taxonomy"
        )
    gen = UNetGenerator(spec, role, fingerprint)
    gen.load_state_dict(weights)
    gen.eval()
    return gen, stored_taxonomy


def save_generator_checkpoint(gen: UNetGenerator, taxonomy: ClassTaxonomy, path) -> None:
    torch.save(generator_state(gen, taxonomy), path)


def load_generator_checkpoint(path, taxonomy: ClassTaxonomy | None = None) -> tuple[UNetGenerator, ClassTaxonomy]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if state.get("kind") == "training":
        state = state["generator"]
    return generator_from_state(state, taxonomy)
