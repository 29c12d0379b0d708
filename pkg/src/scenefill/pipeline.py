"""Inference entry points: load a checkpoint set, complete sparse maps,
and resample variants from a parent scene.

Completion is deterministic for a fixed seed: a seed derives a private torch
RNG that drives decoder dropout, so distinct seeds explore distinct plausible
completions while ``seed=None`` runs the networks deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .dataset import sample_sparse
from .errors import CheckpointError, InvalidInputError
from .labelmaps import (
    BoundaryMap,
    DenseLabelmap,
    InstanceMap,
    SoftLabelmap,
    SparseLabelmap,
    decode_argmax,
    validate,
)
from .models import UNetGenerator, load_generator_checkpoint, soft_to_tensor, two_stage_forward
from .render import LearnedRenderer, render
from .taxonomy import ClassTaxonomy

REQUIRED_CHECKPOINTS = {"stage1": "stage1.ckpt", "stage2": "stage2.ckpt", "boundary": "boundary.ckpt"}
RENDERER_CHECKPOINT = "renderer.ckpt"


@dataclass
class CheckpointBundle:
    taxonomy: ClassTaxonomy
    stage1: UNetGenerator
    stage2: UNetGenerator
    boundary: UNetGenerator
    renderer: Optional[LearnedRenderer] = None


def load_bundle(checkpoint_dir, taxonomy: ClassTaxonomy | None = None) -> CheckpointBundle:
    """Load the stage-1/stage-2/boundary networks (and the optional renderer).

    All checkpoints must agree on the taxonomy fingerprint; a mismatch is
    refused rather than silently mixing class universes.
    """
    checkpoint_dir = Path(checkpoint_dir)
    generators = {}
    stored_taxonomy = taxonomy
    for role, filename in REQUIRED_CHECKPOINTS.items():
        path = checkpoint_dir / filename
        if not path.exists():
            raise CheckpointError(f"missing checkpoint {path}")
        gen, stored = load_generator_checkpoint(path, taxonomy)
        if gen.role != role:
            raise CheckpointError(f"{path} holds a {gen.role!r} network, expected {role!r}")
        if stored_taxonomy is None:
            stored_taxonomy = stored
        elif stored_taxonomy.fingerprint() != gen.taxonomy_fingerprint:
            raise CheckpointError(f"{path} was trained against a different taxonomy")
        generators[role] = gen

    renderer = None
    renderer_path = checkpoint_dir / RENDERER_CHECKPOINT
    if renderer_path.exists():
        renderer = LearnedRenderer.load(renderer_path, stored_taxonomy)
    return CheckpointBundle(
        taxonomy=stored_taxonomy,
        stage1=generators["stage1"],
        stage2=generators["stage2"],
        boundary=generators["boundary"],
        renderer=renderer,
    )


@dataclass
class CompletionResult:
    sparse: SparseLabelmap
    dense: DenseLabelmap
    boundary: BoundaryMap
    image: Optional[np.ndarray]
    soft_final: SoftLabelmap


def complete(
    bundle: CheckpointBundle,
    sparse: SparseLabelmap,
    seed: Optional[int] = None,
    return_image: bool = False,
    backend: str = "palette",
    external_cmd: str | None = None,
) -> CompletionResult:
    """Hallucinate the dense labelmap and instance boundaries for one input."""
    problems = validate(sparse, bundle.taxonomy)
    if problems:
        raise InvalidInputError("; ".join(problems))
    rng = torch.Generator().manual_seed(int(seed)) if seed is not None else None

    _, _, _, final = two_stage_forward(sparse, bundle.stage1, bundle.stage2, bundle.taxonomy, rng=rng)
    dense = decode_argmax(final, bundle.taxonomy)
    if not isinstance(dense, DenseLabelmap):  # final has no "none" channel
        raise InvalidInputError("completion decoded to an incomplete labelmap")

    with torch.no_grad():
        boundary_probs = bundle.boundary(soft_to_tensor(final), rng=rng)
    boundary = BoundaryMap((boundary_probs[1] > boundary_probs[0]).numpy().astype(np.uint8))

    image = None
    if return_image:
        image = render(
            dense, boundary, bundle.taxonomy,
            backend=backend, renderer=bundle.renderer, external_cmd=external_cmd,
        )
    return CompletionResult(sparse, dense, boundary, image, final)


def resample(
    bundle: CheckpointBundle,
    dense: DenseLabelmap,
    instances: InstanceMap,
    fraction: float = 0.3,
    k: int = 1,
    seed: Optional[int] = None,
    return_image: bool = True,
    backend: str = "palette",
    external_cmd: str | None = None,
) -> list[CompletionResult]:
    """Derive k scene variants from one parent layout.

    Each variant keeps an independently sampled instance subset (seeds are
    seed+index) and is completed from scratch, so one dense parent yields a
    strip of plausible alternative scenes.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    base = int(seed) if seed is not None else 0
    variants = []
    for i in range(k):
        variant_seed = base + i
        sparse = sample_sparse(dense, instances, bundle.taxonomy, fraction, variant_seed)
        variants.append(
            complete(
                bundle, sparse,
                seed=variant_seed, return_image=return_image,
                backend=backend, external_cmd=external_cmd,
            )
        )
    return variants
