"""Training-pair construction: instance-level sparsification and epoch streams.

A source example is a (dense labelmap, instance map, optional image) triple;
sparse inputs are derived from it by keeping a random subset of thing
instances, resampled every epoch so the networks see many sparsifications of
each parent scene.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import InvalidInputError
from .labelmaps import DenseLabelmap, InstanceMap, SparseLabelmap, validate
from .pngio import read_dense_png, read_image_png, read_instance_png
from .taxonomy import ClassTaxonomy


@dataclass(frozen=True)
class SceneExample:
    """A parent scene as loaded from disk (or synthesized)."""

    dense: DenseLabelmap
    instances: InstanceMap
    image: Optional[np.ndarray]
    source_id: str

    def __post_init__(self):
        if self.dense.shape != self.instances.shape:
            raise InvalidInputError(
                f"{self.source_id}: labelmap {self.dense.shape} vs instance map "
                f"{self.instances.shape} dimension mismatch"
            )
        if self.image is not None and self.image.shape[:2] != self.dense.shape:
            raise InvalidInputError(
                f"{self.source_id}: image {self.image.shape[:2]} vs labelmap "
                f"{self.dense.shape} dimension mismatch"
            )


@dataclass(frozen=True)
class ScenePair:
    """One training tuple: a sparsified input and its complete targets."""

    sparse: SparseLabelmap
    dense: DenseLabelmap
    instances: InstanceMap
    image: Optional[np.ndarray]
    source_id: str

    def __post_init__(self):
        if not (self.sparse.shape == self.dense.shape == self.instances.shape):
            raise InvalidInputError(f"{self.source_id}: member dimension mismatch")


def check_pair(pair: ScenePair, taxonomy: ClassTaxonomy) -> list[str]:
    """Invariants of a training pair beyond what types enforce on their own."""
    problems = validate(pair.sparse, taxonomy) + validate(pair.dense, taxonomy)
    labeled = pair.sparse.data != taxonomy.unlabeled_id
    if not np.array_equal(pair.sparse.data[labeled], pair.dense.data[labeled]):
        problems.append(f"{pair.source_id}: sparse labels disagree with the dense map")
    return problems


def retained_count(fraction: float, n_things: int) -> int:
    """How many instances survive sparsification: max(1, round(fraction * N))."""
    if n_things < 1:
        return 0
    return max(1, round(fraction * n_things))


def sample_sparse(
    dense: DenseLabelmap,
    instances: InstanceMap,
    taxonomy: ClassTaxonomy,
    fraction: float,
    rng_seed: int,
) -> SparseLabelmap:
    """Keep a uniform random subset of thing instances, blank everything else.

    Whole instances are kept or dropped atomically; stuff pixels are always
    unlabeled. Deterministic for a fixed seed.
    """
    if not (0.0 < fraction <= 1.0):
        raise InvalidInputError(f"fraction must be in (0, 1], got {fraction}")
    if dense.shape != instances.shape:
        raise InvalidInputError(
            f"dimension mismatch: dense {dense.shape} vs instances {instances.shape}"
        )
    ids = instances.thing_ids_present()
    out = np.full(dense.shape, taxonomy.unlabeled_id, dtype=np.int32)
    k = retained_count(fraction, len(ids))
    if k:
        rng = np.random.default_rng(rng_seed)
        chosen = rng.choice(ids, size=k, replace=False)
        mask = np.isin(instances.data, chosen)
        out[mask] = dense.data[mask]
    return SparseLabelmap(out)


def derive_seed(base_seed: int, epoch: int, source_id: str) -> int:
    """Stable per-(run, epoch, example) seed; avoids storing sampled sets."""
    digest = hashlib.blake2b(
        f"{base_seed}|{epoch}|{source_id}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") >> 1


def epoch_iterator(
    dataset: list[SceneExample],
    taxonomy: ClassTaxonomy,
    fraction: float,
    epoch: int,
    base_seed: int,
) -> Iterator[ScenePair]:
    """Yield one freshly sparsified ScenePair per source example.

    Each epoch sees a different sparsification of every parent scene, but the
    whole stream is reproducible from (base_seed, epoch).
    """
    if not dataset:
        raise InvalidInputError("dataset is empty")
    for example in dataset:
        seed = derive_seed(base_seed, epoch, example.source_id)
        sparse = sample_sparse(example.dense, example.instances, taxonomy, fraction, seed)
        yield ScenePair(sparse, example.dense, example.instances, example.image, example.source_id)


# ---------------------------------------------------------------------------
# loading from disk
# ---------------------------------------------------------------------------

def load_cityscapes_example(
    labelmap_path,
    instance_path,
    image_path,
    taxonomy: ClassTaxonomy,
    fallback_class: Optional[int] = None,
    source_id: Optional[str] = None,
) -> SceneExample:
    """Load and validate one (labelmap, instance map, image) triple.

    Classes outside the taxonomy are remapped to ``fallback_class`` when given
    (the "group the rest into a single class" treatment); otherwise they are an
    error. A stuff fallback absorbs remapped pixels as background; a thing
    fallback renumbers their instances under the fallback class.
    """
    dense = read_dense_png(labelmap_path)
    inst = read_instance_png(instance_path)
    image = read_image_png(image_path) if image_path is not None else None
    if dense.shape != inst.shape:
        raise InvalidInputError(
            f"dimension mismatch: labelmap {dense.shape} vs instance map {inst.shape}"
        )

    grid = dense.data.copy()
    inst_grid = inst.data.copy()
    unknown = ~np.isin(grid, taxonomy.class_ids)
    if unknown.any():
        if fallback_class is None:
            bad = sorted(int(v) for v in np.unique(grid[unknown]))
            raise InvalidInputError(
                f"labelmap {labelmap_path} has classes {bad} outside the taxonomy "
                "and no fallback class is configured"
            )
        if fallback_class not in taxonomy:
            raise InvalidInputError(f"fallback_class {fallback_class} not in taxonomy")
        grid[unknown] = fallback_class
        if taxonomy.is_stuff(fallback_class):
            inst_grid[unknown] = fallback_class
        else:
            old_ids = np.unique(inst.data[unknown])
            for index, old in enumerate(old_ids):
                inst_grid[unknown & (inst.data == old)] = fallback_class * 1000 + index

    dense = DenseLabelmap(grid)
    inst = InstanceMap(inst_grid)
    problems = validate(dense, taxonomy) + validate(inst, taxonomy)
    if problems:
        raise InvalidInputError(f"{labelmap_path}: " + "; ".join(problems))
    return SceneExample(dense, inst, image, source_id or str(labelmap_path))


def load_pair_manifest(
    manifest_path, taxonomy: ClassTaxonomy
) -> list[tuple[SparseLabelmap, DenseLabelmap]]:
    """Load (sparse input, output labelmap) pairs for co-occurrence evaluation.

    The manifest is a JSON list of {"sparse": path, "dense": path} entries,
    paths relative to the manifest file.
    """
    from .pngio import read_sparse_png

    manifest_path = Path(manifest_path)
    try:
        entries = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read pair manifest {manifest_path}: {exc}") from exc
    root = manifest_path.parent
    pairs = []
    for entry in entries:
        try:
            sparse = read_sparse_png(root / entry["sparse"], taxonomy)
            dense = read_dense_png(root / entry["dense"])
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed pair entry {entry!r}: {exc}") from exc
        pairs.append((sparse, dense))
    return pairs


def load_manifest(
    manifest_path,
    taxonomy: ClassTaxonomy,
    fallback_class: Optional[int] = None,
) -> list[SceneExample]:
    """Load a dataset manifest: a JSON list of per-example relative paths."""
    manifest_path = Path(manifest_path)
    try:
        entries = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if not isinstance(entries, list):
        raise InvalidInputError("manifest must be a JSON list")
    root = manifest_path.parent
    examples = []
    for entry in entries:
        try:
            labelmap = root / entry["labelmap"]
            instance_map = root / entry["instance_map"]
            image = root / entry["image"] if entry.get("image") else None
            source_id = entry["source_id"]
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed manifest entry {entry!r}: {exc}") from exc
        examples.append(
            load_cityscapes_example(
                labelmap, instance_map, image, taxonomy, fallback_class, source_id
            )
        )
    return examples
