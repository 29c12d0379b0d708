"""Synthetic desk-scale scenes with planted object co-occurrence rules.

Every generated world is deterministic in its seed: a stuff background drawn
from a fixed layout pattern, plus randomly placed thing instances where each
placed trigger instance always receives its rule companion (e.g. "every rider
gets a bike directly below"). These corpora exist to verify that the trained
pipeline actually picks up the planted relationships.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import SceneExample, derive_seed
from .errors import GenerationError, InvalidInputError
from .labelmaps import DenseLabelmap, InstanceMap
from .pngio import write_dense_png, write_instance_png
from .taxonomy import STUFF, THING, ClassDef, ClassTaxonomy

PLACEMENTS = ("below", "above", "left_of", "right_of")
LAYOUTS = ("bands", "uniform")

MAX_PLACEMENT_ATTEMPTS = 500


@dataclass(frozen=True)
class PlacementRule:
    trigger_class: int
    companion_class: int
    placement: str

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise InvalidInputError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")


@dataclass(frozen=True)
class ToyWorldConfig:
    width: int = 64
    height: int = 64
    stuff_layout: str = "bands"
    instance_count: tuple[int, int] = (3, 6)
    object_size: tuple[int, int] = (6, 10)
    placeable_classes: tuple[int, ...] = ()
    rules: tuple[PlacementRule, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("toy world dimensions must be positive")
        if self.stuff_layout not in LAYOUTS:
            raise InvalidInputError(f"stuff_layout must be one of {LAYOUTS}")
        lo, hi = self.instance_count
        if not (0 <= lo <= hi):
            raise InvalidInputError(f"bad instance_count range {self.instance_count}")
        lo, hi = self.object_size
        if not (1 <= lo <= hi):
            raise InvalidInputError(f"bad object_size range {self.object_size}")

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "stuff_layout": self.stuff_layout,
            "instance_count": list(self.instance_count),
            "object_size": list(self.object_size),
            "placeable_classes": list(self.placeable_classes),
            "rules": [
                {"trigger": r.trigger_class, "companion": r.companion_class, "placement": r.placement}
                for r in self.rules
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyWorldConfig":
        try:
            return cls(
                width=int(d["width"]),
                height=int(d["height"]),
                stuff_layout=d.get("stuff_layout", "bands"),
                instance_count=tuple(d.get("instance_count", (3, 6))),
                object_size=tuple(d.get("object_size", (6, 10))),
                placeable_classes=tuple(d.get("placeable_classes", ())),
                rules=tuple(
                    PlacementRule(int(r["trigger"]), int(r["companion"]), r["placement"])
                    for r in d.get("rules", ())
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed toy config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ToyWorldConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _validate_config_classes(config: ToyWorldConfig, taxonomy: ClassTaxonomy) -> None:
    for class_id in config.placeable_classes:
        if not taxonomy.is_thing(class_id):
            raise InvalidInputError(f"placeable class {class_id} is not a thing class")
    for rule in config.rules:
        if not taxonomy.is_thing(rule.trigger_class) or not taxonomy.is_thing(rule.companion_class):
            raise InvalidInputError(f"rule {rule} must relate two thing classes")


def _background(config: ToyWorldConfig, taxonomy: ClassTaxonomy) -> np.ndarray:
    grid = np.empty((config.height, config.width), dtype=np.int32)
    stuff = taxonomy.stuff_ids
    if config.stuff_layout == "uniform":
        grid[:] = stuff[0]
    else:  # horizontal bands, one per stuff class, top to bottom
        edges = np.linspace(0, config.height, len(stuff) + 1).astype(int)
        for i, class_id in enumerate(stuff):
            grid[edges[i]:edges[i + 1], :] = class_id
    return grid


def _companion_box(placement: str, y: int, x: int, h: int, w: int, d: int) -> tuple[int, int, int, int]:
    if placement == "below":
        return y + h, x, d, w
    if placement == "above":
        return y - d, x, d, w
    if placement == "left_of":
        return y, x - d, h, d
    return y, x + w, h, d  # right_of


def generate_toy_world(
    config: ToyWorldConfig,
    taxonomy: ClassTaxonomy,
    rng_seed: int,
) -> tuple[DenseLabelmap, InstanceMap]:
    """Generate one scene; every placed trigger gets its companion, always."""
    _validate_config_classes(config, taxonomy)
    rng = np.random.default_rng(rng_seed)
    dense = _background(config, taxonomy)
    inst = dense.copy()  # stuff pixels carry the bare class id
    occupied = np.zeros(dense.shape, dtype=bool)
    counters: dict[int, int] = {}

    def claim(class_id: int, y: int, x: int, h: int, w: int) -> None:
        index = counters.get(class_id, 0)
        counters[class_id] = index + 1
        dense[y:y + h, x:x + w] = class_id
        inst[y:y + h, x:x + w] = class_id * 1000 + index
        occupied[y:y + h, x:x + w] = True

    def box_free(y: int, x: int, h: int, w: int) -> bool:
        if y < 0 or x < 0 or y + h > config.height or x + w > config.width:
            return False
        return not occupied[y:y + h, x:x + w].any()

    if not config.placeable_classes:
        return DenseLabelmap(dense), InstanceMap(inst)

    lo, hi = config.instance_count
    n = int(rng.integers(lo, hi + 1))
    size_lo, size_hi = config.object_size
    for _ in range(n):
        class_id = int(config.placeable_classes[rng.integers(len(config.placeable_classes))])
        rules = [r for r in config.rules if r.trigger_class == class_id]
        for attempt in range(MAX_PLACEMENT_ATTEMPTS):
            h = int(rng.integers(size_lo, size_hi + 1))
            w = int(rng.integers(size_lo, size_hi + 1))
            y = int(rng.integers(0, config.height - h + 1))
            x = int(rng.integers(0, config.width - w + 1))
            boxes = [(class_id, y, x, h, w)]
            for rule in rules:
                d = int(rng.integers(size_lo, size_hi + 1))
                cy, cx, ch, cw = _companion_box(rule.placement, y, x, h, w, d)
                boxes.append((rule.companion_class, cy, cx, ch, cw))
            if all(box_free(*b[1:]) for b in boxes):
                for b in boxes:
                    claim(*b)
                break
        else:
            raise GenerationError(
                f"could not place class {class_id} (and companions) after "
                f"{MAX_PLACEMENT_ATTEMPTS} attempts; scene too crowded"
            )
    return DenseLabelmap(dense), InstanceMap(inst)


def build_toy_corpus(
    config: ToyWorldConfig,
    taxonomy: ClassTaxonomy,
    count: int,
    base_seed: int = 0,
) -> list[SceneExample]:
    """A list of independent toy scenes with reproducible per-scene seeds."""
    examples = []
    for i in range(count):
        dense, inst = generate_toy_world(config, taxonomy, derive_seed(base_seed, i, "toyworld"))
        examples.append(SceneExample(dense, inst, None, f"toy-{base_seed}-{i:04d}"))
    return examples


def materialize_corpus(examples: list[SceneExample], taxonomy: ClassTaxonomy, out_dir) -> Path:
    """Write PNGs plus manifest.json and taxonomy.json; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for ex in examples:
        labelmap = f"{ex.source_id}_labels.png"
        instance_map = f"{ex.source_id}_instances.png"
        write_dense_png(ex.dense, out / labelmap)
        write_instance_png(ex.instances, out / instance_map)
        entries.append(
            {"labelmap": labelmap, "instance_map": instance_map, "image": None,
             "source_id": ex.source_id}
        )
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(entries, indent=2))
    taxonomy.save(out / "taxonomy.json")
    return manifest


# ---------------------------------------------------------------------------
# ready-made desk-scale world
# ---------------------------------------------------------------------------

def default_toy_taxonomy() -> ClassTaxonomy:
    """Street-flavored 8-class taxonomy used by the toy corpus and tests.

    Five stuff bands keep the background task nontrivial for the first stage;
    the things carry the planted rider/bike rule.
    """
    return ClassTaxonomy(
        [
            ClassDef(0, "sky", STUFF, (135, 206, 235)),
            ClassDef(1, "wall", STUFF, (102, 102, 156)),
            ClassDef(2, "grass", STUFF, (152, 251, 152)),
            ClassDef(3, "road", STUFF, (128, 64, 128)),
            ClassDef(4, "sidewalk", STUFF, (244, 35, 232)),
            ClassDef(5, "car", THING, (0, 0, 142)),
            ClassDef(6, "rider", THING, (255, 0, 0)),
            ClassDef(7, "bike", THING, (119, 11, 32)),
        ],
        unlabeled_id=255,
    )


def default_toy_config() -> ToyWorldConfig:
    """64x64 scenes; cars and riders are placed, every rider gets a bike below."""
    return ToyWorldConfig(
        width=64,
        height=64,
        stuff_layout="bands",
        instance_count=(2, 4),
        object_size=(4, 7),
        placeable_classes=(5, 6),
        rules=(PlacementRule(trigger_class=6, companion_class=7, placement="below"),),
    )
