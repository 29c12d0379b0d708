"""Class taxonomy: the class universe split into "stuff" and "thing" categories.

The taxonomy fixes the channel layouts used everywhere else: generators,
one-hot encodings and overlays all derive their channel order from the order
classes appear here.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidInputError

STUFF = "stuff"
THING = "thing"


@dataclass(frozen=True)
class ClassDef:
    class_id: int
    name: str
    kind: str  # STUFF or THING
    color: tuple[int, int, int]

    def __post_init__(self):
        if self.class_id < 0:
            raise InvalidInputError(f"class_id must be nonnegative, got {self.class_id}")
        if self.kind not in (STUFF, THING):
            raise InvalidInputError(f"kind must be 'stuff' or 'thing', got {self.kind!r}")
        if len(self.color) != 3 or any(not (0 <= c <= 255) for c in self.color):
            raise InvalidInputError(f"color must be an RGB triple in [0,255], got {self.color!r}")


class ClassTaxonomy:
    """Ordered class definitions plus the reserved unlabeled sentinel.

    Every class is exactly one of stuff/thing, there is at least one of each,
    ids are unique, and the sentinel collides with no class id.
    """

    def __init__(self, classes: list[ClassDef], unlabeled_id: int = 255):
        ids = [c.class_id for c in classes]
        if len(set(ids)) != len(ids):
            raise InvalidInputError(f"duplicate class_ids in taxonomy: {ids}")
        if unlabeled_id in ids:
            raise InvalidInputError(f"unlabeled_id {unlabeled_id} collides with a class_id")
        self.classes = tuple(classes)
        self.unlabeled_id = unlabeled_id
        self.stuff_ids = tuple(c.class_id for c in classes if c.kind == STUFF)
        self.thing_ids = tuple(c.class_id for c in classes if c.kind == THING)
        if not self.stuff_ids or not self.thing_ids:
            raise InvalidInputError("taxonomy needs at least one stuff and one thing class")
        self.class_ids = tuple(ids)
        self._by_id = {c.class_id: c for c in classes}

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def num_stuff(self) -> int:
        return len(self.stuff_ids)

    @property
    def num_things(self) -> int:
        return len(self.thing_ids)

    def __contains__(self, class_id: int) -> bool:
        return class_id in self._by_id

    def __getitem__(self, class_id: int) -> ClassDef:
        return self._by_id[class_id]

    def is_thing(self, class_id: int) -> bool:
        return class_id in self._by_id and self._by_id[class_id].kind == THING

    def is_stuff(self, class_id: int) -> bool:
        return class_id in self._by_id and self._by_id[class_id].kind == STUFF

    def name_to_id(self, name: str) -> int:
        for c in self.classes:
            if c.name == name:
                return c.class_id
        raise InvalidInputError(f"no class named {name!r} in taxonomy")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "classes": [
                {"id": c.class_id, "name": c.name, "kind": c.kind, "color": list(c.color)}
                for c in self.classes
            ],
            "unlabeled_id": self.unlabeled_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassTaxonomy":
        try:
            classes = [
                ClassDef(int(e["id"]), str(e["name"]), str(e["kind"]), tuple(e["color"]))
                for e in d["classes"]
            ]
            return cls(classes, unlabeled_id=int(d["unlabeled_id"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed taxonomy document: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "ClassTaxonomy":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def fingerprint(self) -> str:
        """Stable hash of the taxonomy, used to guard checkpoint compatibility."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def __eq__(self, other) -> bool:
        return isinstance(other, ClassTaxonomy) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return (
            f"ClassTaxonomy({self.num_stuff} stuff + {self.num_things} things, "
            f"unlabeled={self.unlabeled_id})"
        )
