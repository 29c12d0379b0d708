"""Labelmap value types and the deterministic transforms between them.

Conventions used throughout:

- pixel grids are numpy arrays indexed ``[y, x]`` (H rows, W columns);
- probability volumes are ``C x H x W``;
- a soft map's ``channel_semantics`` lists the class_id behind each channel,
  with the taxonomy's ``unlabeled_id`` standing in for the "none" channel;
- instance ids follow the Cityscapes convention: ``class_id * 1000 + index``
  for things, bare ``class_id`` for stuff pixels.

All types are immutable after construction and all operations are pure, so
values can be shared freely across threads.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .taxonomy import ClassTaxonomy

THINGS_PLUS_NONE = "things_plus_none"
STUFFS = "stuffs"
ALL = "all"

INSTANCE_ID_BASE = 1000


def _frozen(data: np.ndarray, dtype) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype).copy()
    arr.flags.writeable = False
    return arr


class _Grid2D:
    """Shared shell for single-plane H x W maps."""

    _dtype: type = np.int32

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(
                f"{type(self).__name__} data must be a nonempty 2-D grid, got shape {arr.shape}"
            )
        self.data = _frozen(arr, self._dtype)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other) -> bool:
        return type(other) is type(self) and np.array_equal(self.data, other.data)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.width}x{self.height})"


class DenseLabelmap(_Grid2D):
    """Complete per-pixel class assignment; no sentinel values allowed."""


class SparseLabelmap(_Grid2D):
    """Partial labelmap: thing class_ids where labeled, unlabeled_id elsewhere."""


class InstanceMap(_Grid2D):
    """Per-pixel instance identifiers (nonnegative integers)."""

    def __init__(self, data: np.ndarray):
        super().__init__(data)
        if self.data.min() < 0:
            raise InvalidInputError("instance ids must be nonnegative")

    def thing_ids_present(self) -> np.ndarray:
        """Distinct thing instance ids (>= INSTANCE_ID_BASE), sorted."""
        ids = np.unique(self.data)
        return ids[ids >= INSTANCE_ID_BASE]


class BoundaryMap(_Grid2D):
    """Binary map: 1 where the 4-neighborhood crosses an instance boundary."""

    _dtype = np.uint8

    def __init__(self, data: np.ndarray):
        super().__init__(data)
        if not np.isin(self.data, (0, 1)).all():
            raise InvalidInputError("boundary map values must be 0 or 1")


class SoftLabelmap:
    """Per-class probability volume g(c, x, y) with named channels."""

    def __init__(self, data: np.ndarray, channel_semantics: tuple[int, ...]):
        arr = np.asarray(data)
        if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise InvalidInputError(
                f"soft labelmap data must be C x H x W, got shape {arr.shape}"
            )
        if len(channel_semantics) != arr.shape[0]:
            raise InvalidInputError(
                f"channel_semantics length {len(channel_semantics)} != channel count {arr.shape[0]}"
            )
        self.data = _frozen(arr, np.float32)
        self.channel_semantics = tuple(int(c) for c in channel_semantics)

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def channel_index(self, class_id: int) -> int:
        try:
            return self.channel_semantics.index(class_id)
        except ValueError:
            raise InvalidInputError(f"no channel for class_id {class_id}") from None

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SoftLabelmap)
            and self.channel_semantics == other.channel_semantics
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"SoftLabelmap({self.num_channels}x{self.height}x{self.width})"


# ---------------------------------------------------------------------------
# channel layouts
# ---------------------------------------------------------------------------

def channel_semantics_for(taxonomy: ClassTaxonomy, channel_set: str) -> tuple[int, ...]:
    """Channel order for a given channel set; the sentinel marks the "none" channel."""
    if channel_set == THINGS_PLUS_NONE:
        return taxonomy.thing_ids + (taxonomy.unlabeled_id,)
    if channel_set == STUFFS:
        return taxonomy.stuff_ids
    if channel_set == ALL:
        return taxonomy.class_ids
    raise InvalidInputError(f"unknown channel_set {channel_set!r}")


# ---------------------------------------------------------------------------
# encoding / decoding
# ---------------------------------------------------------------------------

def encode_one_hot(
    labelmap: DenseLabelmap | SparseLabelmap,
    taxonomy: ClassTaxonomy,
    channel_set: str,
) -> SoftLabelmap:
    """Expand a labelmap into binary per-class planes.

    Exactly one channel is hot per pixel. With ``things_plus_none`` (which
    requires a :class:`SparseLabelmap`) unlabeled pixels activate the "none"
    channel; with ``stuffs``/``all`` every pixel's class must have a channel.
    """
    semantics = channel_semantics_for(taxonomy, channel_set)
    if channel_set == THINGS_PLUS_NONE and not isinstance(labelmap, SparseLabelmap):
        raise InvalidInputError("things_plus_none encoding requires a SparseLabelmap")

    lookup = {class_id: idx for idx, class_id in enumerate(semantics)}
    grid = labelmap.data
    planes = np.zeros((len(semantics),) + grid.shape, dtype=np.float32)
    flat_idx = np.full(grid.shape, -1, dtype=np.int64)
    for class_id, idx in lookup.items():
        flat_idx[grid == class_id] = idx
    if (flat_idx < 0).any():
        ys, xs = np.nonzero(flat_idx < 0)
        y, x = int(ys[0]), int(xs[0])
        raise InvalidInputError(
            f"class_id {int(grid[y, x])} at pixel (x={x}, y={y}) has no channel in "
            f"channel_set {channel_set!r}"
        )
    np.put_along_axis(planes, flat_idx[None], 1.0, axis=0)
    return SoftLabelmap(planes, semantics)


def decode_argmax(
    soft: SoftLabelmap, taxonomy: ClassTaxonomy
) -> DenseLabelmap | SparseLabelmap:
    """Hard-decode a probability volume; ties go to the lowest channel index.

    A winning "none" channel becomes ``unlabeled_id``, in which case the result
    is a :class:`SparseLabelmap` (the caller knows which to expect from the
    channel semantics).
    """
    if np.isnan(soft.data).any():
        raise InvalidInputError("soft labelmap contains NaN")
    winners = np.argmax(soft.data, axis=0)
    semantics = np.asarray(soft.channel_semantics, dtype=np.int32)
    decoded = semantics[winners]
    if (decoded == taxonomy.unlabeled_id).any():
        bad = {int(c) for c in np.unique(decoded) if taxonomy.is_stuff(int(c))}
        if bad:
            raise InvalidInputError(
                f"decode produced sentinel alongside stuff classes {sorted(bad)}; "
                "not representable as a single labelmap type"
            )
        return SparseLabelmap(decoded)
    return DenseLabelmap(decoded)


def embed_sparse_all(sparse: SparseLabelmap, taxonomy: ClassTaxonomy) -> SoftLabelmap:
    """Embed a sparse map into all C channels with all-zero columns where unlabeled.

    This is the single-stage baseline's input encoding: s(c,x,y) = 1 iff the
    pixel is labeled with class c, 0 otherwise (no "none" channel).
    """
    semantics = taxonomy.class_ids
    planes = np.zeros((len(semantics),) + sparse.shape, dtype=np.float32)
    for idx, class_id in enumerate(semantics):
        planes[idx][sparse.data == class_id] = 1.0
    known = np.isin(sparse.data, semantics) | (sparse.data == taxonomy.unlabeled_id)
    if not known.all():
        ys, xs = np.nonzero(~known)
        raise InvalidInputError(
            f"unknown class_id {int(sparse.data[ys[0], xs[0]])} at pixel "
            f"(x={int(xs[0])}, y={int(ys[0])})"
        )
    return SoftLabelmap(planes, semantics)


def encode_stuff_planes(dense: DenseLabelmap, taxonomy: ClassTaxonomy) -> SoftLabelmap:
    """Stuff-channel planes of a dense map; thing pixels get all-zero columns.

    Training target for the stuff-hallucination stage: unlike
    :func:`encode_one_hot` this is not one-hot, since thing pixels carry no
    stuff label.
    """
    semantics = taxonomy.stuff_ids
    planes = np.zeros((len(semantics),) + dense.shape, dtype=np.float32)
    for idx, class_id in enumerate(semantics):
        planes[idx][dense.data == class_id] = 1.0
    return SoftLabelmap(planes, semantics)


def to_sparse_things(dense: DenseLabelmap, taxonomy: ClassTaxonomy) -> SparseLabelmap:
    """Keep thing pixels, blank everything else to the sentinel."""
    out = np.full(dense.shape, taxonomy.unlabeled_id, dtype=np.int32)
    thing_mask = np.isin(dense.data, taxonomy.thing_ids)
    out[thing_mask] = dense.data[thing_mask]
    return SparseLabelmap(out)


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------

def overlay(base: SoftLabelmap, top: SparseLabelmap, taxonomy: ClassTaxonomy) -> SoftLabelmap:
    """Stamp a sparse map over a soft base, hard-overwriting labeled pixels.

    The result always has all C channels. Where ``top`` is labeled the class
    channel is 1 and every other channel 0; elsewhere the base channels are
    copied into their positions and absent channels stay 0. Hard overwrite
    makes the operation idempotent.
    """
    if (base.height, base.width) != top.shape:
        raise InvalidInputError(
            f"dimension mismatch: base {base.height}x{base.width} vs top "
            f"{top.shape[0]}x{top.shape[1]}"
        )
    semantics = taxonomy.class_ids
    position = {class_id: idx for idx, class_id in enumerate(semantics)}
    for class_id in base.channel_semantics:
        if class_id not in position:
            raise InvalidInputError(f"base channel class_id {class_id} not in taxonomy")

    out = np.zeros((len(semantics),) + top.shape, dtype=np.float32)
    for src_idx, class_id in enumerate(base.channel_semantics):
        out[position[class_id]] = base.data[src_idx]

    labeled = top.data != taxonomy.unlabeled_id
    out[:, labeled] = 0.0
    for class_id in np.unique(top.data[labeled]):
        class_id = int(class_id)
        if class_id not in position or not taxonomy.is_thing(class_id):
            raise InvalidInputError(f"sparse overlay contains non-thing class_id {class_id}")
        out[position[class_id], top.data == class_id] = 1.0
    return SoftLabelmap(out, semantics)


def compose_final(
    stuffs: SoftLabelmap,
    things: SoftLabelmap,
    sparse: SparseLabelmap,
    taxonomy: ClassTaxonomy,
) -> SoftLabelmap:
    """Merge stage outputs into the final C-channel map.

    Pixel precedence: input things (one-hot from ``sparse``) beat generated
    things (pixels whose ``things`` argmax is a thing channel, whose thing
    probabilities are kept) beat stuffs (copied from ``stuffs`` where the
    "none" channel wins).
    """
    shape = sparse.shape
    if (stuffs.height, stuffs.width) != shape or (things.height, things.width) != shape:
        raise InvalidInputError("compose_final inputs must share spatial dimensions")
    expected = channel_semantics_for(taxonomy, THINGS_PLUS_NONE)
    if things.channel_semantics != expected:
        raise InvalidInputError(
            f"things volume must have channels {expected}, got {things.channel_semantics}"
        )

    semantics = taxonomy.class_ids
    position = {class_id: idx for idx, class_id in enumerate(semantics)}
    out = np.zeros((len(semantics),) + shape, dtype=np.float32)

    # stuffs fill first, clobbered below where a thing wins
    for src_idx, class_id in enumerate(stuffs.channel_semantics):
        if class_id not in position:
            raise InvalidInputError(f"stuff channel class_id {class_id} not in taxonomy")
        out[position[class_id]] = stuffs.data[src_idx]

    winners = np.argmax(things.data, axis=0)
    none_idx = len(things.channel_semantics) - 1
    generated = winners != none_idx
    out[:, generated] = 0.0
    for src_idx, class_id in enumerate(things.channel_semantics[:-1]):
        out[position[class_id], generated] = things.data[src_idx, generated]

    labeled = sparse.data != taxonomy.unlabeled_id
    out[:, labeled] = 0.0
    for class_id in np.unique(sparse.data[labeled]):
        class_id = int(class_id)
        if not taxonomy.is_thing(class_id):
            raise InvalidInputError(f"sparse input contains non-thing class_id {class_id}")
        out[position[class_id], sparse.data == class_id] = 1.0
    return SoftLabelmap(out, semantics)


# ---------------------------------------------------------------------------
# boundaries
# ---------------------------------------------------------------------------

def extract_boundaries(inst: InstanceMap) -> BoundaryMap:
    """Mark pixels where any in-image 4-neighbor carries a different instance id.

    Out-of-image neighbors never count as different, so a uniform map has an
    all-zero boundary (no boundary frame at the image border).
    """
    grid = inst.data
    b = np.zeros(grid.shape, dtype=bool)
    vert = grid[1:, :] != grid[:-1, :]
    b[1:, :] |= vert
    b[:-1, :] |= vert
    horiz = grid[:, 1:] != grid[:, :-1]
    b[:, 1:] |= horiz
    b[:, :-1] |= horiz
    return BoundaryMap(b.astype(np.uint8))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate(labelmap, taxonomy: ClassTaxonomy) -> list[str]:
    """Check type invariants; returns one message per violation (empty if valid)."""
    violations: list[str] = []

    def first_bad_pixel(mask: np.ndarray) -> tuple[int, int]:
        ys, xs = np.nonzero(mask)
        return int(xs[0]), int(ys[0])

    if isinstance(labelmap, DenseLabelmap):
        bad = ~np.isin(labelmap.data, taxonomy.class_ids)
        if bad.any():
            x, y = first_bad_pixel(bad)
            violations.append(
                f"dense map has class_id {int(labelmap.data[y, x])} outside the taxonomy "
                f"at pixel (x={x}, y={y})"
            )
    elif isinstance(labelmap, SparseLabelmap):
        labeled = labelmap.data != taxonomy.unlabeled_id
        bad = labeled & ~np.isin(labelmap.data, taxonomy.thing_ids)
        if bad.any():
            x, y = first_bad_pixel(bad)
            violations.append(
                f"sparse map has non-thing class_id {int(labelmap.data[y, x])} "
                f"at pixel (x={x}, y={y})"
            )
    elif isinstance(labelmap, SoftLabelmap):
        if np.isnan(labelmap.data).any():
            violations.append("soft map contains NaN")
        else:
            out_of_range = (labelmap.data < 0.0) | (labelmap.data > 1.0)
            if out_of_range.any():
                c, ys, xs = [int(v[0]) for v in np.nonzero(out_of_range)]
                violations.append(
                    f"soft map value {float(labelmap.data[c, ys, xs]):.6g} outside [0,1] "
                    f"at channel {c}, pixel (x={xs}, y={ys})"
                )
        for class_id in labelmap.channel_semantics:
            if class_id not in taxonomy and class_id != taxonomy.unlabeled_id:
                violations.append(f"soft map channel class_id {class_id} not in taxonomy")
    elif isinstance(labelmap, InstanceMap):
        thing_part = labelmap.data >= INSTANCE_ID_BASE
        classes = np.where(thing_part, labelmap.data // INSTANCE_ID_BASE, labelmap.data)
        bad = ~np.isin(classes, taxonomy.class_ids)
        if bad.any():
            x, y = first_bad_pixel(bad)
            violations.append(
                f"instance map id {int(labelmap.data[y, x])} encodes unknown class "
                f"at pixel (x={x}, y={y})"
            )
        thing_as_stuff = thing_part & np.isin(classes, taxonomy.stuff_ids)
        if thing_as_stuff.any():
            x, y = first_bad_pixel(thing_as_stuff)
            violations.append(
                f"instance map id {int(labelmap.data[y, x])} gives a stuff class an "
                f"instance index at pixel (x={x}, y={y})"
            )
        stuff_pixels = ~thing_part
        bad_stuff = stuff_pixels & np.isin(labelmap.data, taxonomy.thing_ids)
        if bad_stuff.any():
            x, y = first_bad_pixel(bad_stuff)
            violations.append(
                f"instance map id {int(labelmap.data[y, x])} uses a thing class as a "
                f"bare id at pixel (x={x}, y={y})"
            )
    elif isinstance(labelmap, BoundaryMap):
        pass  # {0,1} already enforced at construction
    else:
        violations.append(f"unsupported map type {type(labelmap).__name__}")
    return violations
