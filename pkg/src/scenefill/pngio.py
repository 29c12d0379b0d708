"""PNG file formats for maps and images, plus base64 helpers for the wire.

File contracts:

- dense/sparse labelmaps: 8-bit single-channel PNG, pixel value = class_id,
  255 = unlabeled (sparse maps only);
- instance maps: 16-bit single-channel PNG, Cityscapes id convention;
- boundary maps: 8-bit single-channel PNG, 0 or 255;
- images: 8-bit RGB PNG.
"""

from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidInputError
from .labelmaps import BoundaryMap, DenseLabelmap, InstanceMap, SparseLabelmap
from .taxonomy import ClassTaxonomy

FILE_UNLABELED = 255


def _decode_png(source) -> np.ndarray:
    try:
        if isinstance(source, (bytes, bytearray)):
            img = Image.open(io.BytesIO(source))
        else:
            img = Image.open(source)
        return np.array(img)
    except Exception as exc:
        raise InvalidInputError(f"cannot decode PNG from {source!r}: {exc}") from exc


def _encode_png(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _check_8bit_ids(grid: np.ndarray, kind: str) -> None:
    if grid.min() < 0 or grid.max() > 255:
        raise InvalidInputError(f"{kind} class_ids must fit 8-bit PNG range [0,255]")


# -- dense ------------------------------------------------------------------

def dense_to_png_bytes(dense: DenseLabelmap) -> bytes:
    _check_8bit_ids(dense.data, "dense labelmap")
    return _encode_png(Image.fromarray(dense.data.astype(np.uint8), mode="L"))


def write_dense_png(dense: DenseLabelmap, path: str | Path) -> None:
    Path(path).write_bytes(dense_to_png_bytes(dense))


def read_dense_png(source) -> DenseLabelmap:
    arr = _decode_png(source)
    if arr.ndim != 2:
        raise InvalidInputError(f"dense labelmap PNG must be single-channel, got shape {arr.shape}")
    return DenseLabelmap(arr.astype(np.int32))


# -- sparse -----------------------------------------------------------------

def sparse_to_png_bytes(sparse: SparseLabelmap, taxonomy: ClassTaxonomy) -> bytes:
    grid = sparse.data.copy()
    labeled = grid != taxonomy.unlabeled_id
    if labeled.any():
        _check_8bit_ids(grid[labeled], "sparse labelmap")
        if FILE_UNLABELED in grid[labeled]:
            raise InvalidInputError("class_id 255 collides with the file's unlabeled value")
    grid[~labeled] = FILE_UNLABELED
    return _encode_png(Image.fromarray(grid.astype(np.uint8), mode="L"))


def write_sparse_png(sparse: SparseLabelmap, taxonomy: ClassTaxonomy, path: str | Path) -> None:
    Path(path).write_bytes(sparse_to_png_bytes(sparse, taxonomy))


def read_sparse_png(source, taxonomy: ClassTaxonomy) -> SparseLabelmap:
    arr = _decode_png(source)
    if arr.ndim != 2:
        raise InvalidInputError(f"sparse labelmap PNG must be single-channel, got shape {arr.shape}")
    grid = arr.astype(np.int32)
    grid[grid == FILE_UNLABELED] = taxonomy.unlabeled_id
    return SparseLabelmap(grid)


# -- instances --------------------------------------------------------------

def instance_to_png_bytes(inst: InstanceMap) -> bytes:
    if inst.data.max() > np.iinfo(np.uint16).max:
        raise InvalidInputError(
            f"instance id {int(inst.data.max())} does not fit the 16-bit PNG format"
        )
    return _encode_png(Image.fromarray(inst.data.astype(np.uint16)))


def write_instance_png(inst: InstanceMap, path: str | Path) -> None:
    Path(path).write_bytes(instance_to_png_bytes(inst))


def read_instance_png(source) -> InstanceMap:
    arr = _decode_png(source)
    if arr.ndim != 2:
        raise InvalidInputError(f"instance map PNG must be single-channel, got shape {arr.shape}")
    return InstanceMap(arr.astype(np.int32))


# -- boundaries -------------------------------------------------------------

def boundary_to_png_bytes(boundary: BoundaryMap) -> bytes:
    return _encode_png(Image.fromarray((boundary.data * 255).astype(np.uint8), mode="L"))


def write_boundary_png(boundary: BoundaryMap, path: str | Path) -> None:
    Path(path).write_bytes(boundary_to_png_bytes(boundary))


def read_boundary_png(source) -> BoundaryMap:
    arr = _decode_png(source)
    if arr.ndim != 2:
        raise InvalidInputError(f"boundary PNG must be single-channel, got shape {arr.shape}")
    return BoundaryMap((arr > 127).astype(np.uint8))


# -- RGB images --------------------------------------------------------------

def image_to_png_bytes(image: np.ndarray) -> bytes:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"image must be H x W x 3, got shape {arr.shape}")
    return _encode_png(Image.fromarray(arr.astype(np.uint8), mode="RGB"))


def write_image_png(image: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(image_to_png_bytes(image))


def read_image_png(source) -> np.ndarray:
    arr = _decode_png(source)
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"image PNG must be RGB, got shape {arr.shape}")
    return arr.astype(np.uint8)


# -- base64 wrappers ---------------------------------------------------------

def to_b64(png_bytes: bytes) -> str:
    return base64.b64encode(png_bytes).decode("ascii")


def from_b64(payload: str) -> bytes:
    try:
        return base64.b64decode(payload, validate=True)
    except Exception as exc:
        raise InvalidInputError(f"invalid base64 payload: {exc}") from exc
