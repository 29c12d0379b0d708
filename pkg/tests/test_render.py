import os
import stat
import sys

import numpy as np
import pytest

from oracles import random_dense
from scenefill import pngio
from scenefill.errors import InvalidInputError, RenderError
from scenefill.labelmaps import BoundaryMap, extract_boundaries
from scenefill.render import LearnedRenderer, palette_render, render, train_learned_renderer
from scenefill.toyworld import generate_toy_world


def no_boundary(shape):
    return BoundaryMap(np.zeros(shape, dtype=np.uint8))


def test_palette_uniform_map(taxonomy):
    road = taxonomy.name_to_id("road")
    dense = random_dense(np.random.default_rng(0), taxonomy, 1, 1)
    from scenefill.labelmaps import DenseLabelmap

    dense = DenseLabelmap(np.full((4, 4), road))
    img = palette_render(dense, no_boundary((4, 4)), taxonomy)
    assert (img == np.array(taxonomy[road].color)).all()


def test_palette_darkens_exactly_boundary_pixels(taxonomy):
    from scenefill.labelmaps import DenseLabelmap

    road = taxonomy.name_to_id("road")
    dense = DenseLabelmap(np.full((3, 3), road))
    b = np.zeros((3, 3), dtype=np.uint8)
    b[1, 1] = 1
    img = palette_render(dense, BoundaryMap(b), taxonomy)
    color = np.array(taxonomy[road].color)
    dark = np.round(color * 0.6)
    assert (img[1, 1] == dark).all()
    mask = np.ones((3, 3), bool)
    mask[1, 1] = False
    assert (img[mask] == color).all()


def test_palette_render_is_byte_pure(taxonomy, toy_config):
    dense, inst = generate_toy_world(toy_config, taxonomy, 4)
    b = extract_boundaries(inst)
    png1 = pngio.image_to_png_bytes(palette_render(dense, b, taxonomy))
    png2 = pngio.image_to_png_bytes(palette_render(dense, b, taxonomy))
    assert png1 == png2


def test_palette_accepts_soft_maps(taxonomy, toy_config):
    from scenefill.labelmaps import ALL, encode_one_hot

    dense, inst = generate_toy_world(toy_config, taxonomy, 6)
    soft = encode_one_hot(dense, taxonomy, ALL)
    hard_img = palette_render(dense, no_boundary(dense.shape), taxonomy)
    soft_img = palette_render(soft, no_boundary(dense.shape), taxonomy)
    assert np.array_equal(hard_img, soft_img)


def test_dim_mismatch_rejected(taxonomy, toy_config):
    dense, _ = generate_toy_world(toy_config, taxonomy, 1)
    with pytest.raises(InvalidInputError, match="mismatch"):
        palette_render(dense, no_boundary((4, 4)), taxonomy)


def test_unknown_backend(taxonomy, toy_config):
    dense, inst = generate_toy_world(toy_config, taxonomy, 2)
    with pytest.raises(RenderError, match="backend"):
        render(dense, extract_boundaries(inst), taxonomy, backend="magic")


# -- learned backend -----------------------------------------------------------

def test_learned_renderer_trains_and_round_trips(tmp_path, taxonomy, toy_config):
    from scenefill.dataset import SceneExample

    examples = []
    for seed in range(4):
        dense, inst = generate_toy_world(toy_config, taxonomy, seed)
        image = palette_render(dense, extract_boundaries(inst), taxonomy)
        examples.append(SceneExample(dense, inst, image, f"r{seed}"))
    path = tmp_path / "renderer.ckpt"
    renderer = train_learned_renderer(examples, taxonomy, path, epochs=2, depth=3, base_width=4)
    assert path.exists()
    loaded = LearnedRenderer.load(path, taxonomy)
    dense, inst = generate_toy_world(toy_config, taxonomy, 9)
    b = extract_boundaries(inst)
    img = render(dense, b, taxonomy, backend="learned", renderer=loaded)
    assert img.shape == (64, 64, 3) and img.dtype == np.uint8


def test_learned_backend_needs_renderer(taxonomy, toy_config):
    dense, inst = generate_toy_world(toy_config, taxonomy, 2)
    with pytest.raises(RenderError, match="renderer"):
        render(dense, extract_boundaries(inst), taxonomy, backend="learned")


# -- external backend ----------------------------------------------------------

STUB = """#!{python}
import argparse, sys
from PIL import Image
import numpy as np
p = argparse.ArgumentParser()
p.add_argument("--label"); p.add_argument("--boundary"); p.add_argument("--out")
a = p.parse_args()
label = np.array(Image.open(a.label))
bd = np.array(Image.open(a.boundary))
rgb = np.stack([label, bd, label], axis=-1).astype(np.uint8)
Image.fromarray(rgb, mode="RGB").save(a.out)
"""


@pytest.fixture()
def stub_renderer(tmp_path):
    script = tmp_path / "fake_renderer.py"
    script.write_text(STUB.format(python=sys.executable))
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    return f"{sys.executable} {script}"


def test_external_round_trip(taxonomy, toy_config, stub_renderer):
    dense, inst = generate_toy_world(toy_config, taxonomy, 3)
    b = extract_boundaries(inst)
    img = render(dense, b, taxonomy, backend="external", external_cmd=stub_renderer)
    # the stub echoes the label PNG into the red channel and the boundary into green
    assert np.array_equal(img[:, :, 0], dense.data.astype(np.uint8))
    assert np.array_equal(img[:, :, 1] > 127, b.data.astype(bool))


def test_external_missing_command(taxonomy, toy_config):
    dense, inst = generate_toy_world(toy_config, taxonomy, 3)
    with pytest.raises(RenderError, match="not found"):
        render(dense, extract_boundaries(inst), taxonomy,
               backend="external", external_cmd="/nonexistent/renderer")


def test_external_failure_surfaces_stderr(taxonomy, toy_config, tmp_path):
    script = tmp_path / "broken.py"
    script.write_text(f"#!{sys.executable}\nimport sys; sys.stderr.write('kaboom'); sys.exit(2)\n")
    dense, inst = generate_toy_world(toy_config, taxonomy, 3)
    with pytest.raises(RenderError, match="kaboom"):
        render(dense, extract_boundaries(inst), taxonomy,
               backend="external", external_cmd=f"{sys.executable} {script}")
