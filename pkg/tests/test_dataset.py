import json

import numpy as np
import pytest

from scenefill import pngio
from scenefill.dataset import (
    ScenePair,
    check_pair,
    derive_seed,
    epoch_iterator,
    load_cityscapes_example,
    load_manifest,
    load_pair_manifest,
    retained_count,
    sample_sparse,
)
from scenefill.errors import InvalidInputError
from scenefill.labelmaps import DenseLabelmap, InstanceMap, validate
from scenefill.toyworld import generate_toy_world, materialize_corpus


def scene_with_n_things(n, taxonomy, width=60):
    """One row of n single-pixel car instances over road background."""
    road, car = taxonomy.stuff_ids[0], taxonomy.thing_ids[0]
    dense = np.full((2, width), road, dtype=np.int32)
    inst = np.full((2, width), road, dtype=np.int32)
    for i in range(n):
        dense[0, i] = car
        inst[0, i] = car * 1000 + i
    return DenseLabelmap(dense), InstanceMap(inst)


# -- sample_sparse -----------------------------------------------------------

def test_paper_case_30_percent_of_10(taxonomy):
    dense, inst = scene_with_n_things(10, taxonomy)
    sparse = sample_sparse(dense, inst, taxonomy, 0.3, rng_seed=0)
    labeled = sparse.data != taxonomy.unlabeled_id
    assert labeled.sum() == 3  # 3 single-pixel instances retained
    assert validate(sparse, taxonomy) == []


def test_zero_things_gives_all_unlabeled(taxonomy):
    dense, inst = scene_with_n_things(0, taxonomy)
    sparse = sample_sparse(dense, inst, taxonomy, 0.3, rng_seed=0)
    assert (sparse.data == taxonomy.unlabeled_id).all()


def test_all_stuff_pixels_unlabeled(taxonomy, toy_config):
    dense, inst = generate_toy_world(toy_config, taxonomy, 5)
    sparse = sample_sparse(dense, inst, taxonomy, 0.3, rng_seed=1)
    stuff_mask = np.isin(dense.data, taxonomy.stuff_ids)
    assert (sparse.data[stuff_mask] == taxonomy.unlabeled_id).all()


def test_retained_count_exhaustive():
    for fraction in (0.1, 0.3, 0.5):
        for n in range(51):
            expected = 0 if n < 1 else max(1, round(fraction * n))
            assert retained_count(fraction, n) == expected


def test_whole_instances_kept(taxonomy, toy_config):
    dense, inst = generate_toy_world(toy_config, taxonomy, 8)
    sparse = sample_sparse(dense, inst, taxonomy, 0.5, rng_seed=2)
    labeled = sparse.data != taxonomy.unlabeled_id
    for iid in np.unique(inst.data[labeled]):
        member = inst.data == iid
        assert labeled[member].all(), "instances must be kept atomically"
        assert np.array_equal(sparse.data[member], dense.data[member])


def test_fixed_seed_is_deterministic(taxonomy):
    dense, inst = scene_with_n_things(10, taxonomy)
    a = sample_sparse(dense, inst, taxonomy, 0.3, rng_seed=77)
    b = sample_sparse(dense, inst, taxonomy, 0.3, rng_seed=77)
    assert a == b


def test_selection_frequency_is_uniform(taxonomy):
    dense, inst = scene_with_n_things(2, taxonomy)
    car = taxonomy.thing_ids[0]
    hits = np.zeros(2)
    for seed in range(1000):
        sparse = sample_sparse(dense, inst, taxonomy, 0.5, rng_seed=seed)
        for i in range(2):
            if sparse.data[0, i] == car:
                hits[i] += 1
    assert abs(hits[0] / 1000 - 0.5) < 0.05
    assert abs(hits[1] / 1000 - 0.5) < 0.05


def test_bad_fraction_rejected(taxonomy):
    dense, inst = scene_with_n_things(3, taxonomy)
    for fraction in (0.0, -0.1, 1.5):
        with pytest.raises(InvalidInputError, match="fraction"):
            sample_sparse(dense, inst, taxonomy, fraction, 0)


def test_dim_mismatch_rejected(taxonomy):
    dense, _ = scene_with_n_things(3, taxonomy)
    _, inst = scene_with_n_things(3, taxonomy, width=61)
    with pytest.raises(InvalidInputError, match="mismatch"):
        sample_sparse(dense, inst, taxonomy, 0.3, 0)


# -- epoch_iterator ----------------------------------------------------------

def test_epoch_cardinality(taxonomy, small_corpus):
    pairs = list(epoch_iterator(small_corpus[:8], taxonomy, 0.3, epoch=1, base_seed=0))
    assert len(pairs) == 8
    assert [p.source_id for p in pairs] == [e.source_id for e in small_corpus[:8]]
    for pair in pairs:
        assert check_pair(pair, taxonomy) == []


def test_epochs_differ_but_replay_identically(taxonomy, small_corpus):
    one = list(epoch_iterator(small_corpus, taxonomy, 0.3, epoch=1, base_seed=5))
    two = list(epoch_iterator(small_corpus, taxonomy, 0.3, epoch=2, base_seed=5))
    replay = list(epoch_iterator(small_corpus, taxonomy, 0.3, epoch=1, base_seed=5))
    assert any(a.sparse != b.sparse for a, b in zip(one, two))
    assert all(a.sparse == b.sparse for a, b in zip(one, replay))


def test_empty_dataset_rejected(taxonomy):
    with pytest.raises(InvalidInputError, match="empty"):
        next(epoch_iterator([], taxonomy, 0.3, 1, 0))


def test_derive_seed_is_stable():
    assert derive_seed(1, 2, "x") == derive_seed(1, 2, "x")
    assert derive_seed(1, 2, "x") != derive_seed(1, 3, "x")
    assert derive_seed(1, 2, "x") != derive_seed(1, 2, "y")


def test_scene_pair_dim_check(taxonomy, small_corpus):
    ex = small_corpus[0]
    dense_small, inst_small = scene_with_n_things(1, taxonomy)
    sparse = sample_sparse(dense_small, inst_small, taxonomy, 0.3, 0)
    with pytest.raises(InvalidInputError, match="mismatch"):
        ScenePair(sparse, ex.dense, ex.instances, None, "x")


# -- loading from disk -------------------------------------------------------

def _write_triple(tmp_path, taxonomy, dense, inst, image=None):
    pngio.write_dense_png(dense, tmp_path / "labels.png")
    pngio.write_instance_png(inst, tmp_path / "inst.png")
    image_path = None
    if image is not None:
        image_path = tmp_path / "img.png"
        pngio.write_image_png(image, image_path)
    return tmp_path / "labels.png", tmp_path / "inst.png", image_path


def test_load_well_formed_triple(tmp_path, taxonomy):
    dense, inst = scene_with_n_things(4, taxonomy)
    img = np.zeros((2, 60, 3), dtype=np.uint8)
    paths = _write_triple(tmp_path, taxonomy, dense, inst, img)
    ex = load_cityscapes_example(*paths, taxonomy)
    assert validate(ex.dense, taxonomy) == [] and validate(ex.instances, taxonomy) == []
    assert ex.image.shape == (2, 60, 3)


def test_load_dimension_mismatch(tmp_path, taxonomy):
    dense, _ = scene_with_n_things(4, taxonomy)
    _, inst = scene_with_n_things(4, taxonomy, width=30)
    labelmap, _, _ = _write_triple(tmp_path, taxonomy, dense, inst)
    with pytest.raises(InvalidInputError, match="mismatch"):
        load_cityscapes_example(labelmap, tmp_path / "inst.png", None, taxonomy)


def test_unknown_classes_remap_to_fallback(tmp_path, taxonomy):
    road = taxonomy.stuff_ids[0]
    grid = np.full((4, 4), road, dtype=np.int32)
    grid[0, :] = 200  # a class outside the taxonomy
    dense = DenseLabelmap(grid)
    inst = InstanceMap(grid.copy())
    paths = _write_triple(tmp_path, taxonomy, dense, inst)
    ex = load_cityscapes_example(*paths, taxonomy, fallback_class=road)
    assert set(np.unique(ex.dense.data)) <= set(taxonomy.class_ids)
    assert (ex.dense.data[0, :] == road).all()


def test_unknown_class_without_fallback_errors(tmp_path, taxonomy):
    grid = np.full((4, 4), 200, dtype=np.int32)
    paths = _write_triple(tmp_path, taxonomy, DenseLabelmap(grid), InstanceMap(grid.copy()))
    with pytest.raises(InvalidInputError, match="fallback"):
        load_cityscapes_example(*paths, taxonomy)


def test_manifest_round_trip(tmp_path, taxonomy, small_corpus):
    manifest = materialize_corpus(small_corpus[:4], taxonomy, tmp_path)
    loaded = load_manifest(manifest, taxonomy)
    assert len(loaded) == 4
    assert all(a.dense == b.dense for a, b in zip(loaded, small_corpus))
    assert all(a.instances == b.instances for a, b in zip(loaded, small_corpus))


def test_pair_manifest(tmp_path, taxonomy, small_corpus):
    entries = []
    for i, ex in enumerate(small_corpus[:3]):
        sparse = sample_sparse(ex.dense, ex.instances, taxonomy, 0.3, i)
        pngio.write_sparse_png(sparse, taxonomy, tmp_path / f"{i}_sparse.png")
        pngio.write_dense_png(ex.dense, tmp_path / f"{i}_dense.png")
        entries.append({"sparse": f"{i}_sparse.png", "dense": f"{i}_dense.png"})
    manifest = tmp_path / "pairs.json"
    manifest.write_text(json.dumps(entries))
    pairs = load_pair_manifest(manifest, taxonomy)
    assert len(pairs) == 3
    assert pairs[0][1] == small_corpus[0].dense
