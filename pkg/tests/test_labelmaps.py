import numpy as np
import pytest

from oracles import brute_force_boundaries, random_dense, random_instances, random_taxonomy
from scenefill.errors import InvalidInputError
from scenefill.labelmaps import (
    ALL,
    STUFFS,
    THINGS_PLUS_NONE,
    BoundaryMap,
    DenseLabelmap,
    InstanceMap,
    SoftLabelmap,
    SparseLabelmap,
    compose_final,
    decode_argmax,
    embed_sparse_all,
    encode_one_hot,
    encode_stuff_planes,
    extract_boundaries,
    overlay,
    to_sparse_things,
    validate,
)
from scenefill.taxonomy import STUFF, THING, ClassDef, ClassTaxonomy

# small fixed universe: stuffs road(0), sky(1); things car(2), person(3)
TAX = ClassTaxonomy(
    [
        ClassDef(0, "road", STUFF, (128, 64, 128)),
        ClassDef(1, "sky", STUFF, (70, 130, 180)),
        ClassDef(2, "car", THING, (0, 0, 142)),
        ClassDef(3, "person", THING, (220, 20, 60)),
    ],
    unlabeled_id=255,
)


# -- encode_one_hot ----------------------------------------------------------

def test_encode_sentinel_only_pixel():
    sparse = SparseLabelmap(np.array([[255]]))
    soft = encode_one_hot(sparse, TAX, THINGS_PLUS_NONE)
    assert soft.channel_semantics == (2, 3, 255)
    assert soft.data[:, 0, 0].tolist() == [0.0, 0.0, 1.0]


def test_encode_hand_expansion():
    sparse = SparseLabelmap(np.array([[2, 255]]))
    soft = encode_one_hot(sparse, TAX, THINGS_PLUS_NONE)
    assert soft.data[:, 0, 0].tolist() == [1.0, 0.0, 0.0]
    assert soft.data[:, 0, 1].tolist() == [0.0, 0.0, 1.0]


def test_encode_single_class_dense():
    dense = DenseLabelmap(np.zeros((2, 2), dtype=int))  # all road
    soft = encode_one_hot(dense, TAX, ALL)
    assert soft.data[0].tolist() == [[1, 1], [1, 1]]
    assert soft.data[1:].sum() == 0


def test_encode_exactly_one_hot_per_pixel():
    rng = np.random.default_rng(0)
    dense = random_dense(rng, TAX, 9, 7)
    soft = encode_one_hot(dense, TAX, ALL)
    assert np.array_equal(soft.data.sum(axis=0), np.ones((9, 7)))


def test_encode_unknown_class_names_pixel():
    dense = DenseLabelmap(np.array([[0, 99]]))
    with pytest.raises(InvalidInputError, match=r"99.*\(x=1, y=0\)"):
        encode_one_hot(dense, TAX, ALL)


def test_encode_things_plus_none_requires_sparse():
    dense = DenseLabelmap(np.zeros((2, 2), dtype=int))
    with pytest.raises(InvalidInputError, match="SparseLabelmap"):
        encode_one_hot(dense, TAX, THINGS_PLUS_NONE)


def test_encode_sentinel_illegal_outside_things_plus_none():
    sparse = SparseLabelmap(np.array([[255]]))
    with pytest.raises(InvalidInputError):
        encode_one_hot(sparse, TAX, ALL)


def test_encode_stuffs_channel_count():
    dense = DenseLabelmap(np.array([[0, 1]]))
    soft = encode_one_hot(dense, TAX, STUFFS)
    assert soft.num_channels == TAX.num_stuff


# -- decode_argmax -----------------------------------------------------------

def test_decode_strict_max():
    soft = SoftLabelmap(np.array([[[0.1]], [[0.9]]]), (0, 1))
    assert decode_argmax(soft, TAX).data[0, 0] == 1


def test_decode_tie_takes_lowest_channel():
    soft = SoftLabelmap(np.array([[[0.5]], [[0.5]]]), (0, 1))
    assert decode_argmax(soft, TAX).data[0, 0] == 0


def test_decode_nan_rejected():
    soft = SoftLabelmap(np.array([[[np.nan]]]), (0,))
    with pytest.raises(InvalidInputError, match="NaN"):
        decode_argmax(soft, TAX)


def test_decode_winning_none_gives_sparse():
    soft = SoftLabelmap(np.array([[[0.9, 0.1]], [[0.0, 0.2]], [[0.1, 0.7]]]), (2, 3, 255))
    out = decode_argmax(soft, TAX)
    assert isinstance(out, SparseLabelmap)
    assert out.data[0].tolist() == [2, 255]


def test_encode_decode_round_trip_property():
    rng = np.random.default_rng(42)
    for trial in range(100):
        tax = random_taxonomy(rng, n_stuff=int(rng.integers(1, 6)) or 2, n_things=int(rng.integers(2, 6)))
        dense = random_dense(rng, tax, int(rng.integers(1, 12)), int(rng.integers(1, 12)))
        assert decode_argmax(encode_one_hot(dense, tax, ALL), tax) == dense


# -- overlay -----------------------------------------------------------------

def _stuff_base(value=0, h=2, w=2):
    planes = np.zeros((TAX.num_stuff, h, w), dtype=np.float32)
    planes[value] = 1.0
    return SoftLabelmap(planes, TAX.stuff_ids)


def test_overlay_empty_top_embeds_base():
    base = _stuff_base()
    top = SparseLabelmap(np.full((2, 2), 255))
    out = overlay(base, top, TAX)
    assert out.channel_semantics == TAX.class_ids
    assert np.array_equal(out.data[0], base.data[0])
    assert out.data[1:].sum() == 0


def test_overlay_hand_precedence():
    base = _stuff_base()  # road everywhere
    top = SparseLabelmap(np.array([[2, 255], [255, 255]]))
    out = overlay(base, top, TAX)
    assert out.data[:, 0, 0].tolist() == [0, 0, 1, 0]  # car wins, road zeroed
    assert out.data[0, 0, 1] == 1.0  # road elsewhere


def test_overlay_idempotent():
    base = _stuff_base()
    top = SparseLabelmap(np.array([[2, 255], [255, 3]]))
    once = overlay(base, top, TAX)
    twice = overlay(once, top, TAX)
    assert once == twice


def test_overlay_one_hot_columns_stay_one_hot():
    rng = np.random.default_rng(3)
    for _ in range(20):
        dense = random_dense(rng, TAX, 6, 6)
        base = encode_one_hot(dense, TAX, ALL)
        grid = np.full((6, 6), 255)
        grid[rng.random((6, 6)) < 0.3] = 2
        out = overlay(base, SparseLabelmap(grid), TAX)
        assert (out.data.sum(axis=0) <= 1.0 + 1e-6).all()


def test_overlay_dim_mismatch():
    with pytest.raises(InvalidInputError, match="mismatch"):
        overlay(_stuff_base(), SparseLabelmap(np.full((3, 3), 255)), TAX)


def test_overlay_rejects_stuff_in_top():
    top = SparseLabelmap(np.array([[0]]))
    with pytest.raises(InvalidInputError, match="non-thing"):
        overlay(_stuff_base(h=1, w=1), top, TAX)


# -- compose_final -----------------------------------------------------------

def test_compose_final_precedence_order():
    h = w = 2
    stuffs = _stuff_base(0, h, w)
    # things volume: person wins at (0,0); none wins elsewhere
    things = np.zeros((3, h, w), dtype=np.float32)
    things[2] = 0.8  # none
    things[1, 0, 0] = 0.9
    things_map = SoftLabelmap(things, (2, 3, 255))
    sparse = SparseLabelmap(np.array([[255, 2], [255, 255]]))  # input car at (0,1)
    out = compose_final(stuffs, things_map, sparse, TAX)
    assert out.data[:, 0, 1].tolist() == [0, 0, 1, 0]       # input car stamped
    assert out.data[3, 0, 0] == pytest.approx(0.9)          # generated person kept soft
    assert out.data[0, 0, 0] == 0.0                         # stuffs zeroed under it
    assert out.data[0, 1, 0] == 1.0                         # stuffs where none wins


def test_compose_final_requires_things_plus_none_layout():
    stuffs = _stuff_base()
    bad = SoftLabelmap(np.zeros((2, 2, 2), dtype=np.float32), (2, 3))
    with pytest.raises(InvalidInputError, match="channels"):
        compose_final(stuffs, bad, SparseLabelmap(np.full((2, 2), 255)), TAX)


# -- helpers -----------------------------------------------------------------

def test_embed_sparse_all_zero_columns():
    sparse = SparseLabelmap(np.array([[2, 255]]))
    soft = embed_sparse_all(sparse, TAX)
    assert soft.data[:, 0, 0].tolist() == [0, 0, 1, 0]
    assert soft.data[:, 0, 1].sum() == 0  # unlabeled column stays all-zero


def test_encode_stuff_planes_zero_at_things():
    dense = DenseLabelmap(np.array([[0, 2]]))
    soft = encode_stuff_planes(dense, TAX)
    assert soft.data[:, 0, 0].tolist() == [1, 0]
    assert soft.data[:, 0, 1].sum() == 0


def test_to_sparse_things():
    dense = DenseLabelmap(np.array([[0, 2], [3, 1]]))
    sparse = to_sparse_things(dense, TAX)
    assert sparse.data.tolist() == [[255, 2], [3, 255]]


# -- extract_boundaries ------------------------------------------------------

def test_uniform_map_has_no_boundary():
    inst = InstanceMap(np.full((5, 5), 26001))
    assert extract_boundaries(inst).data.sum() == 0


def test_two_column_split():
    grid = np.full((4, 4), 26001)
    grid[:, 2:] = 26002
    b = extract_boundaries(InstanceMap(grid)).data
    assert np.array_equal(b[:, 0], np.zeros(4))
    assert np.array_equal(b[:, 1], np.ones(4))
    assert np.array_equal(b[:, 2], np.ones(4))
    assert np.array_equal(b[:, 3], np.zeros(4))


def test_single_center_pixel():
    grid = np.full((3, 3), 7)
    grid[1, 1] = 26000
    b = extract_boundaries(InstanceMap(grid)).data
    expected = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)
    assert np.array_equal(b, expected)


def test_boundaries_match_brute_force_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        h, w = int(rng.integers(1, 17)), int(rng.integers(1, 17))
        inst = random_instances(rng, h, w, max_instances=8)
        assert np.array_equal(extract_boundaries(inst).data, brute_force_boundaries(inst.data))


def test_boundaries_invariant_under_relabeling():
    rng = np.random.default_rng(9)
    for _ in range(20):
        inst = random_instances(rng, 12, 12, max_instances=6)
        ids = np.unique(inst.data)
        remap = {int(old): 10_000 + i * 37 for i, old in enumerate(rng.permutation(ids))}
        relabeled = np.vectorize(remap.get)(inst.data)
        assert extract_boundaries(inst) == extract_boundaries(InstanceMap(relabeled))


# -- validate ----------------------------------------------------------------

def test_validate_ok_dense():
    assert validate(DenseLabelmap(np.array([[0, 2]])), TAX) == []


def test_validate_sparse_with_stuff_names_pixel():
    problems = validate(SparseLabelmap(np.array([[255, 0]])), TAX)
    assert len(problems) == 1
    assert "(x=1, y=0)" in problems[0]


def test_validate_soft_range():
    soft = SoftLabelmap(np.array([[[0.5, 1.2]]]), (0,))
    problems = validate(soft, TAX)
    assert len(problems) == 1 and "1.2" in problems[0]


def test_validate_instance_conventions():
    # stuff class with an instance-range id, and a thing class used as bare id
    bad = InstanceMap(np.array([[1001, 2]]))
    problems = validate(bad, TAX)
    assert len(problems) == 2


def test_boundary_values_enforced():
    with pytest.raises(InvalidInputError):
        BoundaryMap(np.array([[0, 2]]))


def test_types_are_immutable():
    dense = DenseLabelmap(np.array([[0]]))
    with pytest.raises(ValueError):
        dense.data[0, 0] = 1
