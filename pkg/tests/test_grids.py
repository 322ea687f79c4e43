import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgealign.errors import InputFormatError
from edgealign.grids import (
    EdgeLabelMap,
    Mapping,
    MultiLabelMap,
    PixelCoord,
    ProbMap,
    clamp_probs,
    edge_pixels,
    extract_class,
)


def test_edge_pixels_empty():
    m = EdgeLabelMap(bits=np.zeros((3, 3), dtype=bool))
    assert edge_pixels(m) == []


def test_edge_pixels_singleton():
    bits = np.zeros((3, 3), dtype=bool)
    bits[1, 1] = True
    assert edge_pixels(EdgeLabelMap(bits=bits)) == [PixelCoord(1, 1)]


def test_edge_pixels_row_major_order():
    bits = np.zeros((3, 3), dtype=bool)
    bits[0, 2] = True
    bits[2, 0] = True
    assert edge_pixels(EdgeLabelMap(bits=bits)) == [PixelCoord(0, 2), PixelCoord(2, 0)]


def test_edge_count_matches_popcount():
    rng = np.random.default_rng(0)
    bits = rng.uniform(size=(7, 9)) < 0.4
    m = EdgeLabelMap(bits=bits)
    assert m.edge_count() == int(bits.sum()) == len(edge_pixels(m))


def test_extract_class_all_zero():
    m = MultiLabelMap(field=np.zeros((4, 4), dtype=np.uint32), num_classes=5)
    for k in range(5):
        assert extract_class(m, k).edge_count() == 0


def test_extract_class_single_bit():
    field = np.zeros((3, 3), dtype=np.uint32)
    field[1, 2] = 1 << 3
    m = MultiLabelMap(field=field, num_classes=8)
    assert edge_pixels(extract_class(m, 3)) == [PixelCoord(1, 2)]
    for k in (0, 1, 2, 4, 5, 6, 7):
        assert extract_class(m, k).edge_count() == 0


def test_extract_class_multiple_bits():
    field = np.zeros((2, 2), dtype=np.uint32)
    field[0, 0] = (1 << 0) | (1 << 3)
    m = MultiLabelMap(field=field, num_classes=4)
    assert extract_class(m, 0).bits[0, 0]
    assert extract_class(m, 3).bits[0, 0]
    assert not extract_class(m, 1).bits[0, 0]


def test_extract_class_out_of_range():
    m = MultiLabelMap(field=np.zeros((2, 2), dtype=np.uint32), num_classes=3)
    with pytest.raises(InputFormatError):
        extract_class(m, 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 31 - 1))
def test_extract_then_recombine_roundtrips(num_classes, seed):
    rng = np.random.default_rng(seed)
    field = rng.integers(0, 1 << num_classes, size=(5, 6), dtype=np.uint32)
    m = MultiLabelMap(field=field, num_classes=num_classes)
    planes = [extract_class(m, k) for k in range(num_classes)]
    rebuilt = MultiLabelMap.from_planes(planes)
    assert np.array_equal(rebuilt.field, m.field)
    assert np.array_equal(MultiLabelMap.from_planes(m.to_bit_planes()).field, m.field)
    for k in range(num_classes):
        assert np.array_equal(m.to_bit_planes()[k], planes[k].bits)


def test_clamp_probs_examples():
    p = ProbMap(planes=np.array([[[0.5, 0.0, 1.0]]], dtype=np.float32))
    c = clamp_probs(p, 1e-6)
    assert c.planes[0, 0, 0] == np.float32(0.5)
    assert c.planes[0, 0, 1] == np.float32(1e-6)
    assert c.planes[0, 0, 2] == np.float32(1.0) - np.float32(1e-6)


def test_clamp_probs_epsilon_range():
    p = ProbMap(planes=np.full((1, 2, 2), 0.5, dtype=np.float32))
    for bad in (0.0, 0.5, -1.0, 0.7):
        with pytest.raises(InputFormatError):
            clamp_probs(p, bad)


def test_prob_map_rejects_out_of_range():
    with pytest.raises(InputFormatError):
        ProbMap(planes=np.array([[[1.5]]], dtype=np.float32))
    with pytest.raises(InputFormatError):
        ProbMap(planes=np.array([[[-0.1]]], dtype=np.float32))


def test_multilabel_rejects_stray_bits():
    field = np.full((2, 2), 1 << 5, dtype=np.uint32)
    with pytest.raises(InputFormatError):
        MultiLabelMap(field=field, num_classes=3)


def test_multilabel_full_width():
    field = np.full((2, 2), 0xFFFFFFFF, dtype=np.uint32)
    m = MultiLabelMap(field=field, num_classes=32)
    assert extract_class(m, 31).edge_count() == 4
    assert np.array_equal(MultiLabelMap.from_planes(m.to_bit_planes()).field, m.field)
    with pytest.raises(InputFormatError):
        MultiLabelMap(field=field, num_classes=33)


def test_mapping_rejects_duplicate_targets():
    src = np.array([[0, 0], [0, 1]], dtype=np.int32)
    tgt = np.array([[1, 1], [1, 1]], dtype=np.int32)
    with pytest.raises(InputFormatError):
        Mapping(sources=src, targets=tgt)


def test_mapping_identity_and_displacements():
    src = np.array([[0, 1], [2, 3]], dtype=np.int32)
    m = Mapping.identity(src)
    assert len(m) == 2
    assert np.all(m.displacements() == 0.0)
    assert m.pairs[0] == (PixelCoord(0, 1), PixelCoord(0, 1))


def test_grids_are_immutable():
    m = EdgeLabelMap(bits=np.zeros((2, 2), dtype=bool))
    with pytest.raises(ValueError):
        m.bits[0, 0] = True
    p = ProbMap(planes=np.zeros((1, 2, 2), dtype=np.float32))
    with pytest.raises(ValueError):
        p.planes[0, 0, 0] = 0.5
