import math

import numpy as np
import pytest

from edgealign.chains import EdgeChains, estimate_tangent, geodesic_neighborhood
from edgealign.errors import InputFormatError
from edgealign.grids import EdgeLabelMap, PixelCoord


def chains_from(coords, shape=(12, 12)) -> EdgeChains:
    bits = np.zeros(shape, dtype=bool)
    for r, c in coords:
        bits[r, c] = True
    return EdgeChains.from_label_map(EdgeLabelMap(bits=bits))


def test_horizontal_chain_tangent_is_zero():
    ch = chains_from([(5, c) for c in range(2, 9)])
    theta, fallback = estimate_tangent(ch, PixelCoord(5, 5), 4)
    assert not fallback
    assert theta == pytest.approx(0.0, abs=1e-12)


def test_vertical_chain_tangent_is_half_pi():
    ch = chains_from([(r, 4) for r in range(2, 9)])
    theta, fallback = estimate_tangent(ch, PixelCoord(5, 4), 4)
    assert not fallback
    assert theta == pytest.approx(math.pi / 2, abs=1e-12)


def test_diagonal_staircase_tangent_matches_eigen_oracle():
    coords = [(i, i) for i in range(2, 8)]
    ch = chains_from(coords)
    theta, fallback = estimate_tangent(ch, PixelCoord(4, 4), 2)
    assert not fallback
    # independent principal-direction computation on the same point ball
    pts = np.array([(r, c) for r, c in coords if abs(r - 4) <= 2], dtype=np.float64)
    xs = pts[:, 1] - pts[:, 1].mean()
    ys = pts[:, 0] - pts[:, 0].mean()
    cov = np.array([[xs @ xs, xs @ ys], [xs @ ys, ys @ ys]])
    _, vecs = np.linalg.eigh(cov)
    want = math.atan2(vecs[1, -1], vecs[0, -1]) % math.pi
    assert theta == pytest.approx(want, abs=1e-9)
    assert theta == pytest.approx(math.pi / 4, abs=1e-9)


def test_isolated_pixel_falls_back():
    ch = chains_from([(3, 3)])
    theta, fallback = estimate_tangent(ch, PixelCoord(3, 3), 4)
    assert fallback
    assert theta == 0.0


def test_tangent_requires_edge_pixel():
    ch = chains_from([(3, 3)])
    with pytest.raises(InputFormatError):
        estimate_tangent(ch, PixelCoord(0, 0), 4)


def test_geodesic_isolated_pixel_empty():
    ch = chains_from([(3, 3)])
    assert geodesic_neighborhood(ch, PixelCoord(3, 3), 3) == []


def test_geodesic_middle_of_five_chain():
    ch = chains_from([(5, c) for c in range(3, 8)])
    got = geodesic_neighborhood(ch, PixelCoord(5, 5), 1)
    assert got == [PixelCoord(5, 4), PixelCoord(5, 6)]


def test_geodesic_middle_of_nine_chain_radius_three():
    ch = chains_from([(5, c) for c in range(1, 10)])
    got = geodesic_neighborhood(ch, PixelCoord(5, 5), 3)
    assert len(got) == 6
    assert got == [PixelCoord(5, c) for c in (2, 3, 4, 6, 7, 8)]


def test_chains_cover_every_pixel_once():
    coords = [(2, 2), (2, 3), (3, 4), (4, 4), (8, 8), (9, 9)]
    ch = chains_from(coords)
    seen = [p for chain in ch.chains for p in chain]
    assert sorted(seen) == sorted(PixelCoord(r, c) for r, c in coords)
    assert len(seen) == len(set(seen))
    for chain in ch.chains:
        for a, b in zip(chain, chain[1:]):
            assert max(abs(a.row - b.row), abs(a.col - b.col)) == 1


def test_geodesic_distance_follows_the_edge_not_the_plane():
    # a U shape: the two tips are near in space but far along the edge
    coords = [(2, 2), (3, 2), (4, 2), (5, 3), (4, 4), (3, 4), (2, 4)]
    ch = chains_from(coords)
    near_tip = geodesic_neighborhood(ch, PixelCoord(2, 2), 2)
    assert PixelCoord(2, 4) not in near_tip
    assert PixelCoord(4, 2) in near_tip
