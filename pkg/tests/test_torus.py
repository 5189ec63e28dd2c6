import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfgilbert.errors import ParameterError
from sfgilbert.torus import (
    Box,
    DyadicCubeIndex,
    TorusPoint,
    ball_contains,
    boxes_intersect_on_torus,
    canonicalize,
    cube_coords_of,
    dyadic_cube,
    max_distance,
    toroidal_distance,
    unit_ball_volume,
)

N = 10.0
coord = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)
pt2 = st.tuples(coord, coord).map(lambda c: TorusPoint(c, N))


def test_wraparound_across_one_face():
    assert toroidal_distance(TorusPoint((4.5, 0), N), TorusPoint((-4.5, 0), N)) == pytest.approx(1.0)


def test_identity():
    a = TorusPoint((1.25, -3.5), N)
    assert toroidal_distance(a, a) == 0.0


@pytest.mark.parametrize("eps", [1e-1, 1e-3, 1e-6])
def test_corner_wrap_goes_to_zero(eps):
    a = TorusPoint((5 - eps, 5 - eps), N)
    b = TorusPoint((-5 + eps, -5 + eps), N)
    assert toroidal_distance(a, b) == pytest.approx(2 * eps * math.sqrt(2), rel=1e-6, abs=1e-12)


def test_canonical_range_is_half_open():
    p = TorusPoint((5.0, -5.0), N)
    assert p.coords == (-5.0, -5.0)
    assert np.all(canonicalize(np.array([[12.5, -17.5]]), N) == [[2.5, 2.5]])


def test_mismatched_points_rejected():
    with pytest.raises(ParameterError):
        toroidal_distance(TorusPoint((0, 0), 10), TorusPoint((0, 0), 12))
    with pytest.raises(ParameterError):
        toroidal_distance(TorusPoint((0, 0), 10), TorusPoint((0, 0, 0), 10))
    with pytest.raises(ParameterError):
        TorusPoint((0.0,), 10)


def test_ball_contains_examples():
    c = TorusPoint((4.5, 0), N)
    assert ball_contains(c, 0.0, c)
    assert ball_contains(c, 1.2, TorusPoint((-4.5, 0), N))
    assert not ball_contains(c, 0.9, TorusPoint((-4.5, 0), N))
    with pytest.raises(ParameterError):
        ball_contains(c, -1.0, c)


@given(pt2, pt2)
def test_full_radius_ball_is_whole_torus(a, b):
    assert ball_contains(a, math.sqrt(2) * N / 2, b)


@pytest.mark.parametrize("d,expected", [(2, math.pi), (3, 4 * math.pi / 3), (4, math.pi**2 / 2)])
def test_unit_ball_volume(d, expected):
    assert unit_ball_volume(d) == pytest.approx(expected, rel=1e-14)


def test_unit_ball_volume_recursion_and_error():
    for d in range(3, 10):
        assert unit_ball_volume(d) == pytest.approx(unit_ball_volume(d - 2) * 2 * math.pi / d, rel=1e-13)
    with pytest.raises(ParameterError):
        unit_ball_volume(0)


@settings(max_examples=200)
@given(pt2, pt2, pt2)
def test_metric_axioms(a, b, c):
    ab, ba = toroidal_distance(a, b), toroidal_distance(b, a)
    assert ab == ba
    assert 0 <= ab <= max_distance(2, N) + 1e-12
    assert toroidal_distance(a, c) <= ab + toroidal_distance(b, c) + 1e-9


@settings(max_examples=200)
@given(pt2, pt2)
def test_minimal_image_beats_every_lift(a, b):
    x, y = np.array(a.coords), np.array(b.coords)
    lifts = [np.linalg.norm(x - y - N * np.array(s)) for s in itertools.product((-1, 0, 1), repeat=2)]
    assert toroidal_distance(a, b) == pytest.approx(min(lifts), abs=1e-9)
    assert all(toroidal_distance(a, b) <= v + 1e-9 for v in lifts)


def test_dyadic_cube_examples():
    root = dyadic_cube(DyadicCubeIndex((), 2), 8)
    assert root.lower == (-4.0, -4.0) and root.side == 8.0
    q = dyadic_cube(DyadicCubeIndex(((1, 0),), 2), 8)
    assert q.lower == (0.0, -4.0) and q.upper == (4.0, 0.0)


def test_malformed_index():
    with pytest.raises(ParameterError):
        DyadicCubeIndex(((2, 0),), 2)
    with pytest.raises(ParameterError):
        DyadicCubeIndex(((1, 0, 1),), 2)


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_level_cubes_tile_the_torus(level, rng):
    n = 8.0
    cubes = [DyadicCubeIndex.from_integer_coords(c, level) for c in itertools.product(range(2**level), repeat=2)]
    boxes = [dyadic_cube(c, n) for c in cubes]
    assert sum(b.volume() for b in boxes) == pytest.approx(n**2)
    pts = canonicalize(rng.uniform(-n, n, size=(300, 2)), n)
    # include points on cube faces
    pts = np.vstack([pts, [[-4.0, -4.0], [0.0, 0.0], [2.0, -1.0]]])
    for p in pts:
        hits = [i for i, b in enumerate(boxes) if b.contains(p)]
        assert len(hits) == 1
        assert cubes[hits[0]].integer_coords() == tuple(cube_coords_of(p[None, :], n, level)[0])


def test_children_partition_parent():
    parent = DyadicCubeIndex(((0, 1),), 2)
    pb = dyadic_cube(parent, 8)
    kids = [dyadic_cube(c, 8) for c in parent.children()]
    assert len(kids) == 4
    assert sum(k.volume() for k in kids) == pytest.approx(pb.volume())
    for k in kids:
        assert all(pl <= kl and ku <= pu for pl, kl, pu, ku in zip(pb.lower, k.lower, pb.upper, k.upper))


def test_integer_coords_roundtrip():
    for level in range(4):
        for c in itertools.product(range(2**level), repeat=3):
            idx = DyadicCubeIndex.from_integer_coords(c, level)
            assert idx.level == level and idx.integer_coords() == c


def test_boxes_intersect_across_the_wrap():
    a = Box((-4.0, -4.0), 2.0)
    b = Box((2.0, -4.0), 2.0)
    assert boxes_intersect_on_torus(a, b, 8.0)
    assert not boxes_intersect_on_torus(a, Box((-1.0, -1.0), 1.0), 8.0)
