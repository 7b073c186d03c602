import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sctomp.corridor import (
    ConvexRegion,
    Corridor,
    box,
    box_split,
    contains,
    load_corridor,
    region_of,
    save_corridor,
)
from sctomp.errors import CorridorError, CorridorParseError, DomainError, UnsupportedError

CUBE = box([0, 0, 0], [1, 1, 1])


def two_boxes(shift=1.0):
    return {
        "regions": [CUBE.to_dict(), box([shift, 0, 0], [shift + 1, 1, 1]).to_dict()],
        "start": [0.1, 0.5, 0.5],
        "goal": [shift + 0.9, 0.5, 0.5],
    }


@pytest.mark.parametrize(
    "p, tol, expected",
    [((0.5, 0.5, 0.5), 0.0, True), ((1.0000001, 0.5, 0.5), 1e-9, False), ((1, 1, 1), 0.0, True)],
)
def test_contains_examples(p, tol, expected):
    assert contains(CUBE, p, tol) is expected


def test_vertices_are_contained():
    for v in CUBE.vertices:
        assert contains(CUBE, v, 1e-9)


def test_region_of_examples():
    c = Corridor(box_split(box([0, 0, 0], [4, 1, 1]), 3), [0.1, 0.5, 0.5], [3.9, 0.5, 0.5])
    assert c.m == 4
    assert [region_of(c, x) for x in (0.0, 2.5, 4.0)] == [1, 3, 4]
    for bad in (-0.1, 4.01, float("nan")):
        with pytest.raises(DomainError):
            region_of(c, bad)


@given(st.lists(st.floats(0, 4), min_size=2, max_size=30))
def test_region_of_monotone(xs):
    c = _chain4()
    ks = [region_of(c, x) for x in sorted(xs)]
    assert ks == sorted(ks)


_CACHE = {}


def _chain4():
    if "c" not in _CACHE:
        _CACHE["c"] = Corridor(box_split(box([0, 0, 0], [4, 1, 1]), 3),
                               [0.1, 0.5, 0.5], [3.9, 0.5, 0.5])
    return _CACHE["c"]


def test_load_two_boxes(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(two_boxes()))
    c = load_corridor(path)
    assert c.m == 2
    q = c.overlap_points[0]
    assert contains(c.regions[0], q, 1e-9) and contains(c.regions[1], q, 1e-9)


def test_disjoint_chain_names_index(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(two_boxes(shift=3.0)))
    with pytest.raises(CorridorError) as err:
        load_corridor(path)
    assert err.value.index == 2


def test_goal_outside(tmp_path):
    doc = two_boxes()
    doc["goal"] = [5, 0.5, 0.5]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(CorridorError) as err:
        load_corridor(path)
    assert err.value.field == "goal"
    assert "goal" in str(err.value)


def test_parse_errors(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(CorridorParseError):
        load_corridor(path)
    path.write_text(json.dumps({"regions": [], "start": [0, 0, 0], "goal": [0, 0, 0]}))
    with pytest.raises(CorridorParseError):
        load_corridor(path)
    doc = two_boxes()
    doc["regions"][1]["b"] = [1, 2]
    path.write_text(json.dumps(doc))
    with pytest.raises(CorridorParseError) as err:
        load_corridor(path)
    assert err.value.index == 2


def test_unbounded_and_empty_regions():
    half = ConvexRegion([[1, 0, 0]], [1])
    with pytest.raises(CorridorError):
        Corridor([half], [0, 0, 0], [0.5, 0, 0])
    empty = ConvexRegion([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
                         [0, -1, 1, 1, 1, 1])
    with pytest.raises(CorridorError):
        Corridor([empty], [0, 0, 0], [0, 0, 0])


def test_bad_vertex_rejected():
    r = ConvexRegion(CUBE.A, CUBE.b, [[0, 0, 0], [2, 0, 0]])
    with pytest.raises(CorridorError):
        Corridor([r], [0.5, 0.5, 0.5], [0.5, 0.5, 0.5])


def test_roundtrip_file(tmp_path):
    c = Corridor([CUBE], [0.1, 0.5, 0.5], [0.9, 0.5, 0.5], start_frame=[2, 0, 0, 0])
    save_corridor(c, tmp_path / "c.json")
    c2 = load_corridor(tmp_path / "c.json")
    np.testing.assert_array_equal(c2.regions[0].A, c.regions[0].A)
    np.testing.assert_allclose(c2.start_frame, [1, 0, 0, 0])


def test_box_split_examples():
    assert box_split(CUBE, 0) == [CUBE]
    a, b = box_split(box([0, 0, 0], [2, 1, 1]), 1)
    assert a.violation([1.05, 0.5, 0.5]) == pytest.approx(0.0)
    assert b.violation([0.95, 0.5, 0.5]) == pytest.approx(0.0)
    np.testing.assert_allclose(a.b[[0, 3]], [1.05, 0.0])
    np.testing.assert_allclose(b.b[[0, 3]], [2.0, -0.95])
    parts = box_split(box([0, 0, 0], [4, 1, 1]), 3)
    assert len(parts) == 4
    c = Corridor(parts, [0.1, 0.5, 0.5], [3.9, 0.5, 0.5])
    assert len(c.overlap_points) == 3


def test_box_split_rejects_rotated():
    r = ConvexRegion([[1, 1, 0], [-1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1]],
                     [1, 0, 0, 1, 1, 0])
    with pytest.raises(UnsupportedError):
        box_split(r, 1)


def test_overlap_points_inside_both(fixtures):
    for name in ("l_3d.json", "two_box_3d.json", "l_planar.json"):
        c = load_corridor(fixtures / name)
        for k, q in enumerate(c.overlap_points):
            assert contains(c.regions[k], q) and contains(c.regions[k + 1], q)


def test_planar_detection(fixtures):
    assert load_corridor(fixtures / "l_planar.json").is_planar()
    assert not load_corridor(fixtures / "l_3d.json").is_planar()
