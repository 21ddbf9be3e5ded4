import numpy as np
import pytest

from panicsim.utils import (
    closest_on_rect,
    closest_on_segment,
    rect_inside,
    rects_overlap,
    segment_distance,
    segment_hits_rect_interior,
)


def test_closest_on_segment() -> None:
    seg = (0.0, 0.0, 4.0, 0.0)
    points = np.array([[2.0, 3.0], [-1.0, 1.0], [6.0, -2.0]])
    np.testing.assert_array_equal(closest_on_segment(points, seg), [[2, 0], [0, 0], [4, 0]])
    np.testing.assert_allclose(segment_distance(points, seg), [3.0, np.sqrt(2), np.sqrt(8)])
    assert segment_distance((1.0, 1.0), (2.0, 2.0, 2.0, 2.0)) == pytest.approx(np.sqrt(2))


def test_closest_on_rect_outside() -> None:
    closest, normal, dist = closest_on_rect(np.array([[5.0, 2.0], [-3.0, -4.0]]), (0, 0, 2, 2))
    np.testing.assert_array_equal(closest, [[2.0, 2.0], [0.0, 0.0]])
    np.testing.assert_allclose(normal, [[1.0, 0.0], [-0.6, -0.8]])
    np.testing.assert_allclose(dist, [3.0, 5.0])


def test_closest_on_rect_inside() -> None:
    closest, normal, dist = closest_on_rect(np.array([[1.8, 1.0], [1.0, 0.3]]), (0, 0, 2, 2))
    np.testing.assert_allclose(closest, [[2.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(normal, [[1.0, 0.0], [0.0, -1.0]])
    np.testing.assert_allclose(dist, [-0.2, -0.3])
    # centre ties go to the left face
    _, normal, _ = closest_on_rect((1.0, 1.0), (0, 0, 2, 2))
    np.testing.assert_array_equal(normal, [-1.0, 0.0])


@pytest.mark.parametrize(
    "segment, expected",
    [
        ((-1, 1, 3, 1), True),
        ((0, 0, 2, 0), False),
        ((2, -1, 2, 3), False),
        ((-1, -1, 0, 0), False),
        ((0.5, 0.5, 1.5, 1.5), True),
        ((3, 3, 4, 4), False),
        ((-1, 3, 3, -1), True),
    ],
)
def test_segment_hits_rect_interior(segment, expected) -> None:
    assert segment_hits_rect_interior(segment, (0, 0, 2, 2)) is expected


def test_rect_relations() -> None:
    assert rects_overlap((0, 0, 2, 2), (1, 1, 2, 2))
    assert not rects_overlap((0, 0, 2, 2), (2, 0, 1, 1))
    assert rect_inside((0, 0, 5, 5), (0, 0, 5, 5))
    assert not rect_inside((4, 4, 2, 2), (0, 0, 5, 5))
