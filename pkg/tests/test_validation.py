import numpy as np
import pytest

from tetcorr import box_mesh
from tetcorr.validation import (check_barycentric, check_points,
                                check_simplices, check_unit_volume)


def test_check_points_accepts_lists_and_casts():
    out = check_points([[0, 1, 2], [3, 4, 5]])
    assert out.dtype == np.float64
    assert out.flags["C_CONTIGUOUS"]
    np.testing.assert_array_equal(out, [[0, 1, 2], [3, 4, 5]])


def test_check_points_rejects_bad_shape_and_nonfinite():
    with pytest.raises(ValueError, match="shape"):
        check_points(np.zeros((4, 2)))
    with pytest.raises(ValueError, match="non-finite"):
        check_points([[0.0, np.nan, 0.0]])
    with pytest.raises(ValueError, match="probe"):
        check_points(np.zeros((1, 4)), name="probe")


def test_check_simplices_range_and_duplicates():
    good = check_simplices([[0, 1, 2, 3]], 4, 4)
    assert good.dtype == np.int64
    with pytest.raises(ValueError, match="lie in"):
        check_simplices([[0, 1, 2, 4]], 4, 4)
    with pytest.raises(ValueError, match="lie in"):
        check_simplices([[-1, 1, 2, 3]], 4, 4)
    with pytest.raises(ValueError, match="repeats"):
        check_simplices([[0, 1, 2, 2]], 4, 4)
    with pytest.raises(ValueError, match="shape"):
        check_simplices([[0, 1, 2]], 4, 4)


def test_check_barycentric_normalizes_tiny_negatives():
    w = check_barycentric([[1.0 + 1e-12, -1e-12, 0.0, 0.0]], 4)
    assert w.min() >= 0.0
    np.testing.assert_allclose(w.sum(axis=1), 1.0, rtol=0, atol=1e-15)


def test_check_barycentric_rejects_bad_rows():
    with pytest.raises(ValueError, match="negative"):
        check_barycentric([[1.2, -0.2, 0.0, 0.0]], 4)
    with pytest.raises(ValueError, match="sum to 1"):
        check_barycentric([[0.5, 0.2, 0.0, 0.0]], 4)
    with pytest.raises(ValueError, match="non-finite"):
        check_barycentric([[np.inf, 0.0, 0.0, 0.0]], 4)


def test_check_unit_volume():
    m = box_mesh(2, 2, 2, size=(2.0, 1.0, 1.0))
    with pytest.raises(ValueError, match="unit volume"):
        check_unit_volume(m)
    check_unit_volume(m.normalized())
