from math import comb

import pytest

from holojet.multiindex import JetLayout, append, enumerate_indices, strict_subsets


def test_enumeration_is_graded_and_complete():
    idx = enumerate_indices(2, 3)
    assert len(idx) == comb(5, 3)
    assert [len(I) for I in idx] == sorted(len(I) for I in idx)
    assert idx[:3] == [(), (0,), (1,)]


def test_append_keeps_indices_sorted():
    assert append((1,), 0) == (0, 1)
    with pytest.raises(ValueError):
        append((0,), -1)


def test_strict_subset_multiplicities_sum_to_power_of_two():
    for I in [(0,), (0, 0), (0, 1), (0, 0, 1), (0, 0, 0, 1, 1)]:
        total = sum(m for _, _, m in strict_subsets(I))
        assert total == 2 ** len(I) - 1


def test_layout_names_and_prefix_property():
    lay = JetLayout(("x", "y"), ("f",), 2)
    assert lay.coord_names == ["x", "y", "f", "f_x", "f_y", "f_xx", "f_xy", "f_yy"]
    assert lay.jet_dim == 6
    low = lay.truncate(1)
    assert lay.coord_names[: low.dim] == low.coord_names
    assert lay.index(0, (1, 0)) == lay.index(0, (0, 1))


def test_layout_rejects_colliding_names():
    with pytest.raises(ValueError):
        JetLayout(("x",), ("f", "f_x"), 1)
