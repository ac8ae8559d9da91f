import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gegd.grid import Brush, DesignGrid, Symmetry, expand_symmetric, mirror_positions
from oracles import count_orbits


def test_expand_two_by_four():
    g = DesignGrid(2, 4, 1, "d1-cols")
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    np.testing.assert_array_equal(expand_symmetric([a, b, c, d], g), [[a, b, b, a], [c, d, d, c]])


def test_expand_without_symmetry_is_identity():
    g = DesignGrid(3, 4, 2)
    v = np.arange(12.0)
    np.testing.assert_array_equal(expand_symmetric(v, g), v.reshape(3, 4))


def test_expand_length_mismatch():
    with pytest.raises(ValueError):
        expand_symmetric(np.zeros(5), DesignGrid(2, 4, 1, "d1-cols"))


@pytest.mark.parametrize("rows,cols,sym,axis", [
    (35, 70, "d1-cols", "cols"), (35, 70, "d1-rows", "rows"), (18, 36, "d1-cols", "cols"),
    (5, 7, "d1-cols", "cols"), (7, 5, "d1-rows", "rows"), (4, 6, None, None),
])
def test_parameter_count_matches_orbit_count(rows, cols, sym, axis):
    g = DesignGrid(rows, cols, 1, sym)
    assert g.n_params == count_orbits(rows, cols, axis)


def test_full_scale_parameter_count():
    # mirror c <-> W-1-c on 70 columns gives 35 * 35 orbits
    assert DesignGrid(35, 70, 7, "d1-cols").n_params == 1225


def test_mirror_positions():
    g4 = DesignGrid(3, 4, 1, "d1-cols")
    assert mirror_positions((1, 0), g4) == {(1, 0), (1, 3)}
    g5 = DesignGrid(3, 5, 1, "d1-cols")
    assert mirror_positions((0, 2), g5) == {(0, 2)}
    assert mirror_positions((2, 1), DesignGrid(3, 5, 1)) == {(2, 1)}
    with pytest.raises(IndexError):
        mirror_positions((3, 0), g5)


def test_symmetry_parse():
    assert Symmetry.parse(None) is Symmetry.NONE
    assert Symmetry.parse("d1-cols") is Symmetry.D1_COLS
    with pytest.raises(ValueError):
        Symmetry.parse("c4")


def test_grid_validation():
    with pytest.raises(ValueError):
        DesignGrid(3, 3, 4)
    with pytest.raises(ValueError):
        DesignGrid(0, 3, 1)


@pytest.mark.parametrize("d", range(1, 10))
def test_brush_mask_symmetries(d):
    m = Brush(d).mask
    assert m.shape == (d, d)
    np.testing.assert_array_equal(m, np.rot90(m))
    np.testing.assert_array_equal(m, m[::-1])
    np.testing.assert_array_equal(m, m[:, ::-1])


def test_brush_membership_rule():
    # pixel-center distance from the disk center within d/2
    for d in range(1, 9):
        centers = np.arange(d) + 0.5 - d / 2
        expect = centers[:, None] ** 2 + centers[None, :] ** 2 <= (d / 2) ** 2
        np.testing.assert_array_equal(Brush(d).mask, expect)
    assert Brush(1).size == 1
    sizes = [Brush(d).size for d in range(1, 12)]
    assert sizes == sorted(sizes)


def test_brush_rejects_bad_diameter():
    with pytest.raises(ValueError):
        Brush(0)
    with pytest.raises(ValueError):
        Brush(2.5)


@settings(max_examples=60, deadline=None)
@given(rows=st.integers(1, 9), cols=st.integers(1, 9), sym=st.sampled_from(["none", "d1-cols", "d1-rows"]),
       seed=st.integers(0, 2**31))
def test_restrict_expand_roundtrip(rows, cols, sym, seed):
    g = DesignGrid(rows, cols, 1, sym)
    rng = np.random.default_rng(seed)
    half = rng.normal(size=g.n_params)
    full = expand_symmetric(half, g)
    assert g.is_symmetric(full)
    np.testing.assert_array_equal(g.restrict(full), half)
    np.testing.assert_array_equal(expand_symmetric(g.restrict(full), g), full)
    # adjoint identity <E h, G> = <h, E^T G>
    big = rng.normal(size=g.shape)
    assert np.isclose(np.sum(full * big), half @ g.restrict_adjoint(big))
