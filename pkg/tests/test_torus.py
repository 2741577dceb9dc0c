import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradphi.errors import DomainError, ResourceError
from gradphi.torus import TorusLattice, Weight, periodic_distance, translate, weight_eval


@pytest.mark.parametrize("d, L", [(0, 4), (2, 3), (2, 0), (1.5, 4), (2, 4.0)])
def test_rejects_bad_lattices(d, L):
    with pytest.raises(DomainError):
        TorusLattice(d, L)


def test_sizes_and_canonical_window():
    lat = TorusLattice(2, 6)
    assert lat.N == 36 and lat.shape == (6, 6)
    assert lat.canonical((3, -4)) == (-3, 2)
    assert lat.canonical((5, 7)) == (-1, 1)
    assert lat.index((-1, 7)) == (5, 1)


def test_coords_and_radius_match_canonical(lattice):
    flat = lattice.coords.reshape(lattice.d, -1).T
    for idx, c in zip(np.ndindex(*lattice.shape), flat):
        assert tuple(c) == lattice.canonical(idx)
    assert np.allclose(lattice.radius, np.sqrt((lattice.coords**2).sum(axis=0)))


def test_delta_and_axis_site():
    lat = TorusLattice(2, 4)
    f = lat.delta((1, -1))
    assert f.sum() == 1.0 and f[1, 3] == 1.0
    assert lat.axis_site(3, axis=1) == (0, 3)


def test_rejects_wrong_site_dimension():
    with pytest.raises(DomainError):
        TorusLattice(2, 4).canonical((1, 2, 3))


def test_periodic_distance_worked_values():
    lat = TorusLattice(2, 8)
    assert periodic_distance(lat, (0, 0), (7, 0)) == 1.0
    assert periodic_distance(lat, (1, 1), (6, 5)) == pytest.approx(np.hypot(3, 4))
    assert periodic_distance(lat, (0, 0), (4, 4)) == pytest.approx(np.hypot(4, 4))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.sampled_from([2, 4, 6, 8]), st.data())
def test_periodic_distance_is_a_translation_invariant_metric(d, L, data):
    lat = TorusLattice(d, L)
    site = st.tuples(*[st.integers(-2 * L, 2 * L)] * d)
    y, z, t = data.draw(site), data.draw(site), data.draw(site)
    dyz = periodic_distance(lat, y, z)
    assert dyz == pytest.approx(periodic_distance(lat, z, y))
    shifted = periodic_distance(lat, tuple(a + b for a, b in zip(y, t)), tuple(a + b for a, b in zip(z, t)))
    assert dyz == pytest.approx(shifted)
    assert dyz <= periodic_distance(lat, y, t) + periodic_distance(lat, t, z) + 1e-12
    assert dyz <= np.sqrt(d) * L / 2 + 1e-12


def test_radius_is_distance_to_origin(lattice):
    for idx in list(np.ndindex(*lattice.shape))[:40]:
        assert lattice.radius[idx] == pytest.approx(periodic_distance(lattice, (0,) * lattice.d, idx))


def test_translate_convention_and_group_law(rng):
    lat = TorusLattice(2, 6)
    h = rng.standard_normal(lat.shape)
    # (tau_x h)(z) = h(x + z)
    th = translate(lat, h, (2, -1))
    assert th[0, 0] == h[2, 5] and th[1, 3] == h[3, 2]
    both = translate(lat, translate(lat, h, (1, 2)), (3, -5))
    assert np.array_equal(both, translate(lat, h, (4, -3)))
    assert np.array_equal(translate(lat, th, (-2, 1)), h)


def test_translate_carries_leading_axes(rng):
    lat = TorusLattice(2, 4)
    h = rng.standard_normal((3,) + lat.shape)
    out = translate(lat, h, (1, 0))
    for k in range(3):
        assert np.array_equal(out[k], translate(lat, h[k], (1, 0)))
    with pytest.raises(DomainError):
        translate(lat, np.zeros((4, 5)), (1, 0))


def test_weight_validation():
    with pytest.raises(DomainError):
        Weight(2, 2.0)
    with pytest.raises(DomainError):
        Weight(2, 0.5, -2.5)
    with pytest.raises(DomainError):
        Weight(1, 0.5).one_point_array(TorusLattice(2, 4))


def test_weight_values():
    lat = TorusLattice(2, 8)
    w = Weight(2, 0.5)
    assert w(lat, (3, 4)) == pytest.approx(6.0**0.5)
    assert w(lat, (7, 0)) == pytest.approx(2.0**0.5)
    w2 = Weight(2, 0.5, -0.75)
    assert weight_eval(w2, lat, (3, 4), (0, 0)) == pytest.approx(6.0**0.5 * 6.0**-0.75)
    with pytest.raises(DomainError):
        weight_eval(w2, lat, (1, 1))
    with pytest.raises(DomainError):
        weight_eval(w, lat, (1, 1), (0, 0))


def test_two_point_table_matches_pointwise_evaluation():
    lat = TorusLattice(2, 4)
    w = Weight(2, 0.3, -0.6)
    table = w.two_point_array(lat)
    assert table.shape == lat.shape * 2
    for y in np.ndindex(*lat.shape):
        for z in [(0, 0), (1, 3), (2, 2)]:
            assert table[y + z] == pytest.approx(w(lat, y, z))


def test_two_point_table_size_cap():
    with pytest.raises(ResourceError):
        Weight(2, 0.1, 0.1).two_point_array(TorusLattice(2, 66))
    with pytest.raises(DomainError):
        Weight(2, 0.1).two_point_array(TorusLattice(2, 4))
