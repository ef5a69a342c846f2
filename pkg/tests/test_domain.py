import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tlsph.domain import (KAPPA, DomainError, ParticleDomain, brute_force_neighbors,
                          build_neighbors, generate_lattice)


def test_1d_lattice_counts_and_volumes():
    d = generate_lattice([2.0], 0.01)
    assert d.count == 200
    assert np.allclose(d.volumes, 0.01)
    assert d.volumes.sum() == pytest.approx(2.0, abs=1e-12)


def test_2d_lattice():
    d = generate_lattice([2.0, 2.0], 0.2, density=1100.0)
    assert d.count == 100
    assert np.allclose(d.volumes, 0.04)
    assert np.array_equal(d.masses, 1100.0 * d.volumes)


def test_column_lattice_count():
    d = generate_lattice([1.0, 1.0, 6.0], 1.0 / 11.0)
    assert d.count == 11 * 11 * 66
    assert d.volumes.sum() == pytest.approx(6.0, rel=1e-12)


def test_node_placement_volumes_sum_to_box():
    d = generate_lattice([2.0, 1.0], 0.25, placement="node")
    assert d.count == 9 * 5
    assert d.volumes.sum() == pytest.approx(2.0, rel=1e-14)
    assert d.ref_positions.min(axis=0) == pytest.approx([0.0, 0.0])
    assert d.ref_positions.max(axis=0) == pytest.approx([2.0, 1.0])


def test_support_radius_is_kappa_h():
    d = generate_lattice([1.0], 0.1, h_ratio=1.3)
    assert KAPPA == 2.0
    assert d.support_radius == pytest.approx(2.0 * 0.13)


@pytest.mark.parametrize("spacing", [0.0, -0.1])
def test_nonpositive_spacing_rejected(spacing):
    with pytest.raises(DomainError):
        generate_lattice([1.0], spacing)


def test_extent_mismatch_rejected():
    with pytest.raises(DomainError):
        generate_lattice([1.0, 1.05], 0.1)


def _domain(X, R):
    X = np.asarray(X, float)
    n, dim = X.shape
    V = np.ones(n)
    return ParticleDomain(X, V, V, 1.0, R / KAPPA, R, X.min(0), X.max(0))


def test_single_particle_has_only_itself():
    nb = build_neighbors(_domain([[0.0, 0.0]], 1.0))
    assert nb.sets() == [{0}]


def test_1d_interior_neighbour_count():
    d = generate_lattice([4.0], 0.125, smoothing_length=0.25)   # R = 4 d
    nb = build_neighbors(d)
    # |X_j - X_i| < 4 d leaves three lattice neighbours on each side plus the self entry
    assert nb.counts()[d.count // 2] == 7
    assert sorted(nb.r0[nb.offsets[16]:nb.offsets[17]] / d.spacing) == pytest.approx(
        [0, 1, 1, 2, 2, 3, 3])


def test_strict_support_boundary():
    # a pair at exactly R is excluded
    nb = build_neighbors(_domain([[0.0], [1.0]], 1.0))
    assert nb.sets() == [{0}, {1}]


def test_reverse_and_self_pairs():
    d = generate_lattice([1.0, 1.0], 0.1, h_ratio=1.3)
    nb = build_neighbors(d)
    assert np.array_equal(nb.i[nb.reverse], nb.j)
    assert np.array_equal(nb.j[nb.reverse], nb.i)
    assert nb.self_mask.sum() == d.count
    other = ~nb.self_mask
    X = d.ref_positions
    e = (X[nb.j] - X[nb.i])[other] / nb.r0[other, None]
    assert np.allclose(nb.unit[other], e)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 300), dim=st.integers(1, 3), R=st.floats(0.05, 0.6),
       seed=st.integers(0, 2**31 - 1))
def test_neighbours_match_brute_force(n, dim, R, seed):
    X = np.random.default_rng(seed).uniform(0.0, 1.0, (n, dim))
    nb = build_neighbors(_domain(X, R))
    assert nb.sets() == brute_force_neighbors(X, R)


def test_neighbours_symmetric_on_lattice():
    d = generate_lattice([1.0, 1.0, 1.0], 0.125, h_ratio=1.2)
    sets = build_neighbors(d).sets()
    for i, s in enumerate(sets):
        assert i in s
        for j in s:
            assert i in sets[j]


def test_face_selection():
    d = generate_lattice([1.0, 1.0, 6.0], 0.5)
    bottom = d.face(2, "min")
    assert bottom.size == 4
    assert np.allclose(d.ref_positions[bottom, 2], 0.25)
