import io

import numpy as np
import pytest

from screwtb.lattice import LatticeError, build_lattice
from screwtb.operators import (
    canonical_kz,
    commutator_check,
    core_projection,
    cut_projection,
    dump_triplets,
    invariance_defect_radius,
    propagation,
    ring_projection,
    shift_x,
    shift_y,
)


def basis(lat, site):
    e = np.zeros(lat.site_count, dtype=complex)
    e[lat.index[site]] = 1.0
    return e


def test_canonical_kz_periodic_idempotent():
    for kz in (0.0, 0.1, 1.5, np.pi, 5.9):
        a = canonical_kz(kz)
        b = canonical_kz(kz + 2 * np.pi)
        assert a == b
        assert canonical_kz(a) == a
        assert abs(a - kz) < 1e-12


def test_shift_x_moves_sites():
    lat = build_lattice(2)
    sx = shift_x(lat).matrix
    assert np.array_equal(sx @ basis(lat, (0, 0)), basis(lat, (1, 0)))
    # bond leaving the open truncation is dropped
    assert np.array_equal(sx @ basis(lat, (2, 0)), np.zeros(25))


def test_shift_y_phases():
    lat = build_lattice(3)
    sy0 = shift_y(lat, 0.0).matrix
    assert np.array_equal(sy0 @ basis(lat, (-1, 0)), basis(lat, (-1, 1)))
    sy = shift_y(lat, np.pi).matrix
    v = sy @ basis(lat, (-1, 0))
    assert np.allclose(v, -basis(lat, (-1, 1)), atol=1e-12)
    v = shift_y(lat, np.pi / 2).matrix @ basis(lat, (1, 0))
    assert np.array_equal(v, basis(lat, (1, 1)))


def test_shift_y_at_zero_equals_flat_shift():
    lat = build_lattice(4)
    sy0 = shift_y(lat, 0.0).matrix
    flat = np.zeros_like(sy0)
    for i, s in enumerate(lat.sites):
        t = lat.shift_site(s, 0, 1)
        if t is not None:
            flat[lat.index[t], i] = 1.0
    assert np.array_equal(sy0, flat)


def test_torus_shifts_unitary():
    lat = build_lattice(3, boundary="torus-dipole", separation=3)
    for kz in (0.0, 0.7, np.pi, 4.2):
        for op in (shift_x(lat, kz), shift_y(lat, kz)):
            m = op.matrix
            assert np.allclose(m.conj().T @ m, np.eye(lat.site_count), atol=1e-14)


def test_shift_y_adjoint_is_inverse_with_conjugate_phase():
    lat = build_lattice(3, boundary="torus-dipole", separation=3)
    kz = 1.234
    sy = shift_y(lat, kz).matrix
    inv = np.zeros_like(sy)
    kzc = canonical_kz(kz)
    for i, s in enumerate(lat.sites):
        t = lat.shift_site(s, 0, -1)
        w = lat.bond_winding(s, t)
        inv[lat.index[t], i] = 1.0 if w == 0 else np.exp(1j * w * kzc)
    assert np.array_equal(sy.conj().T, inv)


def test_projection_ranks():
    lat = build_lattice(2)
    p = cut_projection(lat).matrix
    assert np.trace(p).real == 2
    assert p[lat.index[(-1, 0)], lat.index[(-1, 0)]] == 1
    assert p[lat.index[(-2, 0)], lat.index[(-2, 0)]] == 1
    assert np.trace(core_projection(lat, 0.0).matrix).real == 1
    assert np.trace(ring_projection(lat, 1.5).matrix).real == 16


def test_propagation_examples():
    lat = build_lattice(3)
    assert propagation(np.eye(lat.site_count), lat) == 0
    sx = shift_x(lat)
    assert sx.propagation == 1
    sy = shift_y(lat, 0.3)
    assert propagation(sx.matrix @ sy.matrix, lat) == 2


def test_commutator_check_zero_kz():
    lat = build_lattice(4)
    assert commutator_check(lat, 0.0) == 0.0


def test_commutator_check_random_kz():
    lat = build_lattice(6)
    rng = np.random.default_rng(0)
    for kz in [np.pi] + list(rng.uniform(0, 2 * np.pi, size=20)):
        assert commutator_check(lat, kz) <= 1e-12


def test_commutator_check_rejects_small_lattice():
    with pytest.raises(LatticeError):
        commutator_check(build_lattice(2), 0.0)


def test_commutator_check_rejects_torus():
    lat = build_lattice(4, boundary="torus-dipole", separation=4)
    with pytest.raises(LatticeError):
        commutator_check(lat, 0.0)


def test_invariance_radius_of_shift_monomial():
    # a shift monomial plus an axis-local perturbation commutes with the
    # shifts except near the dislocations: the defect radius stays small,
    # while a generic diagonal operator fails everywhere
    lat = build_lattice(6, boundary="torus-dipole", separation=6)
    kz = 0.9
    sx = shift_x(lat, kz).matrix
    sy = shift_y(lat, kz).matrix
    t = sx @ sy @ sy
    pert = np.zeros_like(t)
    i0 = lat.index[(0, 0)]
    pert[i0, i0] = 2.0
    radius = invariance_defect_radius(t + pert, lat, kz)
    assert radius <= 5.0
    rng = np.random.default_rng(1)
    noisy = np.diag(rng.normal(size=lat.site_count))
    assert invariance_defect_radius(noisy, lat, kz) > 5.0


def test_shift_x_commutes_with_ring_complement_supports():
    # [shift_x, ring projection] touches only sites within one step of the
    # ring boundary shell
    lat = build_lattice(6)
    radius = 3.0
    q = ring_projection(lat, radius).matrix
    sx = shift_x(lat).matrix
    comm = sx @ q - q @ sx
    rows, cols = np.nonzero(np.abs(comm) > 1e-14)
    dist = lat.core_distances(0)
    for idx in np.concatenate([rows, cols]):
        assert abs(dist[idx] - radius) <= 1.0


def test_dump_triplets():
    lat = build_lattice(2)
    buf = io.StringIO()
    dump_triplets(shift_x(lat), buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "row,col,re,im"
    # one hop per site column that has an x+1 neighbor: 4 columns x 5 rows
    assert len(lines) - 1 == 20
