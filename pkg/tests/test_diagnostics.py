import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tlsph.diagnostics import (LEDGER_COLUMNS, ConservationLedger, Interpolator, QuadratureGrid,
                               SwingingPlate, conservation_sample, displacement_errors,
                               fit_slope, h1_seminorm_error, l2_error, sph_interpolate,
                               swinging_analytic, swinging_frequency)
from tlsph.domain import generate_lattice
from tlsph.kinematics import DeformationState
from tlsph.material import NeoHookeanParams

PLATE_MAT = NeoHookeanParams(17e6, 0.495, 1100.0)


def test_quadrature_weights_sum_to_area():
    q = QuadratureGrid.tensor([0.0, 0.0], [2.0, 2.0], tiles=10, gauss=5)
    assert q.points.shape == (2500, 2)
    assert q.weights.sum() == pytest.approx(4.0, abs=1e-12)
    q3 = QuadratureGrid.tensor([-1.0, 0.0, 0.0], [1.0, 1.0, 3.0], tiles=2, gauss=3)
    assert q3.weights.sum() == pytest.approx(6.0, abs=1e-12)


@pytest.mark.parametrize("a,b", [(0, 0), (9, 0), (3, 7), (9, 9), (1, 8)])
def test_quadrature_integrates_monomials(a, b):
    q = QuadratureGrid.tensor([0.0, -1.0], [2.0, 1.0], tiles=3, gauss=5)
    exact = (2.0 ** (a + 1) / (a + 1)) * ((1.0 - (-1.0) ** (b + 1)) / (b + 1))
    val = np.sum(q.weights * q.points[:, 0] ** a * q.points[:, 1] ** b)
    assert val == pytest.approx(exact, rel=1e-12, abs=1e-12)


def _plate(spacing=0.1):
    return generate_lattice([2.0, 2.0], spacing, h_ratio=1.3, density=1100.0)


def test_interpolation_is_exact_for_affine_fields():
    d = _plate()
    q = QuadratureGrid.tensor([0.0, 0.0], [2.0, 2.0], tiles=4, gauss=3)
    A = np.array([[0.3, -1.2], [2.0, 0.5]])
    c = np.array([1.0, -2.0])
    f = d.ref_positions @ A.T + c
    interp = Interpolator(d, q.points)
    assert np.abs(interp(f) - (q.points @ A.T + c)).max() <= 1e-10
    assert np.abs(interp.gradient(f) - A).max() <= 1e-9
    assert np.abs(sph_interpolate(q.points, np.full(d.count, 7.5), d) - 7.5).max() <= 1e-12


def test_interpolation_of_quadratic_converges_at_second_order():
    centre = np.array([[1.0, 1.0]])
    errs = []
    for d in (0.1, 0.05, 0.025):
        dom = _plate(d)
        X = dom.ref_positions
        f = X[:, 0] ** 2 + 0.5 * X[:, 1] ** 2
        errs.append(abs(sph_interpolate(centre, f, dom)[0] - 1.5))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(rates - 2.0) < 0.1)


def test_interpolation_outside_coverage_is_singular():
    from tlsph.kernel import SingularNeighborhoodError
    with pytest.raises(SingularNeighborhoodError):
        Interpolator(_plate(), [[10.0, 10.0]])


def test_swinging_analytic():
    plate = SwingingPlate.for_material(PLATE_MAT, 0.01)
    assert plate.omega == pytest.approx(159.7, abs=0.05)
    assert swinging_frequency(PLATE_MAT) == plate.omega
    X = np.random.default_rng(0).uniform(0.0, 2.0, (50, 2))
    u, v, g = swinging_analytic(X, 0.0, plate)
    assert np.all(u == 0.0) and np.all(g == 0.0)
    k = np.pi / 2
    shape = np.stack([-np.sin(k * X[:, 0]) * np.cos(k * X[:, 1]),
                      np.cos(k * X[:, 0]) * np.sin(k * X[:, 1])], axis=1)
    assert np.allclose(v, 0.01 * plate.omega * shape, rtol=1e-14)
    t = 0.3 / plate.omega
    u, v, g = swinging_analytic(X, t, plate)
    assert np.allclose(np.trace(g, axis1=1, axis2=2), 0.0, atol=1e-17)
    eps = 1e-7
    for b in range(2):
        e = np.zeros(2)
        e[b] = eps
        fd = (swinging_analytic(X + e, t, plate)[0] - swinging_analytic(X - e, t, plate)[0]) / (2 * eps)
        assert np.allclose(g[:, :, b], fd, atol=1e-9)
    fd_t = (swinging_analytic(X, t + 1e-9, plate)[0] - swinging_analytic(X, t - 1e-9, plate)[0]) / 2e-9
    assert np.allclose(v, fd_t, rtol=1e-5, atol=1e-9)


def test_swinging_mode_meets_rollers_on_the_plate():
    plate = SwingingPlate.for_material(PLATE_MAT, 0.01)
    s = np.linspace(0.0, 2.0, 21)
    z = np.zeros_like(s)
    u = lambda X: swinging_analytic(X, 0.4 / plate.omega, plate)[0]  # noqa: E731
    assert np.abs(u(np.stack([z, s], 1))[:, 0]).max() < 1e-17
    assert np.abs(u(np.stack([z + 2, s], 1))[:, 0]).max() < 1e-17
    assert np.abs(u(np.stack([s, z], 1))[:, 1]).max() < 1e-17
    assert np.abs(u(np.stack([s, z + 2], 1))[:, 1]).max() < 1e-17


def test_errors_vanish_for_exact_affine_state():
    d = _plate()
    q = QuadratureGrid.tensor([0.0, 0.0], [2.0, 2.0])
    A = np.array([[0.01, 0.02], [-0.03, 0.005]])
    X = d.ref_positions
    st = DeformationState.undeformed(d)
    st.x = X + X @ A.T
    Fc = np.tile(np.eye(2) + A, (d.count, 1, 1))
    analytic = lambda P, t: (P @ A.T, np.tile(A, (len(P), 1, 1)))  # noqa: E731
    l2, h1 = displacement_errors(st, Fc, d, analytic, q)
    assert l2 <= 1e-12 and h1 <= 1e-12


def test_norms_by_hand():
    q = QuadratureGrid(np.zeros((2, 2)), np.array([0.5, 2.0]))
    assert l2_error(np.array([[3.0, 4.0], [0.0, 0.0]]), np.zeros((2, 2)), q) == pytest.approx(
        np.sqrt(0.5 * 25))
    g = np.zeros((2, 2, 2))
    g[1, 0, 1] = 2.0
    assert h1_seminorm_error(g, np.zeros_like(g), q) == pytest.approx(np.sqrt(8.0))


def test_quadrature_is_converged_for_swinging_norms():
    d = _plate(0.2)
    plate = SwingingPlate.for_material(PLATE_MAT, 0.01)
    t = 0.5 / plate.omega
    st = DeformationState.undeformed(d)
    st.x = d.ref_positions + swinging_analytic(d.ref_positions, t, plate)[0]
    st.t = t
    Fc = np.eye(2) + swinging_analytic(d.ref_positions, t, plate)[2]
    analytic = lambda P, tt: swinging_analytic(P, tt, plate)[0::2]  # noqa: E731
    coarse = displacement_errors(st, Fc, d, analytic, QuadratureGrid.tensor([0, 0], [2, 2], 10, 5))
    fine = displacement_errors(st, Fc, d, analytic, QuadratureGrid.tensor([0, 0], [2, 2], 20, 5))
    assert coarse[0] == pytest.approx(fine[0], rel=1e-3)
    assert coarse[1] == pytest.approx(fine[1], rel=1e-3)


@settings(max_examples=30, deadline=None)
@given(p=st.floats(0.5, 3.0), c=st.floats(1e-3, 10.0))
def test_fit_slope_recovers_power_law(p, c):
    h = np.array([0.2, 0.1, 0.05, 0.025])
    assert fit_slope(h, c * h**p) == pytest.approx(p, abs=1e-10)


def test_fit_slope_needs_two_points():
    with pytest.raises(ValueError):
        fit_slope([0.1], [1.0])


def test_conservation_at_rest_and_undeformed():
    d = _plate(0.2)
    st = DeformationState.undeformed(d)
    row = conservation_sample(st, d, PLATE_MAT, np.tile(np.eye(2), (d.count, 1, 1)))
    assert row["kinetic"] == 0.0 and row["strain"] == 0.0 and row["angular"] == 0.0
    assert row["px"] == row["py"] == row["pz"] == 0.0


def test_angular_momentum_of_rigid_rotation():
    d = _plate(0.2)
    c = np.array([1.0, 1.0])
    w = 105.0
    r = d.ref_positions - c
    v = w * np.stack([-r[:, 1], r[:, 0]], axis=1)
    st = DeformationState.undeformed(d, v)
    ledger = ConservationLedger(c)
    row = ledger.sample(st, d, PLATE_MAT, np.tile(np.eye(2), (d.count, 1, 1)))
    assert row["angular"] == pytest.approx(np.sum(d.masses * np.sum(r * r, axis=1)) * w, rel=1e-12)
    assert abs(row["px"]) < 1e-9 and abs(row["py"]) < 1e-9
    assert row["total"] == row["kinetic"] + row["strain"]
    assert ledger.array().shape == (1, len(LEDGER_COLUMNS))


def test_angular_momentum_3d_axial():
    d = generate_lattice([1.0, 1.0, 1.0], 0.25, origin=[-0.5, -0.5, -0.5], density=1100.0)
    r = d.ref_positions
    v = 10.0 * np.stack([-r[:, 1], r[:, 0], np.zeros(d.count)], axis=1)
    row = conservation_sample(DeformationState.undeformed(d, v), d, PLATE_MAT,
                              np.tile(np.eye(3), (d.count, 1, 1)))
    assert row["angular"] == pytest.approx(10.0 * np.sum(d.masses * (r[:, 0]**2 + r[:, 1]**2)))
