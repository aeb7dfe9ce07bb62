import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from orbsmc.cartpend import build_orbit, cp_control_affine, cp_projection, cp_transverse_coords
from orbsmc.linalg import pinv
from orbsmc.periodic import PeriodicMatrixFunction, circular_diff, uniform_grid
from orbsmc.transverse import (
    ControlAffineSystem,
    OrbitError,
    PeriodicOrbit,
    ProjectionError,
    TransverseCoordinates,
    check_coordinates,
    fd_jacobian,
    k_perp_from_feedback,
    minimize_projection,
    transverse_linearization,
    validate_orbit,
)

TWO_PI = 2 * math.pi


def circle_system():
    return ControlAffineSystem(2, 1, lambda x: np.array([-x[1], x[0]]), lambda x: np.array([[0.0], [1.0]]))


def circle_orbit(rho=1.0):
    return PeriodicOrbit(TWO_PI, lambda s: np.array([math.cos(s), math.sin(s)]),
                         lambda s: np.array([-math.sin(s), math.cos(s)]), lambda s: rho)


@pytest.fixture(scope="module")
def cp():
    orbit = build_orbit()
    sys = cp_control_affine(orbit.a)
    coords = cp_transverse_coords(orbit)
    return orbit, sys, coords, transverse_linearization(sys, orbit.periodic_orbit(), coords)


def test_circle_orbit_valid():
    rep = validate_orbit(circle_system(), circle_orbit())
    assert rep.ok and rep.max_residual < 1e-10 and rep.closure < 1e-12


def test_wrong_speed_flagged():
    rep = validate_orbit(circle_system(), circle_orbit(rho=2.0))
    assert not rep.ok and rep.max_residual > 0.5


def test_open_curve_rejected():
    orbit = PeriodicOrbit(TWO_PI, lambda s: np.array([s, 0.0]), lambda s: np.array([1.0, 0.0]), lambda s: 1.0)
    with pytest.raises(OrbitError):
        validate_orbit(circle_system(), orbit)


def test_cartpend_orbit_flow_identity(cp):
    orbit, sys, _, _ = cp
    rep = validate_orbit(sys, orbit.periodic_orbit())
    assert rep.ok and rep.max_residual < 1e-6


def test_projection_on_orbit_and_radial():
    proj = minimize_projection(circle_orbit())
    for s in np.linspace(0, TWO_PI, 37)[:-1]:
        assert abs(circular_diff(proj(circle_orbit().x_of_s(s)), s, TWO_PI)) < 1e-8
    assert abs(circular_diff(proj(np.array([2.0, 0.0])), 0.0, TWO_PI)) < 1e-8


def test_projection_ambiguous_at_center():
    proj = minimize_projection(circle_orbit())
    with pytest.raises(ProjectionError):
        proj(np.array([0.0, 0.0]))


@settings(max_examples=40, deadline=None)
@given(st.floats(0, TWO_PI), st.floats(-1, 1), st.floats(-1, 1))
def test_projection_idempotent_on_tube(s, d1, d2):
    orbit = build_orbit(n_grid=200)
    po = orbit.periodic_orbit()
    proj = minimize_projection(po, n_scan=400)
    x = po.x_of_s(s) + 0.01 * np.array([d1, 0.0, d2, 0.0]) / max(1e-9, math.hypot(d1, d2))
    p1 = proj(x)
    assert abs(circular_diff(proj(po.x_of_s(p1)), p1, TWO_PI)) < 1e-7


def test_weighted_projection_left_inverse(cp):
    orbit = cp[0]
    proj = minimize_projection(orbit.periodic_orbit(), weight=lambda s: np.diag([1.0, 2.0, 1.0, 0.5]), n_scan=200)
    for s in np.linspace(0, TWO_PI, 13)[:-1]:
        assert abs(circular_diff(proj(orbit.x_of_s(s)), s, TWO_PI)) < 1e-8


def test_coordinates_vanish_full_rank(cp):
    orbit, _, coords, _ = cp
    rep = check_coordinates(coords, orbit.periodic_orbit())
    assert rep["ok"] and rep["min_rank"] == 3


def test_tangency(cp):
    orbit, sys, coords, _ = cp
    for s in uniform_grid(TWO_PI, 500)[:-1]:
        x = orbit.x_of_s(s)
        assert np.linalg.norm(coords.jac(x) @ sys.f(x)) < 1e-8


def test_analytic_jacobian_matches_fd(cp):
    orbit, _, coords, _ = cp
    rng = np.random.default_rng(3)
    for s in rng.uniform(0, TWO_PI, 10):
        x = orbit.x_of_s(s) + 0.01 * rng.standard_normal(4)
        assert np.max(np.abs(coords.jac(x) - fd_jacobian(coords.x_perp, x))) < 1e-5


def test_third_row_vanishes_at_turning_point(cp):
    orbit, _, _, tl = cp
    # s = 0 is the turning point where the pendulum velocity is zero
    assert abs(orbit.dtheta_of_s.values[0]) < 1e-12
    assert np.max(np.abs(tl.a_of.values[0, 2])) < 1e-6
    assert abs(tl.b_of.values[0, 2, 0]) < 1e-12


def _linear_flow(tl, s0, z0, tau):
    def rhs(t, y):
        s = y[0]
        return np.concatenate([[float(tl.speed.at(s))], tl.a_of.at(s) @ y[1:]])

    sol = solve_ivp(rhs, (0, tau), np.concatenate([[s0], z0]), rtol=1e-12, atol=1e-14)
    return sol.y[1:, -1]


def test_linearization_order(cp):
    orbit, sys, coords, tl = cp
    rng = np.random.default_rng(0)
    tau = 0.3
    orders = []
    for s0 in rng.uniform(0, TWO_PI, 3):
        x_s = orbit.x_of_s(s0)
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        errs = []
        for eps in (1e-3, 1e-4):
            x0 = x_s + pinv(coords.jac(x_s)) @ (eps * d)
            z0 = coords.x_perp(x0)
            sol = solve_ivp(lambda t, x: sys.f(x), (0, tau), x0, rtol=1e-12, atol=1e-14, method="DOP853")
            lin = _linear_flow(tl, s0, z0, tau)
            errs.append(np.linalg.norm(coords.x_perp(sol.y[:, -1]) - lin))
        orders.append(math.log10(errs[0] / errs[1]))
    assert min(orders) >= 1.9


def test_k_perp_zero_and_round_trip(cp):
    orbit, _, coords, _ = cp
    po = orbit.periodic_orbit()
    kz = k_perp_from_feedback(po, coords, lambda x: np.zeros(1), n_grid=100)
    assert np.max(np.abs(kz.values)) == 0.0
    gen = PeriodicMatrixFunction.from_function(
        lambda s: np.array([[math.cos(s), 1.0 + 0.5 * math.sin(2 * s), -0.3]]), TWO_PI, 100)
    k = lambda x: gen(cp_projection(x)) @ coords.x_perp(x)  # noqa: E731
    rec = k_perp_from_feedback(po, coords, k, n_grid=100)
    assert np.max(np.abs(rec.values - gen.values)) < 1e-6


def test_k_perp_rejects_nonvanishing(cp):
    orbit, _, coords, _ = cp
    with pytest.raises(ValueError):
        k_perp_from_feedback(orbit.periodic_orbit(), coords, lambda x: np.ones(1), n_grid=20)


def test_circle_linearization_closed_form():
    coords = TransverseCoordinates(lambda x: np.array([np.hypot(x[0], x[1]) - 1.0]),
                                   lambda x: (np.asarray(x) / np.hypot(x[0], x[1])).reshape(1, 2))
    tl = transverse_linearization(circle_system(), circle_orbit(), coords, n_grid=64)
    grid = uniform_grid(TWO_PI, 64)
    assert np.max(np.abs(tl.a_of.values)) < 1e-8
    assert np.allclose(tl.b_of.values[:, 0, 0], np.sin(grid), atol=1e-12)
