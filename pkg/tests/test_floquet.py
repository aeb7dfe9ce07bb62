import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from orbsmc.floquet import (
    FloquetFactorization,
    LinearPeriodicSystem,
    NoRealLogError,
    fl_factorize_bvp,
    fl_factorize_direct,
    integrate_stm,
    liouville_determinant,
    monodromy,
    real_log_exists,
    real_matrix_log,
)


def const(a):
    a = np.atleast_2d(np.asarray(a, float))
    return lambda s: a


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def flipping_system():
    """Psi(s) = R(pi s) exp(D s): monodromy diag(-1/2, -2) has no real log."""
    d = np.diag([np.log(0.5), np.log(2.0)])
    j = np.array([[0.0, -1.0], [1.0, 0.0]])
    return LinearPeriodicSystem(2, 1.0, lambda s: np.pi * j + rot(np.pi * s) @ d @ rot(np.pi * s).T)


def test_zero_generator_gives_identity():
    stm = integrate_stm(LinearPeriodicSystem(2, 3.0, const(np.zeros((2, 2)))), n_grid=16)
    assert np.allclose(stm.psi, np.eye(2), atol=1e-14)
    with pytest.warns(RuntimeWarning, match="near or outside the unit circle"):
        mono = monodromy(stm)
    assert np.allclose(mono.multipliers, 1.0)


def test_constant_diagonal_exponential():
    stm = integrate_stm(LinearPeriodicSystem(2, 1.0, const(np.diag([-1.0, -2.0]))), n_grid=20)
    assert np.allclose(stm.psi[-1], np.diag([np.exp(-1), np.exp(-2)]), rtol=1e-8)


def test_scalar_cosine_matches_antiderivative():
    sys = LinearPeriodicSystem(1, 1.0, lambda s: np.array([[np.cos(2 * np.pi * s)]]))
    stm = integrate_stm(sys, n_grid=50)
    exact = np.exp(np.sin(2 * np.pi * stm.grid) / (2 * np.pi))
    assert np.max(np.abs(stm.psi[:, 0, 0] - exact)) < 1e-9


def test_speed_rescales_generator():
    sys = LinearPeriodicSystem(1, 2.0, const([[-1.0]]), speed=lambda s: 2.0)
    stm = integrate_stm(sys, n_grid=10)
    assert np.isclose(stm.psi[-1, 0, 0], np.exp(-1.0), rtol=1e-9)


def test_liouville_identity():
    sys = LinearPeriodicSystem(
        2, 1.0, lambda s: np.array([[np.sin(2 * np.pi * s), 1.0], [-2.0, -0.5 + np.cos(2 * np.pi * s)]])
    )
    mono = monodromy(integrate_stm(sys, n_grid=100))
    assert abs(np.linalg.det(mono.m) - liouville_determinant(sys)) < 1e-8


def test_multiplier_warning():
    sys = LinearPeriodicSystem(1, 1.0, const([[0.0]]))
    with pytest.warns(RuntimeWarning):
        monodromy(integrate_stm(sys, n_grid=8))


@pytest.mark.parametrize(
    "m, expected",
    [(np.eye(2), True), (np.diag([-1.0, 2.0]), False), (np.diag([-1.0, -1.0]), True)],
)
def test_real_log_exists_examples(m, expected):
    assert real_log_exists(m).exists is expected


def test_real_log_exists_jordan_pairs():
    j = np.array([[-1.0, 1.0], [0.0, -1.0]])
    assert not real_log_exists(j).exists
    assert real_log_exists(np.kron(np.eye(2), j)).exists


def test_log_identity_is_zero():
    assert np.allclose(real_matrix_log(np.eye(3)), 0.0, atol=1e-14)


def test_log_rotation():
    out = real_matrix_log(rot(np.pi / 3))
    assert np.allclose(out, [[0, -np.pi / 3], [np.pi / 3, 0]], atol=1e-12)


def test_log_minus_identity():
    out = real_matrix_log(-np.eye(2))
    assert np.allclose(expm(out), -np.eye(2), atol=1e-12)
    assert np.allclose(out, [[0, -np.pi], [np.pi, 0]], atol=1e-12)


def test_log_paired_negative_jordan_blocks():
    j = np.array([[-2.0, 1.0], [0.0, -2.0]])
    q = np.array([[1.0, 2, 0, 1], [0, 1, 1, 0], [1, 0, 1, 0], [0, 0, 1, 2]])
    m = q @ np.kron(np.eye(2), j) @ np.linalg.inv(q)
    out = real_matrix_log(m)
    assert np.isrealobj(out)
    assert np.allclose(expm(out), m, atol=1e-10)


def test_log_rejects_odd_negative_block():
    with pytest.raises(NoRealLogError):
        real_matrix_log(np.diag([-1.0, 2.0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_log_round_trip_random(seed):
    rng = np.random.default_rng(seed)
    m = expm(0.7 * rng.standard_normal((4, 4)))
    out = real_matrix_log(m)
    assert np.allclose(expm(out), m, atol=1e-9 * np.linalg.norm(m))


def test_constant_system_factorization():
    a = np.array([[-0.5, 1.0], [-1.0, -0.3]])
    fl = fl_factorize_direct(integrate_stm(LinearPeriodicSystem(2, 1.0, const(a)), n_grid=40))
    assert fl.c == 1
    assert np.allclose(fl.f, a, atol=1e-8)
    assert np.allclose(fl.y, np.eye(2))
    assert np.allclose(fl.l_of.values, np.eye(2), atol=1e-8)


def test_periodic_factorization_properties():
    sys = LinearPeriodicSystem(
        2, 1.0, lambda s: np.array([[-0.3, 1 + 0.5 * np.sin(2 * np.pi * s)], [-1.0, -0.2]])
    )
    stm = integrate_stm(sys, n_grid=200)
    fl = fl_factorize_direct(stm)
    assert fl.residual < 1e-6
    assert np.linalg.norm(expm(fl.f) - stm.psi[-1]) < 1e-8 * np.linalg.norm(stm.psi[-1])
    # L^-1 satisfies dL^-1/ds = -L^-1 A + F L^-1 (central differences)
    h = fl.l_inv_of.step
    li = fl.l_inv_of.values
    for i in range(1, fl.l_inv_of.n, 17):
        d = (li[i + 1] - li[i - 1]) / (2 * h)
        rhs = -li[i] @ sys.a_of(i * h) + fl.f @ li[i]
        assert np.max(np.abs(d - rhs)) < 1e-3
    assert np.all(np.linalg.det(stm.psi) > 0)


def test_flipping_monodromy_needs_double_period():
    sys = flipping_system()
    stm = integrate_stm(sys, n_grid=200)
    assert np.allclose(stm.psi[-1], np.diag([-0.5, -2.0]), atol=1e-8)
    fl = fl_factorize_direct(stm)
    assert fl.c == 2
    assert np.allclose(fl.y, -np.eye(2), atol=1e-8)
    assert np.allclose(fl.y @ fl.y, np.eye(2), atol=1e-10)
    assert np.allclose(fl.f @ fl.y, fl.y @ fl.f, atol=1e-10)
    assert np.allclose(expm(2 * fl.f), stm.psi[-1] @ stm.psi[-1], rtol=1e-8)
    # Psi(s + T) = L(s) Y exp(F (s + T)) on the grid
    for i in range(0, 200, 25):
        s = stm.grid[i]
        lhs = stm.psi[i] @ stm.psi[-1]
        rhs = fl.l_of.values[i] @ fl.y @ expm(fl.f * (s + 1.0))
        assert np.allclose(lhs, rhs, atol=1e-7)
    assert np.allclose(fl.l_of.values[200], fl.y, atol=1e-7)


def test_bvp_constant_converges_immediately():
    a = np.array([[-1.0, 0.5], [0.0, -2.0]])
    fl = fl_factorize_bvp(LinearPeriodicSystem(2, 1.0, const(a)), f_init=a, c=1, n_grid=20)
    assert fl.iterations == 0


def test_bvp_recovers_from_perturbed_guess():
    sys = LinearPeriodicSystem(
        2, 1.0, lambda s: np.array([[-0.3, 1 + 0.5 * np.sin(2 * np.pi * s)], [-1.0, -0.2]])
    )
    stm = integrate_stm(sys, n_grid=100)
    direct = fl_factorize_direct(stm)
    fl = fl_factorize_bvp(sys, direct.f + 0.1 * np.eye(2), c=1, n_grid=100)
    assert fl.iterations > 0
    assert np.linalg.norm(expm(fl.f) - stm.psi[-1]) < 1e-8
    assert fl.residual < 1e-6


def test_json_round_trip():
    a = np.array([[-0.5, 1.0], [-1.0, -0.3]])
    fl = fl_factorize_direct(integrate_stm(LinearPeriodicSystem(2, 1.0, const(a)), n_grid=20))
    doc = json.loads(fl.to_json())
    assert {"period", "c", "grid", "F", "Y", "L_samples"} <= set(doc)
    back = FloquetFactorization.from_dict(doc)
    assert np.allclose(back.f, fl.f)
    assert np.allclose(back.l_of.values, fl.l_of.values)


def test_time_exponents_rescale():
    a = np.diag([-1.0, -2.0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fl = fl_factorize_direct(integrate_stm(LinearPeriodicSystem(2, 2 * np.pi, const(a)), n_grid=40))
    assert np.allclose(fl.time_exponents(np.pi).real, [-4.0, -2.0])
