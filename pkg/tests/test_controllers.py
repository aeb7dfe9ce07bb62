import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import butter, filtfilt

from orbsmc.cartpend import PRESETS, real_dynamics
from orbsmc.controllers import (
    ControllerSpec,
    RemainderSlopes,
    control,
    design_state_dependent_gain,
    estimate_remainder_slopes,
    lqr_control,
    lrc_control,
    pure_smc_control,
    sat,
    smc_control,
)
from orbsmc.floquet import FloquetFactorization
from orbsmc.linalg import pinv
from orbsmc.simulate import ScenarioSpec, build_controller, simulate

OFFSETS = st.tuples(st.floats(0, 2 * math.pi), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))


def specs(design, mu=0.5, eps=1e-3):
    return {
        "LQR": ControllerSpec("LQR", k_perp=design.k_perp),
        "SMC": ControllerSpec("SMC", mu, eps, design.k_perp, design.sf),
        "LRC": ControllerSpec("LRC", mu, eps, design.k_perp, r_perp=design.prde.r_of, b_perp=design.tl.b_of),
        "PureSMC": ControllerSpec("PureSMC", mu, eps, sf=design.sf),
    }


def near_orbit(design, s, d, scale=0.02):
    x_s = design.orbit.x_of_s(s)
    d = np.asarray(d, float)
    nd = np.linalg.norm(d)
    d = d / nd if nd > 1e-9 else np.array([1.0, 0.0, 0.0])
    return x_s + pinv(design.coords.jac(x_s)) @ (scale * d)


def test_spec_invariants(design):
    with pytest.raises(ValueError):
        ControllerSpec("PID", k_perp=design.k_perp)
    with pytest.raises(ValueError):
        ControllerSpec("SMC", 0.5, k_perp=design.k_perp)
    with pytest.raises(ValueError):
        ControllerSpec("LQR", k_perp=design.k_perp, sf=design.sf)
    with pytest.raises(ValueError):
        ControllerSpec("SMC", 0.5, 0.0, design.k_perp, design.sf)
    with pytest.raises(ValueError):
        ControllerSpec("SMC", -1.0, 1e-3, design.k_perp, design.sf)
    with pytest.raises(ValueError):
        ControllerSpec("LRC", 0.5, 1e-3, design.k_perp, r_perp=design.prde.r_of)
    with pytest.raises(ValueError):
        ControllerSpec("SMC", 0.5, 1e-3, design.k_perp, design.sf, zeta_mode="state-dependent")


@pytest.mark.parametrize("kind", ["LQR", "SMC", "LRC", "PureSMC"])
def test_zero_on_orbit(design, kind):
    spec = specs(design)[kind]
    for s in design.orbit.grid[:-1:50]:
        assert np.max(np.abs(control(design.orbit.x_of_s(s), spec, design.projection, design.coords))) < 1e-6


@settings(max_examples=30, deadline=None)
@given(OFFSETS)
def test_smc_equals_lqr_plus_saturated_term(design, off):
    sp = specs(design)
    x = near_orbit(design, off[0], off[1:])
    u_lqr = lqr_control(x, sp["LQR"], design.projection, design.coords)
    u_smc = smc_control(x, sp["SMC"], design.projection, design.coords)
    assert np.all(np.abs(u_smc - u_lqr) <= 0.5 + 1e-12)
    sigma = design.sf.sigma(x)
    assert np.allclose(u_smc - u_lqr, -0.5 * sat(sigma / 1e-3))


def test_smc_matches_lqr_on_surface(design):
    # a transverse offset inside ker S(s) has sigma = 0, so the switching term vanishes
    sp = specs(design)
    s = 1.0
    x_s = design.orbit.x_of_s(s)
    kern = np.linalg.svd(design.sf.s_perp_of.at(s))[2][1:].T
    x = x_s + pinv(design.coords.jac(x_s)) @ (1e-4 * kern[:, 0])
    u_smc = smc_control(x, sp["SMC"], design.projection, design.coords)
    u_lqr = lqr_control(x, sp["LQR"], design.projection, design.coords)
    assert abs(float(design.sf.sigma(x)[0])) < 1e-6
    assert np.allclose(u_smc, u_lqr, atol=0.5 * 1e-6 / 1e-3 + 1e-9)


@settings(max_examples=30, deadline=None)
@given(OFFSETS)
def test_lrc_term_opposes_xi(design, off):
    sp = specs(design)
    x = near_orbit(design, off[0], off[1:])
    s = design.projection(x)
    xi = design.tl.b_of.at(s).T @ design.prde.r_of.at(s) @ design.coords.x_perp(x)
    extra = lrc_control(x, sp["LRC"], design.projection, design.coords) - lqr_control(
        x, sp["LQR"], design.projection, design.coords)
    assert float(extra @ xi) <= 0.0
    assert np.all(np.abs(extra) <= 0.5 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(OFFSETS)
def test_pure_smc_has_no_linear_part(design, off):
    sp = specs(design)
    x = near_orbit(design, off[0], off[1:])
    u = pure_smc_control(x, sp["PureSMC"], design.projection, design.coords)
    assert np.allclose(u, -0.5 * sat(design.sf.sigma(x) / 1e-3))


def test_linear_inside_layer(design):
    # with a wide layer the law is linear in the transverse offset
    sp = specs(design, eps=10.0)
    s = 2.0
    x_s = design.orbit.x_of_s(s)
    jp = pinv(design.coords.jac(x_s))
    d = np.array([0.3, -0.2, 0.5])
    for kind in ("LQR", "SMC", "LRC", "PureSMC"):
        u1 = control(x_s + jp @ (1e-5 * d), sp[kind], design.projection, design.coords)
        u2 = control(x_s + jp @ (2e-5 * d), sp[kind], design.projection, design.coords)
        assert np.allclose(u2, 2 * u1, rtol=1e-3, atol=1e-12)


def test_boundary_layer_limit_is_signum(design):
    x = near_orbit(design, 0.7, [1.0, 0.5, -0.3], scale=0.01)
    sig = ControllerSpec("SMC", 0.5, 1e-3, design.k_perp, design.sf, signum=True)
    u_sig = smc_control(x, sig, design.projection, design.coords)
    sigma = abs(float(design.sf.sigma(x)[0]))
    gaps = []
    for eps in (10 * sigma, 2 * sigma, 0.5 * sigma, 1e-3 * sigma):
        u_eps = smc_control(x, ControllerSpec("SMC", 0.5, eps, design.k_perp, design.sf), design.projection,
                            design.coords)
        gaps.append(float(np.abs(u_eps - u_sig)[0]))
    assert gaps[0] == pytest.approx(0.5 * 0.9)
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-12


def test_gain_design_formula(design):
    gd = design_state_dependent_gain(design.sf, design.tl, design.fl, delta_max=0.35, mu_star=0.1, upsilon=0.5)
    # with zero remainders zeta is constant in r
    assert gd.zeta(0.0) == pytest.approx(gd.zeta(1.0))
    expected = math.sqrt(gd.lam_max) / (0.5 * gd.lam_min) * (0.1 + math.sqrt(gd.lam_max) * gd.c0 * 0.35)
    assert gd.zeta(0.0) == pytest.approx(expected)
    assert gd.zeta(0.0) > 0.5
    assert math.isinf(gd.tube_radius)
    # F_sigma spectrum is the eigenvalue of F left out of ker S_hat
    lam = np.linalg.eigvals(gd.f_sigma)
    assert np.min(np.abs(np.linalg.eigvals(design.fl.f) - lam[0])) < 1e-8
    assert np.allclose(gd.f_sigma.T @ gd.p + gd.p @ gd.f_sigma, -2 * gd.q)


def test_gain_collapses_without_uncertainty(design):
    gd = design_state_dependent_gain(design.sf, design.tl, design.fl, delta_max=0.0, mu_star=1e-9)
    assert gd.zeta(0.0) < 1e-7


def test_gain_tube_radius_from_linear_remainder(design):
    gd = design_state_dependent_gain(design.sf, design.tl, design.fl, 0.35, c1=lambda r: 2.0 * r)
    level = gd.lam_min * 0.5 / (gd.lam_max * gd.c0_hat)
    assert gd.tube_radius == pytest.approx(level / 2.0, rel=1e-9)


def test_gain_rejects_unstable_sliding_dynamics(design):
    fl = design.fl
    flipped = FloquetFactorization(fl.l_of, fl.l_inv_of, -fl.f, fl.y, fl.c, fl.period)
    with pytest.raises(np.linalg.LinAlgError):
        design_state_dependent_gain(design.sf, design.tl, flipped, 0.35)
    with pytest.raises(ValueError):
        design_state_dependent_gain(design.sf, design.tl, design.fl, 0.35, upsilon=1.0)


def test_remainder_slopes_finite(design):
    sl = estimate_remainder_slopes(design.sf, design.tl, design.system, design.orbit.periodic_orbit(),
                                   n_samples=40)
    assert np.isfinite(sl.k1) and np.isfinite(sl.k2)
    assert sl.k1 >= 0 and sl.k2 >= 0
    rs = RemainderSlopes(sl.k1, sl.k2)
    assert rs.c1(0.0) == 0.0 and rs.c2(0.0) == 0.0


def test_equivalent_control_cancels_matched_disturbance(design):
    # while sliding, the low-pass filtered switching term reproduces the negative
    # of the matched mismatch delta = y''_real - u
    spec = ScenarioSpec.preset("matched", "SMC", 0.5)
    tr = simulate(spec, design)
    smc = build_controller(spec, design)
    lqr = build_controller(ScenarioSpec.preset("matched", "LQR"), design)
    a = design.orbit.a
    sel = tr.t >= tr.t[-1] - 5 * design.orbit.period_T
    u_sw, delta = [], []
    for x, uf, t in zip(tr.x[sel], tr.u_f[sel], tr.t[sel]):
        u = float(smc(x).u[0])
        u_sw.append(u - float(lqr(x).u[0]))
        acc = real_dynamics(x, uf, t, PRESETS["matched"])
        delta.append(acc[2] + a * math.cos(x[1]) * acc[3] - a * math.sin(x[1]) * x[3] ** 2 - u)
    b, a_f = butter(2, 0.01)
    filtered = filtfilt(b, a_f, np.array(u_sw))
    assert np.corrcoef(filtered, -np.array(delta))[0, 1] > 0.95
