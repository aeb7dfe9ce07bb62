"""Cart-pendulum on an inclined track: real and nominal models, the periodic
orbit induced by the constraint ``x_c = -a sin(phi)``, its projection,
transverse coordinates and partially linearizing feedback.

States are ordered ``(x_c, phi, dx_c, dphi)``; ``phi = 0`` is upright.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .mechanical import cart_pendulum_lagrangian
from .periodic import PeriodicMatrixFunction, uniform_grid
from .transverse import ControlAffineSystem, OrbitError, PeriodicOrbit, TransverseCoordinates

G = 9.81
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Sinusoid:
    """``amplitude * sin(omega t + phase)``; the zero disturbance by default."""

    amplitude: float = 0.0
    omega: float = 1.0
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        if self.amplitude == 0.0:
            return 0.0
        return self.amplitude * math.sin(self.omega * t + self.phase)


@dataclass(frozen=True)
class CartPendulumParams:
    m_c: float = 1.0
    m_p: float = 1.0
    l_p: float = 1.0
    j_p: float = 0.0
    psi: float = 0.0
    upsilon_c: float = 0.0
    upsilon_p: float = 0.0
    d_x: Sinusoid = field(default_factory=Sinusoid)
    d_p: Sinusoid = field(default_factory=Sinusoid)
    g: float = G

    def __post_init__(self):
        if min(self.m_c, self.m_p, self.l_p) <= 0 or self.j_p < 0:
            raise ValueError("masses and length must be positive and j_p non-negative")
        for name in ("d_x", "d_p"):
            val = getattr(self, name)
            if isinstance(val, dict):
                object.__setattr__(self, name, Sinusoid(**val))

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "nominal": CartPendulumParams(),
    "matched": CartPendulumParams(upsilon_c=0.25, d_x=Sinusoid(0.1)),
    "matched_unmatched": CartPendulumParams(
        m_c=1.2, m_p=1.2, l_p=0.9, j_p=0.2, psi=5 * math.pi / 180, upsilon_c=0.25, upsilon_p=0.1,
        d_x=Sinusoid(0.1), d_p=Sinusoid(0.1),
    ),
}


def _sign(v: float) -> float:
    return 1.0 if v > 0 else (-1.0 if v < 0 else 0.0)


def real_dynamics(state, u_f: float, t: float, params: CartPendulumParams) -> np.ndarray:
    """Accelerations from the 2x2 mass matrix, with dry friction and disturbances."""
    _, phi, dx, dphi = state
    p = params
    c, s = math.cos(phi), math.sin(phi)
    ml = p.m_p * p.l_p
    m11, m12, m22 = p.m_c + p.m_p, ml * c, ml * p.l_p + p.j_p
    r1 = (u_f - p.upsilon_c * _sign(dx) + p.d_x(t) + ml * s * dphi * dphi
          - p.g * (p.m_c + p.m_p) * math.sin(p.psi))
    r2 = -p.upsilon_p * _sign(dphi) + p.d_p(t) + ml * p.g * math.sin(phi - p.psi)
    det = m11 * m22 - m12 * m12
    assert det > 0.0, "singular mass matrix"
    ddx = (m22 * r1 - m12 * r2) / det
    ddphi = (m11 * r2 - m12 * r1) / det
    return np.array([dx, dphi, ddx, ddphi])


def nominal_dynamics(state, u_f: float, g: float = G) -> np.ndarray:
    """Unit masses and length, no friction, no incline, no disturbance."""
    _, phi, dx, dphi = state
    c, s = math.cos(phi), math.sin(phi)
    r1 = u_f + s * dphi * dphi
    r2 = g * s
    det = 2.0 - c * c
    return np.array([dx, dphi, (r1 - c * r2) / det, (2.0 * r2 - c * r1) / det])


def alpha(phi: float, a: float) -> float:
    return 1.0 - a * math.cos(phi) ** 2


def reduced_accel(th: float, dth: float, a: float, g: float = G) -> float:
    """Solve ``(1 - a cos^2) th'' + a cos sin th'^2 - g sin = 0`` for ``th''``."""
    c, s = math.cos(th), math.sin(th)
    return (g * s - a * c * s * dth * dth) / (1.0 - a * c * c)


def integral_value(phi, dphi, a, phi0, dphi0, g: float = G):
    """Closed-form integral function of the reduced dynamics."""
    al = 1.0 - a * np.cos(phi) ** 2
    al0 = 1.0 - a * math.cos(phi0) ** 2
    return 0.5 * al * (al * dphi**2 - al0 * dphi0**2 + 2.0 * g * (np.cos(phi) - math.cos(phi0)))


def phase_speed(th: float, dth: float, ddth: float) -> float:
    """``d/dt atan2(-th', th)``."""
    return (dth * dth - th * ddth) / (th * th + dth * dth)


def cp_projection(x) -> float:
    """``s = atan2(-dphi, phi)`` wrapped to ``[0, 2 pi)``."""
    phi, dphi = x[1], x[3]
    if phi == 0.0 and dphi == 0.0:
        raise ValueError("projection undefined at the upright equilibrium")
    return math.atan2(-dphi, phi) % TWO_PI


@dataclass(frozen=True, eq=False)
class CartPendOrbit:
    """Periodic orbit of the constrained cart-pendulum, sampled uniformly in
    ``s = atan2(-dtheta, theta)``."""

    a: float
    theta0: float
    dtheta0: float
    period_T: float
    amplitude: float
    s0: float
    validity_limit: float
    theta_of_s: PeriodicMatrixFunction
    dtheta_of_s: PeriodicMatrixFunction
    rho_of_s: PeriodicMatrixFunction
    x_grid: PeriodicMatrixFunction
    dx_grid: PeriodicMatrixFunction
    g: float = G

    s_T = TWO_PI

    @property
    def n_grid(self) -> int:
        return self.theta_of_s.n

    @property
    def grid(self) -> np.ndarray:
        return self.theta_of_s.grid

    def x_of_s(self, s) -> np.ndarray:
        return self.x_grid.at(s)

    def dx_of_s(self, s) -> np.ndarray:
        return self.dx_grid.at(s)

    def rho(self, s) -> float:
        return float(self.rho_of_s.at(s))

    def periodic_orbit(self) -> PeriodicOrbit:
        return PeriodicOrbit(TWO_PI, self.x_of_s, self.dx_of_s, self.rho)

    def integral(self, phi, dphi):
        return integral_value(phi, dphi, self.a, self.theta0, self.dtheta0, self.g)

    def nominal_input(self, s) -> float:
        """Open-loop force keeping the nominal model on the orbit."""
        th, dth = float(self.theta_of_s.at(s)), float(self.dtheta_of_s.at(s))
        ddth = reduced_accel(th, dth, self.a, self.g)
        return (1 - 2 * self.a) * math.cos(th) * ddth + (2 * self.a - 1) * math.sin(th) * dth * dth

    def distance(self, x) -> float:
        """``|x - x_s(p(x))|``."""
        return float(np.linalg.norm(np.asarray(x) - self.x_of_s(cp_projection(x))))

    def to_dict(self) -> dict:
        return {
            "a": self.a, "theta0": self.theta0, "dtheta0": self.dtheta0, "period_T": self.period_T,
            "amplitude": self.amplitude, "s0": self.s0, "validity_limit": self.validity_limit,
            "grid": self.grid.tolist(), "theta": self.theta_of_s.values.tolist(),
            "dtheta": self.dtheta_of_s.values.tolist(), "rho": self.rho_of_s.values.tolist(),
        }


def orbit_state(th, dth, a):
    return np.array([-a * np.sin(th), th, -a * np.cos(th) * dth, dth])


def orbit_velocity(th, dth, ddth, a):
    return np.array([-a * np.cos(th) * dth, dth, a * np.sin(th) * dth**2 - a * np.cos(th) * ddth, ddth])


def build_orbit(a: float = 1.5, theta0: float = 0.0, dtheta0: float = 0.5, n_grid: int = 500,
                g: float = G, rtol: float = 1e-12, atol: float = 1e-13) -> CartPendOrbit:
    """Integrate the reduced dynamics, find the period and resample in ``s``."""
    if a <= 1.0:
        raise OrbitError("the upright equilibrium is a center only for a > 1")
    limit = math.acos(math.sqrt(1.0 / a))
    if abs(theta0) >= limit or (theta0 == 0.0 and dtheta0 == 0.0):
        raise OrbitError("initial condition outside the center region")
    z0 = np.array([theta0, dtheta0])

    def rhs(t, z):
        return [z[1], reduced_accel(z[0], z[1], a, g)]

    f0 = np.array(rhs(0.0, z0))

    def section(t, z):
        return float((z - z0) @ f0)

    section.direction = 1.0
    section.terminal = True

    def escape(t, z):
        return limit - abs(z[0])

    escape.terminal = True
    # step off the section before arming the crossing event
    t1 = 1e-3
    start = solve_ivp(rhs, (0.0, t1), z0, method="DOP853", rtol=rtol, atol=atol)
    sol = solve_ivp(rhs, (t1, 200.0), start.y[:, -1], method="DOP853", rtol=rtol, atol=atol,
                    events=[section, escape], dense_output=True)
    if sol.t_events[1].size:
        raise OrbitError("trajectory leaves the region where alpha != 0")
    if sol.t_events[0].size == 0:
        raise OrbitError("no return to the Poincare section; not a closed orbit")
    period = float(sol.t_events[0][0])

    # monotone phase angle along the time solution
    ts = np.linspace(t1, period, 4001)
    th, dth = sol.sol(ts)
    ddth = np.array([reduced_accel(x, y, a, g) for x, y in zip(th, dth)])
    sdot = (dth**2 - th * ddth) / (th**2 + dth**2)
    if np.min(sdot) <= 0.0:
        raise OrbitError("atan2 phase is not strictly increasing; parameterization invalid")

    s0 = math.atan2(-dtheta0, theta0) % TWO_PI

    def rhs_s(s, z):
        th_, dth_ = z[0], z[1]
        dd = reduced_accel(th_, dth_, a, g)
        r = phase_speed(th_, dth_, dd)
        return [dth_ / r, dd / r, 1.0 / r]

    sol_s = solve_ivp(rhs_s, (s0, s0 + TWO_PI), [theta0, dtheta0, 0.0], method="DOP853", rtol=rtol, atol=atol,
                      dense_output=True)
    end = sol_s.y[:, -1]
    closure = float(np.hypot(end[0] - theta0, end[1] - dtheta0))
    if closure > 1e-8:
        raise OrbitError(f"orbit does not close in s (gap {closure:.2e})")
    if abs(end[2] - period) > 1e-6:
        raise OrbitError(f"period mismatch between time and phase integration ({end[2]:.9f} vs {period:.9f})")

    grid = uniform_grid(TWO_PI, n_grid)
    sw = s0 + np.mod(grid - s0, TWO_PI)
    sw[-1] = sw[0]
    th_s, dth_s, _ = sol_s.sol(sw)
    dd_s = np.array([reduced_accel(x, y, a, g) for x, y in zip(th_s, dth_s)])
    rho = (dth_s**2 - th_s * dd_s) / (th_s**2 + dth_s**2)
    xs = np.array([orbit_state(x, y, a) for x, y in zip(th_s, dth_s)])
    dxs = np.array([orbit_velocity(x, y, z, a) / r for x, y, z, r in zip(th_s, dth_s, dd_s, rho)])

    level = math.cos(theta0) + alpha(theta0, a) * dtheta0**2 / (2 * g)
    if not -1.0 <= level <= 1.0:
        raise OrbitError("no turning point on the integral level set")
    amplitude = math.acos(level)
    return CartPendOrbit(
        a, theta0, dtheta0, period, amplitude, s0, limit,
        PeriodicMatrixFunction(TWO_PI, th_s), PeriodicMatrixFunction(TWO_PI, dth_s),
        PeriodicMatrixFunction(TWO_PI, rho), PeriodicMatrixFunction(TWO_PI, xs),
        PeriodicMatrixFunction(TWO_PI, dxs), g,
    )


def cp_transverse_coords(orbit: CartPendOrbit) -> TransverseCoordinates:
    """``x_perp = [x_c + a sin phi, dx_c + a cos phi dphi, I(phi, dphi)]``."""
    a, g = orbit.a, orbit.g
    phi0, dphi0 = orbit.theta0, orbit.dtheta0
    al0 = alpha(phi0, a)
    c0 = al0 * dphi0 * dphi0 + 2 * g * math.cos(phi0)

    def x_perp(x):
        xc, phi, dx, dphi = x
        c, s = math.cos(phi), math.sin(phi)
        al = 1.0 - a * c * c
        return np.array([xc + a * s, dx + a * c * dphi, 0.5 * al * (al * dphi * dphi - c0 + 2 * g * c)])

    def jac(x):
        _, phi, _, dphi = x
        c, s = math.cos(phi), math.sin(phi)
        al = 1.0 - a * c * c
        dal = 2 * a * c * s
        bracket = al * dphi * dphi - c0 + 2 * g * c
        d_phi = 0.5 * dal * bracket + 0.5 * al * (dal * dphi * dphi - 2 * g * s)
        return np.array([
            [1.0, a * c, 0.0, 0.0],
            [0.0, -a * s * dphi, 1.0, a * c],
            [0.0, d_phi, 0.0, al * al * dphi],
        ])

    return TransverseCoordinates(x_perp, jac)


def cp_feedback_transform(x, u: float, a: float, g: float = G) -> float:
    """Force ``u_f`` giving ``y'' = u`` on the nominal model."""
    phi, dphi = x[1], x[3]
    c, s = math.cos(phi), math.sin(phi)
    den = 1.0 - a * c * c
    if abs(den) < 1e-12:
        raise ZeroDivisionError("feedback transform singular where a cos^2(phi) = 1")
    return (s * (2 * a - 1) * (dphi * dphi - g * c) + (1 + s * s) * u) / den


def cp_control_affine(a: float, g: float = G) -> ControlAffineSystem:
    """Nominal model under the partially linearizing feedback, input ``u = y''``."""

    def f(x):
        return nominal_dynamics(x, cp_feedback_transform(x, 0.0, a, g), g)

    def gmat(x):
        phi = x[1]
        c, s = math.cos(phi), math.sin(phi)
        w = (1 + s * s) / (1.0 - a * c * c)
        det = 2.0 - c * c
        return np.array([[0.0], [0.0], [w / det], [-c * w / det]])

    return ControlAffineSystem(4, 1, f, gmat)


def closed_form_linearization(orbit: CartPendOrbit):
    """Grid samples of the closed-form ``A_perp``, ``B_perp`` along the orbit."""
    a = orbit.a
    th, dth = orbit.theta_of_s.values, orbit.dtheta_of_s.values
    al = 1 - a * np.cos(th) ** 2
    n = th.size
    amat = np.zeros((n, 3, 3))
    amat[:, 0, 1] = 1.0
    amat[:, 2, 2] = dth * 2 * a * np.cos(th) * np.sin(th) / al
    bmat = np.zeros((n, 3, 1))
    bmat[:, 1, 0] = 1.0
    bmat[:, 2, 0] = -dth * al * np.cos(th)
    return amat, bmat


def cp_lagrangian(params: CartPendulumParams = PRESETS["nominal"]):
    return cart_pendulum_lagrangian(params.m_c, params.m_p, params.l_p, params.j_p, params.g, params.psi)
