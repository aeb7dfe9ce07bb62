"""Virtual-constraint planning for Euler-Lagrange systems with one degree of
underactuation: reduced dynamics, the integral function, transverse
coordinates and the feedback transformation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .linalg import left_null_space
from .transverse import ControlAffineSystem, TransverseCoordinates

QUAD_TOL = 1e-12


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class LagrangianSystem:
    """``M(q) q'' + C(q, q') q' + G(q) = B u`` with a constant input matrix."""

    n_q: int
    mass: Callable
    coriolis: Callable
    gravity: Callable
    b_mat: np.ndarray
    b_perp: np.ndarray | None = None

    def __post_init__(self):
        if self.n_q < 2:
            raise ValueError("need at least two degrees of freedom")
        b = np.asarray(self.b_mat, float).reshape(self.n_q, -1)
        if b.shape[1] != self.n_q - 1 or np.linalg.matrix_rank(b) != self.n_q - 1:
            raise ValueError("input matrix must have full rank n_q - 1")
        object.__setattr__(self, "b_mat", b)
        bp = left_null_space(b) if self.b_perp is None else np.asarray(self.b_perp, float).reshape(1, -1)
        if np.linalg.norm(bp @ b) > 1e-12:
            raise ValueError("b_perp does not annihilate b_mat")
        object.__setattr__(self, "b_perp", bp.reshape(1, -1))

    def accelerations(self, q, dq, u) -> np.ndarray:
        rhs = self.b_mat @ np.atleast_1d(u) - self.coriolis(q, dq) @ dq - self.gravity(q)
        return np.linalg.solve(self.mass(q), rhs)

    def input_for(self, q, dq, ddq) -> np.ndarray:
        """Least-squares input producing ``ddq`` (exact on the constraint manifold)."""
        lhs = self.mass(q) @ ddq + self.coriolis(q, dq) @ dq + self.gravity(q)
        return np.linalg.lstsq(self.b_mat, lhs, rcond=None)[0]


@dataclass(frozen=True)
class VirtualConstraint:
    """``q = Phi(theta)`` with derivatives supplied by the caller."""

    phi: Callable
    dphi: Callable
    ddphi: Callable

    def check(self, thetas, h: float = 1e-5, tol: float = 1e-6) -> float:
        """Largest mismatch between supplied and finite-difference derivatives."""
        worst = 0.0
        for th in np.atleast_1d(thetas):
            d1 = (self.phi(th + h) - self.phi(th - h)) / (2 * h)
            d2 = (self.dphi(th + h) - self.dphi(th - h)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(d1 - self.dphi(th)))), float(np.max(np.abs(d2 - self.ddphi(th)))))
        if worst > tol:
            raise ConstraintError(f"constraint derivatives inconsistent (error {worst:.2e})")
        return worst


@dataclass(frozen=True)
class ReducedDynamics:
    """``alpha(th) th'' + beta(th) th'^2 + gamma(th) = 0``."""

    alpha: Callable
    beta: Callable
    gamma: Callable
    dalpha: Callable

    def delta(self, th) -> float:
        return self.beta(th) - self.dalpha(th)

    def theta_ddot(self, th, dth, forcing: float = 0.0) -> float:
        return (forcing - self.beta(th) * dth**2 - self.gamma(th)) / self.alpha(th)

    def rhs(self, t, z, forcing: Callable | None = None):
        u = 0.0 if forcing is None else forcing(t, z)
        return [z[1], self.theta_ddot(z[0], z[1], u)]

    def psi_factor(self, th0, th) -> float:
        """``exp(-2 int_{th0}^{th} delta/alpha)``."""
        if th0 == th:
            return 1.0
        val, _ = quad(lambda v: self.delta(v) / self.alpha(v), th0, th, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
        return float(np.exp(-2.0 * val))


def reduce(sys: LagrangianSystem, vc: VirtualConstraint, h: float = 1e-5) -> ReducedDynamics:
    """Reduced dynamics of ``sys`` on the constraint ``q = Phi(theta)``."""
    bp = sys.b_perp[0]

    def alpha(th):
        return float(bp @ sys.mass(vc.phi(th)) @ vc.dphi(th))

    def beta(th):
        q, dq = vc.phi(th), vc.dphi(th)
        return float(bp @ sys.mass(q) @ vc.ddphi(th) + bp @ sys.coriolis(q, dq) @ dq)

    def gamma(th):
        return float(bp @ sys.gravity(vc.phi(th)))

    def dalpha(th):
        return (alpha(th + h) - alpha(th - h)) / (2 * h)

    return ReducedDynamics(alpha, beta, gamma, dalpha)


@dataclass(frozen=True, eq=False)
class IntegralFunction:
    """``I(th, dth)``, vanishing on the reduced-dynamics solution through
    ``(th0, dth0)``. ``psi`` and the weighted gravity integral are tabulated on
    a theta grid and evaluated by splines."""

    rd: ReducedDynamics
    theta0: float
    dtheta0: float
    theta_range: tuple
    n_cache: int = 2001
    _log_psi: CubicSpline | None = field(default=None, init=False, repr=False)
    _grav: CubicSpline | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        lo, hi = self.theta_range
        if not lo <= self.theta0 <= hi:
            raise ValueError("theta0 outside the tabulation range")
        grid = np.linspace(lo, hi, self.n_cache)
        al = np.array([self.rd.alpha(t) for t in grid])
        if np.any(np.sign(al) != np.sign(al[0])) or np.any(al == 0):
            raise ConstraintError("alpha crosses zero inside the integration range")
        rd = self.rd
        # cumulative integrals from theta0, cell by cell
        pts = np.unique(np.concatenate([grid, [self.theta0]]))
        k0 = int(np.searchsorted(pts, self.theta0))
        log_psi = np.zeros(pts.size)
        grav = np.zeros(pts.size)
        for direction in (1, -1):
            idx = range(k0, pts.size - 1) if direction == 1 else range(k0, 0, -1)
            for i in idx:
                j = i + direction
                a, b = pts[i], pts[j]
                inc, _ = quad(lambda v: rd.delta(v) / rd.alpha(v), a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL)
                log_psi[j] = log_psi[i] - 2.0 * inc

        lp = CubicSpline(pts, log_psi)
        for direction in (1, -1):
            idx = range(k0, pts.size - 1) if direction == 1 else range(k0, 0, -1)
            for i in idx:
                j = i + direction
                a, b = pts[i], pts[j]
                # psi(v, th0) = 1 / psi(th0, v)
                inc, _ = quad(lambda v: np.exp(-lp(v)) * rd.alpha(v) * rd.gamma(v), a, b,
                              epsabs=QUAD_TOL, epsrel=QUAD_TOL)
                grav[j] = grav[i] + inc
        object.__setattr__(self, "_log_psi", lp)
        object.__setattr__(self, "_grav", CubicSpline(pts, grav))

    @property
    def c0(self) -> float:
        return 0.5 * self.rd.alpha(self.theta0) ** 2 * self.dtheta0**2

    def psi(self, th) -> float:
        """``psi(theta0, th)`` from the tabulation."""
        return float(np.exp(self._log_psi(th)))

    def __call__(self, th, dth) -> float:
        al = self.rd.alpha(th)
        return 0.5 * al * al * dth * dth - self.psi(th) * (self.c0 - float(self._grav(th)))

    def d_theta(self, th, dth) -> float:
        al = self.rd.alpha(th)
        return al * (self.rd.beta(th) * dth**2 + self.rd.gamma(th)) - 2.0 * self.rd.delta(th) / al * self(th, dth)

    def d_dtheta(self, th, dth) -> float:
        return self.rd.alpha(th) ** 2 * dth

    def time_derivative(self, th, dth, forcing: float = 0.0) -> float:
        """``dI/dt`` along ``alpha th'' + beta th'^2 + gamma = forcing``."""
        al = self.rd.alpha(th)
        return dth * (al * forcing - 2.0 * self.rd.delta(th) / al * self(th, dth))


def integral_function(rd: ReducedDynamics, theta0: float, dtheta0: float,
                      theta_range: tuple | None = None, n_cache: int = 2001) -> IntegralFunction:
    if theta_range is None:
        theta_range = (theta0 - 0.5, theta0 + 0.5)
    return IntegralFunction(rd, float(theta0), float(dtheta0), tuple(theta_range), n_cache)


def mech_transverse_coords(sys: LagrangianSystem, vc: VirtualConstraint, rd: ReducedDynamics,
                           base: IntegralFunction) -> TransverseCoordinates:
    """``x_perp = [y; y'; I]`` with the motion generator ``theta = q[-1]``."""
    nq = sys.n_q

    def x_perp(x):
        q, dq = x[:nq], x[nq:]
        th, dth = q[-1], dq[-1]
        y = (q - vc.phi(th))[:-1]
        dy = (dq - vc.dphi(th) * dth)[:-1]
        return np.concatenate([y, dy, [base(th, dth)]])

    def jac(x):
        q, dq = x[:nq], x[nq:]
        th, dth = q[-1], dq[-1]
        m = nq - 1
        out = np.zeros((2 * nq - 1, 2 * nq))
        out[:m, :m] = np.eye(m)
        out[:m, m] = -vc.dphi(th)[:-1]
        out[m:2 * m, m] = -vc.ddphi(th)[:-1] * dth
        out[m:2 * m, nq:nq + m] = np.eye(m)
        out[m:2 * m, nq + m] = -vc.dphi(th)[:-1]
        out[2 * m, m] = base.d_theta(th, dth)
        out[2 * m, nq + m] = base.d_dtheta(th, dth)
        return out

    return TransverseCoordinates(x_perp, jac)


def feedback_transform(sys: LagrangianSystem, w: Callable, big_w: Callable) -> ControlAffineSystem:
    """First-order form under ``u_hat = w(x) + W(x) u``."""
    nq = sys.n_q
    m = nq - 1

    def f(x):
        q, dq = x[:nq], x[nq:]
        rhs = sys.b_mat @ np.atleast_1d(w(x)) - sys.coriolis(q, dq) @ dq - sys.gravity(q)
        return np.concatenate([dq, np.linalg.solve(sys.mass(q), rhs)])

    def g(x):
        q = x[:nq]
        wm = np.atleast_2d(big_w(x))
        if abs(np.linalg.det(wm)) < 1e-12:
            raise np.linalg.LinAlgError("feedback gain W(x) is singular")
        return np.vstack([np.zeros((nq, m)), np.linalg.solve(sys.mass(q), sys.b_mat @ wm)])

    return ControlAffineSystem(2 * nq, m, f, g)


# ---------------------------------------------------------------------------
# plant descriptions


def cart_pendulum_lagrangian(m_c=1.0, m_p=1.0, l_p=1.0, j_p=0.0, g=9.81, psi=0.0) -> LagrangianSystem:
    """Cart on an inclined track with an inverted pendulum; ``q = (x_c, phi)``."""
    ml = m_p * l_p

    def mass(q):
        c = np.cos(q[1])
        return np.array([[m_c + m_p, ml * c], [ml * c, ml * l_p + j_p]])

    def coriolis(q, dq):
        return np.array([[0.0, -ml * np.sin(q[1]) * dq[1]], [0.0, 0.0]])

    def gravity(q):
        return np.array([g * (m_c + m_p) * np.sin(psi), -ml * g * np.sin(q[1] - psi)])

    return LagrangianSystem(2, mass, coriolis, gravity, np.array([[1.0], [0.0]]))


def acrobot_lagrangian(m1=1.0, m2=1.0, l1=1.0, lc1=0.5, lc2=0.5, i1=0.083, i2=0.083, g=9.81,
                       actuated: int = 0) -> LagrangianSystem:
    """Two-link planar arm; ``actuated`` selects the driven joint."""

    def mass(q):
        c2 = np.cos(q[1])
        m22 = i2 + m2 * lc2**2
        m11 = i1 + m1 * lc1**2 + m2 * l1**2 + 2 * m2 * l1 * lc2 * c2 + m22
        m12 = m22 + m2 * l1 * lc2 * c2
        return np.array([[m11, m12], [m12, m22]])

    def coriolis(q, dq):
        h = m2 * l1 * lc2 * np.sin(q[1])
        return np.array([[-2 * h * dq[1], -h * dq[1]], [h * dq[0], 0.0]])

    def gravity(q):
        g1 = (m1 * lc1 + m2 * l1) * g * np.cos(q[0]) + m2 * lc2 * g * np.cos(q[0] + q[1])
        return np.array([g1, m2 * lc2 * g * np.cos(q[0] + q[1])])

    b = np.zeros((2, 1))
    b[actuated, 0] = 1.0
    return LagrangianSystem(2, mass, coriolis, gravity, b)


_PLANTS = {"cart_pendulum": cart_pendulum_lagrangian, "acrobot": acrobot_lagrangian}


def lagrangian_from_dict(doc: dict) -> LagrangianSystem:
    """Build a plant from ``{"type": ..., <parameters>}``."""
    doc = dict(doc)
    kind = doc.pop("type")
    if kind not in _PLANTS:
        raise ValueError(f"unknown plant type {kind!r}; known: {sorted(_PLANTS)}")
    return _PLANTS[kind](**doc)


def lagrangian_from_json(path) -> LagrangianSystem:
    with open(path) as fh:
        return lagrangian_from_dict(json.load(fh))
