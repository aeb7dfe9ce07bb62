"""Orbits, projection operators, transverse coordinates and the transverse
linearization along a periodic orbit."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .floquet import LinearPeriodicSystem
from .linalg import numerical_rank, pinv
from .periodic import PeriodicMatrixFunction, circular_diff, uniform_grid

FD_STEP = 1e-6


class OrbitError(ValueError):
    pass


class ProjectionError(ValueError):
    pass


def fd_jacobian(func: Callable, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``func`` at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(func(x))
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h * max(1.0, abs(x[j]))
        jac[:, j] = (np.atleast_1d(func(x + e)) - np.atleast_1d(func(x - e))).ravel() / (2 * e[j])
    return jac


@dataclass(frozen=True)
class ControlAffineSystem:
    """``dx/dt = f(x) + g(x) u``."""

    n: int
    m: int
    f: Callable
    g: Callable
    jac_f: Callable | None = None

    def rhs(self, x, u) -> np.ndarray:
        return self.f(x) + self.g(x) @ np.atleast_1d(u)

    def jacobian_f(self, x) -> np.ndarray:
        if self.jac_f is not None:
            return self.jac_f(x)
        return fd_jacobian(self.f, x)


@dataclass(frozen=True)
class PeriodicOrbit:
    """Regular parameterization ``x_s(s)`` with ``ds/dt = rho(s)``."""

    s_T: float
    x_of_s: Callable
    dx_of_s: Callable
    rho: Callable

    def sample(self, n: int):
        grid = uniform_grid(self.s_T, n)
        return grid, np.array([self.x_of_s(s) for s in grid])


@dataclass(frozen=True)
class ProjectionOperator:
    project: Callable
    validity_radius: float

    def __call__(self, x) -> float:
        return self.project(x)


@dataclass(frozen=True)
class TransverseCoordinates:
    x_perp: Callable
    jac: Callable


@dataclass(frozen=True)
class OrbitReport:
    min_speed: float
    max_residual: float
    closure: float
    ok: bool


def validate_orbit(sys: ControlAffineSystem, orbit: PeriodicOrbit, n_check: int = 500,
                   tol: float = 1e-6, closure_tol: float = 1e-6) -> OrbitReport:
    """Check regularity, the flow identity ``f(x_s) = rho dx_s/ds`` and closure."""
    grid = uniform_grid(orbit.s_T, n_check)
    speeds, resid = [], []
    for s in grid[:-1]:
        x = np.asarray(orbit.x_of_s(s))
        dx = np.asarray(orbit.dx_of_s(s))
        speeds.append(np.linalg.norm(dx))
        resid.append(np.linalg.norm(sys.f(x) - orbit.rho(s) * dx))
    closure = float(np.linalg.norm(np.asarray(orbit.x_of_s(orbit.s_T)) - np.asarray(orbit.x_of_s(0.0))))
    if min(speeds) <= 0.0:
        raise OrbitError("parameterization is not regular (zero tangent)")
    if closure > closure_tol:
        raise OrbitError(f"orbit does not close (gap {closure:.3e})")
    max_res = float(max(resid))
    return OrbitReport(float(min(speeds)), max_res, closure, max_res < tol)


def minimize_projection(orbit: PeriodicOrbit, weight: Callable | None = None, n_scan: int = 500,
                        max_newton: int = 30, tol: float = 1e-12,
                        ambiguity_tol: float = 1e-9) -> ProjectionOperator:
    """Projection ``p(x) = argmin_s (x - x_s(s))^T W(s) (x - x_s(s))``.

    Coarse scan over ``n_scan`` samples, then Newton on the stationarity
    condition; golden-section on the bracketing cells if Newton fails.
    """
    grid, pts = orbit.sample(n_scan)
    grid, pts = grid[:-1], pts[:-1]
    s_T = orbit.s_T
    h = s_T / n_scan
    n = pts.shape[1]
    w_of = weight if weight is not None else (lambda s: np.eye(n))

    def cost(x, s):
        d = x - np.asarray(orbit.x_of_s(s % s_T))
        return float(d @ w_of(s % s_T) @ d)

    def dcost(x, s, eps=1e-6 * s_T):
        return (cost(x, s + eps) - cost(x, s - eps)) / (2 * eps)

    # radius: half the minimal distance between orbit points a quarter period apart
    lag = max(1, n_scan // 4)
    radius = 0.5 * float(np.min(np.linalg.norm(pts - np.roll(pts, lag, axis=0), axis=1)))

    def project(x):
        x = np.asarray(x, dtype=float)
        d2 = np.einsum("ij,ij->i", pts - x, pts - x) if weight is None else \
            np.array([cost(x, s) for s in grid])
        order = np.argsort(d2)
        i = order[0]
        # two separated near-equal minima: projection is ambiguous
        for j in order[1:6]:
            if abs(circular_diff(grid[j], grid[i], s_T)) > 3 * h and d2[j] - d2[i] < ambiguity_tol * max(1.0, d2[i]):
                raise ProjectionError("ambiguous projection: two minima of equal distance")
        s = grid[i]
        eps = 1e-5 * h
        for _ in range(max_newton):
            g0 = dcost(x, s)
            g1 = (dcost(x, s + eps) - dcost(x, s - eps)) / (2 * eps)
            if g1 <= 0:
                break
            step = -g0 / g1
            if abs(step) > h:
                break
            s += step
            if abs(step) < tol * s_T:
                return float(s % s_T)
        res = minimize_scalar(lambda t: cost(x, t), bracket=None, bounds=(grid[i] - h, grid[i] + h),
                              method="bounded", options={"xatol": 1e-12})
        return float(res.x % s_T)

    return ProjectionOperator(project, radius)


def check_coordinates(coords: TransverseCoordinates, orbit: PeriodicOrbit, n: int = 500,
                      tol: float = 1e-9) -> dict:
    """Vanishing on the orbit and full Jacobian rank (``n_x - 1``)."""
    grid, pts = orbit.sample(n)
    vals = np.array([np.linalg.norm(coords.x_perp(x)) for x in pts])
    ranks = [numerical_rank(coords.jac(x), 1e-10) for x in pts]
    n_x = pts.shape[1]
    return {"max_value": float(vals.max()), "min_rank": int(min(ranks)),
            "ok": bool(vals.max() < tol and min(ranks) == n_x - 1)}


def transverse_linearization(sys: ControlAffineSystem, orbit: PeriodicOrbit, coords: TransverseCoordinates,
                             n_grid: int = 500, h: float = 1e-5, kind: str = "spline") -> LinearPeriodicSystem:
    """Linearize ``d x_perp/dt = Dx_perp (f + g u)`` along the orbit.

    ``A(s) = D(Dx_perp f)(x_s) Dx_perp(x_s)^+`` and ``B(s) = Dx_perp(x_s) g(x_s)``,
    returned with ``speed = rho`` so that s-domain integration divides by rho.
    """
    grid = uniform_grid(orbit.s_T, n_grid)

    def f_perp(x):
        return coords.jac(x) @ sys.f(x)

    a_vals, b_vals, r_vals = [], [], []
    for s in grid[:-1]:
        x = np.asarray(orbit.x_of_s(s), dtype=float)
        jx = coords.jac(x)
        if numerical_rank(jx, 1e-10) < jx.shape[0]:
            raise OrbitError(f"transverse Jacobian loses rank at s={s:.4f}")
        a_vals.append(fd_jacobian(f_perp, x, h) @ pinv(jx))
        b_vals.append(jx @ sys.g(x))
        r_vals.append(orbit.rho(s))
    close = lambda v: np.concatenate([np.asarray(v), np.asarray(v)[:1]], axis=0)  # noqa: E731
    a_of = PeriodicMatrixFunction(orbit.s_T, close(a_vals), kind)
    b_of = PeriodicMatrixFunction(orbit.s_T, close(b_vals), kind)
    rho = PeriodicMatrixFunction(orbit.s_T, close(r_vals), kind)
    return LinearPeriodicSystem(a_of.shape[0], orbit.s_T, a_of, b_of, rho)


def k_perp_from_feedback(orbit: PeriodicOrbit, coords: TransverseCoordinates, k: Callable,
                         n_grid: int = 500, tol: float = 1e-6, h: float = 1e-6,
                         kind: str = "spline") -> PeriodicMatrixFunction:
    """``K(s) = Dk(x_s) Dx_perp(x_s)^+`` for a state feedback ``k`` vanishing on the orbit."""
    grid = uniform_grid(orbit.s_T, n_grid)
    vals = []
    for s in grid[:-1]:
        x = np.asarray(orbit.x_of_s(s), dtype=float)
        k0 = np.atleast_1d(k(x))
        if np.max(np.abs(k0)) > tol:
            raise ValueError(f"feedback does not vanish on the orbit (|k| = {np.max(np.abs(k0)):.3e})")
        vals.append(fd_jacobian(k, x, h) @ pinv(coords.jac(x)))
    vals.append(vals[0])
    return PeriodicMatrixFunction(orbit.s_T, np.array(vals), kind)
