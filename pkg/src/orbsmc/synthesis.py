"""Periodic Riccati and Lyapunov solvers on the transverse linearization and
the construction of a time-invariant sliding surface from a Floquet
factorization of the closed loop."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm, schur, solve_continuous_are

from .floquet import FloquetFactorization, LinearPeriodicSystem, integrate_stm, monodromy
from .linalg import numerical_rank, null_space_abs, pinv
from .periodic import PeriodicMatrixFunction, uniform_grid
from .subspace import Annihilator, annihilate, enumerate_codim_subspaces


class PrdeError(RuntimeError):
    pass


class SynthesisError(RuntimeError):
    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = list(candidates)


def _as_function(x, shape) -> Callable:
    if callable(x):
        return x
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr * np.eye(shape)
    return lambda s: arr


def fourier_nodes(period: float, order: int) -> np.ndarray:
    m = 2 * order + 1
    return np.arange(m) * period / m


def fourier_diff_matrix(period: float, order: int) -> np.ndarray:
    """Spectral differentiation on ``2 order + 1`` equispaced periodic nodes."""
    m = 2 * order + 1
    h = 2 * np.pi / m
    k = np.arange(m)
    diff = k[:, None] - k[None, :]
    with np.errstate(divide="ignore"):
        d = 0.5 * (-1.0) ** diff / np.sin(diff * h / 2)
    d[diff == 0] = 0.0
    return d * (2 * np.pi / period)


def trig_interpolate(values: np.ndarray, period: float, s, nu: int = 0) -> np.ndarray:
    """Evaluate (or differentiate) the trigonometric interpolant of odd-length
    node values at points ``s``."""
    m = values.shape[0]
    coef = np.fft.fft(values.reshape(m, -1), axis=0) / m
    k = np.fft.fftfreq(m, d=1.0 / m)
    w = 2 * np.pi / period
    ss = np.atleast_1d(np.asarray(s, float))
    phase = np.exp(1j * w * np.outer(ss, k)) * (1j * w * k) ** nu
    return (phase @ coef).real.reshape((ss.size,) + values.shape[1:])


@dataclass(frozen=True)
class PrdeSolution:
    r_of: PeriodicMatrixFunction
    residual: float
    fourier_order: int
    multipliers: np.ndarray
    iterations: int
    node_values: np.ndarray = field(repr=False, default=None)

    @property
    def max_multiplier(self) -> float:
        return float(np.max(np.abs(self.multipliers)))


def _samples(func, nodes):
    return np.array([np.atleast_2d(func(s)) for s in nodes])


def _system_samples(tl: LinearPeriodicSystem, nodes):
    a = np.array([tl.a_of(s) for s in nodes])
    b = np.array([np.asarray(tl.b_of(s)).reshape(tl.dim, -1) for s in nodes])
    rho = np.ones(len(nodes)) if tl.speed is None else np.array([float(tl.speed(s)) for s in nodes])
    return a, b, rho


def _lyapunov_operator(dmat, rho, acl):
    """Matrix of ``R -> rho D R + Acl^T R + R Acl`` on row-major stacked node values."""
    m, n = acl.shape[0], acl.shape[1]
    nn = n * n
    eye = np.eye(n)
    op = np.kron(rho[:, None] * dmat, np.eye(nn))
    for j in range(m):
        at = acl[j].T
        op[j * nn:(j + 1) * nn, j * nn:(j + 1) * nn] += np.kron(at, eye) + np.kron(eye, at)
    return op


def _riccati_residual(r, dr, a, b, rho, q, ginv):
    rb = r @ b
    return (rho[:, None, None] * dr + np.transpose(a, (0, 2, 1)) @ r + r @ a + q
            - rb @ ginv @ np.transpose(rb, (0, 2, 1)))


def _rde_rhs(tl, q_of, gamma_of):
    n = tl.dim

    def rhs(s, y):
        r = y.reshape(n, n)
        a = tl.a_of(s)
        b = np.asarray(tl.b_of(s)).reshape(n, -1)
        rho = 1.0 if tl.speed is None else float(tl.speed(s))
        rb = r @ b
        return (-(a.T @ r + r @ a + q_of(s) - rb @ np.linalg.solve(gamma_of(s), rb.T)) / rho).ravel()

    return rhs


def hamiltonian_shooting(tl, q_of, gamma_of, nodes):
    """Periodic Riccati solution at ``nodes`` from the stable invariant
    subspace of the Hamiltonian monodromy, then one backward period of the
    Riccati equation from the resulting periodic boundary value."""
    n = tl.dim

    def ham(s, y):
        a = tl.a_of(s)
        b = np.asarray(tl.b_of(s)).reshape(n, -1)
        rho = 1.0 if tl.speed is None else float(tl.speed(s))
        h = np.block([[a, -b @ np.linalg.solve(gamma_of(s), b.T)], [-q_of(s), -a.T]]) / rho
        return (h @ y.reshape(2 * n, 2 * n)).ravel()

    sol = solve_ivp(ham, (0.0, tl.period), np.eye(2 * n).ravel(), rtol=1e-11, atol=1e-13)
    mono = sol.y[:, -1].reshape(2 * n, 2 * n)
    _, z, sdim = schur(mono, output="real", sort="iuc")
    if sdim != n:
        raise PrdeError("Hamiltonian monodromy has no n-dimensional stable subspace (not stabilizable)")
    x1, x2 = z[:n, :n], z[n:, :n]
    if np.linalg.cond(x1) > 1e12:
        raise PrdeError("stable Hamiltonian subspace is not a graph over the state (not detectable/stabilizable)")
    r0 = np.linalg.solve(x1.T, x2.T).T
    r0 = 0.5 * (r0 + r0.T)
    back = solve_ivp(_rde_rhs(tl, q_of, gamma_of), (tl.period, 0.0), r0.ravel(), rtol=1e-10, atol=1e-12,
                     dense_output=True)
    vals = back.sol(nodes).T.reshape(-1, n, n)
    return 0.5 * (vals + np.transpose(vals, (0, 2, 1)))


def _newton(r, dmat, a, b, rho, q, ginv, tol, max_iter):
    mnodes, n = r.shape[0], r.shape[1]
    for it in range(1, max_iter + 1):
        dr = np.einsum("jk,kab->jab", dmat, r)
        res = _riccati_residual(r, dr, a, b, rho, q, ginv)
        acl = a - b @ ginv @ np.transpose(b, (0, 2, 1)) @ r
        step = np.linalg.solve(_lyapunov_operator(dmat, rho, acl), -res.reshape(-1)).reshape(mnodes, n, n)
        r = r + step
        r = 0.5 * (r + np.transpose(r, (0, 2, 1)))
        if not np.all(np.isfinite(r)) or np.max(np.abs(r)) > 1e12:
            break
        if np.max(np.abs(step)) < tol * max(1.0, np.max(np.abs(r))):
            if np.min(np.linalg.eigvalsh(r)) <= 0:
                raise PrdeError("Riccati iterate is not positive definite")
            return r, it
    raise PrdeError("Newton iteration on the periodic Riccati equation did not converge")


def solve_prde(tl: LinearPeriodicSystem, q_of=1.0, gamma_of=1.0, fourier_order: int = 100,
               tol: float = 1e-11, max_iter: int = 40, check_multipliers: bool = True) -> PrdeSolution:
    """Stabilizing periodic solution of ``rho R' + A^T R + R A + Q - R B G^-1 B^T R = 0``.

    ``R`` is represented by its values on ``2 order + 1`` Fourier nodes and
    the collocation equations are solved by Newton's method. The first
    iterate is the Riccati solution of the s-averaged system; if that does
    not stabilize the periodic loop or Newton stalls, the iteration restarts
    from a Hamiltonian shooting solution.
    """
    n = tl.dim
    if tl.b_of is None:
        raise ValueError("transverse system needs an input matrix")
    m_in = np.asarray(tl.b_of(0.0)).reshape(n, -1).shape[1]
    q_f = _as_function(q_of, n)
    g_f = _as_function(gamma_of, m_in)
    nodes = fourier_nodes(tl.period, fourier_order)
    dmat = fourier_diff_matrix(tl.period, fourier_order)
    a, b, rho = _system_samples(tl, nodes)
    q = _samples(q_f, nodes)
    ginv = np.linalg.inv(_samples(g_f, nodes))

    r0 = _averaged_start(tl, g_f, a, b, rho, q, ginv)
    result = None
    if r0 is not None:
        try:
            result = _newton(np.repeat(r0[None], len(nodes), axis=0), dmat, a, b, rho, q, ginv, tol, max_iter)
        except PrdeError:
            result = None
    if result is None:
        start = hamiltonian_shooting(tl, q_f, g_f, nodes)
        result = _newton(start, dmat, a, b, rho, q, ginv, tol, max_iter)
    r, it = result

    n_out = tl.a_of.n if isinstance(tl.a_of, PeriodicMatrixFunction) else 500
    grid = uniform_grid(tl.period, n_out)
    r_grid = trig_interpolate(r, tl.period, grid)
    r_grid = 0.5 * (r_grid + np.transpose(r_grid, (0, 2, 1)))
    r_grid[-1] = r_grid[0]
    r_of = PeriodicMatrixFunction(tl.period, r_grid)
    residual = prde_residual(tl, r, q_f, g_f, grid)
    mult = np.array([])
    if check_multipliers:
        mult = closed_loop_multipliers(tl, lqr_gain_values(r_of, tl, g_f))
        if np.max(np.abs(mult)) >= 1.0:
            raise PrdeError(f"closed loop not stable: max multiplier {np.max(np.abs(mult)):.4f}")
    return PrdeSolution(r_of, residual, fourier_order, mult, it, r)


def closed_loop_multipliers(tl: LinearPeriodicSystem, k_of: PeriodicMatrixFunction) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return monodromy(integrate_stm(tl.closed_loop(k_of), n_grid=k_of.n)).multipliers


def _averaged_start(tl, g_f, a, b, rho, q, ginv):
    """Riccati solution of the s-averaged system, if it stabilizes the periodic loop."""
    n = tl.dim
    w = (1.0 / rho)[:, None, None]
    try:
        r0 = solve_continuous_are(np.mean(a * w, axis=0), np.mean(b * w, axis=0), np.mean(q * w, axis=0),
                                  np.mean(np.linalg.inv(ginv) * w, axis=0))
    except (np.linalg.LinAlgError, ValueError):
        return None
    if np.linalg.cond(r0) > 1e8:
        # averaged pair is nearly unstabilizable; start carries no information
        return None
    # cheap screen: product of exponentials over 400 steps
    grid = uniform_grid(tl.period, 400)
    h = grid[1] - grid[0]
    phi = np.eye(n)
    for sm in grid[:-1] + h / 2:
        bm = np.asarray(tl.b_of(sm)).reshape(n, -1)
        acl = tl.a_of(sm) - bm @ np.linalg.solve(g_f(sm), bm.T @ r0)
        rho_m = 1.0 if tl.speed is None else float(tl.speed(sm))
        phi = expm(acl * h / rho_m) @ phi
        if not np.all(np.isfinite(phi)):
            return None
    if np.max(np.abs(np.linalg.eigvals(phi))) >= 1.0:
        return None
    return r0


def prde_residual(tl, node_values, q_of, gamma_of, grid) -> float:
    """Max over ``grid`` of the Riccati residual norm, with ``R`` and ``R'``
    from the trigonometric interpolant of the node values."""
    n = tl.dim
    q_f = _as_function(q_of, n)
    r = trig_interpolate(node_values, tl.period, grid)
    dr = trig_interpolate(node_values, tl.period, grid, nu=1)
    a, b, rho = _system_samples(tl, grid)
    q = _samples(q_f, grid)
    g_f = _as_function(gamma_of, b.shape[2])
    ginv = np.linalg.inv(_samples(g_f, grid))
    res = _riccati_residual(r, dr, a, b, rho, q, ginv)
    return float(np.max(np.linalg.norm(res, ord=2, axis=(1, 2))))


def lqr_gain_values(r_of: PeriodicMatrixFunction, tl: LinearPeriodicSystem, gamma_of=1.0) -> PeriodicMatrixFunction:
    n = tl.dim
    grid = r_of.grid
    b = np.array([np.asarray(tl.b_of(s)).reshape(n, -1) for s in grid])
    g_f = _as_function(gamma_of, b.shape[2])
    k = np.array([-np.linalg.solve(g_f(s), bi.T @ ri) for s, bi, ri in zip(grid, b, r_of.values)])
    k[-1] = k[0]
    return PeriodicMatrixFunction(tl.period, k)


def lqr_gain(prde: PrdeSolution, tl: LinearPeriodicSystem, gamma_of=1.0) -> PeriodicMatrixFunction:
    """``K(s) = -Gamma^-1 B^T R``."""
    return lqr_gain_values(prde.r_of, tl, gamma_of)


def solve_periodic_lyapunov(tl_closed: LinearPeriodicSystem, q_of=1.0, fourier_order: int = 100,
                            check: bool = True) -> PeriodicMatrixFunction:
    """Periodic SPD solution of ``rho R' + A^T R + R A = -Q``."""
    n = tl_closed.dim
    if check:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mult = monodromy(integrate_stm(tl_closed, n_grid=200)).multipliers
        if np.max(np.abs(mult)) >= 1.0:
            raise PrdeError("closed loop is not asymptotically stable")
    q_f = _as_function(q_of, n)
    nodes = fourier_nodes(tl_closed.period, fourier_order)
    dmat = fourier_diff_matrix(tl_closed.period, fourier_order)
    a = np.array([tl_closed.a_of(s) for s in nodes])
    rho = np.ones(len(nodes)) if tl_closed.speed is None else np.array([float(tl_closed.speed(s)) for s in nodes])
    q = _samples(q_f, nodes)
    op = _lyapunov_operator(dmat, rho, a)
    r = np.linalg.solve(op, -q.reshape(-1)).reshape(len(nodes), n, n)
    r = 0.5 * (r + np.transpose(r, (0, 2, 1)))
    n_out = tl_closed.a_of.n if isinstance(tl_closed.a_of, PeriodicMatrixFunction) else 500
    grid = uniform_grid(tl_closed.period, n_out)
    vals = trig_interpolate(r, tl_closed.period, grid)
    vals = 0.5 * (vals + np.transpose(vals, (0, 2, 1)))
    vals[-1] = vals[0]
    if np.min(np.linalg.eigvalsh(vals)) <= 0:
        raise PrdeError("periodic Lyapunov solution is not positive definite")
    return PeriodicMatrixFunction(tl_closed.period, vals)


# ---------------------------------------------------------------------------
# switching function


@dataclass(frozen=True)
class SwitchingFunction:
    """``sigma(x) = S_hat L^-1(p(x)) x_perp(x)``."""

    s_hat: Annihilator
    s_perp_of: PeriodicMatrixFunction
    projection: Callable | None = None
    coords: object | None = None

    def sigma(self, x) -> np.ndarray:
        s = self.projection(x)
        return self.s_perp_of.at(s) @ self.coords.x_perp(x)

    def to_dict(self) -> dict:
        return {"S_hat": self.s_hat.s_hat.tolist(), "S_perp": self.s_perp_of.to_dict()}


@dataclass(frozen=True)
class CandidateReport:
    eigenvalues: list
    s_hat: np.ndarray
    det_profile: np.ndarray
    passed: bool
    reason: str
    invariance: float

    @property
    def min_abs_det(self) -> float:
        return float(np.min(np.abs(self.det_profile)))

    @property
    def max_abs_det(self) -> float:
        return float(np.max(np.abs(self.det_profile)))

    @property
    def slowest(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[complex(v).real, complex(v).imag] for v in self.eigenvalues],
            "S_hat": self.s_hat.tolist(),
            "min_abs_det": self.min_abs_det,
            "max_abs_det": self.max_abs_det,
            "passed": self.passed,
            "reason": self.reason,
            "invariance_residual": self.invariance,
        }


@dataclass(frozen=True)
class SynthesisResult:
    switching: SwitchingFunction
    candidates: list
    selected: int

    @property
    def chosen(self) -> CandidateReport:
        return self.candidates[self.selected]

    def to_dict(self) -> dict:
        return {
            "candidates": [c.to_dict() for c in self.candidates],
            "selected": self.selected,
            "S_hat": self.switching.s_hat.s_hat.tolist(),
            "S_perp": self.switching.s_perp_of.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def synthesize_switching(fl: FloquetFactorization, tl: LinearPeriodicSystem, coords=None, projection=None,
                         det_margin: float = 1e-3, orient: bool = True) -> SynthesisResult:
    """Screen every codimension-m real invariant subspace of ``F``.

    A candidate passes when ``det(S_hat L^-1(s) B(s))`` keeps one sign on the
    grid and ``min |det| >= det_margin * max |det|``; for a doubled-period
    factorization it must also satisfy ``S_hat Y = S_hat``. Passing candidates
    are ranked by ``max |det|`` and then by the slowest carried eigenvalue.
    With ``orient`` a single-input surface is signed so that ``S B > 0``.
    """
    n = fl.f.shape[0]
    b_grid = tl.b_of.values if isinstance(tl.b_of, PeriodicMatrixFunction) else None
    n_base = fl.l_inv_of.n // fl.c
    grid = uniform_grid(fl.period, n_base)
    if b_grid is None or b_grid.shape[0] != n_base + 1:
        b_grid = np.array([np.asarray(tl.b_of(s)).reshape(n, -1) for s in grid])
    b_grid = b_grid.reshape(n_base + 1, n, -1)
    m = b_grid.shape[2]
    linv = fl.l_inv_of.values[: n_base + 1]
    reports = []
    for sub in enumerate_codim_subspaces(fl.f, m):
        s_hat = annihilate(sub).s_hat
        inv = float(np.linalg.norm(s_hat @ fl.f @ (np.eye(n) - pinv(s_hat) @ s_hat)))
        dets = np.linalg.det(s_hat @ linv @ b_grid)
        reason = "ok"
        if fl.c == 2 and np.linalg.norm(s_hat @ fl.y - s_hat) > 1e-8:
            reason = "S_hat Y != S_hat: surface would not be single-period"
        elif np.any(np.sign(dets) != np.sign(dets[0])) or np.any(dets == 0):
            reason = "det(S B) changes sign on the grid"
        elif np.min(np.abs(dets)) < det_margin * np.max(np.abs(dets)):
            reason = "det(S B) nearly vanishes on the grid"
        reports.append(CandidateReport(list(sub.eigenvalues_carried), s_hat, dets, reason == "ok", reason, inv))
    passing = [i for i, r in enumerate(reports) if r.passed]
    if not passing:
        raise SynthesisError("no invariant subspace gives a nonsingular S B over the period", reports)
    best = sorted(passing, key=lambda i: (-reports[i].max_abs_det, reports[i].slowest))[0]
    chosen = reports[best]
    s_hat = chosen.s_hat
    if orient and m == 1 and chosen.det_profile[0] < 0:
        s_hat = -s_hat
    s_vals = s_hat @ linv
    s_vals[-1] = s_vals[0]
    sf = SwitchingFunction(Annihilator(s_hat), PeriodicMatrixFunction(fl.period, s_vals), projection, coords)
    return SynthesisResult(sf, reports, best)


@dataclass(frozen=True)
class InvarianceReport:
    max_violation: float
    min_abs_det: float
    ok: bool


def verify_sliding_invariance(sf: SwitchingFunction, tl_closed: LinearPeriodicSystem,
                              tol: float = 1e-5) -> InvarianceReport:
    """Check ``(rho dS/ds + S A_cl) X = 0`` for ``X`` spanning ``ker S(s)`` and
    ``det(S B) != 0`` on the grid; ``dS/ds`` from the periodic spline."""
    sp = sf.s_perp_of
    worst, min_det = 0.0, np.inf
    for s in sp.grid[:-1]:
        smat = sp(s)
        ds = sp(s, 1)
        rho = 1.0 if tl_closed.speed is None else float(tl_closed.speed(s))
        kern = null_space_abs(smat, 1e-10)
        lhs = (rho * ds + smat @ tl_closed.a_of(s)) @ kern
        worst = max(worst, float(np.linalg.norm(lhs) / max(1.0, np.linalg.norm(smat))))
        if tl_closed.b_of is not None:
            b = np.asarray(tl_closed.b_of(s)).reshape(smat.shape[1], -1)
            min_det = min(min_det, abs(float(np.linalg.det(smat @ b))))
    return InvarianceReport(worst, float(min_det), bool(worst < tol and min_det > 0))
