"""State-transition matrices, real matrix logarithms and real Floquet-Lyapunov
factorizations ``Psi(s) = L(s) exp(F s)`` of linear periodic systems."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import block_diag, expm, logm, schur, solve_sylvester

from .linalg import (
    CLUSTER_RTOL,
    cluster_spectrum,
    is_real_eigenvalue,
    jordan_block_sizes,
    jordan_chains,
)
from .periodic import PeriodicMatrixFunction, uniform_grid

STM_RTOL = 1e-9
STM_ATOL = 1e-11
MULTIPLIER_WARN = 0.999


class FloquetError(RuntimeError):
    pass


class NoRealLogError(FloquetError):
    pass


def _evaluator(func) -> Callable[[float], np.ndarray]:
    return getattr(func, "at", func)


@dataclass(frozen=True)
class LinearPeriodicSystem:
    """``dy/ds = speed(s)^-1 (A(s) y + B(s) u)`` with ``A, B`` periodic in ``s``.

    ``speed`` is the phase velocity ``ds/dt``; leave it ``None`` for a
    time-parameterized system.
    """

    dim: int
    period: float
    a_of: Callable
    b_of: Callable | None = None
    speed: Callable | None = None

    def generator(self, s: float) -> np.ndarray:
        a = np.asarray(_evaluator(self.a_of)(s), dtype=float)
        if self.speed is None:
            return a
        return a / float(_evaluator(self.speed)(s))

    def closed_loop(self, k_of: Callable) -> "LinearPeriodicSystem":
        """System with ``A + B K``; sampled exactly when all factors share one grid."""
        if self.b_of is None:
            raise ValueError("open-loop system has no input matrix")
        funcs = (self.a_of, self.b_of, k_of)
        if all(isinstance(f, PeriodicMatrixFunction) for f in funcs) and len({f.n for f in funcs}) == 1:
            vals = self.a_of.values + self.b_of.values @ k_of.values
            a_cl = PeriodicMatrixFunction(self.period, vals, self.a_of.kind)
        else:
            fa, fb, fk = _evaluator(self.a_of), _evaluator(self.b_of), _evaluator(k_of)
            a_cl = lambda s: fa(s) + fb(s) @ fk(s)  # noqa: E731
        return LinearPeriodicSystem(self.dim, self.period, a_cl, self.b_of, self.speed)


@dataclass(frozen=True)
class StateTransition:
    """``Psi(s_i, 0)`` on a uniform grid, plus the per-interval transition
    matrices ``Phi_i = Psi(s_{i+1}, s_i)`` it was assembled from."""

    grid: np.ndarray
    psi: np.ndarray
    segments: np.ndarray
    period: float

    def __call__(self, s):
        spl = CubicSpline(self.grid, self.psi, axis=0)
        return spl(s)

    @property
    def n(self) -> int:
        return len(self.grid) - 1


@dataclass(frozen=True)
class MonodromyMatrix:
    m: np.ndarray
    multipliers: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.multipliers)))


@dataclass(frozen=True)
class FloquetFactorization:
    """Real factorization ``Psi(s) = L(s) exp(F s)`` with ``L(s + cT) = L(s)``
    and ``L(s + T) = L(s) Y``."""

    l_of: PeriodicMatrixFunction
    l_inv_of: PeriodicMatrixFunction
    f: np.ndarray
    y: np.ndarray
    c: int
    period: float
    residual: float = np.nan
    closure: float = np.nan
    method: str = "direct"
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def exponents(self) -> np.ndarray:
        """Characteristic exponents per unit of the periodic variable."""
        return np.sort_complex(np.linalg.eigvals(self.f))

    def time_exponents(self, time_period: float) -> np.ndarray:
        """Exponents per unit time when one period of ``s`` takes ``time_period``."""
        return self.exponents * self.period / time_period

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "c": self.c,
            "grid": self.l_of.grid.tolist(),
            "F": self.f.tolist(),
            "Y": self.y.tolist(),
            "L_samples": self.l_of.values.tolist(),
            "residual": self.residual,
            "method": self.method,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "FloquetFactorization":
        c = int(doc["c"])
        period = float(doc["period"])
        lv = np.asarray(doc["L_samples"], float)
        l_of = PeriodicMatrixFunction(c * period, lv)
        l_inv_of = PeriodicMatrixFunction(c * period, np.linalg.inv(lv))
        return cls(l_of, l_inv_of, np.asarray(doc["F"], float), np.asarray(doc["Y"], float), c, period,
                   float(doc.get("residual", np.nan)), method=doc.get("method", "direct"))


# ---------------------------------------------------------------------------
# state transition and monodromy


def integrate_stm(sys: LinearPeriodicSystem, n_grid: int = 500, rtol: float = STM_RTOL,
                  atol: float = STM_ATOL) -> StateTransition:
    """Integrate ``dPsi/ds = speed^-1 A Psi`` over one period.

    Each grid interval is integrated from the identity and the results are
    chained, which keeps strongly contracting directions resolved.
    """
    if n_grid < 8:
        raise ValueError("n_grid must be at least 8")
    n = sys.dim
    grid = uniform_grid(sys.period, n_grid)
    eye = np.eye(n)

    def rhs(s, y):
        return (sys.generator(s) @ y.reshape(n, n)).ravel()

    segs = np.empty((n_grid, n, n))
    psi = np.empty((n_grid + 1, n, n))
    psi[0] = eye
    for i in range(n_grid):
        sol = solve_ivp(rhs, (grid[i], grid[i + 1]), eye.ravel(), method="RK45", rtol=rtol, atol=atol)
        if not sol.success:
            raise FloquetError(f"integrator failed on [{grid[i]:.4g}, {grid[i + 1]:.4g}]: {sol.message}")
        segs[i] = sol.y[:, -1].reshape(n, n)
        psi[i + 1] = segs[i] @ psi[i]
    if not np.all(np.isfinite(psi)):
        raise FloquetError("non-finite state-transition matrix")
    return StateTransition(grid, psi, segs, sys.period)


def monodromy(stm: StateTransition) -> MonodromyMatrix:
    m = stm.psi[-1].copy()
    mult = np.linalg.eigvals(m)
    mult = mult[np.argsort(-np.abs(mult))]
    if np.max(np.abs(mult)) > MULTIPLIER_WARN:
        warnings.warn(f"characteristic multiplier near or outside the unit circle: {np.max(np.abs(mult)):.6f}",
                      RuntimeWarning, stacklevel=2)
    return MonodromyMatrix(m, mult)


def liouville_determinant(sys: LinearPeriodicSystem) -> float:
    """``exp(integral of trace(speed^-1 A) over a period)``."""
    # spline-sampled generators are only piecewise smooth; give quad the knots
    knots = sys.a_of.grid[1:-1] if isinstance(sys.a_of, PeriodicMatrixFunction) else None
    limit = 400 if knots is None else max(400, 4 * knots.size)
    val, _ = quad(lambda s: np.trace(sys.generator(s)), 0.0, sys.period, points=knots, limit=limit,
                  epsabs=1e-13, epsrel=1e-12)
    return float(np.exp(val))


# ---------------------------------------------------------------------------
# real logarithm


class RealLogCheck(NamedTuple):
    exists: bool
    diagnostic: dict


def real_log_exists(m: np.ndarray, rtol: float = CLUSTER_RTOL) -> RealLogCheck:
    """A real logarithm exists iff every Jordan block size at a negative real
    eigenvalue occurs an even number of times."""
    m = np.asarray(m, dtype=float)
    w = np.linalg.eigvals(m)
    if np.min(np.abs(w)) == 0.0:
        raise NoRealLogError("matrix is singular")
    clusters = cluster_spectrum(m, rtol)
    blocks = {}
    notes = []
    ok = True
    for idx in clusters:
        lam = complex(np.mean(w[idx]))
        if not (is_real_eigenvalue(lam, 1e-4) and lam.real < 0):
            continue
        sizes = jordan_block_sizes(m, lam.real, len(idx))
        blocks[lam.real] = sizes
        if any(sizes.count(k) % 2 for k in set(sizes)):
            ok = False
    # eigenvalues just outside the clustering tolerance make the verdict fragile
    neg = [x for x in w if is_real_eigenvalue(x, rtol) and x.real < 0]
    for i, a in enumerate(neg):
        for b in neg[i + 1:]:
            gap = abs(a - b) / max(1.0, abs(a))
            if rtol < gap < 1e-4:
                notes.append(f"negative eigenvalues {a.real:.6g} and {b.real:.6g} nearly coincide")
    return RealLogCheck(ok, {"negative_blocks": blocks, "notes": notes,
                             "confident": not notes})


def _cluster_kind(vals: np.ndarray, rtol: float) -> str:
    lam = complex(np.mean(vals))
    if is_real_eigenvalue(lam, 1e-4):
        return "negative" if lam.real < 0 else "positive"
    return "complex"


def _schur_clusters(m: np.ndarray, rtol: float):
    """Real Schur form with eigenvalue clusters contiguous on the diagonal."""
    t, z = schur(m, output="real")
    n = m.shape[0]
    w = np.linalg.eigvals(m)
    # conjugates share a 2x2 Schur block, so cluster on (Re, |Im|)
    key = w.real + 1j * np.abs(w.imag)
    groups = [key[g] for g in cluster_spectrum(m, rtol)]
    groups.sort(key=lambda g: (-np.abs(np.mean(g)), np.mean(g).real))
    k = 0
    sizes, kinds = [], []
    for g in groups:
        center = complex(np.mean(g))
        spread = float(np.max(np.abs(g - center)))
        tol = max(1e-6 * max(1.0, abs(center)), 10 * spread)

        def pred(re, im, c=center, tol=tol):
            return abs(complex(re, abs(im)) - c) <= tol

        sub = t[k:, k:]
        if sub.shape[0] == len(g):
            sdim = len(g)
        else:
            ts, zs, sdim = schur(sub, output="real", sort=pred)
            zfull = block_diag(np.eye(k), zs)
            t = zfull.T @ t @ zfull
            z = z @ zfull
        if sdim != len(g):
            raise FloquetError("eigenvalue reordering failed; clusters too close")
        sizes.append(sdim)
        kinds.append(_cluster_kind(g, rtol))
        k += sdim
    assert k == n
    return t, z, sizes, kinds


def _block_diagonalize(t: np.ndarray, sizes: list[int]):
    """``t = V D V^-1`` with ``D`` block diagonal, for block upper-triangular ``t``."""
    t = t.copy()
    n = t.shape[0]
    v = np.eye(n)
    start = 0
    for sz in sizes[:-1]:
        i0, i1 = start, start + sz
        t11, t12, t22 = t[i0:i1, i0:i1], t[i0:i1, i1:], t[i1:, i1:]
        x = solve_sylvester(t11, -t22, -t12)
        tr = np.eye(n)
        tr[i0:i1, i1:] = x
        tri = np.eye(n)
        tri[i0:i1, i1:] = -x
        t = tri @ t @ tr
        t[i0:i1, i1:] = 0.0
        v = v @ tr
        start = i1
    return v, t


def _log_2x2_rotation(b: np.ndarray) -> np.ndarray:
    """Real log of a 2x2 block with a complex-conjugate eigenvalue pair."""
    a = 0.5 * np.trace(b)
    det = np.linalg.det(b)
    omega = np.sqrt(max(det - a * a, 0.0))
    r = np.sqrt(det)
    theta = np.arctan2(omega, a)
    return np.log(r) * np.eye(2) + (theta / omega) * (b - a * np.eye(2))


def _complex_structure(c: np.ndarray, lam: float) -> np.ndarray:
    """Real ``K`` with ``K^2 = -I`` commuting with ``c`` (single eigenvalue ``lam``).

    Jordan chains of equal length are paired and rotated into one another.
    """
    n = c.shape[0]
    chains = jordan_chains(c, lam, n)
    by_len: dict[int, list[np.ndarray]] = {}
    for ch in chains:
        by_len.setdefault(ch.shape[1], []).append(ch)
    cols, kb_blocks = [], []
    for length, group in by_len.items():
        if len(group) % 2:
            raise NoRealLogError(f"unpaired Jordan block of size {length} at negative eigenvalue")
        for a_ch, b_ch in zip(group[0::2], group[1::2]):
            cols.extend([a_ch, b_ch])
            zero = np.zeros((length, length))
            eye = np.eye(length)
            kb_blocks.append(np.block([[zero, -eye], [eye, zero]]))
    basis = np.concatenate(cols, axis=1)
    kb = block_diag(*kb_blocks)
    return basis @ kb @ np.linalg.inv(basis)


def real_matrix_log(m: np.ndarray, rtol: float = CLUSTER_RTOL, check: float = 1e-8) -> np.ndarray:
    """Real logarithm of a real nonsingular matrix (principal where possible).

    Real Schur form, reordered so eigenvalue clusters are contiguous, then
    block-diagonalized by Sylvester solves. Clusters on the positive axis use
    the principal logarithm, single complex pairs the explicit rotation
    generator, and paired negative-real clusters ``log(-B) + pi K`` with a
    complex structure ``K`` commuting with ``B``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("square matrix required")
    ok, diag = real_log_exists(m, rtol)
    if not ok:
        raise NoRealLogError(f"no real logarithm: negative-eigenvalue Jordan blocks {diag['negative_blocks']}")
    t, z, sizes, kinds = _schur_clusters(m, rtol)
    v, d = _block_diagonalize(t, sizes)
    logs = []
    start = 0
    for sz, kind in zip(sizes, kinds):
        blk = d[start:start + sz, start:start + sz]
        if kind == "complex" and sz == 2:
            lb = _log_2x2_rotation(blk)
        elif kind == "negative":
            lam = float(np.mean(np.linalg.eigvals(blk).real))
            pos = -blk
            lb = _real_part(logm(pos)) + np.pi * _complex_structure(pos, -lam)
        else:
            lb = _real_part(logm(blk))
        logs.append(lb)
        start += sz
    out = z @ v @ block_diag(*logs) @ np.linalg.inv(v) @ z.T
    err = np.linalg.norm(expm(out) - m) / np.linalg.norm(m)
    if err > check:
        raise FloquetError(f"matrix logarithm round-trip error {err:.3e}")
    return out


def _real_part(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        if np.max(np.abs(x.imag)) > 1e-8 * max(1.0, np.max(np.abs(x.real))):
            raise FloquetError("principal logarithm is not real")
        return x.real
    return x


# ---------------------------------------------------------------------------
# factorizations


def _propagate_l(segments: np.ndarray, f: np.ndarray, h: float, c: int):
    n = f.shape[0]
    e_neg = expm(-f * h)
    e_pos = expm(f * h)
    steps = segments.shape[0]
    lv = np.empty((c * steps + 1, n, n))
    li = np.empty_like(lv)
    lv[0] = li[0] = np.eye(n)
    for k in range(c * steps):
        phi = segments[k % steps]
        lv[k + 1] = phi @ lv[k] @ e_neg
        li[k + 1] = e_pos @ li[k] @ np.linalg.inv(phi)
    return lv, li


def _factorization_residual(stm: StateTransition, lv: np.ndarray, f: np.ndarray, c: int) -> float:
    m = stm.psi[-1]
    worst = 0.0
    steps = stm.n
    for k in range(c * steps + 1):
        q, r = divmod(k, steps)
        if r == 0 and q > 0:
            q, r = q - 1, steps
        psi = stm.psi[r] @ np.linalg.matrix_power(m, q)
        s = k * stm.period / steps
        err = np.linalg.norm(psi - lv[k] @ expm(f * s)) / np.linalg.norm(psi)
        worst = max(worst, err)
    return worst


def fl_factorize_direct(stm: StateTransition, residual_tol: float = 1e-6) -> FloquetFactorization:
    """Factorize from the monodromy matrix: ``F = log(M) / T`` when a real
    logarithm exists, otherwise the 2T-periodic form from ``log(M^2) / 2T``."""
    m = stm.psi[-1]
    n = m.shape[0]
    period = stm.period
    ok, diag = real_log_exists(m)
    if ok:
        c = 1
        f = real_matrix_log(m) / period
        y = np.eye(n)
    else:
        c = 2
        f = real_matrix_log(m @ m) / (2.0 * period)
        y = m @ expm(-f * period)
        if np.linalg.norm(y @ y - np.eye(n)) > 1e-6 or np.linalg.norm(f @ y - y @ f) > 1e-6 * max(1.0, np.linalg.norm(f)):
            raise FloquetError("could not form a commuting involution Y for the 2T-periodic factorization")
    lv, li = _propagate_l(stm.segments, f, period / stm.n, c)
    closure = float(np.linalg.norm(lv[-1] - np.eye(n)))
    lv[-1] = np.eye(n)
    li[-1] = np.eye(n)
    res = _factorization_residual(stm, lv, f, c)
    if res > residual_tol:
        raise FloquetError(f"factorization residual {res:.3e} above tolerance {residual_tol:.1e}")
    l_of = PeriodicMatrixFunction(c * period, lv)
    l_inv_of = PeriodicMatrixFunction(c * period, li)
    return FloquetFactorization(l_of, l_inv_of, f, y, c, period, res, closure, "direct", 0,
                                {"log_check": diag})


def _shoot_l(sys: LinearPeriodicSystem, f: np.ndarray, c: int, grid: np.ndarray, rtol: float, atol: float):
    n = sys.dim

    def rhs(s, y):
        lmat = y.reshape(n, n)
        return (sys.generator(s) @ lmat - lmat @ f).ravel()

    sol = solve_ivp(rhs, (0.0, grid[-1]), np.eye(n).ravel(), method="RK45", t_eval=grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise FloquetError(f"shooting integration failed: {sol.message}")
    return sol.y.T.reshape(-1, n, n)


def fl_factorize_bvp(sys: LinearPeriodicSystem, f_init: np.ndarray | None = None, c: int | None = None,
                     n_grid: int = 500, tol: float = 1e-9, max_iter: int = 25,
                     rtol: float = 1e-10, atol: float = 1e-12) -> FloquetFactorization:
    """Refine ``(L, F)`` jointly by shooting on ``dL/ds = speed^-1 A L - L F``
    with the boundary condition ``L(cT) = I``; Newton on the entries of ``F``."""
    n = sys.dim
    if f_init is None or c is None:
        direct = fl_factorize_direct(integrate_stm(sys, n_grid))
        f_init = direct.f if f_init is None else f_init
        c = direct.c if c is None else c
    f = np.array(f_init, dtype=float)
    grid = uniform_grid(c * sys.period, c * n_grid)
    eye = np.eye(n)

    def residual(fm):
        lv = _shoot_l(sys, fm, c, grid, rtol, atol)
        return (lv[-1] - eye).ravel(), lv

    g, lv = residual(f)
    it = 0
    while np.linalg.norm(g) > tol:
        if it >= max_iter:
            raise FloquetError(f"shooting did not converge (|residual| = {np.linalg.norm(g):.3e})")
        jac = np.empty((n * n, n * n))
        hstep = 1e-6 * max(1.0, np.linalg.norm(f))
        for j in range(n * n):
            df = np.zeros(n * n)
            df[j] = hstep
            gp, _ = residual(f + df.reshape(n, n))
            jac[:, j] = (gp - g) / hstep
        step = np.linalg.lstsq(jac, -g, rcond=None)[0]
        f = f + step.reshape(n, n)
        g_new, lv_new = residual(f)
        it += 1
        if np.linalg.norm(g_new) > 10 * np.linalg.norm(g) and np.linalg.norm(g) > 1e3 * tol:
            raise FloquetError("shooting iteration diverged")
        g, lv = g_new, lv_new
    y = lv[len(lv) // 2] if c == 2 else eye
    lv = lv.copy()
    closure = float(np.linalg.norm(lv[-1] - eye))
    lv[-1] = eye
    li = np.linalg.inv(lv)
    # residual against an independently integrated STM
    stm = integrate_stm(sys, n_grid)
    res = _factorization_residual(stm, lv, f, c)
    return FloquetFactorization(PeriodicMatrixFunction(c * sys.period, lv),
                                PeriodicMatrixFunction(c * sys.period, li),
                                f, y, c, sys.period, res, closure, "bvp", it)
