"""Runtime feedback laws in transverse coordinates and the state-dependent
sliding-mode gain design."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .floquet import FloquetFactorization, LinearPeriodicSystem
from .linalg import pinv
from .periodic import PeriodicMatrixFunction, circular_diff
from .synthesis import SwitchingFunction

KINDS = ("LQR", "SMC", "LRC", "PureSMC")


@dataclass(frozen=True)
class ControllerSpec:
    """Selects a control law and carries its synthesized artifacts.

    ``zeta`` (a function of ``|x_perp|``) replaces the constant ``mu`` when
    ``zeta_mode`` is ``"state-dependent"``. ``signum`` swaps the saturation
    for the discontinuous sign function.
    """

    kind: str
    mu: float = 0.0
    epsilon: float = 1e-3
    k_perp: PeriodicMatrixFunction | None = None
    sf: SwitchingFunction | None = None
    r_perp: PeriodicMatrixFunction | None = None
    b_perp: PeriodicMatrixFunction | None = None
    zeta_mode: str = "constant"
    zeta: Callable | None = None
    signum: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}; expected one of {KINDS}")
        if self.epsilon <= 0:
            raise ValueError("boundary-layer width must be positive")
        if self.mu < 0:
            raise ValueError("gain must be non-negative")
        if (self.sf is not None) != (self.kind in ("SMC", "PureSMC")):
            raise ValueError("a switching function is required for SMC and PureSMC and only for them")
        if (self.r_perp is not None) != (self.kind == "LRC"):
            raise ValueError("a Riccati solution is required for LRC and only for it")
        if self.kind == "LRC" and self.b_perp is None:
            raise ValueError("LRC needs the transverse input matrix")
        if self.kind != "PureSMC" and self.k_perp is None:
            raise ValueError(f"{self.kind} needs the nominal gain K_perp")
        if self.zeta_mode not in ("constant", "state-dependent"):
            raise ValueError("zeta_mode must be 'constant' or 'state-dependent'")
        if self.zeta_mode == "state-dependent" and self.zeta is None:
            raise ValueError("state-dependent mode needs a zeta evaluator")


class ControlOutput(NamedTuple):
    u: np.ndarray
    s: float
    sigma: np.ndarray | None
    xi: np.ndarray | None
    x_perp: np.ndarray


def sat(v: np.ndarray) -> np.ndarray:
    return np.clip(v, -1.0, 1.0)


class Controller:
    """Evaluates ``spec`` at a state through a projection and transverse coordinates."""

    def __init__(self, spec: ControllerSpec, projection: Callable, coords):
        self.spec = spec
        self.projection = projection
        self.x_perp = coords.x_perp

    def _gain(self, xp: np.ndarray) -> float:
        if self.spec.zeta_mode == "state-dependent":
            return float(self.spec.zeta(float(np.linalg.norm(xp))))
        return self.spec.mu

    def _switch(self, v: np.ndarray) -> np.ndarray:
        if self.spec.signum:
            return np.sign(v)
        return sat(v / self.spec.epsilon)

    def __call__(self, x) -> ControlOutput:
        sp = self.spec
        s = self.projection(x)
        xp = self.x_perp(x)
        sigma = xi = None
        u = sp.k_perp.at(s) @ xp if sp.k_perp is not None else 0.0
        if sp.kind in ("SMC", "PureSMC"):
            sigma = sp.sf.s_perp_of.at(s) @ xp
            u = u - self._gain(xp) * self._switch(sigma)
        elif sp.kind == "LRC":
            xi = sp.b_perp.at(s).T @ (sp.r_perp.at(s) @ xp)
            u = u - self._gain(xp) * self._switch(xi)
        return ControlOutput(np.atleast_1d(u), s, sigma, xi, xp)


def control(x, spec: ControllerSpec, projection: Callable, coords) -> np.ndarray:
    return Controller(spec, projection, coords)(x).u


def lqr_control(x, spec, projection, coords):
    """``u = K(p(x)) x_perp(x)``."""
    return control(x, spec, projection, coords)


def smc_control(x, spec, projection, coords):
    """``u = K x_perp - mu sat(sigma / eps)`` with ``sigma = S(p(x)) x_perp``."""
    return control(x, spec, projection, coords)


def lrc_control(x, spec, projection, coords):
    """``u = K x_perp - mu sat(xi / eps)`` with ``xi = B^T R x_perp``."""
    return control(x, spec, projection, coords)


def pure_smc_control(x, spec, projection, coords):
    """``u = -mu sat(sigma / eps)``."""
    return control(x, spec, projection, coords)


# ---------------------------------------------------------------------------
# state-dependent gain


@dataclass(frozen=True)
class GainDesign:
    """Constants of the reaching-law gain ``zeta`` and its validity tube.

    ``c1(r)`` bounds the input-matrix mismatch and ``c2(r)`` the drift
    remainder of ``d sigma/dt`` at transverse radius ``r``.
    """

    p: np.ndarray
    q: np.ndarray
    f_sigma: np.ndarray
    c0: float
    c0_hat: float
    c1: Callable
    c2: Callable
    upsilon: float
    mu_star: float
    delta_max: float
    tube_radius: float

    @property
    def lam_min(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.p)))

    @property
    def lam_max(self) -> float:
        return float(np.max(np.linalg.eigvalsh(self.p)))

    def zeta(self, r: float) -> float:
        lmax, lmin = self.lam_max, self.lam_min
        return math.sqrt(lmax) / (self.upsilon * lmin) * (
            self.mu_star + math.sqrt(lmax) * ((self.c0 + self.c1(r)) * self.delta_max + self.c2(r)))

    def to_dict(self) -> dict:
        return {"P": self.p.tolist(), "Q": self.q.tolist(), "F_sigma": self.f_sigma.tolist(), "c0": self.c0,
                "c0_hat": self.c0_hat, "upsilon": self.upsilon, "mu_star": self.mu_star,
                "delta_max": self.delta_max, "tube_radius": self.tube_radius, "zeta_at_orbit": self.zeta(0.0)}


def _inverse_linear_like(c1: Callable, level: float, r_max: float = 1e3) -> float:
    """Largest ``r`` with ``c1(r) <= level`` for an increasing ``c1`` (bisection)."""
    if c1(r_max) <= level:
        return math.inf
    lo, hi = 0.0, r_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if c1(mid) <= level else (lo, mid)
    return lo


def design_state_dependent_gain(sf: SwitchingFunction, tl: LinearPeriodicSystem, fl: FloquetFactorization,
                                delta_max: float, mu_star: float = 0.1, upsilon: float = 0.5,
                                q: np.ndarray | None = None, c1: Callable | None = None,
                                c2: Callable | None = None) -> GainDesign:
    """Lyapunov matrix of the reduced sliding variable and the gain constants.

    ``F_sigma = S_hat F S_hat^+`` must be Hurwitz; ``P`` solves
    ``F_sigma^T P + P F_sigma = -2 Q``. Missing ``c1``/``c2`` default to zero.
    """
    if not 0.0 < upsilon < 1.0:
        raise ValueError("upsilon must lie in (0, 1)")
    s_hat = sf.s_hat.s_hat
    f_sigma = s_hat @ fl.f @ pinv(s_hat)
    if np.max(np.linalg.eigvals(f_sigma).real) >= 0:
        raise np.linalg.LinAlgError("reduced sliding dynamics are not Hurwitz")
    m = f_sigma.shape[0]
    q = np.eye(m) if q is None else np.atleast_2d(q)
    p = solve_continuous_lyapunov(f_sigma.T, -2.0 * q)
    p = 0.5 * (p + p.T)
    n = tl.dim
    grid = sf.s_perp_of.grid
    sb = [sf.s_perp_of.at(s) @ np.asarray(tl.b_of(s)).reshape(n, -1) for s in grid]
    c0 = max(float(np.linalg.norm(x, 2)) for x in sb)
    c0_hat = max(float(np.linalg.norm(np.linalg.inv(x), 2)) for x in sb)
    c1 = c1 if c1 is not None else (lambda r: 0.0)
    c2 = c2 if c2 is not None else (lambda r: 0.0)
    ev = np.linalg.eigvalsh(p)
    level = ev.min() * (1.0 - upsilon) / (ev.max() * c0_hat)
    radius = _inverse_linear_like(c1, level)
    return GainDesign(p, q, f_sigma, c0, c0_hat, c1, c2, upsilon, mu_star, delta_max, radius)


@dataclass(frozen=True)
class RemainderSlopes:
    k1: float
    k2: float

    def c1(self, r: float) -> float:
        return self.k1 * r

    def c2(self, r: float) -> float:
        return self.k2 * r * r


def estimate_remainder_slopes(sf: SwitchingFunction, tl: LinearPeriodicSystem, system, orbit,
                              radii=(0.005, 0.01, 0.02), n_samples: int = 200, seed: int = 0,
                              h: float = 1e-6) -> RemainderSlopes:
    """Sample tube points ``x = x_s(s) + Dx_perp^+ d`` and fit the linear and
    quadratic slopes of the input mismatch ``|S (Dx_perp g - B)|`` and of the
    drift remainder of ``d sigma/dt`` beyond its linearization."""
    rng = np.random.default_rng(seed)
    n = tl.dim
    proj, coords = sf.projection, sf.coords
    k1 = k2 = 0.0
    for _ in range(n_samples):
        s0 = rng.uniform(0.0, orbit.s_T)
        x_s = np.asarray(orbit.x_of_s(s0), float)
        d = rng.standard_normal(n)
        d *= rng.choice(radii) / np.linalg.norm(d)
        x = x_s + pinv(coords.jac(x_s)) @ d
        s = proj(x)
        xp = coords.x_perp(x)
        r = float(np.linalg.norm(xp))
        if r == 0.0:
            continue
        jx = coords.jac(x)
        smat = sf.s_perp_of.at(s)
        b = np.asarray(tl.b_of(s)).reshape(n, -1)
        k1 = max(k1, float(np.linalg.norm(smat @ (jx @ system.g(x) - b), 2)) / r)
        fx = system.f(x)
        s_dot = circular_diff(proj(x + h * fx), proj(x - h * fx), orbit.s_T) / (2 * h)
        rho = float(orbit.rho(s))
        ds = sf.s_perp_of(s, 1)
        rem = smat @ (jx @ fx - tl.a_of(s) @ xp) + (s_dot - rho) * (ds @ xp)
        k2 = max(k2, float(np.linalg.norm(rem)) / (r * r))
    return RemainderSlopes(k1, k2)
