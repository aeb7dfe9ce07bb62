"""End-to-end design chain for the cart-pendulum orbit: orbit, transverse
linearization, periodic LQR, closed-loop Floquet factorization and the
sliding surface."""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .cartpend import (
    CartPendOrbit,
    build_orbit,
    cp_control_affine,
    cp_projection,
    cp_transverse_coords,
)
from .floquet import (
    FloquetFactorization,
    LinearPeriodicSystem,
    MonodromyMatrix,
    StateTransition,
    fl_factorize_direct,
    integrate_stm,
    monodromy,
)
from .periodic import PeriodicMatrixFunction
from .synthesis import PrdeSolution, SynthesisResult, lqr_gain, solve_prde, synthesize_switching
from .transverse import ControlAffineSystem, TransverseCoordinates, transverse_linearization


@dataclass(frozen=True, eq=False)
class CartPendDesign:
    orbit: CartPendOrbit
    system: ControlAffineSystem
    coords: TransverseCoordinates
    tl: LinearPeriodicSystem
    prde: PrdeSolution
    k_perp: PeriodicMatrixFunction
    tl_closed: LinearPeriodicSystem
    stm: StateTransition
    monodromy: MonodromyMatrix
    fl: FloquetFactorization
    synthesis: SynthesisResult
    gamma: float

    @property
    def sf(self):
        return self.synthesis.switching

    @property
    def projection(self):
        return cp_projection

    def summary(self) -> dict:
        return {
            "period_T": self.orbit.period_T,
            "amplitude": self.orbit.amplitude,
            "multipliers": sorted(np.abs(self.monodromy.multipliers).tolist()),
            "F_eigenvalues_s": sorted(np.linalg.eigvals(self.fl.f).real.tolist()),
            "F_eigenvalues_t": sorted(self.fl.time_exponents(self.orbit.period_T).real.tolist()),
            "c": self.fl.c,
            "S_hat": self.sf.s_hat.s_hat.tolist(),
            "prde_residual": self.prde.residual,
            "factorization_residual": self.fl.residual,
        }


def design_cartpend(a: float = 1.5, theta0: float = 0.0, dtheta0: float = 0.5, n_grid: int = 500,
                    q=None, gamma: float = 0.1, fourier_order: int = 100) -> CartPendDesign:
    orbit = build_orbit(a, theta0, dtheta0, n_grid=n_grid)
    system = cp_control_affine(a, orbit.g)
    coords = cp_transverse_coords(orbit)
    tl = transverse_linearization(system, orbit.periodic_orbit(), coords, n_grid=n_grid)
    q = np.eye(3) if q is None else np.asarray(q, float)
    prde = solve_prde(tl, q, gamma, fourier_order)
    k_perp = lqr_gain(prde, tl, gamma)
    tl_closed = tl.closed_loop(k_perp)
    stm = integrate_stm(tl_closed, n_grid=n_grid)
    mono = monodromy(stm)
    fl = fl_factorize_direct(stm)
    syn = synthesize_switching(fl, tl, coords, cp_projection)
    return CartPendDesign(orbit, system, coords, tl, prde, k_perp, tl_closed, stm, mono, fl, syn, gamma)


@functools.lru_cache(maxsize=8)
def cached_design(a: float = 1.5, theta0: float = 0.0, dtheta0: float = 0.5, n_grid: int = 500,
                  gamma: float = 0.1) -> CartPendDesign:
    return design_cartpend(a, theta0, dtheta0, n_grid=n_grid, gamma=gamma)
