"""Print the sliding-surface candidate screen with an independent check of
each det(S B) profile through the state-transition matrix."""
import numpy as np

from orbsmc.pipeline import cached_design


def main():
    d = cached_design()
    scale = 2 * np.pi / d.orbit.period_T
    b = d.tl.b_of.values
    for i, c in enumerate(d.synthesis.candidates):
        s_hat = c.s_hat
        lam = float((s_hat @ d.fl.f @ s_hat.T / (s_hat @ s_hat.T))[0, 0])
        oracle = np.array([np.exp(lam * s) * (s_hat @ np.linalg.solve(p, bi))[0, 0]
                           for s, p, bi in zip(d.stm.grid, d.stm.psi, b)])
        mark = "*" if i == d.synthesis.selected else " "
        carried = sorted(np.real(c.eigenvalues) * scale)
        print(f"{mark} carried {np.round(carried, 3).tolist()}  det range [{c.det_profile.min():+.3f}, "
              f"{c.det_profile.max():+.3f}]  oracle gap {np.max(np.abs(oracle - c.det_profile)):.1e}  {c.reason}")


if __name__ == "__main__":
    main()
