"""SMC residual on the matched scenario against layer width, gain and step size.

The saturated law settles where mu * sigma / eps balances the matched
disturbance, leaving an offset of order eps * delta / mu on the surface."""
from orbsmc.pipeline import cached_design
from orbsmc.simulate import ScenarioSpec, metrics, simulate


def rms(scenario, mu, eps=1e-3, dt=1e-3):
    d = cached_design()
    tr = simulate(ScenarioSpec.preset(scenario, "SMC", mu, epsilon=eps, dt=dt), d)
    return metrics(tr, d.orbit.period_T, eps).rms_dist


def main():
    base = rms("nominal", 0.5)
    print(f"nominal SMC mu=0.5 eps=1e-3: {base:.3e}")
    for mu, eps, dt in [(0.5, 1e-3, 1e-3), (0.5, 1e-3, 5e-4), (0.5, 1e-4, 1e-3), (2.0, 1e-3, 1e-3),
                        (5.0, 1e-3, 1e-3)]:
        r = rms("matched", mu, eps, dt)
        print(f"matched mu={mu:<4g} eps={eps:.0e} dt={dt:.0e}: rms {r:.3e}  ratio to nominal {r / base:.2f}")


if __name__ == "__main__":
    main()
