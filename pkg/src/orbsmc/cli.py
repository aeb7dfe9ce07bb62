"""Command-line interface: design steps, scenario runs, sweeps and plot data."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cartpend import build_orbit
from .pipeline import design_cartpend
from .simulate import ConfigError, NoiseSpec, ScenarioSpec, gain_sweep, metrics, simulate

EXIT_CONFIG = 2
EXIT_DIVERGED = 3
CONTROLLERS = {"lqr": "LQR", "smc": "SMC", "lrc": "LRC", "pure_smc": "PureSMC", "puresmc": "PureSMC"}


def _write_json(out: Path, name: str, doc: dict) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(json.dumps(doc, indent=2))
    return path


def _design(args):
    return design_cartpend(args.a, args.theta0, args.dtheta0, n_grid=args.grid, gamma=args.gamma)


def cmd_plan(args) -> int:
    orbit = build_orbit(args.a, args.theta0, args.dtheta0, n_grid=args.grid)
    path = _write_json(args.out, "orbit.json", orbit.to_dict())
    print(json.dumps({"amplitude": orbit.amplitude, "period_T": orbit.period_T,
                      "validity_limit": orbit.validity_limit, "file": str(path)}))
    return 0


def cmd_linearize(args) -> int:
    d = _design(args)
    doc = {"A": d.tl.a_of.to_dict(), "B": d.tl.b_of.to_dict(), "rho": d.tl.speed.to_dict()}
    print(_write_json(args.out, "linearization.json", doc))
    return 0


def cmd_lqr(args) -> int:
    d = _design(args)
    doc = {"R": d.prde.r_of.to_dict(), "K": d.k_perp.to_dict(), "residual": d.prde.residual,
           "fourier_order": d.prde.fourier_order, "gamma": d.gamma,
           "multipliers": np.abs(d.prde.multipliers).tolist()}
    print(_write_json(args.out, "lqr.json", doc))
    print(json.dumps({"residual": d.prde.residual, "multipliers": sorted(doc["multipliers"])}))
    return 0


def cmd_factorize(args) -> int:
    d = _design(args)
    doc = d.fl.to_dict()
    doc["multipliers"] = [[complex(m).real, complex(m).imag] for m in d.monodromy.multipliers]
    doc["exponents_s"] = np.linalg.eigvals(d.fl.f).real.tolist()
    doc["exponents_t"] = d.fl.time_exponents(d.orbit.period_T).real.tolist()
    print(_write_json(args.out, "factorization.json", doc))
    print(json.dumps({"c": d.fl.c, "exponents_t": sorted(doc["exponents_t"]), "residual": d.fl.residual}))
    return 0


def cmd_synthesize(args) -> int:
    d = _design(args)
    doc = d.synthesis.to_dict()
    print(_write_json(args.out, "synthesis.json", doc))
    for i, c in enumerate(d.synthesis.candidates):
        eig = ", ".join(f"{complex(v).real:.4f}" for v in c.eigenvalues)
        mark = "*" if i == d.synthesis.selected else " "
        print(f"{mark} carried [{eig}]  min|det|={c.min_abs_det:.4f}  max|det|={c.max_abs_det:.4f}  {c.reason}")
    return 0


def _scenario(args) -> ScenarioSpec:
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([("", f"cannot read config: {exc}")]) from exc
        spec = ScenarioSpec.from_dict(doc)
    else:
        spec = ScenarioSpec.preset(args.scenario, CONTROLLERS[args.controller], args.mu)
    changes = {}
    for name in ("epsilon", "t_final", "dt"):
        val = getattr(args, name, None)
        if val is not None:
            changes[name] = val
    if getattr(args, "snr", None) is not None:
        changes["noise"] = NoiseSpec(args.snr, args.seed)
    elif spec.noise is not None and args.seed is not None:
        changes["noise"] = NoiseSpec(spec.noise.snr_db, args.seed)
    return replace(spec, **changes)


def cmd_simulate(args) -> int:
    spec = _scenario(args)
    d = _design(args)
    trace = simulate(spec, d)
    args.out.mkdir(parents=True, exist_ok=True)
    path = trace.write_csv(args.out / f"{args.name or spec.name + '_' + spec.controller.lower()}.csv")
    m = metrics(trace, d.orbit.period_T, spec.epsilon)
    print(json.dumps({"trace": str(path), **m.to_dict(), "reason": trace.reason}))
    return EXIT_DIVERGED if trace.diverged and args.strict else 0


def cmd_sweep(args) -> int:
    spec = _scenario(args)
    d = _design(args)
    gains = args.gains
    if args.config and not gains:
        gains = json.loads(Path(args.config).read_text()).get("gains")
    rep = gain_sweep(spec, gains or [0.5, 5.0, 10.0], d)
    args.out.mkdir(parents=True, exist_ok=True)
    for g, tr in zip(rep.gains, rep.traces):
        tr.write_csv(args.out / f"sweep_{spec.controller.lower()}_mu{g:g}.csv")
    print(_write_json(args.out, f"sweep_{spec.controller.lower()}.json", rep.to_dict()))
    print(json.dumps(rep.to_dict()))
    diverged = any(m.diverged for m in rep.metrics)
    return EXIT_DIVERGED if diverged and args.strict else 0


def _columns(path: Path, cols: dict) -> None:
    names = list(cols)
    data = np.column_stack([np.asarray(cols[n], float) for n in names])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="")


def _run_set(d, scenario, runs, stride, seed=None, snr=None):
    """Run ``(label, kind, mu)`` triples and align their traces on a common time base."""
    cols = {}
    for label, kind, mu in runs:
        noise = NoiseSpec(snr, seed or 0) if snr is not None else None
        tr = simulate(ScenarioSpec.preset(scenario, kind, mu, noise=noise), d)
        n = len(tr)
        if "t" not in cols:
            cols["t"] = np.arange(0, int(round(20.0 / 1e-3)) + 1)[::stride] * 1e-3
        idx = np.arange(0, cols["t"].size) * stride
        pad = lambda v: np.where(idx < n, v[np.minimum(idx, n - 1)], np.nan)  # noqa: E731
        cols[f"dist_{label}"] = pad(tr.dist)
        cols[f"phi_{label}"] = pad(tr.x[:, 1])
        cols[f"u_f_{label}"] = pad(tr.u_f)
        z = tr.sigma if kind in ("SMC", "PureSMC") else tr.xi
        if kind != "LQR":
            cols[f"{'sigma' if kind != 'LRC' else 'xi'}_{label}"] = pad(z)
    return cols


def cmd_plot(args) -> int:
    d = _design(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    figs = args.figure or ["1", "2", "3", "4", "5", "6", "7", "8", "9"]
    std = [("LQR", "LQR", 0.0), ("SMC", "SMC", 0.5), ("LRC", "LRC", 0.5)]
    written = []
    for fig in figs:
        path = out / f"fig{fig}.csv"
        if fig == "1":
            _columns(path, _run_set(d, "nominal", std, args.stride))
        elif fig == "2":
            k = d.k_perp.values[:, 0, :]
            _columns(path, {"s": d.k_perp.grid, "K1": k[:, 0], "K2": k[:, 1], "K3": k[:, 2]})
        elif fig == "3":
            sb = (d.sf.s_perp_of.values @ d.tl.b_of.values)[:, 0, 0]
            _columns(path, {"s": d.sf.s_perp_of.grid, "SB": sb})
        elif fig == "4":
            _columns(path, _run_set(d, "matched", std, args.stride))
        elif fig == "5":
            runs = [(f"{k}_{m:g}", k, m) for k in ("SMC", "LRC") for m in (0.5, 5.0, 10.0)]
            _columns(path, _run_set(d, "matched", runs, args.stride))
        elif fig == "6":
            runs = [(f"{k}_{m:g}", k, m) for k in ("SMC", "LRC") for m in (0.5, 4.0)]
            _columns(path, _run_set(d, "matched_unmatched", runs, args.stride))
        elif fig == "7":
            runs = [("LQR", "LQR", 0.0), ("SMC", "SMC", 4.0), ("LRC", "LRC", 4.0)]
            _columns(path, _run_set(d, "matched_unmatched", runs, args.stride))
        elif fig == "8":
            cols = _run_set(d, "nominal", [("PureSMC", "PureSMC", 2.0)], args.stride)
            cols.update({k + "_matched": v for k, v in _run_set(d, "matched", [("PureSMC", "PureSMC", 2.0)],
                                                                   args.stride).items() if k != "t"})
            _columns(path, cols)
        elif fig == "9":
            runs = [("PureSMC", "PureSMC", 2.0), ("SMC", "SMC", 0.5)]
            _columns(path, _run_set(d, "nominal", runs, args.stride, seed=args.seed, snr=50.0))
        else:
            raise ConfigError([("figure", f"unknown figure {fig!r}")])
        written.append(str(path))
    print(json.dumps({"files": written}))
    return 0


def _common_options(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global options without defaults, so a value given
    # before the subcommand is not overwritten by the subparser
    def default(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default(None), help="scenario JSON document")
    common.add_argument("--grid", type=int, default=default(500), help="samples per orbit period")
    common.add_argument("--seed", type=int, default=default(None), help="noise seed")
    common.add_argument("--out", type=Path, default=default(Path("out")), help="output directory")
    common.add_argument("--a", type=float, default=default(1.5), help="constraint gain")
    common.add_argument("--theta0", type=float, default=default(0.0))
    common.add_argument("--dtheta0", type=float, default=default(0.5))
    common.add_argument("--gamma", type=float, default=default(0.1), help="LQR input weight")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options(suppress=True)

    p = argparse.ArgumentParser(prog="orbsmc", description=__doc__, parents=[_common_options(suppress=False)])
    sub = p.add_subparsers(dest="command", required=True)
    for name, func, helptext in [
        ("plan", cmd_plan, "build the periodic orbit"),
        ("linearize", cmd_linearize, "transverse linearization grids"),
        ("lqr", cmd_lqr, "periodic Riccati solution and gain"),
        ("factorize", cmd_factorize, "closed-loop Floquet factorization"),
        ("synthesize", cmd_synthesize, "sliding-surface candidates and choice"),
    ]:
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.set_defaults(func=func)

    def scenario_args(sp):
        sp.add_argument("--scenario", default="nominal", choices=["nominal", "matched", "matched_unmatched"])
        sp.add_argument("--controller", default="lqr", choices=sorted(CONTROLLERS))
        sp.add_argument("--mu", type=float, default=0.5)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--t-final", dest="t_final", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--snr", type=float, help="measurement SNR in dB")
        sp.add_argument("--strict", action="store_true", help="exit 3 on divergence")

    sp = sub.add_parser("simulate", parents=[common], help="run one scenario")
    scenario_args(sp)
    sp.add_argument("--name", help="trace file stem")
    sp.set_defaults(func=cmd_simulate)
    sp = sub.add_parser("sweep", parents=[common], help="gain sweep")
    scenario_args(sp)
    sp.add_argument("--gains", type=float, nargs="+")
    sp.set_defaults(func=cmd_sweep, controller="smc")
    sp = sub.add_parser("plot", parents=[common], help="columnar data for the figure analogues")
    sp.add_argument("--figure", nargs="+", help="figure numbers 1-9 (default all)")
    sp.add_argument("--stride", type=int, default=10, help="keep every n-th sample")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
