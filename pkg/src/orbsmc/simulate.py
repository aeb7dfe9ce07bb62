"""Closed-loop simulation of the cart-pendulum under the transverse
controllers, measurement noise, trace output and run metrics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from .cartpend import PRESETS, CartPendulumParams, cp_feedback_transform, cp_projection, real_dynamics
from .controllers import Controller, ControllerSpec
from .pipeline import CartPendDesign, cached_design

X0 = (0.1, 0.4, -0.1, -0.2)
RK4_STABLE = 2.5
TRACE_COLUMNS = ("t", "x_c", "phi", "dx_c", "dphi", "u_f", "sigma", "s", "dist")

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "plant": {
            "oneOf": [
                {"type": "string", "enum": sorted(PRESETS)},
                {
                    "type": "object",
                    "properties": {
                        "preset": {"type": "string", "enum": sorted(PRESETS)},
                        "m_c": {"type": "number", "exclusiveMinimum": 0},
                        "m_p": {"type": "number", "exclusiveMinimum": 0},
                        "l_p": {"type": "number", "exclusiveMinimum": 0},
                        "j_p": {"type": "number", "minimum": 0},
                        "psi": {"type": "number"},
                        "upsilon_c": {"type": "number", "minimum": 0},
                        "upsilon_p": {"type": "number", "minimum": 0},
                        "d_x": {"$ref": "#/definitions/sinusoid"},
                        "d_p": {"$ref": "#/definitions/sinusoid"},
                        "g": {"type": "number", "exclusiveMinimum": 0},
                    },
                    "additionalProperties": False,
                },
            ]
        },
        "controller": {
            "type": "object",
            "properties": {
                "kind": {"type": "string", "enum": ["LQR", "SMC", "LRC", "PureSMC"]},
                "mu": {"type": "number", "minimum": 0},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "zeta_mode": {"type": "string", "enum": ["constant", "state-dependent"]},
                "signum": {"type": "boolean"},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "gains": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "x0": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
        "t_final": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "noise": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "properties": {"snr_db": {"type": "number"}, "seed": {"type": "integer", "minimum": 0}},
                    "required": ["snr_db"],
                    "additionalProperties": False,
                },
            ]
        },
        "name": {"type": "string"},
    },
    "required": ["controller"],
    "additionalProperties": False,
    "definitions": {
        "sinusoid": {
            "type": "object",
            "properties": {"amplitude": {"type": "number"}, "omega": {"type": "number"}, "phase": {"type": "number"}},
            "additionalProperties": False,
        }
    },
}


class ConfigError(ValueError):
    """Invalid scenario document; ``errors`` holds ``(path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = errors
        super().__init__("; ".join(f"{p or '<root>'}: {m}" for p, m in errors))


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    seed: int = 0


@dataclass(frozen=True)
class ScenarioSpec:
    plant: CartPendulumParams = PRESETS["nominal"]
    controller: str = "LQR"
    mu: float = 0.0
    epsilon: float = 1e-3
    x0: tuple = X0
    t_final: float = 20.0
    dt: float = 1e-3
    noise: NoiseSpec | None = None
    zeta_mode: str = "constant"
    signum: bool = False
    name: str = "custom"

    def __post_init__(self):
        if self.dt <= 0 or self.t_final <= 0:
            raise ValueError("dt and t_final must be positive")
        if len(self.x0) != 4:
            raise ValueError("x0 must have four entries")

    @classmethod
    def preset(cls, name: str, controller: str = "LQR", mu: float = 0.0, **kw) -> "ScenarioSpec":
        return cls(plant=PRESETS[name], controller=controller, mu=mu, name=name, **kw)

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        validate_config(doc)
        plant_doc = doc.get("plant", "nominal")
        name = doc.get("name", plant_doc if isinstance(plant_doc, str) else plant_doc.get("preset", "custom"))
        if isinstance(plant_doc, str):
            plant = PRESETS[plant_doc]
        else:
            overrides = {k: v for k, v in plant_doc.items() if k != "preset"}
            plant = replace(PRESETS[plant_doc.get("preset", "nominal")], **overrides)
            plant.__post_init__()
        ctrl = doc["controller"]
        noise = doc.get("noise")
        return cls(
            plant=plant,
            controller=ctrl["kind"],
            mu=ctrl.get("mu", 0.0),
            epsilon=ctrl.get("epsilon", 1e-3),
            x0=tuple(doc.get("x0", X0)),
            t_final=doc.get("t_final", 20.0),
            dt=doc.get("dt", 1e-3),
            noise=NoiseSpec(noise["snr_db"], noise.get("seed", 0)) if noise else None,
            zeta_mode=ctrl.get("zeta_mode", "constant"),
            signum=ctrl.get("signum", False),
            name=name,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "plant": self.plant.to_dict(),
            "controller": {"kind": self.controller, "mu": self.mu, "epsilon": self.epsilon,
                           "zeta_mode": self.zeta_mode, "signum": self.signum},
            "x0": list(self.x0),
            "t_final": self.t_final,
            "dt": self.dt,
            "noise": asdict(self.noise) if self.noise else None,
        }


def validate_config(doc: dict) -> None:
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError([("/".join(str(p) for p in e.absolute_path), e.message) for e in errors])


@dataclass
class Trace:
    t: np.ndarray
    x: np.ndarray
    u_f: np.ndarray
    sigma: np.ndarray
    xi: np.ndarray
    s: np.ndarray
    dist: np.ndarray
    tube: np.ndarray
    diverged: bool = False
    reason: str = ""
    spec: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    def columns(self) -> dict:
        return {"t": self.t, "x_c": self.x[:, 0], "phi": self.x[:, 1], "dx_c": self.x[:, 2], "dphi": self.x[:, 3],
                "u_f": self.u_f, "sigma": self.sigma, "s": self.s, "dist": self.dist}

    def write_csv(self, path) -> Path:
        path = Path(path)
        cols = self.columns()
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            w.writerows(zip(*(cols[c] for c in TRACE_COLUMNS)))
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps({"spec": self.spec, "diverged": self.diverged, "reason": self.reason,
                                       "samples": len(self)}, indent=2))
        return path


def build_controller(spec: ScenarioSpec, design: CartPendDesign, zeta=None) -> Controller:
    kind = spec.controller
    kw = dict(kind=kind, mu=spec.mu, epsilon=spec.epsilon, signum=spec.signum, zeta_mode=spec.zeta_mode, zeta=zeta)
    if kind != "PureSMC":
        kw["k_perp"] = design.k_perp
    if kind in ("SMC", "PureSMC"):
        kw["sf"] = design.sf
    if kind == "LRC":
        kw["r_perp"] = design.prde.r_of
        kw["b_perp"] = design.tl.b_of
    return Controller(ControllerSpec(**kw), cp_projection, design.coords)


def switching_gain_scale(spec: ScenarioSpec, design: CartPendDesign) -> float:
    """Largest ``|Z B|`` over the grid for the switched variable ``Z x_perp``."""
    if spec.controller in ("SMC", "PureSMC"):
        z = design.sf.s_perp_of.values
    elif spec.controller == "LRC":
        z = np.transpose(design.tl.b_of.values, (0, 2, 1)) @ design.prde.r_of.values
    else:
        return 0.0
    return float(np.max(np.abs(z @ design.tl.b_of.values)))


def substeps(spec: ScenarioSpec, design: CartPendDesign, zeta_max: float | None = None) -> int:
    """RK4 substeps keeping the boundary-layer pole ``mu |Z B| / eps`` stable."""
    if spec.signum:
        return 1
    gain = zeta_max if zeta_max is not None else spec.mu
    lam = 1.5 * gain * switching_gain_scale(spec, design) / spec.epsilon
    return max(1, math.ceil(lam * spec.dt / RK4_STABLE))


def noise_scale(design: CartPendDesign, snr_db: float) -> np.ndarray:
    """Per-channel std: nominal-orbit RMS times ``10^(-snr/20)``."""
    rms = np.sqrt(np.mean(design.orbit.x_grid.values[:-1] ** 2, axis=0))
    return rms * 10.0 ** (-snr_db / 20.0)


def simulate(spec: ScenarioSpec, design: CartPendDesign | None = None, zeta=None,
             tube_radius: float = math.inf) -> Trace:
    """Fixed-step RK4 on the real plant; the control is re-evaluated at every
    stage from the (noisy) measured state. Stops early with ``diverged`` when
    the pendulum leaves the validity region of the orbit coordinates."""
    design = design or cached_design()
    ctrl = build_controller(spec, design, zeta)
    orbit = design.orbit
    a, g_nom, limit = orbit.a, orbit.g, orbit.validity_limit
    params = spec.plant
    n_steps = int(round(spec.t_final / spec.dt))
    n_sub = substeps(spec, design, None if zeta is None else zeta(tube_radius if math.isfinite(tube_radius) else 0.5))
    h = spec.dt / n_sub
    rng = np.random.default_rng(spec.noise.seed) if spec.noise else None
    std = noise_scale(design, spec.noise.snr_db) if spec.noise else None
    x_of_s = orbit.x_grid.at

    t_out = np.empty(n_steps + 1)
    x_out = np.empty((n_steps + 1, 4))
    u_out = np.empty(n_steps + 1)
    sig_out = np.full(n_steps + 1, np.nan)
    xi_out = np.full(n_steps + 1, np.nan)
    s_out = np.empty(n_steps + 1)
    dist_out = np.empty(n_steps + 1)
    tube_out = np.empty(n_steps + 1, dtype=bool)

    def force(x, t, noise):
        xm = x if noise is None else x + noise
        out = ctrl(xm)
        return cp_feedback_transform(xm, float(out.u[0]), a, g_nom), out

    def rhs(x, t, noise):
        uf, _ = force(x, t, noise)
        return real_dynamics(x, uf, t, params)

    x = np.asarray(spec.x0, dtype=float)
    t = 0.0
    diverged, reason = False, ""
    last = n_steps
    for k in range(n_steps + 1):
        noise = std * rng.standard_normal(4) if rng is not None else None
        try:
            uf, out = force(x, t, noise)
        except (ValueError, ZeroDivisionError) as exc:
            diverged, reason, last = True, f"controller failed: {exc}", k - 1
            break
        s_true = cp_projection(x)
        t_out[k], x_out[k], u_out[k], s_out[k] = t, x, uf, s_true
        if out.sigma is not None:
            sig_out[k] = float(np.max(np.abs(out.sigma)))
        if out.xi is not None:
            xi_out[k] = float(np.max(np.abs(out.xi)))
        dist_out[k] = math.sqrt(float(np.sum((x - x_of_s(s_true)) ** 2)))
        tube_out[k] = float(np.linalg.norm(out.x_perp)) <= tube_radius
        if k == n_steps:
            break
        for j in range(n_sub):
            k1 = real_dynamics(x, uf, t, params) if j == 0 else rhs(x, t, noise)
            k2 = rhs(x + 0.5 * h * k1, t + 0.5 * h, noise)
            k3 = rhs(x + 0.5 * h * k2, t + 0.5 * h, noise)
            k4 = rhs(x + h * k3, t + h, noise)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        t = (k + 1) * spec.dt
        if not np.all(np.isfinite(x)) or abs(x[1]) >= limit:
            diverged, reason, last = True, f"|phi| reached {abs(x[1]):.4f} >= {limit:.4f} at t={t:.3f}", k
            break
    n = last + 1
    return Trace(t_out[:n], x_out[:n], u_out[:n], sig_out[:n], xi_out[:n], s_out[:n], dist_out[:n], tube_out[:n],
                 diverged, reason, spec.to_dict())


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class Metrics:
    reaching_time: float | None
    rms_dist: float
    peak_force: float
    overshoot: float
    tube_violations: int
    diverged: bool
    final_time: float

    def to_dict(self) -> dict:
        return asdict(self)


def reaching_time(t: np.ndarray, z: np.ndarray, epsilon: float, hold: float = 0.5) -> float | None:
    """First time from which ``z < epsilon`` holds for at least ``hold`` seconds."""
    inside = np.nan_to_num(z, nan=np.inf) < epsilon
    start = None
    for i, ok in enumerate(inside):
        if ok and start is None:
            start = i
        elif not ok:
            start = None
        if start is not None and t[i] - t[start] >= hold:
            return float(t[start])
    return None


def metrics(trace: Trace, period_T: float, epsilon: float = 1e-3, n_periods: int = 5,
            hold: float = 0.5) -> Metrics:
    if len(trace) == 0:
        raise ValueError("empty trace")
    t = trace.t
    window = t >= t[-1] - n_periods * period_T
    rms = float(np.sqrt(np.mean(trace.dist[window] ** 2)))
    z = trace.sigma if np.any(np.isfinite(trace.sigma)) else trace.xi
    reach = reaching_time(t, z, epsilon, hold) if np.any(np.isfinite(z)) else None
    d0 = trace.dist[0]
    overshoot = float(np.max(trace.dist) / d0) if d0 > 0 else 0.0
    return Metrics(reach, rms, float(np.max(np.abs(trace.u_f))), overshoot, int(np.sum(~trace.tube)),
                   trace.diverged, float(t[-1]))


@dataclass(frozen=True)
class SweepReport:
    gains: list
    metrics: list
    traces: list = field(repr=False)

    def _strict(self, values, decreasing: bool) -> bool:
        if len(values) < 2:
            return True
        if any(v is None for v in values):
            return False
        pairs = zip(values, values[1:])
        return all(b < a for a, b in pairs) if decreasing else all(b > a for a, b in pairs)

    @property
    def reaching_decreasing(self) -> bool:
        return self._strict([m.reaching_time for m in self.metrics], True)

    @property
    def peak_increasing(self) -> bool:
        return self._strict([m.peak_force for m in self.metrics], False)

    @property
    def overshoot_decreasing(self) -> bool:
        return self._strict([m.overshoot for m in self.metrics], True)

    def to_dict(self) -> dict:
        return {"gains": list(self.gains), "metrics": [m.to_dict() for m in self.metrics],
                "reaching_decreasing": self.reaching_decreasing, "peak_increasing": self.peak_increasing,
                "overshoot_decreasing": self.overshoot_decreasing}


def gain_sweep(spec: ScenarioSpec, gains, design: CartPendDesign | None = None) -> SweepReport:
    if spec.controller not in ("SMC", "LRC", "PureSMC"):
        raise ValueError("gain sweep needs a switched controller")
    design = design or cached_design()
    gains = sorted(float(g) for g in gains)
    traces = [simulate(replace(spec, mu=g), design) for g in gains]
    mets = [metrics(tr, design.orbit.period_T, spec.epsilon) for tr in traces]
    return SweepReport(gains, mets, traces)
