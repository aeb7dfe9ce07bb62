import json
import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import run
from orbsmc.cartpend import PRESETS
from orbsmc.simulate import (
    TRACE_COLUMNS,
    ConfigError,
    NoiseSpec,
    ScenarioSpec,
    Trace,
    gain_sweep,
    metrics,
    noise_scale,
    reaching_time,
    simulate,
    substeps,
    validate_config,
)


def synthetic_trace(t, dist, sigma=None, u_f=None):
    n = t.size
    nan = np.full(n, np.nan)
    return Trace(t, np.zeros((n, 4)), np.zeros(n) if u_f is None else u_f, nan if sigma is None else sigma, nan,
                 np.zeros(n), dist, np.ones(n, dtype=bool))


def test_deterministic_with_noise(design):
    spec = ScenarioSpec.preset("nominal", "SMC", 0.5, t_final=2.0, noise=NoiseSpec(50.0, 7))
    a, b = simulate(spec, design), simulate(spec, design)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.u_f, b.u_f)
    c = simulate(replace(spec, noise=NoiseSpec(50.0, 8)), design)
    assert not np.array_equal(a.x, c.x)


def test_dt_refinement(design):
    coarse = metrics(simulate(ScenarioSpec.preset("nominal", "LQR"), design), design.orbit.period_T)
    fine = metrics(simulate(ScenarioSpec.preset("nominal", "LQR", dt=5e-4), design), design.orbit.period_T)
    assert abs(fine.rms_dist - coarse.rms_dist) / coarse.rms_dist < 0.01


def test_noise_scale_matches_orbit_rms(design):
    std = noise_scale(design, 20.0)
    rms = np.sqrt(np.mean(design.orbit.x_grid.values[:-1] ** 2, axis=0))
    assert np.allclose(std, 0.1 * rms)


def test_substeps_cover_boundary_layer_pole(design):
    assert substeps(ScenarioSpec.preset("nominal", "LQR"), design) == 1
    few = substeps(ScenarioSpec.preset("nominal", "SMC", 0.5), design)
    many = substeps(ScenarioSpec.preset("nominal", "SMC", 10.0), design)
    assert many > few >= 1
    assert substeps(ScenarioSpec.preset("nominal", "SMC", 10.0, signum=True), design) == 1


def test_metrics_all_zero_on_orbit():
    t = np.linspace(0, 10, 1001)
    m = metrics(synthetic_trace(t, np.zeros_like(t), sigma=np.zeros_like(t)), period_T=1.0)
    assert m.rms_dist == 0.0 and m.peak_force == 0.0 and m.overshoot == 0.0
    assert m.reaching_time == 0.0 and m.tube_violations == 0 and not m.diverged


def test_metrics_exponential_decay_rms():
    lam, period = 0.7, 1.0
    t = np.linspace(0, 20, 200001)
    m = metrics(synthetic_trace(t, np.exp(-lam * t)), period_T=period)
    t0, t1 = 15.0, 20.0
    exact = math.sqrt((math.exp(-2 * lam * t0) - math.exp(-2 * lam * t1)) / (2 * lam * (t1 - t0)))
    assert m.rms_dist == pytest.approx(exact, rel=1e-3)
    assert m.overshoot == pytest.approx(1.0)


def test_reaching_time_requires_hold():
    t = np.arange(0, 5, 0.01)
    z = np.where((t > 1.0) & (t < 1.3), 0.0, 1.0)
    z[t >= 2.0] = 0.0
    assert reaching_time(t, z, 1e-3, hold=0.5) == pytest.approx(2.0)
    assert reaching_time(t, np.ones_like(t), 1e-3) is None


def test_diverged_lqr_in_matched_unmatched():
    tr, m = run("matched_unmatched", "LQR")
    assert tr.diverged and m.diverged
    assert m.reaching_time is None
    assert abs(tr.x[-1, 1]) < 0.62 and "phi" in tr.reason
    assert m.final_time < 20.0


def test_config_round_trip():
    spec = ScenarioSpec.preset("matched", "SMC", 0.5, noise=NoiseSpec(50.0, 3))
    doc = {"plant": "matched", "controller": {"kind": "SMC", "mu": 0.5}, "noise": {"snr_db": 50.0, "seed": 3},
           "name": "matched"}
    assert ScenarioSpec.from_dict(doc) == spec


def test_config_plant_overrides():
    doc = {"plant": {"preset": "matched", "m_c": 2.0, "d_x": {"amplitude": 0.3}}, "controller": {"kind": "LQR"}}
    spec = ScenarioSpec.from_dict(doc)
    assert spec.plant.m_c == 2.0 and spec.plant.d_x.amplitude == 0.3
    assert spec.plant.upsilon_c == PRESETS["matched"].upsilon_c


@pytest.mark.parametrize("doc, path", [
    ({"controller": {"kind": "PID"}}, "controller/kind"),
    ({"controller": {"kind": "SMC", "mu": -1}}, "controller/mu"),
    ({"controller": {"kind": "SMC", "epsilon": 0}}, "controller/epsilon"),
    ({"controller": {"kind": "LQR"}, "x0": [0, 0, 0]}, "x0"),
    ({"controller": {"kind": "LQR"}, "plant": {"m_c": -1}}, "plant"),
    ({"controller": {"kind": "LQR"}, "dt": 0}, "dt"),
    ({"controller": {"kind": "LQR"}, "noise": {"seed": 1}}, "noise"),
    ({"controller": {"kind": "LQR"}, "extra": 1}, ""),
    ({}, ""),
])
def test_config_errors_carry_paths(doc, path):
    with pytest.raises(ConfigError) as err:
        validate_config(doc)
    assert any(p == path for p, _ in err.value.errors)


def test_csv_header_and_sidecar(tmp_path, design):
    spec = ScenarioSpec.preset("matched", "SMC", 0.5, t_final=0.05)
    tr = simulate(spec, design)
    path = tr.write_csv(tmp_path / "run.csv")
    lines = path.read_text().splitlines()
    assert tuple(lines[0].split(",")) == TRACE_COLUMNS
    assert len(lines) == len(tr) + 1
    side = json.loads(path.with_suffix(".json").read_text())
    assert side["spec"]["controller"]["kind"] == "SMC" and side["spec"]["controller"]["mu"] == 0.5
    assert side["spec"]["plant"]["upsilon_c"] == 0.25 and side["samples"] == len(tr)


def test_single_gain_sweep_and_lqr_rejected(design):
    rep = gain_sweep(ScenarioSpec.preset("matched", "SMC", t_final=1.0), [2.0], design)
    assert rep.reaching_decreasing and rep.peak_increasing and len(rep.traces) == 1
    with pytest.raises(ValueError):
        gain_sweep(ScenarioSpec.preset("matched", "LQR"), [1.0], design)


def test_tube_flag(design):
    tr = simulate(ScenarioSpec.preset("nominal", "LQR", t_final=0.1), design, tube_radius=1e-6)
    assert metrics(tr, design.orbit.period_T).tube_violations == len(tr)
