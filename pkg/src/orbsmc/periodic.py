"""Grid-sampled periodic matrix functions.

Every s-dependent quantity in the pipeline (A_perp, B_perp, K_perp, L, L^-1,
R_perp, S_perp, the orbit itself) lives on one uniform grid over a period and
is evaluated between samples by periodic interpolation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline


def uniform_grid(period: float, n: int) -> np.ndarray:
    """``n + 1`` evenly spaced points ``0, ..., period`` (endpoint included)."""
    return np.linspace(0.0, period, n + 1)


def wrap(s, period):
    return np.mod(s, period)


def circular_diff(a, b, period):
    """Signed difference ``a - b`` mapped into ``[-period/2, period/2)``."""
    return np.mod(np.asarray(a) - np.asarray(b) + 0.5 * period, period) - 0.5 * period


@dataclass(frozen=True, eq=False)
class PeriodicMatrixFunction:
    """Periodic function ``s -> array`` sampled on a uniform grid.

    ``values`` has shape ``(N + 1, *shape)`` with ``values[N] == values[0]``
    (enforced on construction). ``kind`` is ``"spline"`` (periodic cubic
    spline) or ``"trig"`` (trigonometric interpolation of the N samples).
    """

    period: float
    values: np.ndarray
    kind: str = "spline"
    _spl: CubicSpline | None = field(default=None, init=False, repr=False)
    _coef: np.ndarray | None = field(default=None, init=False, repr=False)
    _fft: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim < 1 or vals.shape[0] < 5:
            raise ValueError("need at least 4 intervals of samples")
        scale = max(1.0, float(np.max(np.abs(vals))))
        gap = float(np.max(np.abs(vals[-1] - vals[0])))
        if gap > 1e-6 * scale:
            raise ValueError(f"samples are not periodic (end gap {gap:.3e})")
        vals[-1] = vals[0]
        object.__setattr__(self, "values", vals)
        if self.kind == "spline":
            spl = CubicSpline(self.grid, vals, bc_type="periodic", axis=0)
            object.__setattr__(self, "_spl", spl)
            # (4, N, *shape), highest power first
            object.__setattr__(self, "_coef", np.ascontiguousarray(spl.c))
        elif self.kind == "trig":
            object.__setattr__(self, "_fft", np.fft.fft(vals[:-1], axis=0))
        else:
            raise ValueError(f"unknown interpolation kind {self.kind!r}")

    @classmethod
    def from_function(cls, func, period: float, n: int, kind: str = "spline"):
        grid = uniform_grid(period, n)
        vals = np.array([func(s) for s in grid[:-1]], dtype=float)
        vals = np.concatenate([vals, vals[:1]], axis=0)
        return cls(period, vals, kind)

    @property
    def n(self) -> int:
        return self.values.shape[0] - 1

    @property
    def grid(self) -> np.ndarray:
        return uniform_grid(self.period, self.n)

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    @property
    def step(self) -> float:
        return self.period / self.n

    def at(self, s: float) -> np.ndarray:
        """Fast scalar evaluation (used at controller rate)."""
        if self.kind != "spline":
            return self(s)
        u = s % self.period
        i = int(u / self.step)
        if i >= self.n:
            i = self.n - 1
        d = u - i * self.step
        c = self._coef
        return ((c[0, i] * d + c[1, i]) * d + c[2, i]) * d + c[3, i]

    def __call__(self, s, nu: int = 0) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "spline":
            return self._spl(np.mod(s, self.period), nu)
        return self._trig_eval(s, nu)

    def derivative(self, s, order: int = 1) -> np.ndarray:
        return self(s, nu=order)

    def _trig_eval(self, s, nu):
        n = self.n
        k = np.fft.fftfreq(n, d=1.0 / n)
        if n % 2 == 0:
            k[n // 2] = 0.0  # drop the Nyquist mode (not symmetric)
        coef = self._fft / n
        w = 2.0 * np.pi / self.period
        ss = np.atleast_1d(s)
        phase = np.exp(1j * w * np.outer(ss, k))
        if nu:
            phase = phase * (1j * w * k) ** nu
        flat = coef.reshape(n, -1)
        out = (phase @ flat).real.reshape((ss.size,) + self.shape)
        if np.ndim(s) == 0:
            return out[0]
        return out.reshape(np.shape(s) + self.shape)

    def resample(self, n: int, kind: str = "spline") -> "PeriodicMatrixFunction":
        grid = uniform_grid(self.period, n)
        return PeriodicMatrixFunction(self.period, self(grid), kind)

    def map(self, func) -> "PeriodicMatrixFunction":
        """Apply ``func`` sample-wise and re-interpolate on the same grid."""
        vals = np.array([func(v) for v in self.values])
        return PeriodicMatrixFunction(self.period, vals, self.kind)

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "kind": self.kind,
            "grid": self.grid.tolist(),
            "samples": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PeriodicMatrixFunction":
        return cls(float(doc["period"]), np.asarray(doc["samples"], float), doc.get("kind", "spline"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def sample_product(*funcs: PeriodicMatrixFunction) -> PeriodicMatrixFunction:
    """Pointwise matrix product of functions sharing one grid."""
    head = funcs[0]
    vals = head.values
    for f in funcs[1:]:
        if f.n != head.n or not np.isclose(f.period, head.period):
            raise ValueError("functions must share a grid")
        vals = vals @ f.values
    return PeriodicMatrixFunction(head.period, vals, head.kind)
