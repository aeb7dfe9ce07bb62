"""Real invariant subspaces, their left annihilators, and switching-function
checks for linear time-invariant closed loops."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .linalg import cluster_spectrum, jordan_chains, left_null_space, null_space_abs, numerical_rank, pinv

INVARIANCE_TOL = 1e-8


@dataclass(frozen=True)
class EigenBlock:
    """One real Jordan-like block.

    ``kind`` is ``"real-chain"`` (columns are a Jordan chain ``v1, v2, ...``)
    or ``"complex-pair"`` (columns ``Re v1, Im v1, Re v2, Im v2, ...``).
    """

    kind: str
    value: complex
    basis: np.ndarray

    @property
    def length(self) -> int:
        """Chain length (number of generalized eigenvectors)."""
        return self.basis.shape[1] if self.kind == "real-chain" else self.basis.shape[1] // 2

    @property
    def step(self) -> int:
        """Real dimension added per chain element."""
        return 1 if self.kind == "real-chain" else 2

    def carried(self, length: int) -> list[complex]:
        if self.kind == "real-chain":
            return [self.value] * length
        return [self.value, np.conj(self.value)] * length


@dataclass(frozen=True)
class RealEigenstructure:
    eigenvalues: list
    real_blocks: list
    residual: float
    defective: bool

    @property
    def basis(self) -> np.ndarray:
        return np.concatenate([b.basis for b in self.real_blocks], axis=1)


@dataclass(frozen=True)
class InvariantSubspace:
    basis: np.ndarray
    eigenvalues_carried: tuple
    codim: int
    family: bool = False

    def residual(self, a: np.ndarray) -> float:
        """``|(I - X X^+) A X|`` relative to ``|A|``."""
        x = self.basis
        proj = np.eye(x.shape[0]) - x @ pinv(x)
        return float(np.linalg.norm(proj @ a @ x) / max(1.0, np.linalg.norm(a)))

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.tolist(),
            "eigenvalues": [[complex(v).real, complex(v).imag] for v in self.eigenvalues_carried],
            "codim": self.codim,
            "family": self.family,
        }


@dataclass(frozen=True)
class Annihilator:
    s_hat: np.ndarray

    @property
    def m(self) -> int:
        return self.s_hat.shape[0]


@dataclass(frozen=True)
class SwitchingVerdict:
    accepted: bool
    det_sb: float
    invariance_residual: float
    a_sigma: np.ndarray
    spectrum: np.ndarray
    hurwitz: bool
    contained: bool


@dataclass(frozen=True)
class UnitVectorGain:
    mu: float
    p: np.ndarray
    alpha: float
    beta: float
    settling_bound: float | None = None
    extras: dict = field(default_factory=dict)


def real_eigenstructure(a: np.ndarray, rtol: float = 1e-8) -> RealEigenstructure:
    """Real Jordan-like decomposition of ``a`` into real chains and complex pairs."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    n = a.shape[0]
    w = np.linalg.eigvals(a)
    eigen = []
    blocks = []
    for idx in cluster_spectrum(a, rtol):
        vals = w[idx]
        lam = complex(np.mean(vals.real) + 1j * np.mean(np.abs(vals.imag)))
        if abs(lam.imag) <= 1e-4 * max(1.0, abs(lam)):
            lam = complex(lam.real, 0.0)
            mult = len(idx)
            chains = jordan_chains(a, lam.real, mult)
            for ch in chains:
                blocks.append(EigenBlock("real-chain", lam, ch.real))
        else:
            mult = len(idx) // 2
            chains = jordan_chains(a.astype(complex), lam, mult)
            for ch in chains:
                cols = np.stack([part for v in ch.T for part in (v.real, v.imag)], axis=1)
                blocks.append(EigenBlock("complex-pair", lam, cols))
        geo = n - numerical_rank(a - lam * np.eye(n), 1e-8)
        eigen.append((lam, mult, geo))
    order = np.argsort([b.value.real for b in blocks], kind="stable")
    blocks = [blocks[i] for i in order]
    eigen.sort(key=lambda e: e[0].real)
    v = np.concatenate([b.basis for b in blocks], axis=1)
    if v.shape[1] != n:
        raise np.linalg.LinAlgError("eigenstructure detection lost dimensions")
    # block-diagonal J from the projected blocks, and the reconstruction residual
    vinv = np.linalg.inv(v)
    j = vinv @ a @ v
    mask = np.zeros_like(j, dtype=bool)
    k = 0
    for b in blocks:
        d = b.basis.shape[1]
        mask[k:k + d, k:k + d] = True
        k += d
    jb = np.where(mask, j, 0.0)
    residual = float(np.linalg.norm(a @ v - v @ jb) / max(1.0, np.linalg.norm(a)))
    defective = any(e[1] != e[2] for e in eigen)
    return RealEigenstructure(eigen, blocks, residual, defective)


def enumerate_codim_subspaces(a: np.ndarray, m: int, rtol: float = 1e-8) -> list[InvariantSubspace]:
    """All block-aligned real invariant subspaces of codimension ``m``.

    Each real chain contributes any prefix, each complex-pair chain any prefix
    of whole pairs. Repeated eigenvalues with several chains admit continuum
    families; only the chain-aligned members are listed, marked ``family``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if not 1 <= m < n:
        raise ValueError("codimension must satisfy 1 <= m < n")
    es = real_eigenstructure(a, rtol)
    blocks = es.real_blocks
    target = n - m
    family_vals = {complex(e[0]) for e in es.eigenvalues if e[2] > 1}
    out = []
    for lengths in itertools.product(*[range(b.length + 1) for b in blocks]):
        if sum(b.step * k for b, k in zip(blocks, lengths)) != target:
            continue
        cols, carried, fam = [], [], False
        for b, k in zip(blocks, lengths):
            if k == 0:
                continue
            cols.append(b.basis[:, : b.step * k])
            carried.extend(b.carried(k))
            fam = fam or complex(b.value) in family_vals
        x = np.concatenate(cols, axis=1)
        out.append(InvariantSubspace(x, tuple(carried), m, fam))
    return out


def annihilate(sub: InvariantSubspace | np.ndarray) -> Annihilator:
    """Left annihilator of the subspace basis: orthonormal rows, each with a
    positive first nonzero entry."""
    x = sub.basis if isinstance(sub, InvariantSubspace) else np.asarray(sub, float)
    if numerical_rank(x, 1e-10) < x.shape[1]:
        raise np.linalg.LinAlgError("subspace basis is rank deficient")
    s = left_null_space(x)
    s = s[: x.shape[0] - x.shape[1]]
    for i in range(s.shape[0]):
        nz = np.flatnonzero(np.abs(s[i]) > 1e-12)
        if nz.size and s[i, nz[0]] < 0:
            s[i] = -s[i]
    return Annihilator(s)


def lti_switching_check(s, a_cl: np.ndarray, b: np.ndarray, tol: float = 1e-8) -> SwitchingVerdict:
    """Check ``det(S B) != 0`` and ``S A X = 0`` for ``X`` spanning ``ker S``;
    report ``A_sigma = S A S^+`` with its spectrum."""
    s = s.s_hat if isinstance(s, Annihilator) else np.atleast_2d(np.asarray(s, float))
    a_cl = np.atleast_2d(np.asarray(a_cl, float))
    b = np.asarray(b, float).reshape(a_cl.shape[0], -1)
    n = a_cl.shape[0]
    if s.shape[1] != n or b.shape[1] != s.shape[0] or a_cl.shape[1] != n:
        raise ValueError("dimension mismatch between S, A and B")
    sb = s @ b
    det_sb = float(np.linalg.det(sb))
    x = null_space_abs(s, 1e-10)
    inv_res = float(np.linalg.norm(s @ a_cl @ x) / max(1.0, np.linalg.norm(a_cl))) if x.size else 0.0
    a_sigma = s @ a_cl @ pinv(s)
    spec = np.linalg.eigvals(a_sigma)
    full = np.linalg.eigvals(a_cl)
    contained = all(np.min(np.abs(full - lam)) < 1e-6 * max(1.0, abs(lam)) for lam in spec)
    scale = max(1.0, np.linalg.norm(s) * np.linalg.norm(b)) ** sb.shape[0]
    accepted = abs(det_sb) > tol * scale and inv_res < tol
    return SwitchingVerdict(accepted, det_sb, inv_res, a_sigma, spec, bool(np.all(spec.real < 0)), contained)


def unit_vector_gain_lti(a_sigma, q, sb_norm: float, delta_max: float, mu_star: float,
                         v0: float | None = None) -> UnitVectorGain:
    """Smallest unit-vector gain ``mu`` guaranteeing finite-time reaching.

    ``mu = [mu_star / 2 + lmax(P) |SB| delta_max] / lmin(P)`` where
    ``A_s^T P + P A_s = -Q``. With ``v0 = V(0)`` the settling-time bound
    ``2/alpha ln(alpha/beta sqrt(v0) + 1)`` is included.
    """
    a_sigma = np.atleast_2d(np.asarray(a_sigma, float))
    q = np.atleast_2d(np.asarray(q, float))
    if delta_max < 0 or mu_star <= 0:
        raise ValueError("need delta_max >= 0 and mu_star > 0")
    if np.any(np.linalg.eigvals(a_sigma).real >= 0):
        raise np.linalg.LinAlgError("A_sigma is not Hurwitz; Lyapunov equation has no PD solution")
    p = solve_continuous_lyapunov(a_sigma.T, -q)
    p = 0.5 * (p + p.T)
    ev = np.linalg.eigvalsh(p)
    lmin, lmax = ev[0], ev[-1]
    mu = (0.5 * mu_star + lmax * sb_norm * delta_max) / lmin
    alpha = np.linalg.eigvalsh(0.5 * (q + q.T))[0] / lmax
    beta = mu_star / np.sqrt(lmax)
    ts = None if v0 is None else float(2.0 / alpha * np.log(alpha / beta * np.sqrt(v0) + 1.0))
    return UnitVectorGain(float(mu), p, float(alpha), float(beta), ts)
