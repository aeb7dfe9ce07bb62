"""Small numerical linear-algebra helpers shared by floquet and subspace."""
from __future__ import annotations

import numpy as np
from scipy.linalg import null_space, svd

CLUSTER_RTOL = 1e-8


def numerical_rank(a: np.ndarray, rtol: float = 1e-10) -> int:
    if a.size == 0:
        return 0
    sv = svd(a, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * max(sv[0], 1.0)))


def null_space_abs(a: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Null space with the rank threshold ``rtol * max(sigma_max, 1)``."""
    u, sv, vh = np.linalg.svd(a)
    r = numerical_rank(a, rtol)
    return vh[r:].conj().T


def pinv(a: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    return np.linalg.pinv(a, rcond=rtol)


def left_null_space(a: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Orthonormal rows spanning ``{w : w a = 0}``."""
    return null_space(a.T, rcond=rtol).T


def cluster_eigenvalues(w: np.ndarray, rtol: float = CLUSTER_RTOL) -> list[np.ndarray]:
    """Group indices of ``w`` whose values agree to ``rtol`` (relative).

    Single-linkage: a chain of near neighbours ends up in one cluster.
    """
    w = np.asarray(w, dtype=complex)
    n = w.size
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(w[i] - w[j]) <= rtol * max(1.0, abs(w[i]), abs(w[j])):
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [np.array(g) for g in groups.values()]


def cluster_spectrum(a: np.ndarray, rtol: float = CLUSTER_RTOL, merge_rtol: float = 1e-4) -> list[np.ndarray]:
    """Cluster the eigenvalues of ``a``, merging near groups split by defectiveness.

    A Jordan block of size k splits under rounding by about eps^(1/k), far
    more than ``rtol``. Groups closer than ``merge_rtol`` are merged when the
    rank of ``(a - lam I)^k`` confirms a single generalized eigenspace of the
    merged size.
    """
    n = a.shape[0]
    w = np.linalg.eigvals(a)
    key = w.real + 1j * np.abs(w.imag)
    groups = cluster_eigenvalues(key, rtol)
    merged = True
    while merged:
        merged = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                ci, cj = np.mean(key[groups[i]]), np.mean(key[groups[j]])
                if abs(ci - cj) > merge_rtol * max(1.0, abs(ci)):
                    continue
                idx = np.concatenate([groups[i], groups[j]])
                lam = np.mean(key[idx])
                if abs(lam.imag) <= merge_rtol * max(1.0, abs(lam)):
                    lam = lam.real
                    k = len(idx)
                else:
                    # real Schur pairs: one member of each conjugate pair per key
                    k = len(idx) // 2 if np.iscomplexobj(lam) and len(idx) % 2 == 0 else len(idx)
                nmat = a - lam * np.eye(n)
                if n - numerical_rank(np.linalg.matrix_power(nmat, k), 1e-6) >= k:
                    groups[i] = idx
                    del groups[j]
                    merged = True
                    break
            if merged:
                break
    return [np.sort(g) for g in groups]


def is_real_eigenvalue(lam: complex, rtol: float = CLUSTER_RTOL) -> bool:
    return abs(lam.imag) <= rtol * max(1.0, abs(lam))


def jordan_block_sizes(a: np.ndarray, lam: complex, mult: int, rtol: float = 1e-8) -> list[int]:
    """Sizes of the Jordan blocks of ``a`` at eigenvalue ``lam``.

    Uses ranks of powers of ``a - lam I``: the number of blocks of size at
    least k is ``rank(N^(k-1)) - rank(N^k)``.
    """
    n = a.shape[0]
    nmat = a - lam * np.eye(n)
    ranks = [n]
    p = np.eye(n, dtype=nmat.dtype)
    for _ in range(mult):
        p = p @ nmat
        ranks.append(numerical_rank(p, rtol))
        if len(ranks) > 2 and ranks[-1] == ranks[-2]:
            break
    at_least = [ranks[k - 1] - ranks[k] for k in range(1, len(ranks))]
    sizes = []
    for k in range(1, len(at_least) + 1):
        cur = at_least[k - 1]
        nxt = at_least[k] if k < len(at_least) else 0
        sizes.extend([k] * max(cur - nxt, 0))
    return sorted(sizes, reverse=True)


def jordan_chains(a: np.ndarray, lam: complex, mult: int, rtol: float = 1e-8) -> list[np.ndarray]:
    """Jordan chains of ``a`` at ``lam`` as column blocks ``[v1, v2, ...]``.

    ``(a - lam I) v1 = 0`` and ``(a - lam I) v_{k+1} = v_k``. Real input with a
    real ``lam`` gives real chains; otherwise complex.
    """
    n = a.shape[0]
    real = np.isrealobj(a) and abs(np.imag(lam)) == 0.0
    dtype = float if real else complex
    lam = float(np.real(lam)) if real else complex(lam)
    nmat = (a - lam * np.eye(n)).astype(dtype)
    sizes = jordan_block_sizes(a, lam, mult, rtol)
    if not sizes:
        return []
    pmax = sizes[0]
    powers = [np.eye(n, dtype=dtype)]
    for _ in range(pmax):
        powers.append(powers[-1] @ nmat)
    kernels = [np.zeros((n, 0), dtype=dtype)]
    for k in range(1, pmax + 1):
        kernels.append(null_space_abs(powers[k], rtol))
    chains: list[np.ndarray] = []
    for k in range(pmax, 0, -1):
        count = sizes.count(k)
        if count == 0:
            continue
        # exclude ker N^(k-1) and level-k vectors of longer chains already taken
        taken = [kernels[k - 1]]
        for c in chains:
            if c.shape[1] > k:
                taken.append(c[:, k - 1 : k])
        avoid = np.concatenate(taken, axis=1)
        if avoid.shape[1]:
            q, _ = np.linalg.qr(avoid)
            q = q[:, : numerical_rank(avoid, 1e-10)] if avoid.shape[1] else q
            cand = kernels[k] - q @ (q.conj().T @ kernels[k])
        else:
            cand = kernels[k]
        u, sv, _ = np.linalg.svd(cand, full_matrices=False)
        for j in range(count):
            top = u[:, j]
            chain = [top]
            for _ in range(k - 1):
                chain.append(nmat @ chain[-1])
            chains.append(np.stack(chain[::-1], axis=1))
    return chains
