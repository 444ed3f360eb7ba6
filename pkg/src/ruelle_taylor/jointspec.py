"""Joint eigenvalues and spectral projectors of commuting matrix tuples."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .koszul import CommutingTuple, as_coform

EPS = np.finfo(float).eps


class ContourError(ValueError):
    pass


class PeripheralEigenvalueError(ArithmeticError):
    pass


class ClusterMergeWarning(UserWarning):
    pass


@dataclass
class JointEigenvalue:
    lam: np.ndarray
    alg_mult: int
    geom_mult: int
    jordan_order: int
    residual: float
    basis: np.ndarray  # orthonormal basis of the generalized weight space

    def to_json(self) -> dict:
        return {
            "lambda": [[float(z.real), float(z.imag)] for z in self.lam],
            "algMult": self.alg_mult,
            "geomMult": self.geom_mult,
            "jordanOrder": self.jordan_order,
            "residual": self.residual,
        }


def stacked(gens: CommutingTuple, lam) -> np.ndarray:
    """Vertical stack of X_j - lam_j."""
    lam = as_coform(lam, gens.kappa)
    eye = np.eye(gens.n)
    return np.vstack([M - l * eye for M, l in zip(gens.mats, lam)])


def stacked_smin(gens: CommutingTuple, lam) -> float:
    return float(np.linalg.svd(stacked(gens, lam), compute_uv=False)[-1])


def _clusters(points, radius):
    """Single-linkage clustering of rows of ``points`` in the sup norm."""
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(n), 2):
        if np.max(np.abs(points[i] - points[j])) <= radius:
            parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _merge_defective(points, groups, scale, n):
    """Merge clusters that a defective eigenvalue could have split apart.

    A Jordan block of size m scatters its computed eigenvalues over a
    radius of about scale * eps^(1/m).  For m = n, ..., 2, any m points
    lying within that radius of each other are put into one cluster.
    """
    label = np.empty(len(points), dtype=int)
    for g, members in enumerate(groups):
        label[members] = g
    for m in range(n, 1, -1):
        radius = 4 * scale * (n * EPS) ** (1.0 / m)
        for c in _clusters(points, radius):
            if len(c) >= m and len(set(label[c])) > 1:
                warnings.warn(
                    f"eigenvalue clusters within {radius:.1e} merged (multiplicity {len(c)})",
                    ClusterMergeWarning,
                    stacklevel=3,
                )
                label[np.isin(label, label[c])] = label[c[0]]
    return [list(np.flatnonzero(label == g)) for g in dict.fromkeys(label)]


def _jordan_order(N, cutoff):
    """Smallest J with every J-fold product of the nilpotent parts vanishing."""
    m = N[0].shape[0]
    for J in range(1, m + 1):
        if all(
            np.linalg.norm(np.linalg.multi_dot([np.eye(m)] + [N[i] for i in word])) <= cutoff**J
            for word in itertools.combinations_with_replacement(range(len(N)), J)
        ):
            return J
    return m + 1


def joint_eigenvalues(
    gens: CommutingTuple,
    tol: float = 1e-7,
    rank_tol: float = 1e-8,
    seed: int = 0,
) -> list[JointEigenvalue]:
    """Joint spectrum with multiplicities.

    A random combination of the generators is Schur-reduced; the diagonals
    of the generators in that basis are clustered and each cluster is
    checked by the smallest singular value of the stacked shifted tuple.
    """
    rng = np.random.default_rng(seed)
    kappa, n = gens.kappa, gens.n
    scale = gens.scale
    c = rng.normal(size=kappa) + 1j * rng.normal(size=kappa)
    Z = gens.combination(c)
    T, Q = sla.schur(Z, output="complex")
    diag = np.array([np.diag(Q.conj().T @ M @ Q) for M in gens.mats]).T  # n x kappa
    groups = _clusters(diag, tol * scale)
    groups = _merge_defective(diag, groups, scale, n)
    out = []
    for g in groups:
        m = len(g)
        zc = np.mean(T.diagonal()[g])
        radius = np.max(np.abs(T.diagonal()[g] - zc)) * 1.01 + 1e-12 * scale
        _, W, sdim = sla.schur(Z, output="complex", sort=lambda z: abs(z - zc) <= radius)
        if sdim != m:
            W, _ = np.linalg.qr(Q[:, g])
        else:
            W = W[:, :m]
        comp = [W.conj().T @ M @ W for M in gens.mats]
        lam = np.array([np.trace(C) / m for C in comp])
        res = stacked_smin(gens, lam)
        if res > tol * scale * 10:
            warnings.warn(f"cluster at {lam} fails the kernel check (sigma_min={res:.2e})", stacklevel=2)
        N = [C - l * np.eye(m) for C, l in zip(comp, lam)]
        if m == 1:
            geom, J = 1, 1
        else:
            s = np.linalg.svd(np.vstack(N), compute_uv=False)
            geom = int(m - np.sum(s > rank_tol * scale * 10))
            geom = max(geom, 1)
            J = _jordan_order(N, np.sqrt(rank_tol) * scale)
        out.append(JointEigenvalue(lam, m, geom, J, res, W))
    out.sort(key=lambda e: tuple(np.round(np.concatenate([e.lam.real, e.lam.imag]), 9)))
    return out


def weight_space(gens: CommutingTuple, lam, tol: float = 1e-7, seed: int = 0) -> np.ndarray:
    """Orthonormal basis of the generalized joint weight space at lam (possibly empty)."""
    lam = as_coform(lam, gens.kappa)
    for e in joint_eigenvalues(gens, tol=tol, seed=seed):
        if np.max(np.abs(e.lam - lam)) <= max(tol * gens.scale * 10, 1e-6 * gens.scale):
            return e.basis
    return np.zeros((gens.n, 0), dtype=complex)


def projector_contour(F: np.ndarray, eps: float, nodes: int = 64) -> np.ndarray:
    """Riesz projector of F at 0 from the trapezoid rule on |z| = eps."""
    F = np.asarray(F, dtype=complex)
    mu = np.linalg.eigvals(F)
    if np.any(np.abs(np.abs(mu) - eps) < 0.1 * eps):
        raise ContourError(f"eigenvalue within {0.1 * eps:.2e} of the contour |z| = {eps}")
    n = F.shape[0]
    eye = np.eye(n)
    P = np.zeros((n, n), dtype=complex)
    for th in 2 * np.pi * np.arange(nodes) / nodes:
        z = eps * np.exp(1j * th)
        P += z * np.linalg.solve(z * eye - F, eye)
    return P / nodes


def projector_power(R: np.ndarray, max_iter: int = 10000, tol: float = 1e-13, window: int = 64):
    """lim R^k, with the geometric rate of ||R^{k+1} - R^k||.

    Raises PeripheralEigenvalueError when the increments stop contracting,
    which happens for a peripheral eigenvalue other than 1 or a Jordan
    block on the unit circle.
    """
    R = np.asarray(R, dtype=complex)
    rho = np.max(np.abs(np.linalg.eigvals(R)))
    if rho > 1 + 1e-8:
        raise PeripheralEigenvalueError(f"spectral radius {rho:.6g} > 1, powers diverge")
    P = R.copy()
    hist = []
    for k in range(max_iter):
        nxt = P @ R
        diff = np.linalg.norm(nxt - P)
        hist.append(diff)
        P = nxt
        if diff <= tol * max(1.0, np.linalg.norm(P)):
            h = np.array(hist[-window:])
            h = h[h > 0]
            rate = float(np.exp(np.polyfit(np.arange(len(h)), np.log(h), 1)[0])) if len(h) > 2 else 0.0
            return P, rate
        if k >= window and diff >= hist[k - window] * (1 - 1e-9):
            raise PeripheralEigenvalueError(
                f"peripheral eigenvalue: ||R^(k+1) - R^k|| = {diff:.3e} not contracting at k = {k}"
            )
    raise PeripheralEigenvalueError(f"peripheral eigenvalue or slow contraction: no convergence in {max_iter} steps")
