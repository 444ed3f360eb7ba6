"""Random commuting tuples with known joint spectra, and a brute-force joint-spectrum oracle.

The oracle shares nothing with jointspec: it enumerates candidate points
from the eigenvalues of each generator separately and measures the
generalized joint eigenspace as the common null space of high powers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .koszul import CommutingTuple


@dataclass
class PlantedTuple:
    gens: CommutingTuple
    spectrum: list  # (lambda, multiplicity)
    symmetric: bool


def planted_tuple(rng, n: int, kappa: int, symmetric: bool = False, complex_: bool = True, lattice: float = 0.5):
    """Commuting tuple Q diag(blocks) Q^H with prescribed joint eigenvalues.

    Each block is lam_j Id + N_j with N_j a polynomial without constant term
    in one shift matrix, so the blocks commute and every block carries a
    single joint eigenvalue.  Eigenvalue coordinates are drawn from a
    lattice of spacing ``lattice`` so that coincidences in single
    coordinates are common.  ``symmetric`` gives Hermitian generators.
    """
    sizes = []
    left = n
    while left:
        m = int(rng.integers(1, min(left, 3) + 1))
        sizes.append(m)
        left -= m
    pts = set()
    spectrum = []
    for m in sizes:
        while True:
            re = rng.integers(-4, 5, kappa) * lattice
            im = rng.integers(-4, 5, kappa) * lattice if complex_ and not symmetric else np.zeros(kappa)
            lam = re + 1j * im
            key = tuple(np.round(lam, 9))
            if key not in pts:
                pts.add(key)
                break
        spectrum.append((lam, m))
    mats = [np.zeros((n, n), dtype=complex) for _ in range(kappa)]
    start = 0
    for lam, m in spectrum:
        S = np.diag(np.ones(m - 1), 1) if m > 1 else np.zeros((1, 1))
        for j in range(kappa):
            block = lam[j] * np.eye(m)
            if not symmetric and m > 1:
                block = block + rng.normal() * S + (rng.normal() * S @ S if m > 2 else 0)
            mats[j][start:start + m, start:start + m] = block
        start += m
    Z = rng.normal(size=(n, n)) + (1j * rng.normal(size=(n, n)) if complex_ else 0)
    Q, _ = np.linalg.qr(Z)
    out = [Q @ M @ Q.conj().T for M in mats]
    if symmetric:
        out = [(M + M.conj().T) / 2 for M in out]
    return PlantedTuple(CommutingTuple(out, tol_comm=1e-9), spectrum, symmetric)


def commuting_partner(rng, gens: CommutingTuple, degree: int = 2):
    """A second tuple Y_j = p_j(X_1, ..., X_kappa) commuting with every X_k."""
    mats = []
    for _ in range(gens.kappa):
        Y = rng.normal() * np.eye(gens.n, dtype=complex)
        for d in range(1, degree + 1):
            for word in itertools.combinations_with_replacement(range(gens.kappa), d):
                term = np.linalg.multi_dot([np.eye(gens.n)] + [gens.mats[i] for i in word] + [np.eye(gens.n)])
                Y = Y + 0.3 * rng.normal() * term
        mats.append(Y)
    return CommutingTuple(mats, tol_comm=1e-8)


def brute_force_joint_spectrum(gens: CommutingTuple, tol: float = 1e-7):
    """[(lambda, multiplicity)] from candidate enumeration and stacked-kernel tests."""
    n, scale = gens.n, gens.scale
    coords = []
    for M in gens.mats:
        ev = list(np.linalg.eigvals(M))
        # defective eigenvalues scatter by ~eps^(1/m) around the true value;
        # the mean of a scattered group is accurate, so use group means
        groups = []
        for z in ev:
            for g in groups:
                if min(abs(z - w) for w in g) <= 1e-3 * scale:
                    g.append(z)
                    break
            else:
                groups.append([z])
        coords.append([np.mean(g) for g in groups])
    out = []
    for cand in itertools.product(*coords):
        lam = np.array(cand)
        shifted = []
        for M, l in zip(gens.mats, lam):
            D = M - l * np.eye(n)
            shifted.append(D / scale)
        _, s1, Vh = np.linalg.svd(np.vstack(shifted))
        if s1[-1] > 1e-5:
            continue
        # nullity of stacked powers, raising the power until it stabilizes
        null, powers = 0, [np.eye(n)] * len(shifted)
        for _ in range(n):
            powers = [P @ D for P, D in zip(powers, shifted)]
            s = np.linalg.svd(np.vstack(powers), compute_uv=False)
            nxt = int(np.sum(s <= 1e-9))
            if nxt == null:
                break
            null = nxt
        if null == 0:
            continue
        v = Vh[-1].conj()
        lam = np.array([np.vdot(v, M @ v) for M in gens.mats])  # Rayleigh re-centering
        out.append((lam, null))
    out.sort(key=lambda e: tuple(np.round(np.concatenate([e[0].real, e[0].imag]), 6)))
    return out


def same_spectrum(a, b, tol: float = 1e-7) -> bool:
    """Equality of two [(lambda, mult)] lists as multisets, up to tol per coordinate."""
    if len(a) != len(b):
        return False
    used = [False] * len(b)
    for lam, m in a:
        for i, (mu, k) in enumerate(b):
            if not used[i] and k == m and np.max(np.abs(np.asarray(lam) - np.asarray(mu))) <= tol:
                used[i] = True
                break
        else:
            return False
    return True
