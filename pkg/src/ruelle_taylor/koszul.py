"""Koszul complexes of commuting operator tuples.

The exterior algebra of C^kappa is indexed by sorted tuples of 0-based
generator indices, grade by grade in lexicographic order.  A vector in
C^n (x) Lambda(C^kappa) is stored with the exterior index as the slow
axis, so operators have the form ``kron(lambda_part, matrix_part)``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

MAX_KAPPA = 16


class NonCommutingError(ValueError):
    """Raised when a tuple fails the commutator test."""


class IllConditionedRank(UserWarning):
    pass


def _check_kappa(kappa):
    if not 1 <= kappa <= MAX_KAPPA:
        raise ValueError(f"kappa must be in 1..{MAX_KAPPA}, got {kappa}")


@lru_cache(maxsize=None)
def exterior_basis(kappa: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
    """Basis of Lambda(C^kappa): one tuple of index sets per grade."""
    _check_kappa(kappa)
    return tuple(tuple(itertools.combinations(range(kappa), j)) for j in range(kappa + 1))


@lru_cache(maxsize=None)
def _flat_index(kappa):
    basis = exterior_basis(kappa)
    flat = [I for grade in basis for I in grade]
    return flat, {I: i for i, I in enumerate(flat)}


def grade_slices(kappa: int, n: int = 1) -> list[slice]:
    out, start = [], 0
    for j in range(kappa + 1):
        size = comb(kappa, j) * n
        out.append(slice(start, start + size))
        start += size
    return out


def wedge_sign(k: int, I: tuple[int, ...]) -> int:
    """Sign of e_k ^ e_I after sorting, 0 if k already in I."""
    if k in I:
        return 0
    return -1 if sum(1 for i in I if i < k) % 2 else 1


@lru_cache(maxsize=None)
def wedge_matrix(kappa: int, k: int) -> np.ndarray:
    """Left multiplication by e_k on Lambda(C^kappa)."""
    flat, pos = _flat_index(kappa)
    E = np.zeros((len(flat), len(flat)))
    for c, I in enumerate(flat):
        s = wedge_sign(k, I)
        if s:
            J = tuple(sorted(I + (k,)))
            E[pos[J], c] = s
    E.setflags(write=False)
    return E


@lru_cache(maxsize=None)
def interior_matrix(kappa: int, k: int) -> np.ndarray:
    """Contraction with the dual of e_k (an odd derivation)."""
    flat, pos = _flat_index(kappa)
    C = np.zeros((len(flat), len(flat)))
    for c, I in enumerate(flat):
        if k in I:
            p = I.index(k)
            J = I[:p] + I[p + 1:]
            C[pos[J], c] = -1 if p % 2 else 1
    C.setflags(write=False)
    return C


def contraction(A, kappa: int | None = None) -> np.ndarray:
    """Contraction iota_A on Lambda(C^kappa) for a vector A in C^kappa."""
    A = np.atleast_1d(np.asarray(A))
    kappa = len(A) if kappa is None else kappa
    if len(A) != kappa:
        raise ValueError("vector length must equal kappa")
    _check_kappa(kappa)
    out = np.zeros((2**kappa, 2**kappa), dtype=np.result_type(A, float))
    for k in range(kappa):
        if A[k] != 0:
            out = out + A[k] * interior_matrix(kappa, k)
    return out


@dataclass
class CommutingTuple:
    """kappa pairwise commuting n x n complex matrices.

    ``comm_defect`` is the largest Frobenius norm of a commutator.  The
    constructor rejects tuples whose relative defect exceeds ``tol_comm``.
    """

    mats: tuple
    tol_comm: float = 1e-10
    comm_defect: float = field(init=False)
    worst_pair: tuple = field(init=False)

    def __post_init__(self):
        mats = tuple(np.asarray(M, dtype=complex) for M in self.mats)
        if not mats:
            raise ValueError("empty tuple")
        _check_kappa(len(mats))
        n = mats[0].shape[0]
        for M in mats:
            if M.ndim != 2 or M.shape != (n, n):
                raise ValueError("all generators must be square of the same size")
            if not np.all(np.isfinite(M)):
                raise ValueError("non-finite entries")
        self.mats = mats
        worst, pair, rel = 0.0, (0, 0), 0.0
        for i, j in itertools.combinations(range(len(mats)), 2):
            c = np.linalg.norm(mats[i] @ mats[j] - mats[j] @ mats[i])
            scale = max(np.linalg.norm(mats[i]) * np.linalg.norm(mats[j]), 1.0)
            if c >= worst:
                worst, pair = c, (i, j)
            rel = max(rel, c / scale)
        self.comm_defect = float(worst)
        self.worst_pair = pair
        if rel > self.tol_comm:
            raise NonCommutingError(
                f"generators {pair[0]} and {pair[1]} do not commute: "
                f"||[X_{pair[0]}, X_{pair[1]}]||_F = {worst:.3e}"
            )

    @property
    def kappa(self) -> int:
        return len(self.mats)

    @property
    def n(self) -> int:
        return self.mats[0].shape[0]

    @property
    def scale(self) -> float:
        return max(max(np.linalg.norm(M, 2) for M in self.mats), 1.0)

    def shifted(self, lam) -> list[np.ndarray]:
        lam = as_coform(lam, self.kappa)
        eye = np.eye(self.n)
        return [M + l * eye for M, l in zip(self.mats, lam)]

    def combination(self, A) -> np.ndarray:
        A = np.asarray(A)
        return sum(a * M for a, M in zip(A, self.mats))


def as_coform(lam, kappa: int) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if lam.shape != (kappa,):
        raise ValueError(f"expected {kappa} components, got shape {lam.shape}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("non-finite spectral parameter")
    return lam


@dataclass
class KoszulOperator:
    """Graded operator on C^n (x) Lambda(C^kappa).

    ``full`` is the assembled 2^kappa n square matrix; ``degree`` is +1 for
    a differential and -1 for a divergence.
    """

    kappa: int
    n: int
    full: np.ndarray
    degree: int

    def block(self, j: int) -> np.ndarray:
        """Component leaving grade j."""
        sl = grade_slices(self.kappa, self.n)
        t = j + self.degree
        if not 0 <= t <= self.kappa:
            return np.zeros((0, sl[j].stop - sl[j].start), dtype=self.full.dtype)
        return self.full[sl[t], sl[j]]

    @property
    def blocks(self) -> list[np.ndarray]:
        rng = range(self.kappa) if self.degree > 0 else range(1, self.kappa + 1)
        return [self.block(j) for j in rng]


def build_d(gens: CommutingTuple, lam=None) -> KoszulOperator:
    """Koszul differential of X + lambda: u (x) w -> sum_k (X_k + lam_k) u (x) e_k ^ w."""
    kappa, n = gens.kappa, gens.n
    lam = np.zeros(kappa) if lam is None else lam
    full = sum(np.kron(wedge_matrix(kappa, k), Xk) for k, Xk in enumerate(gens.shifted(lam)))
    return KoszulOperator(kappa, n, full, +1)


def build_delta(gens: CommutingTuple, lam=None) -> KoszulOperator:
    """Divergence of Y + lambda: contraction by the operator-valued form, with a minus sign.

    On grade one with kappa = 1 this is -(Y_1 + lam_1).
    """
    kappa, n = gens.kappa, gens.n
    lam = np.zeros(kappa) if lam is None else lam
    full = -sum(np.kron(interior_matrix(kappa, k), Yk) for k, Yk in enumerate(gens.shifted(lam)))
    return KoszulOperator(kappa, n, full, -1)


def lift_scalar(op: np.ndarray, kappa: int) -> np.ndarray:
    """op (x) Id on the exterior factor."""
    return np.kron(np.eye(2**kappa), op)


def contraction_defect(gens: CommutingTuple, lam, A) -> float:
    """|| iota_A d + d iota_A - (X+lam)_A (x) Id ||_F."""
    kappa, n = gens.kappa, gens.n
    d = build_d(gens, lam).full
    iota = np.kron(contraction(A, kappa), np.eye(n))
    XA = sum(a * M for a, M in zip(np.asarray(A), gens.shifted(lam)))
    return float(np.linalg.norm(iota @ d + d @ iota - lift_scalar(XA, kappa)))


def homotopy_defect(X: CommutingTuple, Y: CommutingTuple, lam=None) -> float:
    """|| delta_Y d_{X+lam} + d_{X+lam} delta_Y + (sum_k (X_k+lam_k) Y_k) (x) Id ||_F.

    Needs every Y_j to commute with every X_k; otherwise the identity has
    no reason to hold and the pair is rejected.
    """
    if X.kappa != Y.kappa or X.n != Y.n:
        raise ValueError("tuples must have equal kappa and size")
    worst, pair = 0.0, None
    for i, Xi in enumerate(X.mats):
        for j, Yj in enumerate(Y.mats):
            c = np.linalg.norm(Xi @ Yj - Yj @ Xi)
            scale = max(np.linalg.norm(Xi) * np.linalg.norm(Yj), 1.0)
            if c / scale > X.tol_comm and c > worst:
                worst, pair = c, (i, j)
    if pair is not None:
        raise NonCommutingError(
            f"X_{pair[0]} and Y_{pair[1]} do not commute: ||[X, Y]||_F = {worst:.3e}"
        )
    lam = np.zeros(X.kappa) if lam is None else as_coform(lam, X.kappa)
    d = build_d(X, lam).full
    delta = build_delta(Y).full
    S = sum(Xk @ Yk for Xk, Yk in zip(X.shifted(lam), Y.mats))
    return float(np.linalg.norm(delta @ d + d @ delta + lift_scalar(S, X.kappa)))


def _rank(M, cutoff):
    if M.size == 0:
        return 0, np.zeros(0)
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > cutoff)), s


def cohomology_dims(d: KoszulOperator, rank_tol: float = 1e-8, scale: float | None = None) -> tuple[int, ...]:
    """h_j = dim ker d_j - rank d_{j-1}, ranks from an SVD with relative cutoff.

    The cutoff is ``rank_tol`` times the largest singular value over all
    blocks, or ``rank_tol * scale`` when a reference scale is given (needed
    when the differential itself is round-off).  Singular values within a factor 10 of the cutoff trigger an
    ``IllConditionedRank`` warning; the dimensions are still returned.
    """
    if d.degree != 1:
        raise ValueError("cohomology needs a differential")
    kappa, n = d.kappa, d.n
    blocks = [d.block(j) for j in range(kappa)]
    svals = [np.linalg.svd(B, compute_uv=False) if B.size else np.zeros(0) for B in blocks]
    smax = max((s.max() for s in svals if s.size), default=0.0)
    if scale is not None:
        smax = float(scale)
    cutoff = rank_tol * smax if smax > 0 else 0.0
    ranks = [int(np.sum(s > cutoff)) for s in svals]
    if smax > 0:
        near = [s[(s > cutoff / 10) & (s < cutoff * 10)] for s in svals]
        if any(x.size for x in near):
            warnings.warn(
                f"ill-conditioned rank: singular values within a factor 10 of cutoff {cutoff:.2e}",
                IllConditionedRank,
                stacklevel=2,
            )
    dims = []
    for j in range(kappa + 1):
        size = n * comb(kappa, j)
        ker = size - (ranks[j] if j < kappa else 0)
        im = ranks[j - 1] if j > 0 else 0
        dims.append(ker - im)
    return tuple(dims)


def fredholm_index(dims) -> int:
    return int(sum((-1) ** j * h for j, h in enumerate(dims)))


def taylor_cohomology(gens: CommutingTuple, mu, rank_tol: float = 1e-8) -> tuple[int, ...]:
    """Cohomology of the Koszul complex of X - mu (nonzero iff mu is in the Taylor spectrum)."""
    return cohomology_dims(build_d(gens, -as_coform(mu, gens.kappa)), rank_tol)
