"""Fourier-Galerkin truncations of the twisted transfer operators of a suspension model.

For direction j with roof r_j and monodromy M_j the twisted transfer
operator is L_j(lam) f = (exp(-lam r_j) f) o M_j^{-1}.  In Fourier modes,

    (L_j(lam) a)_k = sum_l  e_hat(M_j^T k - l) a_l,   e_hat = Fourier(exp(-lam r_j)),

so mass at frequency l moves to M_j^{-T} l.  lam is a joint resonance of
the flow iff 1 is a joint eigenvalue of (L_1(lam_1), ..., L_kappa(lam_kappa)).
Frequencies are truncated to a Euclidean ball of radius K in each factor
(products are handled as Kronecker products of factor truncations) and
conjugated by anisotropic weights exp(N G(k)), G an escape function.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from math import factorial

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .jointspec import joint_eigenvalues
from .koszul import CommutingTuple, build_d, cohomology_dims
from .models import SuspensionModel, c_l2
from .parametrix import Resonance, gauss_newton, scan

K_CEILING = {1: 48, 2: 48, 3: 48, 4: 24}  # per factor base dimension
SERIES_TOL = 1e-14


class EscapeError(ValueError):
    pass


# ---------------------------------------------------------------- escape functions


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    f = lambda v: np.where(v > 0, np.exp(-1.0 / np.maximum(v, 1e-300)), 0.0)
    a, b = f(u), f(1 - u)
    return a / (a + b)


@dataclass
class EscapeBlock:
    """Escape function on one factor's frequency space.

    Covectors are written in the eigen-coordinates c_i = xi . v_i.  Along
    the flow the coordinates in ``expanding`` grow (these span the
    annihilator of the unstable bundle) and the others shrink.  The order
    function depends on x = log(|c_contracting| / |c_expanding|).
    """

    base: tuple
    dirs: tuple
    V: np.ndarray
    expanding: np.ndarray
    transports: tuple  # M_j^{-T} on the block, one per direction
    x_u: float
    x_0: float
    x_s: float
    swap: bool = False
    order_override: object = None

    def coords(self, xi):
        return np.atleast_2d(xi) @ self.V

    def log_ratio(self, xi):
        c = self.coords(xi)
        num = np.linalg.norm(c[:, ~self.expanding], axis=1)
        den = np.linalg.norm(c[:, self.expanding], axis=1)
        with np.errstate(divide="ignore"):
            x = np.log(num) - np.log(den)
        return -x if self.swap else x

    def order(self, xi):
        if self.order_override is not None:
            return self.order_override(np.atleast_2d(xi))
        x = self.log_ratio(xi)
        left = -0.25 + 0.25 * _smoothstep((x - self.x_u) / (self.x_0 - self.x_u))
        right = 4.0 * _smoothstep((x - self.x_0) / (self.x_s - self.x_0))
        return np.where(x <= self.x_0, left, right)

    def G(self, xi, R=1.0):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        r = np.linalg.norm(self.coords(xi), axis=1)
        beta = _smoothstep((r - R / 2) / (R / 2))
        out = np.ones(len(xi))
        big = r > R / 2
        if big.any():
            out[big] = (1 - beta[big]) + beta[big] * self.order(xi[big]) * np.log1p(r[big])
        return out


@dataclass
class EscapeFunction:
    blocks: tuple
    R: float
    cone_angles: tuple
    c_X: float = 0.0
    attempts: int = 1

    def G(self, k):
        """Additive over factors: G(k) = sum_b G_b(k restricted to block b)."""
        k = np.atleast_2d(k)
        return sum(b.G(k[:, list(b.base)], self.R) for b in self.blocks)

    def order(self, xi):
        xi = np.atleast_2d(xi)
        return sum(b.order(xi[:, list(b.base)]) for b in self.blocks)


@dataclass
class EscapeReport:
    monotone: bool
    range_ok: bool
    c_X: float
    worst_increase: float


def _sphere(dim, n, seed=0):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        t = 2 * np.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if dim == 3:
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        th = np.pi * (1 + 5**0.5) * i
        return np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)
    g = np.random.default_rng(seed).normal(size=(n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _block_step(block, A0):
    """Frequency transport for the time-A0 map restricted to the block (integer A0)."""
    D = np.eye(len(block.base))
    for j, T in zip(block.dirs, block.transports):
        a = A0[j]
        if abs(a - round(a)) > 1e-12:
            raise EscapeError("calibration direction must have integer components")
        D = D @ np.linalg.matrix_power(T, int(round(a)))
    return D


def verify_escape(model: SuspensionModel, esc: EscapeFunction, A0=None, n_sphere: int = 10000, slack=1e-6):
    """Monotone decay of the order function, range condition and the decay constant c_X."""
    A0 = model.A0 if A0 is None else np.asarray(A0, dtype=float)
    monotone, range_ok, worst = True, True, 0.0
    c_X = np.inf
    radii = esc.R * 2.0 ** np.arange(0, 16)
    for b in esc.blocks:
        S = _sphere(len(b.base), n_sphere)
        m0 = b.order(S)
        for T in _chamber_transports(model, b, A0):
            inc = b.order(S @ T.T) - m0
            worst = max(worst, float(inc.max()))
            if inc.max() > slack:
                monotone = False
        c = b.coords(np.eye(len(b.base)))  # rows: standard basis in eigen-coordinates
        Vinv = np.linalg.inv(b.V)
        e_u = Vinv[b.expanding]  # covectors with only expanding coordinates
        e_s = Vinv[~b.expanding]
        if np.any(b.order(e_u) > -0.25 + 1e-9) or np.any(b.order(e_s) < 4 - 1e-9):
            range_ok = False
        if np.any(m0 < -0.5) or np.any(m0 > 8):
            range_ok = False
        D = _block_step(b, A0)
        for r in radii:
            xi = S * r
            dec = b.G(xi, esc.R) - b.G(xi @ D.T, esc.R)
            c_X = min(c_X, float(dec.min()))
    return EscapeReport(monotone, range_ok, float(c_X), worst)


def _chamber_transports(model, block, A0):
    """Frequency transports of the monodromies whose direction lies in the block's Weyl chamber, plus the A0 step.

    A generator outside the chamber expands part of the stable bundle, so
    no order function can decrease along it.
    """
    B = list(block.base)
    idx = [i for i in range(model.d) if np.any(model.eigvecs[B, i] != 0)]
    ref = np.sign(model.lyapunov[idx] @ A0)
    out = [_block_step(block, A0)]
    for j, T in zip(block.dirs, block.transports):
        if np.all(np.sign(model.lyapunov[idx, j]) == ref):
            out.append(T)
    return out


def _blocks(model, cone_angles, swap=False):
    th_u, th_s = cone_angles
    x_u, x_s = np.log(np.tan(th_u)), -np.log(np.tan(th_s))
    rates = model.lyapunov @ model.A0
    out = []
    for f in model.factors:
        B = list(f.base)
        rows = [i for i in range(model.d) if np.any(model.eigvecs[B, i] != 0) and np.all(model.eigvecs[[q for q in range(model.d) if q not in B], i] == 0)]
        V = model.eigvecs[np.ix_(B, rows)]
        r = rates[rows]
        expanding = r < 0
        delta = min(abs(a) + abs(c) for a in r[expanding] for c in r[~expanding])
        x0 = float(np.clip(delta / 2, x_u + 0.1 * (x_s - x_u), x_s - 0.1 * (x_s - x_u)))
        trans = tuple(np.linalg.inv(model.monodromies[j][np.ix_(B, B)].astype(float)).T for j in f.dirs)
        out.append(EscapeBlock(tuple(B), tuple(f.dirs), V, expanding, trans, x_u, x0, x_s, swap))
    return tuple(out)


def build_escape(model: SuspensionModel, cone_angles=(0.3, 0.3), R: float = 1.0, retries: int = 5, swap=False):
    """Escape function for the model, shrinking the cones on failure (at most ``retries`` times)."""
    angles = tuple(cone_angles)
    for attempt in range(1, retries + 2):
        esc = EscapeFunction(_blocks(model, angles, swap), R, angles, attempts=attempt)
        rep = verify_escape(model, esc)
        if rep.monotone and rep.range_ok and rep.c_X > 0:
            esc.c_X = rep.c_X
            return esc
        angles = tuple(0.7 * a for a in angles)
    raise EscapeError(
        f"no valid escape function after {retries} cone shrinks "
        f"(monotone={rep.monotone}, range={rep.range_ok}, c_X={rep.c_X:.3g})"
    )


# ---------------------------------------------------------------- truncation


def lattice_ball(dim: int, K: int) -> np.ndarray:
    r = np.arange(-K, K + 1)
    g = np.array(np.meshgrid(*([r] * dim), indexing="ij")).reshape(dim, -1).T
    return g[(g**2).sum(axis=1) <= K * K]


class _Index:
    def __init__(self, modes, K):
        self.K, self.dim = K, modes.shape[1]
        self.base = 2 * K + 1
        self.keys = self.encode(modes)
        self.order = np.argsort(self.keys)
        self.sorted = self.keys[self.order]

    def encode(self, k):
        k = np.atleast_2d(k) + self.K
        out = np.zeros(len(k), dtype=np.int64)
        for c in range(k.shape[1]):
            out = out * self.base + k[:, c]
        return out

    def lookup(self, k):
        """Index of each row of k in the ball, -1 when outside."""
        k = np.atleast_2d(k)
        inside = np.all(np.abs(k) <= self.K, axis=1)
        out = -np.ones(len(k), dtype=np.int64)
        if inside.any():
            key = self.encode(k[inside])
            pos = np.searchsorted(self.sorted, key)
            pos = np.minimum(pos, len(self.sorted) - 1)
            hit = self.sorted[pos] == key
            idx = np.where(hit, self.order[pos], -1)
            out[inside] = idx
        return out


@dataclass
class FactorTruncation:
    """Weighted truncated transfer operators of one factor of the model."""

    model: SuspensionModel
    factor: object
    K: int
    N: float
    block: EscapeBlock
    R: float
    lam_max: float = 40.0
    nev: int = 12
    mu_min: float = 0.05

    def __post_init__(self):
        B = list(self.factor.base)
        self.modes = lattice_ball(len(B), self.K)
        self.index = _Index(self.modes, self.K)
        self.weights_log = self.N * self.block.G(self.modes.astype(float), self.R)
        self._const = {}
        self._var = {}
        for j in self.factor.dirs:
            M = self.model.monodromies[j][np.ix_(B, B)]
            target = self.modes @ M  # rows: (M^T k)^T = k^T M
            roof = self.model.roofs[j]
            if roof.is_constant:
                cols = self.index.lookup(target)
                rows = np.flatnonzero(cols >= 0)
                cols = cols[rows]
                w = np.exp(self.weights_log[rows] - self.weights_log[cols])
                P = sp.csr_matrix((w, (rows, cols)), shape=(self.size, self.size))
                self._const[j] = (roof.mean, P)
            else:
                self._var[j] = self._variable_pattern(roof, target)

    @property
    def size(self) -> int:
        return len(self.modes)

    @property
    def dirs(self):
        return self.factor.dirs

    def _variable_pattern(self, roof, target):
        amp = sum(abs(a) for k, a in roof.coeffs if any(k))
        z = self.lam_max * amp
        p = 0
        while p < 200 and z**p / factorial(p) > SERIES_TOL:
            p += 1
        powers = [roof.fourier_power(q) for q in range(p + 1)]
        support = sorted(set().union(*[set(P.keys()) for P in powers]))
        table = np.zeros((len(support), p + 1), dtype=complex)
        pos = {n: i for i, n in enumerate(support)}
        for q, P in enumerate(powers):
            for n, a in P.items():
                table[pos[n], q] = a / factorial(q)
        supp = np.array(support)
        rows, cols, which = [], [], []
        for s_i, n in enumerate(supp):
            c = self.index.lookup(target - n)
            r = np.flatnonzero(c >= 0)
            rows.append(r)
            cols.append(c[r])
            which.append(np.full(len(r), s_i))
        rows, cols, which = (np.concatenate(v) for v in (rows, cols, which))
        w = np.exp(self.weights_log[rows] - self.weights_log[cols])
        return roof.mean, table, rows, cols, which, w

    def matrix(self, j, lam) -> sp.csr_matrix:
        """Weighted truncation of L_j(lam) for the scalar lam."""
        lam = complex(lam)
        if j in self._const:
            c, P = self._const[j]
            return np.exp(-lam * c) * P
        mean, table, rows, cols, which, w = self._var[j]
        if abs(lam) > self.lam_max * 1.0001:
            raise ValueError(f"|lambda| = {abs(lam):.3g} exceeds the series range {self.lam_max}")
        coef = np.exp(-lam * mean) * (table @ ((-lam) ** np.arange(table.shape[1])))
        return sp.csr_matrix((coef[which] * w, (rows, cols)), shape=(self.size, self.size))

    @property
    def constant(self) -> bool:
        return not self._var

    def leading_basis(self, lam=None, nev=None, seed=0):
        """Orthonormal basis of the eigenvectors of modulus >= mu_min of a generic combination."""
        nev = nev or self.nev
        rng = np.random.default_rng(seed)
        coef = rng.normal(size=len(self.dirs)) + 1j * rng.normal(size=len(self.dirs))
        if self.constant:
            lam = np.zeros(len(self.dirs))
        ops = [self.matrix(j, l) for j, l in zip(self.dirs, lam)]
        Z = sum(c * A for c, A in zip(coef, ops)) if len(ops) > 1 else ops[0]
        mu, V = _top_eigs(Z, nev)
        keep = np.abs(mu) >= self.mu_min * (np.abs(coef).max() if len(ops) > 1 else 1.0)
        if not keep.any():
            keep = np.abs(mu) == np.abs(mu).max()
        Q, _ = np.linalg.qr(V[:, keep])
        return Q

    @cached_property
    def _const_basis(self):
        Q = self.leading_basis()
        C0 = [Q.conj().T @ (self._const[j][1] @ Q) for j in self.dirs]
        return Q, C0

    def compressed(self, lam, Q=None):
        """Compressions of L_j(lam_j) to the leading invariant subspace."""
        lam = np.atleast_1d(lam)
        if self.constant and Q is None:
            Q, C0 = self._const_basis
            return [np.exp(-l * self._const[j][0]) * C for j, l, C in zip(self.dirs, lam, C0)], Q
        if Q is None:
            Q = self.leading_basis(lam)
        return [Q.conj().T @ (self.matrix(j, l) @ Q) for j, l in zip(self.dirs, lam)], Q

    def family(self, Q=None):
        """lam -> (I - C_j(lam), prod_j C_j(lam)) on the leading subspace."""

        def fam(lam):
            C, _ = self.compressed(lam, Q)
            p = C[0].shape[0]
            R = np.eye(p, dtype=complex)
            for A in C:
                R = R @ A
            return [np.eye(p) - A for A in C], R

        return fam

    def comm_defect(self) -> float:
        if len(self.dirs) < 2:
            return 0.0
        A = [self.matrix(j, 0.0) for j in self.dirs]
        return max(spla.norm(A[a] @ A[b] - A[b] @ A[a]) for a, b in itertools.combinations(range(len(A)), 2))


def _top_eigs(A, nev):
    n = A.shape[0]
    if n <= 400:
        mu, V = np.linalg.eig(A.toarray())
        o = np.argsort(-np.abs(mu))[:nev]
        return mu[o], V[:, o]
    k = min(nev, n - 2)
    # fixed start vector: ARPACK's own random start makes reruns differ in the last bits
    g = np.random.default_rng(n)
    v0 = g.normal(size=n) + 1j * g.normal(size=n)
    try:
        mu, V = spla.eigs(A, k=k, which="LM", tol=1e-13, maxiter=20 * n, v0=v0)
    except spla.ArpackNoConvergence as e:
        mu, V = e.eigenvalues, e.eigenvectors
        if len(mu) == 0:
            raise
    o = np.argsort(-np.abs(mu))
    return mu[o], V[:, o]


@dataclass
class TruncatedGenerator:
    model: SuspensionModel
    K: int
    N: float
    escape: EscapeFunction
    factors: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(np.prod([f.size for f in self.factors]))

    @property
    def comm_defect(self) -> float:
        return max(f.comm_defect() for f in self.factors)

    def operator(self, j, lam) -> sp.csr_matrix:
        """Full sparse L_j(lam_j) on the product of factor balls (small sizes only)."""
        mats = []
        for f in self.factors:
            mats.append(f.matrix(j, lam) if j in f.dirs else sp.identity(f.size, format="csr"))
        out = mats[0]
        for m in mats[1:]:
            out = sp.kron(out, m, format="csr")
        return out


def k_ceiling(model: SuspensionModel) -> int:
    """Largest admissible K: 48 per axis for factor bases of dimension <= 3, 24 for dimension 4."""
    return min(K_CEILING.get(len(f.base), 24) for f in model.factors)


def refined_K(model: SuspensionModel, K: int) -> int:
    """K + 8, or K - 8 when K + 8 would pass the ceiling."""
    return K + 8 if K + 8 <= k_ceiling(model) else K - 8


def build_truncation(model: SuspensionModel, K: int, N: float, escape: EscapeFunction | None = None, lam_max=40.0):
    if K > k_ceiling(model):
        raise ValueError(f"K = {K} exceeds the ceiling {k_ceiling(model)} for this model")
    if not 0 <= N <= 10:
        raise ValueError("N must lie in [0, 10]")
    escape = escape or build_escape(model)
    blocks = {b.base: b for b in escape.blocks}
    facs = [FactorTruncation(model, f, K, N, blocks[tuple(f.base)], escape.R, lam_max) for f in model.factors]
    return TruncatedGenerator(model, K, N, escape, facs)


# ---------------------------------------------------------------- windows and resonances


@dataclass
class Window:
    """Half-space Re lam(A0) > boundary, intersected with |Im lam_j| <= omega."""

    boundary: float
    A0: np.ndarray
    omega: float
    c_X: float
    c_l2: float
    N: float
    K: int
    stable: bool = True
    notes: list = field(default_factory=list)

    def contains(self, lam, slack=1e-9) -> bool:
        lam = np.asarray(lam)
        return bool(
            np.real(lam) @ self.A0 > self.boundary - slack and np.all(np.abs(np.imag(lam)) <= self.omega + slack)
        )

    def to_json(self) -> dict:
        return {
            "boundary": self.boundary, "A0": self.A0.tolist(), "omega": self.omega, "c_X": self.c_X,
            "c_L2": self.c_l2, "N": self.N, "K": self.K, "stable": self.stable,
        }


def _leading_moduli(ft: FactorTruncation, lam, thresh):
    C, _ = ft.compressed(lam)
    mu = np.linalg.eigvals(C[0]) if len(C) == 1 else np.concatenate([np.linalg.eigvals(c) for c in C])
    return np.sort_complex(mu[np.abs(mu) >= thresh])


def calibrate_window(model: SuspensionModel, K: int, N: float, A0=None, omega: float = 20.0,
                     escape=None, threshold: float = 1e-4) -> Window:
    """Window boundary -c_X N + C_L2, checked against refinement K -> K + 8 and N -> N + 1.

    The leading eigenvalues of each factor operator (at a few spectral
    parameters on the boundary for variable roofs) must move by less than
    ``threshold``; otherwise the boundary is moved towards the imaginary
    axis until they do.
    """
    A0 = model.A0 if A0 is None else np.asarray(A0, dtype=float)
    if not model.weyl_chamber_test(A0):
        raise ValueError("calibration direction is outside the Weyl chamber")
    if escape is None:
        if not np.allclose(A0, model.A0):
            model = _with_A0(model, A0)
        escape = build_escape(model)
    rep = verify_escape(model, escape, A0)
    cX = rep.c_X
    cl2, _ = c_l2(model, A0)
    b = -cX * N + cl2
    win = Window(b, A0, omega, cX, cl2, N, K)
    if N == 0:
        return win
    base = build_truncation(model, K, N, escape)
    refined = [build_truncation(model, refined_K(model, K), N, escape), build_truncation(model, K, min(N + 1, 10), escape)]
    for _ in range(12):
        ok = True
        for i, ft in enumerate(base.factors):
            j0 = ft.dirs[0]
            bj = b / A0[j0] if len(ft.dirs) == 1 else b / np.sum(A0[list(ft.dirs)])
            samples = [np.full(len(ft.dirs), bj + 1j * w) for w in ((0.0,) if ft.constant else (0.0, np.pi, 2 * np.pi))]
            thresh = np.exp(-abs(bj)) if ft.constant else 0.5
            for lam in samples:
                ref = _leading_moduli(ft, lam, thresh)
                for other in refined:
                    mu = _leading_moduli(other.factors[i], lam, thresh)
                    if len(mu) != len(ref) or (len(mu) and np.max(np.abs(mu - ref)) > threshold):
                        ok = False
        if ok:
            break
        win.notes.append(f"boundary {b:.4g} unstable under refinement")
        b = b / 2
        if b > -1e-3:
            win.stable = False
            break
    win.boundary = b
    return win


def _with_A0(model, A0):
    import copy

    m = copy.copy(model)
    m.A0 = np.asarray(A0, dtype=float)
    m.__dict__.pop("_eigen", None)
    return m


def _factor_grid(lo, hi, omega, step):
    re = np.arange(lo, hi + step / 2, step)
    im = np.arange(-omega, omega + step / 2, step)
    return np.array([[complex(a, b)] for a in re for b in im])


def _refine_factor(ft: FactorTruncation, lam0, max_outer=8):
    lam = np.atleast_1d(np.asarray(lam0, dtype=complex))
    if ft.constant:
        lam, _ = gauss_newton(ft.family(), lam)
        return lam
    for _ in range(max_outer):
        Q = ft.leading_basis(lam)
        new, _ = gauss_newton(ft.family(Q), lam)
        if np.max(np.abs(new - lam)) < 1e-13:
            return new
        lam = new
    return lam


def _scan_factor(ft: FactorTruncation, lo, hi, omega, step, tol, threads):
    if len(ft.dirs) > 1:
        return _joint_factor(ft, lo, omega, tol)
    fam = ft.family()
    out = scan(fam, _factor_grid(lo, hi, omega, step), tol=tol, threads=threads,
               refine=lambda f, lam, v: (_refine_factor(ft, lam), None))
    return out


def _joint_factor(ft: FactorTruncation, lo, omega, tol):
    """Constant-roof factors of rank > 1: lam_j = (log nu_j + 2 pi i n) / c_j from joint eigenvalues nu."""
    Q, C0 = ft._const_basis
    out = []
    for e in joint_eigenvalues(CommutingTuple(C0, tol_comm=1e-6)):
        if np.any(np.abs(e.lam) < 1e-300):
            continue
        branches = []
        for j, nu in zip(ft.dirs, e.lam):
            c = ft._const[j][0]
            base = np.log(nu) / c
            n = np.arange(np.floor((-omega - base.imag) * c / (2 * np.pi)), np.ceil((omega - base.imag) * c / (2 * np.pi)) + 1)
            vals = base + 2j * np.pi * n / c
            branches.append(vals[np.abs(vals.imag) <= omega + 1e-9])
        for combo in itertools.product(*branches):
            lam = np.array(combo)
            if np.sum(lam.real) < lo - 1e-9:
                continue
            D, R = ft.family()(lam)
            kr = np.linalg.svd(np.vstack(D), compute_uv=False)[-1]
            fr = np.linalg.svd(np.eye(R.shape[0]) - R, compute_uv=False)[-1]
            status = "confirmed" if kr <= tol and fr <= tol else "unconfirmed"
            out.append(Resonance(lam, float(kr), float(fr), status))
    return out


def _product_tuple(comps):
    """Kronecker embedding of factor tuples into one commuting tuple on the tensor product."""
    sizes = [c[0].shape[0] for c in comps]
    mats = []
    for i, C in enumerate(comps):
        for A in C:
            M = np.ones((1, 1))
            for k, s in enumerate(sizes):
                M = np.kron(M, A if k == i else np.eye(s))
            mats.append(M)
    return mats


def resonances_in_window(
    model: SuspensionModel,
    K: int,
    N: float,
    window: Window | None = None,
    step: float = 0.1,
    re_max: float = 0.5,
    tol: float = 1e-8,
    stability: float = 1e-5,
    threads: int = 1,
    escape=None,
    omega: float = 20.0,
) -> tuple[list[Resonance], Window]:
    """Joint resonances in the calibrated window with cohomology dimensions.

    Each factor is scanned on a grid in its own spectral parameter; the
    hits are refined, re-checked at (K + 8, N) and (K, N + 1) and kept when
    they move by less than ``stability``.  Joint resonances are tuples of
    factor resonances; their cohomology is computed by the Koszul complex of
    the compressed truncated tuple.
    """
    escape = escape or build_escape(model)
    window = window or calibrate_window(model, K, N, escape=escape, omega=omega)
    A0 = window.A0
    tg = build_truncation(model, K, N, escape)
    checks = [build_truncation(model, refined_K(model, K), N, escape), build_truncation(model, K, min(N + 1, 10), escape)]
    per_factor = []
    for i, ft in enumerate(tg.factors):
        a = A0[list(ft.dirs)].sum()
        lo = window.boundary / a
        found = _scan_factor(ft, lo, re_max, window.omega, step, tol, threads)
        kept = []
        for r in found:
            moved = 0.0
            for other in checks:
                oft = other.factors[i]
                lam2 = _refine_factor(oft, r.lam) if len(ft.dirs) == 1 else _closest(oft, r.lam, lo, window.omega, tol)
                moved = max(moved, float(np.max(np.abs(lam2 - r.lam))))
            if moved < stability:
                kept.append(r)
            else:
                warnings.warn(f"resonance {r.lam} moved by {moved:.2e} under refinement; dropped", stacklevel=2)
        per_factor.append(kept)
    out = []
    for combo in itertools.product(*per_factor):
        lam = np.zeros(model.kappa, dtype=complex)
        for ft, r in zip(tg.factors, combo):
            lam[list(ft.dirs)] = r.lam
        if not window.contains(lam):
            continue
        comps = [ft.compressed(lam[list(ft.dirs)])[0] for ft in tg.factors]
        mats = _product_tuple(comps)
        p = mats[0].shape[0]
        D = CommutingTuple([np.eye(p) - A for A in mats], tol_comm=1e-6)
        R = np.linalg.multi_dot([np.eye(p)] + mats + [np.eye(p)])
        kr = float(np.linalg.svd(np.vstack(D.mats), compute_uv=False)[-1])
        fr = float(np.linalg.svd(np.eye(p) - R, compute_uv=False)[-1])
        status = "confirmed" if all(r.status == "confirmed" for r in combo) and kr <= tol and fr <= tol else "unconfirmed"
        res = Resonance(lam, kr, fr, status)
        res.dims = cohomology_dims(build_d(D), scale=1.0)
        spec = joint_eigenvalues(CommutingTuple(mats, tol_comm=1e-6))
        res.alg_mult = sum(e.alg_mult for e in spec if np.max(np.abs(e.lam - 1)) <= 1e-6)
        out.append(res)
    out.sort(key=lambda r: tuple(np.concatenate([r.lam.imag, r.lam.real]).round(9)))
    return out, window


def _closest(ft, lam, lo, omega, tol):
    found = _joint_factor(ft, lo - 1, omega + 1, tol)
    if not found:
        return np.full_like(lam, np.inf)
    return min((r.lam for r in found), key=lambda z: np.max(np.abs(z - lam)))
