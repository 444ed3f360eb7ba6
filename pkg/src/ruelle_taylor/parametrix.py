"""Averaged resolvents R(lambda), the parametrix F = Id - R and resonance scans.

For a commuting tuple X and a spectral parameter lambda,

    R(lambda) = prod_j  int exp(-t (X_j + lambda_j)) psi_j(t) dt

with psi_j a normalized smooth bump.  F(lambda) = Id - R(lambda) is
realized as d Q + Q d for an explicit divergence Q built from the tails
chi_j(t) = int_t^inf psi_j.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import integrate

from .koszul import CommutingTuple, as_coform, build_d, build_delta, cohomology_dims, lift_scalar

QUAD_NODES = 64
QUAD_MAX_NODES = 4096


class QuadratureError(ArithmeticError):
    pass


@lru_cache(maxsize=None)
def _bump_mass(skew):
    f = lambda u: np.exp(-1.0 / (1.0 - u * u)) * (1 + skew * u)
    val, _ = integrate.quad(f, -1, 1, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth probability density supported in (center - width/2, center + width/2).

    ``family='bump'`` is exp(-1/(1-u^2)) in the rescaled variable u, even
    about the center; ``'skew'`` multiplies it by (1 + skew u), |skew| < 1.
    """

    family: str = "bump"
    center: float = 1.0
    width: float = 1.0
    skew: float = 0.0

    def __post_init__(self):
        if self.family not in ("bump", "skew"):
            raise ValueError(f"unknown profile family {self.family!r}")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.family == "bump" and self.skew != 0:
            raise ValueError("the even bump takes no skew")
        if not abs(self.skew) < 1:
            raise ValueError("|skew| must be < 1 to keep the density positive")

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.width / 2, self.center + self.width / 2

    def pdf(self, t):
        u = (np.asarray(t, dtype=float) - self.center) * (2.0 / self.width)
        inside = np.abs(u) < 1
        out = np.zeros_like(u)
        ui = u[inside]
        out[inside] = np.exp(-1.0 / (1.0 - ui * ui)) * (1 + self.skew * ui)
        return out * (2.0 / self.width) / _bump_mass(self.skew)

    def nodes(self, n):
        x, w = np.polynomial.legendre.leggauss(n)
        a, b = self.support
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        return t, 0.5 * (b - a) * w * self.pdf(t)

    def sample(self, rng, size):
        """Rejection sampler."""
        a, b = self.support
        peak = self.pdf(np.linspace(a, b, 2001)).max() * 1.01
        out = np.empty(0)
        size = int(np.prod(size)) if np.ndim(size) else int(size)
        while out.size < size:
            t = rng.uniform(a, b, 2 * (size - out.size) + 16)
            keep = rng.uniform(0, peak, t.size) < self.pdf(t)
            out = np.concatenate([out, t[keep]])
        return out[:size]


def _converged_sum(profile, integrand, tol=1e-10):
    """Gauss-Legendre sum of integrand(t) psi(t), doubling nodes until stable."""
    n = QUAD_NODES
    t, w = profile.nodes(n)
    prev = np.tensordot(w, integrand(t), axes=(0, 0))
    while n < QUAD_MAX_NODES:
        n *= 2
        t, w = profile.nodes(n)
        cur = np.tensordot(w, integrand(t), axes=(0, 0))
        err = np.max(np.abs(cur - prev))
        if err <= tol * max(np.max(np.abs(cur)), 1e-300):
            return cur
        prev = cur
    raise QuadratureError(f"quadrature did not converge with {n} nodes (change {err:.2e})")


def psi_hat(profile: CutoffProfile, s, tol: float = 1e-10):
    """int exp(-i s t) psi(t) dt for real or complex s (array-valued)."""
    s = np.asarray(s, dtype=complex)
    flat = s.ravel()
    vals = _converged_sum(profile, lambda t: np.exp(-1j * np.outer(t, flat)), tol)
    return vals.reshape(s.shape)


def laplace_average(profile: CutoffProfile, z, tol: float = 1e-10):
    """int exp(-t z) psi(t) dt, i.e. psi_hat at -i z."""
    return psi_hat(profile, -1j * np.asarray(z, dtype=complex), tol)


def _phi1(w):
    w = np.asarray(w, dtype=complex)
    out = np.ones_like(w)
    big = np.abs(w) > 1e-8
    out[big] = -np.expm1(-w[big]) / w[big]
    out[~big] = 1 - w[~big] / 2
    return out


def tail_laplace(profile: CutoffProfile, z, tol: float = 1e-10):
    """int_0^inf exp(-t z) chi(t) dt with chi(t) = int_t^inf psi.

    Written as int psi(s) int_0^s exp(-t z) dt ds to stay stable at z = 0.
    """
    z = np.asarray(z, dtype=complex)
    flat = z.ravel()
    vals = _converged_sum(profile, lambda t: t[:, None] * _phi1(np.outer(t, flat)), tol)
    return vals.reshape(z.shape)


def decay_constant(profile: CutoffProfile, s_grid) -> float:
    """Largest c0 with |psi_hat(s)| <= 1/(1 + c0 s^2) on the grid."""
    s = np.asarray(s_grid, dtype=float)
    s = s[s != 0]
    h = np.abs(psi_hat(profile, s))
    return float(np.min((1.0 / h - 1.0) / s**2))


def gaussian_coefficient(profile: CutoffProfile, h: float = 1e-2) -> tuple[float, float]:
    """For a centered even profile, psi_hat = exp(-S), S(h) ~ a h^2.

    Returns (a, quartic) where quartic estimates (S(h) - a h^2)/h^4.
    """
    centered = CutoffProfile(profile.family, 0.0, profile.width, profile.skew)
    S = lambda x: -np.log(psi_hat(centered, x).real)
    a = float(S(h) / h**2)
    a2 = float(S(2 * h) / (2 * h) ** 2)
    quartic = (a2 - a) / (3 * h**2)
    a_extrap = a - quartic * h**2
    return a_extrap, float(quartic)


def _spectral_fn(M, scalar_fn, matrix_fn, cond_max=1e4):
    """f(M) by eigendecomposition when M is well diagonalizable, else by matrix_fn."""
    mu, V = np.linalg.eig(M)
    if np.linalg.cond(V) < cond_max:
        return (V * scalar_fn(mu)) @ np.linalg.inv(V)
    return matrix_fn(M)


def _expm_quadrature(profile, M, tol=1e-10, kind="average"):
    n = M.shape[0]
    if kind == "average":
        f = lambda t: np.array([sla.expm(-ti * M) for ti in t])
    else:
        aug = np.zeros((2 * n, 2 * n), dtype=complex)
        aug[:n, :n] = -M
        aug[:n, n:] = np.eye(n)
        f = lambda t: np.array([sla.expm(ti * aug)[:n, n:] for ti in t])
    return _converged_sum(profile, f, tol)


def average_exp(M, profile, tol=1e-10):
    """int exp(-t M) psi(t) dt."""
    return _spectral_fn(M, lambda mu: laplace_average(profile, mu, tol), lambda A: _expm_quadrature(profile, A, tol))


def tail_exp(M, profile, tol=1e-10):
    """int_0^inf exp(-t M) chi(t) dt."""
    return _spectral_fn(
        M, lambda mu: tail_laplace(profile, mu, tol), lambda A: _expm_quadrature(profile, A, tol, "tail")
    )


def default_profiles(kappa):
    return tuple(CutoffProfile() for _ in range(kappa))


@dataclass
class AveragedOperator:
    matrix: np.ndarray
    lam: np.ndarray
    gens: CommutingTuple
    profiles: tuple
    factors: list = field(default_factory=list)

    @property
    def comm_defect(self) -> float:
        return max(np.linalg.norm(self.matrix @ X - X @ self.matrix) for X in self.gens.mats)


def build_R(gens: CommutingTuple, lam, profiles: Sequence[CutoffProfile] | None = None, tol=1e-10):
    lam = as_coform(lam, gens.kappa)
    profiles = tuple(profiles) if profiles is not None else default_profiles(gens.kappa)
    factors = [average_exp(M, p, tol) for M, p in zip(gens.shifted(lam), profiles)]
    R = factors[0]
    for A in factors[1:]:
        R = R @ A
    return AveragedOperator(R, lam, gens, profiles, factors)


@dataclass
class Parametrix:
    """F = Id - (-1)^kappa prod R_k and a divergence Q with d Q + Q d = F (x) Id."""

    F: np.ndarray
    R: list
    Q: CommutingTuple
    lam: np.ndarray
    gens: CommutingTuple

    @cached_property
    def defect(self) -> float:
        d = build_d(self.gens, self.lam).full
        q = build_delta(self.Q).full
        return float(np.linalg.norm(d @ q + q @ d - lift_scalar(self.F, self.gens.kappa)))


def build_F(gens: CommutingTuple, lam, profiles=None, tol=1e-10) -> Parametrix:
    """R_k = int exp(-t(X_k + lam_k)) chi_k'(t) dt = -(averaged operator for psi_k).

    Q_j = (-1)^j Q'_j R_1 ... R_{j-1} (j counted from 1) with
    Q'_j = int_0^inf exp(-t(X_j + lam_j)) chi_j(t) dt.
    """
    lam = as_coform(lam, gens.kappa)
    profiles = tuple(profiles) if profiles is not None else default_profiles(gens.kappa)
    kappa, n = gens.kappa, gens.n
    shifted = gens.shifted(lam)
    Rk = [-average_exp(M, p, tol) for M, p in zip(shifted, profiles)]
    prod = np.eye(n, dtype=complex)
    Q = []
    for j, (M, p) in enumerate(zip(shifted, profiles), start=1):
        Q.append((-1) ** j * tail_exp(M, p, tol) @ prod)
        prod = prod @ Rk[j - 1]
    F = np.eye(n) - (-1) ** kappa * prod
    return Parametrix(F, Rk, CommutingTuple(Q, tol_comm=1e-6), lam, gens)


@dataclass
class ModulusOneReport:
    peripheral: np.ndarray
    at_one: bool
    eigvecs: np.ndarray
    kernel_residual: float


def modulus_one_test(R: AveragedOperator, tol: float = 1e-8) -> ModulusOneReport:
    """Eigenvalues of R with |tau| >= 1 - tol; they should all equal 1.

    The eigenvectors at tau = 1 are compared with the joint kernel of
    X + lambda.
    """
    tau, V = np.linalg.eig(R.matrix)
    per = np.abs(tau) >= 1 - tol
    at_one = bool(np.all(np.abs(tau[per] - 1) <= tol))
    vecs = V[:, per & (np.abs(tau - 1) <= tol)]
    res = 0.0
    if vecs.shape[1]:
        res = max(np.linalg.norm(M @ vecs) for M in R.gens.shifted(R.lam)) / max(R.gens.scale, 1)
    return ModulusOneReport(tau[per], at_one, vecs, float(res))


@dataclass
class Resonance:
    lam: np.ndarray
    residual_kernel: float
    residual_F: float
    status: str
    alg_mult: int = 0
    dims: tuple = ()

    def row(self) -> list:
        out = []
        for z in self.lam:
            out += [z.real, z.imag]
        return out + [self.residual_kernel, self.residual_F, self.status]


Family = Callable[[np.ndarray], tuple]


def _smallest_pair(D, R):
    S = np.vstack(D)
    _, s, Vh = np.linalg.svd(S)
    sF = np.linalg.svd(np.eye(R.shape[0]) - R, compute_uv=False)[-1]
    return s[-1], Vh[-1].conj(), sF


def gauss_newton(family: Family, lam0, v0=None, max_steps: int = 50, tol: float = 1e-13, h: float = 1e-6):
    """Damped Gauss-Newton for D_j(lam) v = 0, <v0, v> = 1.

    The lambda-derivatives of D_j come from central differences (the
    families used here are holomorphic in lambda).
    """
    lam = np.array(lam0, dtype=complex)
    kappa = lam.size
    D, _ = family(lam)
    m = D[0].shape[0]
    if v0 is None:
        _, v0, _ = _smallest_pair(D, np.zeros((m, m)))
    v = v0 / np.vdot(v0, v0)
    c = v0.copy()

    def residual(D, v):
        return np.concatenate([Dj @ v for Dj in D] + [[np.vdot(c, v) - 1]])

    r = residual(D, v)
    for _ in range(max_steps):
        J = np.zeros((kappa * m + 1, kappa + m), dtype=complex)
        for k in range(kappa):
            e = np.zeros(kappa)
            e[k] = h
            Dp, _ = family(lam + e)
            Dm, _ = family(lam - e)
            for j in range(kappa):
                J[j * m:(j + 1) * m, k] = (Dp[j] - Dm[j]) @ v / (2 * h)
        for j in range(kappa):
            J[j * m:(j + 1) * m, kappa:] = D[j]
        J[-1, kappa:] = c.conj()
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        nr = np.linalg.norm(r)
        while t > 1e-4:
            lam_t, v_t = lam + t * step[:kappa], v + t * step[kappa:]
            D_t, _ = family(lam_t)
            r_t = residual(D_t, v_t)
            if np.linalg.norm(r_t) < nr or nr < tol:
                break
            t /= 2
        lam, v, D, r = lam_t, v_t, D_t, r_t
        if np.linalg.norm(step[:kappa]) * t < tol * (1 + np.linalg.norm(lam)):
            break
    return lam, v


def scan(
    family: Family,
    grid,
    tol: float = 1e-8,
    detect: float | None = None,
    scale: float = 1.0,
    threads: int = 1,
    refine: Callable | None = None,
) -> list[Resonance]:
    """Resonances of a holomorphic family from a grid of spectral parameters.

    ``family(lam)`` returns (list of shifted generators D_j, averaged
    operator R).  Grid points where the stacked D has a small singular
    value, or where Id - R is nearly singular, are refined; a point found
    by only one of the two detectors is reported as 'unconfirmed'.
    ``refine(family, lam0, v0)`` replaces the default Gauss-Newton step.
    """
    refine = refine or gauss_newton
    grid = np.asarray(grid, dtype=complex)
    if grid.size == 0:
        return []
    grid = np.atleast_2d(grid)
    if detect is None:
        detect = _grid_spacing(grid) * np.sqrt(grid.shape[1])
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as ex:
        vals = list(ex.map(lambda lam: _smallest_pair(*family(lam)), grid))
    sk = np.array([v[0] for v in vals])
    sF = np.array([v[2] for v in vals])
    cand = np.flatnonzero((sk <= detect * scale) | (sF <= detect * scale))
    found: list[Resonance] = []
    for i in cand[np.argsort(sk[cand])]:
        lam0 = grid[i]
        if any(np.max(np.abs(r.lam - lam0)) < 2 * detect for r in found if r.residual_kernel <= tol * scale):
            continue
        lam, _ = refine(family, lam0, vals[i][1])
        D, R = family(lam)
        k_res, _, f_res = _smallest_pair(D, R)
        ok_k, ok_f = k_res <= tol * scale, f_res <= tol * scale
        if not (ok_k or ok_f):
            continue
        if np.max(np.abs(lam - lam0)) > 4 * detect + 1e-12:
            continue  # converged to a root owned by another grid cell
        status = "confirmed" if ok_k and ok_f else "unconfirmed"
        dup = [r for r in found if np.max(np.abs(r.lam - lam)) <= 1e-8 * max(scale, 1)]
        if dup:
            if k_res < dup[0].residual_kernel:
                found = [r for r in found if r is not dup[0]]
            else:
                continue
        found.append(Resonance(lam, float(k_res), float(f_res), status))
    found.sort(key=lambda r: tuple(np.concatenate([r.lam.imag, r.lam.real]).round(9)))
    return found


def _grid_spacing(grid):
    if grid.shape[0] < 2:
        return 1.0
    best = np.inf
    for k in range(grid.shape[1]):
        for part in (grid[:, k].real, grid[:, k].imag):
            u = np.unique(np.round(part, 12))
            if u.size > 1:
                best = min(best, np.min(np.diff(u)))
    return float(best) if np.isfinite(best) else 1.0


def matrix_family(gens: CommutingTuple, profiles=None) -> Family:
    """lam -> (X + lam, R(lam)) with one eigendecomposition reused across the grid."""
    profiles = tuple(profiles) if profiles is not None else default_profiles(gens.kappa)
    eye = np.eye(gens.n)
    eigs = []
    for X in gens.mats:
        mu, V = np.linalg.eig(X)
        eigs.append((mu, V, np.linalg.inv(V)) if np.linalg.cond(V) < 1e4 else None)

    def family(lam):
        D = [X + l * eye for X, l in zip(gens.mats, lam)]
        R = eye.astype(complex)
        for X, l, p, e in zip(gens.mats, lam, profiles, eigs):
            if e is None:
                R = R @ average_exp(X + l * eye, p)
            else:
                mu, V, Vi = e
                R = R @ ((V * laplace_average(p, mu + l)) @ Vi)
        return D, R

    return family


def resonance_detect(gens: CommutingTuple, grid, tol: float = 1e-8, profiles=None, threads: int = 1):
    """Joint resonances lambda (X + lambda not invertible) of a matrix tuple inside a grid."""
    from .jointspec import joint_eigenvalues

    found = scan(matrix_family(gens, profiles), grid, tol=tol, scale=gens.scale, threads=threads)
    spec = joint_eigenvalues(gens)
    for r in found:
        r.dims = cohomology_dims(build_d(gens, r.lam), scale=gens.scale)
        r.alg_mult = sum(e.alg_mult for e in spec if np.max(np.abs(e.lam + r.lam)) <= 1e-6 * gens.scale)
    return found
