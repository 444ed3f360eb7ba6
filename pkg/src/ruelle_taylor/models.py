"""Suspension models: R^kappa actions built from commuting hyperbolic toral automorphisms.

Coordinates are (x, s) with x in [0,1)^d and s_j in [0, r_j(x)).  Crossing
the top of the fiber in direction j glues (x, r_j(x)) to (M_j x, 0), so
the flow for unit time along e_j (constant roof 1) moves the base point by
M_j.  Product models are a list of factors, each owning a block of base
coordinates and a block of directions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

ARNOLD = np.array([[2, 1], [1, 1]])
MAX_ROOF_MODES = 5
MIN_ROOF = 0.1


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------- roofs


@dataclass(frozen=True)
class Roof:
    """Real trigonometric polynomial r(x) = sum_k a_k exp(2 pi i k.x) on a factor base.

    ``coeffs`` maps integer tuples k to complex a_k; the map must be
    closed under k -> -k with conjugate coefficients.
    """

    coeffs: tuple  # sorted ((k, a_k), ...)
    dim: int

    @classmethod
    def constant(cls, c: float = 1.0, dim: int = 2) -> "Roof":
        return cls.from_dict({(0,) * dim: complex(c)}, dim)

    @classmethod
    def cosine(cls, eps: float, k=(1, 0), base: float = 1.0) -> "Roof":
        """base + eps cos(2 pi k.x)."""
        k = tuple(int(v) for v in k)
        neg = tuple(-v for v in k)
        return cls.from_dict({(0,) * len(k): base, k: eps / 2, neg: eps / 2}, len(k))

    @classmethod
    def from_dict(cls, coeffs: dict, dim: int) -> "Roof":
        c = {tuple(int(v) for v in k): complex(a) for k, a in coeffs.items() if a != 0}
        for k, a in c.items():
            if len(k) != dim:
                raise ModelError("roof mode has wrong dimension")
            neg = tuple(-v for v in k)
            if abs(c.get(neg, 0) - np.conj(a)) > 1e-14:
                raise ModelError("roof must be real valued")
        pairs = {min(k, tuple(-v for v in k)) for k in c if any(k)}
        if len(pairs) > MAX_ROOF_MODES:
            raise ModelError(f"roof has {len(pairs)} modes, at most {MAX_ROOF_MODES} allowed")
        roof = cls(tuple(sorted(c.items())), dim)
        if roof.min_value() <= MIN_ROOF:
            raise ModelError(f"roof minimum {roof.min_value():.3g} must exceed {MIN_ROOF}")
        return roof

    @property
    def as_dict(self) -> dict:
        return dict(self.coeffs)

    @property
    def mean(self) -> float:
        return float(self.as_dict.get((0,) * self.dim, 0).real)

    @property
    def is_constant(self) -> bool:
        return all(not any(k) for k, _ in self.coeffs)

    def __call__(self, x):
        x = np.atleast_2d(x)
        out = np.zeros(x.shape[0], dtype=complex)
        for k, a in self.coeffs:
            out += a * np.exp(2j * np.pi * (x @ np.array(k, dtype=float)))
        return out.real

    def min_value(self, n: int = 96) -> float:
        if self.is_constant:
            return self.mean
        # grid minimum minus a Lipschitz margin is a rigorous lower bound
        g = (np.arange(n) + 0.5) / n
        pts = np.array(list(itertools.product(g, repeat=self.dim)))
        lip = sum(2 * np.pi * np.linalg.norm(k) * abs(a) for k, a in self.coeffs)
        return float(self(pts).min() - lip * np.sqrt(self.dim) / (2 * n))

    def fourier_power(self, p: int) -> dict:
        """Fourier coefficients of (r - mean)^p."""
        base = {k: a for k, a in self.coeffs if any(k)}
        out = {(0,) * self.dim: 1.0 + 0j}
        for _ in range(p):
            nxt = {}
            for k1, a1 in out.items():
                for k2, a2 in base.items():
                    k = tuple(u + v for u, v in zip(k1, k2))
                    nxt[k] = nxt.get(k, 0) + a1 * a2
            out = nxt
        return out


# ---------------------------------------------------------------- models


@dataclass(frozen=True)
class Factor:
    base: tuple  # base coordinate indices
    dirs: tuple  # direction indices


def _int_inverse(M):
    det = round(np.linalg.det(M))
    if abs(det) != 1:
        raise ModelError(f"monodromy determinant {det} is not +-1")
    inv = np.rint(np.linalg.inv(M)).astype(np.int64)
    if not np.array_equal(inv @ M, np.eye(len(M), dtype=np.int64)):
        raise ModelError("integer inverse failed")
    return inv


def check_hyperbolic(M) -> None:
    M = np.asarray(M)
    if not np.issubdtype(M.dtype, np.integer) and not np.allclose(M, np.rint(M)):
        raise ModelError("monodromy must have integer entries")
    M = np.rint(M).astype(np.int64)
    _int_inverse(M)
    mu = np.linalg.eigvals(M.astype(float))
    if np.any(np.abs(np.abs(mu) - 1) < 1e-9):
        raise ModelError(f"monodromy is not hyperbolic: eigenvalue moduli {np.abs(mu)}")
    if len(M) == 2 and not abs(np.trace(M)) > 2:
        raise ModelError("2x2 monodromy needs |trace| > 2")


@dataclass
class SuspensionModel:
    name: str
    kappa: int
    d: int
    monodromies: tuple  # kappa integer d x d matrices
    roofs: tuple  # one Roof per direction, on its factor base
    factors: tuple
    A0: np.ndarray = None

    def __post_init__(self):
        self.monodromies = tuple(np.rint(np.asarray(M)).astype(np.int64) for M in self.monodromies)
        if len(self.monodromies) != self.kappa or len(self.roofs) != self.kappa:
            raise ModelError("need one monodromy and one roof per direction")
        for M in self.monodromies:
            if M.shape != (self.d, self.d):
                raise ModelError("monodromy has the wrong size")
        for A, B in itertools.combinations(self.monodromies, 2):
            if not np.array_equal(A @ B, B @ A):
                raise ModelError("monodromies do not commute")
        for f in self.factors:
            B = list(f.base)
            rest = [i for i in range(self.d) if i not in B]
            for j in range(self.kappa):
                M = self.monodromies[j]
                if M[np.ix_(B, rest)].any() or M[np.ix_(rest, B)].any():
                    raise ModelError("monodromy mixes factors")
                if j not in f.dirs and not np.array_equal(M[np.ix_(B, B)], np.eye(len(B))):
                    raise ModelError("monodromy acts on a factor it does not belong to")
            if len(f.dirs) > 1 and not all(self.roofs[j].is_constant for j in f.dirs):
                raise ModelError("variable roofs need rank-one factors")
            if len(f.dirs) == 1:
                check_hyperbolic(self.monodromies[f.dirs[0]][np.ix_(B, B)])
            for j in f.dirs:
                if self.roofs[j].dim != len(B):
                    raise ModelError("roof dimension does not match its factor")
        self._check_independent()
        self.inverses = tuple(_int_inverse(M) for M in self.monodromies)
        self.A0 = np.ones(self.kappa) if self.A0 is None else np.asarray(self.A0, dtype=float)
        if np.any(np.abs(self.lyapunov @ self.A0) < 1e-9):
            raise ModelError("calibration direction is not transversely hyperbolic")

    def _check_independent(self, bound: int = 6):
        for f in self.factors:
            if len(f.dirs) < 2:
                continue
            B = list(f.base)
            mats = [self.monodromies[j][np.ix_(B, B)].astype(object) for j in f.dirs]
            inv = [_int_inverse(np.array(m, dtype=np.int64)).astype(object) for m in mats]
            eye = np.eye(len(B), dtype=np.int64).astype(object)

            def power(m, mi, e):
                out = eye
                for _ in range(abs(e)):
                    out = out.dot(m if e > 0 else mi)
                return out

            pw = [{e: power(m, mi, e) for e in range(-bound, bound + 1)} for m, mi in zip(mats, inv)]
            for exps in itertools.product(range(-bound, bound + 1), repeat=len(mats)):
                if not any(exps):
                    continue
                P = eye
                for k, e in enumerate(exps):
                    P = P.dot(pw[k][e])
                if np.array_equal(P.astype(np.int64), np.eye(len(B), dtype=np.int64)):
                    raise ModelError(f"monodromies satisfy the relation with exponents {exps}")

    @property
    def constant_roofs(self) -> bool:
        return all(r.is_constant for r in self.roofs)

    @property
    def volume_preserving(self) -> bool:
        # dx ds is invariant whenever every monodromy is unimodular, whatever the roof
        return all(abs(round(np.linalg.det(M))) == 1 for M in self.monodromies)

    def factor_of(self, j: int) -> Factor:
        return next(f for f in self.factors if j in f.dirs)

    # -------------------------------------------------- hyperbolic splitting

    @cached_property
    def _eigen(self):
        """Common real eigenbasis (columns, full base) and Lyapunov functionals."""
        vecs, chis = [], []
        rng = np.random.default_rng(12345)
        for f in self.factors:
            B = list(f.base)
            mats = [self.monodromies[j][np.ix_(B, B)].astype(float) for j in f.dirs]
            Z = sum(rng.normal() * m for m in mats)
            mu, V = np.linalg.eig(Z)
            if np.max(np.abs(mu.imag)) > 1e-9 * np.max(np.abs(mu)):
                raise ModelError("only real-split monodromies are supported")
            V = V.real
            for i in range(len(B)):
                v = V[:, i] / np.linalg.norm(V[:, i])
                chi = np.zeros(self.kappa)
                for j, m in zip(f.dirs, mats):
                    rate = (m @ v) @ v
                    chi[j] = np.log(abs(rate)) / self.roofs[j].mean
                full = np.zeros(self.d)
                full[B] = v
                vecs.append(full)
                chis.append(chi)
        return np.array(vecs).T, np.array(chis)

    @property
    def eigvecs(self) -> np.ndarray:
        return self._eigen[0]

    @property
    def lyapunov(self) -> np.ndarray:
        """Rows are Lyapunov functionals chi_i, one per common eigendirection."""
        return self._eigen[1]

    def weyl_chamber_test(self, A) -> bool:
        A = np.asarray(A, dtype=float)
        ref = np.sign(self.lyapunov @ self.A0)
        val = self.lyapunov @ A
        return bool(np.all(np.sign(val) == ref) and np.all(np.abs(val) > 1e-12 * max(np.linalg.norm(A), 1)))

    def chamber_margin(self, A) -> float:
        """min_i sign_i chi_i(A) / |A|; positive inside the chamber."""
        A = np.asarray(A, dtype=float)
        ref = np.sign(self.lyapunov @ self.A0)
        return float(np.min(ref * (self.lyapunov @ A)) / np.linalg.norm(A))

    def splitting(self, A=None):
        """(stable, unstable) base eigenvector matrices for the flow along A."""
        A = self.A0 if A is None else np.asarray(A, dtype=float)
        if not self.weyl_chamber_test(A):
            raise ModelError("direction is outside the Weyl chamber")
        rates = self.lyapunov @ A
        return self.eigvecs[:, rates < 0], self.eigvecs[:, rates > 0]

    # -------------------------------------------------- flow

    def flow(self, x, s, A, t=1.0):
        """Flow the points (x, s) for time t along A.  Returns new (x, s) arrays."""
        x = np.array(np.atleast_2d(x), dtype=float)
        s = np.array(np.atleast_2d(s), dtype=float)
        tau = np.broadcast_to(np.asarray(A, dtype=float) * np.asarray(t, dtype=float)[..., None], s.shape)
        for f in self.factors:
            B = list(f.base)
            if len(f.dirs) == 1 and not self.roofs[f.dirs[0]].is_constant:
                j = f.dirs[0]
                x[:, B], s[:, j] = self._flow_variable(j, x[:, B], s[:, j] + tau[:, j])
                continue
            for j in f.dirs:
                c = self.roofs[j].mean
                tot = s[:, j] + tau[:, j]
                n = np.floor(tot / c).astype(np.int64)
                s[:, j] = tot - n * c
                x[:, B] = self._apply_power(j, x[:, B], n)
        return x, s

    def _apply_power(self, j, xb, n):
        B = list(self.factor_of(j).base)
        M = self.monodromies[j][np.ix_(B, B)].astype(float)
        Mi = self.inverses[j][np.ix_(B, B)].astype(float)
        n = np.asarray(n)
        for k in range(int(np.max(np.abs(n), initial=0))):
            fw, bw = n > k, n < -k
            xb[fw] = (xb[fw] @ M.T) % 1.0
            xb[bw] = (xb[bw] @ Mi.T) % 1.0
        return xb

    def _flow_variable(self, j, xb, s):
        roof = self.roofs[j]
        B = list(self.factor_of(j).base)
        M = self.monodromies[j][np.ix_(B, B)].astype(float)
        Mi = self.inverses[j][np.ix_(B, B)].astype(float)
        r = roof(xb)
        while True:
            up = s >= r
            if not up.any():
                break
            s[up] -= r[up]
            xb[up] = (xb[up] @ M.T) % 1.0
            r[up] = roof(xb[up])
        while True:
            down = s < 0
            if not down.any():
                break
            xb[down] = (xb[down] @ Mi.T) % 1.0
            r[down] = roof(xb[down])
            s[down] += r[down]
        return xb, s

    def fiber_coordinates(self, x, s):
        """Normalized fiber coordinates s_j / r_j(x) in [0, 1)."""
        out = np.empty_like(s)
        for j in range(self.kappa):
            B = list(self.factor_of(j).base)
            out[:, j] = s[:, j] / self.roofs[j](x[:, B])
        return out

    def sample_invariant(self, rng, n):
        """n points from the normalized volume dx ds on the fundamental domain."""
        x = rng.random((n, self.d))
        if not self.constant_roofs:
            w = np.ones(n)
            for j in range(self.kappa):
                B = list(self.factor_of(j).base)
                w *= self.roofs[j](x[:, B])
            bound = np.prod([r.mean + sum(abs(a) for k, a in r.coeffs if any(k)) for r in self.roofs])
            keep = rng.random(n) * bound < w
            x = x[keep]
            while len(x) < n:
                more = self.sample_invariant(rng, n - len(x))[0]
                x = np.vstack([x, more])
            x = x[:n]
        sigma = rng.random((n, self.kappa))
        s = np.empty_like(sigma)
        for j in range(self.kappa):
            B = list(self.factor_of(j).base)
            s[:, j] = sigma[:, j] * self.roofs[j](x[:, B])
        return x, s

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kappa": self.kappa,
            "d": self.d,
            "monodromies": [M.tolist() for M in self.monodromies],
            "roofs": [[[list(k), [a.real, a.imag]] for k, a in r.coeffs] for r in self.roofs],
            "A0": self.A0.tolist(),
        }


def _embed(blocks, d):
    out = np.eye(d, dtype=np.int64)
    for idx, M in blocks:
        out[np.ix_(idx, idx)] = M
    return out


def arnold(roof: Roof | None = None, M=ARNOLD) -> SuspensionModel:
    M = np.asarray(M)
    check_hyperbolic(M)
    roof = roof or Roof.constant(1.0)
    return SuspensionModel("arnold", 1, 2, (M,), (roof,), (Factor((0, 1), (0,)),), np.ones(1))


def arnold_product(roofs=(None, None), A0=(1.0, 1.0)) -> SuspensionModel:
    r = tuple(rf or Roof.constant(1.0) for rf in roofs)
    M1 = _embed([([0, 1], ARNOLD)], 4)
    M2 = _embed([([2, 3], ARNOLD)], 4)
    factors = (Factor((0, 1), (0,)), Factor((2, 3), (1,)))
    return SuspensionModel("arnold-product", 2, 4, (M1, M2), r, factors, np.asarray(A0, dtype=float))


def companion(poly) -> np.ndarray:
    """Companion matrix of the monic integer polynomial x^n + c_{n-1} x^{n-1} + ... + c_0."""
    c = list(poly)
    n = len(c)
    C = np.zeros((n, n), dtype=np.int64)
    C[1:, :-1] = np.eye(n - 1, dtype=np.int64)
    C[:, -1] = [-v for v in c]
    return C


def cartan_t3(poly=(-1, -3, 0)) -> SuspensionModel:
    """Z^2 action on T^3 by units of Z[x]/(p), p = x^3 - 3x - 1 by default.

    The generators are the root theta and (theta + 1)^2, both of norm one.
    """
    C = companion(poly)
    mu = np.linalg.eigvals(C.astype(float))
    if np.max(np.abs(mu.imag)) > 1e-12:
        raise ModelError("cubic field is not totally real")
    I = np.eye(3, dtype=np.int64)
    A, B = C, (C + I) @ (C + I)
    for M in (A, B):
        if round(np.linalg.det(M)) != 1:
            raise ModelError("generator is not in SL(3, Z)")
        check_hyperbolic(M)
    return SuspensionModel(
        "cartan-t3", 2, 3, (A, B), (Roof.constant(1.0, 3), Roof.constant(1.0, 3)),
        (Factor((0, 1, 2), (0, 1)),), np.array([1.0, 0.0]),
    )


def c_l2(model: SuspensionModel, A, method: str = "auto", t: float = 8.0, n: int = 20000, seed: int = 0):
    """Exponential growth rate of exp(-t X_A) on L^2 of the reference volume.

    Returns (estimate, stderr).  The flow preserves dx ds, so 'auto' returns
    0 for volume-preserving models.  'mc' measures the growth against the
    product measure dx d(s/r), whose Jacobian ratio r(x_t)/r(x) is bounded,
    so the estimate tends to 0 as t grows.
    """
    if method == "auto" and model.volume_preserving:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    x, s = model.sample_invariant(rng, n)
    x1, _ = model.flow(x, s, A, -t)
    J = np.ones(n)
    for j in range(model.kappa):
        B = list(model.factor_of(j).base)
        J *= model.roofs[j](x1[:, B]) / model.roofs[j](x[:, B])
    logs = np.log(J) / (2 * t)
    boot = rng.choice(logs, size=(64, n)).max(axis=1)
    est = max(float(logs.max()), 0.0)
    return est, float(boot.std())


# ---------------------------------------------------------------- test functions


@dataclass
class TrigPolynomial:
    """sum_c c exp(2 pi i (k.x + m.sigma)) with sigma = s / r(x) the normalized fiber coordinate."""

    terms: dict = field(default_factory=dict)  # (k tuple, m tuple) -> complex

    def __call__(self, model: SuspensionModel, x, s):
        sigma = model.fiber_coordinates(x, s)
        out = np.zeros(x.shape[0], dtype=complex)
        for (k, m), c in self.terms.items():
            out += c * np.exp(2j * np.pi * (x @ np.array(k, float) + sigma @ np.array(m, float)))
        return out

    def integral(self, model: SuspensionModel) -> complex:
        """Exact integral against the normalized volume."""
        total = 0j
        norm = 1.0
        for j in range(model.kappa):
            norm *= model.roofs[j].mean if model.roofs[j].is_constant else 1.0
        # weight prod_j r_j(x) in Fourier form
        weight = {(0,) * model.d: 1.0 + 0j}
        for j in range(model.kappa):
            B = list(model.factor_of(j).base)
            nxt = {}
            for k1, a1 in weight.items():
                for k2, a2 in model.roofs[j].coeffs:
                    k = list(k1)
                    for b, v in zip(B, k2):
                        k[b] += v
                    nxt[tuple(k)] = nxt.get(tuple(k), 0) + a1 * a2
            weight = nxt
        mass = weight.get((0,) * model.d, 0).real
        for (k, m), c in self.terms.items():
            if any(m):
                continue
            neg = tuple(-v for v in k)
            total += c * weight.get(neg, 0)
        return complex(total / mass)

    def is_real(self) -> bool:
        for (k, m), c in self.terms.items():
            key = (tuple(-v for v in k), tuple(-v for v in m))
            if abs(self.terms.get(key, 0) - np.conj(c)) > 1e-14:
                return False
        return True

    @classmethod
    def fiber_character(cls, model: SuspensionModel, j: int = 0, m: int = 1) -> "TrigPolynomial":
        mm = [0] * model.kappa
        mm[j] = m
        return cls({((0,) * model.d, tuple(mm)): 1.0})

    @classmethod
    def random_real(cls, model, rng, n_terms=4, amplitude=0.4, kmax=1, positive=False) -> "TrigPolynomial":
        terms = {}
        for _ in range(n_terms):
            k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, model.d))
            m = tuple(int(v) for v in rng.integers(-1, 2, model.kappa))
            if not any(k) and not any(m):
                continue
            c = amplitude * (rng.normal() + 1j * rng.normal()) / np.sqrt(2 * n_terms)
            neg = (tuple(-v for v in k), tuple(-v for v in m))
            terms[(k, m)] = terms.get((k, m), 0) + c
            terms[neg] = terms.get(neg, 0) + np.conj(c)
        bound = sum(abs(c) for c in terms.values())
        zero = ((0,) * model.d, (0,) * model.kappa)
        terms[zero] = (bound + 0.5) if positive else float(rng.normal())
        return cls(terms)


ZOO = {"arnold": arnold, "arnold-product": arnold_product, "cartan-t3": cartan_t3}


def make_model(name: str, eps=None, A0=None) -> SuspensionModel:
    """Model from the zoo; ``eps`` adds eps cos(2 pi x_1) to the unit roof (list for products)."""
    if name == "arnold":
        roof = Roof.cosine(eps) if eps else None
        return arnold(roof)
    if name == "arnold-product":
        eps = eps if isinstance(eps, (list, tuple)) else (eps, eps)
        roofs = tuple(Roof.cosine(e) if e else None for e in eps)
        return arnold_product(roofs, A0 if A0 is not None else (1.0, 1.0))
    if name == "cartan-t3":
        if eps:
            raise ModelError("variable roofs need rank-one factors")
        m = cartan_t3()
        if A0 is not None:
            m.A0 = np.asarray(A0, dtype=float)
        return m
    raise ModelError(f"unknown model {name!r}")
