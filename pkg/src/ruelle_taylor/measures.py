"""Physical measures, correlations and mixing for suspension models, by Monte Carlo.

Inner products are taken against the normalized volume dx ds / vol, which
is invariant for every model in the zoo (unimodular monodromies).  A point
is a pair (x, s) with x on the base torus and s in the fundamental domain
[0, r_j(x)) of each fiber; test functions are TrigPolynomial objects in
(x, sigma = s / r).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .models import SuspensionModel, TrigPolynomial
from .parametrix import CutoffProfile

N_BATCHES = 20


class ConeError(ValueError):
    pass


@dataclass
class Estimate:
    value: complex
    stderr: float
    n: int

    def within(self, target, k=3.0, floor=0.0) -> bool:
        return abs(self.value - target) <= k * self.stderr + floor


def _batched(vals: np.ndarray, n_batches: int = N_BATCHES) -> Estimate:
    """Mean with the standard error from batch means (pairwise summation inside numpy)."""
    n = vals.size
    b = np.array_split(vals, n_batches)
    means = np.array([x.mean() for x in b])
    value = vals.mean()
    err = float(np.std(means, ddof=1) / np.sqrt(len(means)))
    return Estimate(complex(value), err, n)


def _sobol(dim, n, seed):
    m = max(int(np.ceil(np.log2(max(n, 2)))), 1)
    return qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)[:n]


def _lebesgue_points(model: SuspensionModel, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Stratified sample of the normalized volume (Latin hypercube in (x, sigma))."""
    if not model.constant_roofs:
        return model.sample_invariant(rng, n)
    lhs = qmc.LatinHypercube(d=model.d + model.kappa, seed=rng).random(n)
    x = lhs[:, : model.d]
    s = lhs[:, model.d:] * np.array([r.mean for r in model.roofs])
    return x, s


# ---------------------------------------------------------------- cones


@dataclass
class ConeSpec:
    """Open cone spanned by ``generators`` (rows, unit-normalized), truncated at |A| <= T."""

    generators: np.ndarray
    T: float = 30.0

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.generators, dtype=float))
        norms = np.linalg.norm(g, axis=1)
        if np.any(norms == 0):
            raise ConeError("zero generator")
        self.generators = g / norms[:, None]
        if self.T <= 0:
            raise ConeError("cone radius must be positive")

    @property
    def kappa(self) -> int:
        return self.generators.shape[1]

    def validate(self, model: SuspensionModel) -> float:
        """Properness margin: min chamber margin over the generators; rejects improper cones."""
        g = self.generators
        if g.shape[1] != model.kappa:
            raise ConeError("generator dimension differs from the rank of the action")
        if model.kappa > 1 and (g.shape[0] < model.kappa or np.linalg.matrix_rank(g) < model.kappa):
            raise ConeError("generators do not span an open cone")
        margin = min(model.chamber_margin(a) for a in g)
        if margin <= 0 or not all(model.weyl_chamber_test(a) for a in g):
            raise ConeError(f"cone closure leaves the Weyl chamber (margin {margin:.3g})")
        return margin

    def center(self) -> np.ndarray:
        c = self.generators.mean(axis=0)
        return c / np.linalg.norm(c)

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """Quasi-random points uniform in the truncated cone."""
        k = self.kappa
        if k == 1:
            u = _sobol(2, n, seed)[:, 0]
            return self.T * u[:, None] * self.generators[0]
        if k == 2:
            ang = np.arctan2(self.generators[:, 1], self.generators[:, 0])
            lo, hi = ang.min(), ang.max()
            if hi - lo > np.pi:
                lo, hi = hi, lo + 2 * np.pi
            u = _sobol(2, n, seed)
            rho = self.T * np.sqrt(u[:, 0])
            phi = lo + (hi - lo) * u[:, 1]
            return rho[:, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        from scipy.special import ndtri

        out = []
        G = np.linalg.pinv(self.generators.T)
        rounds = 0
        while sum(len(o) for o in out) < n:
            u = np.clip(_sobol(k + 1, 4 * n, seed + rounds), 1e-12, 1 - 1e-12)
            rounds += 1
            d = ndtri(u[:, :k])
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            keep = np.all(d @ G.T >= 0, axis=1)
            out.append(self.T * u[keep, k:k + 1] ** (1.0 / k) * d[keep])
        return np.vstack(out)[:n]


def default_cone(model: SuspensionModel, half_angle: float = 0.3, T: float = 30.0) -> ConeSpec:
    """Cone around the calibration direction, shrunk until it sits inside the chamber."""
    a0 = model.A0 / np.linalg.norm(model.A0)
    if model.kappa == 1:
        return ConeSpec(a0[None, :], T)
    rng = np.random.default_rng(0)
    for _ in range(30):
        basis = np.linalg.qr(np.column_stack([a0, rng.normal(size=(model.kappa, model.kappa - 1))]))[0][:, 1:]
        gens = []
        for i in range(model.kappa - 1):
            for sgn in (1, -1):
                gens.append(a0 + sgn * np.tan(half_angle) * basis[:, i])
        cone = ConeSpec(np.array(gens), T)
        try:
            cone.validate(model)
            return cone
        except ConeError:
            half_angle *= 0.7
    raise ConeError("no proper cone around the calibration direction")


# ---------------------------------------------------------------- Birkhoff and Cesaro averages


def birkhoff_cone_average(
    model: SuspensionModel,
    u: TrigPolynomial,
    v: TrigPolynomial,
    cone: ConeSpec,
    n_samples: int = 100_000,
    seed: int = 0,
    lam=None,
    check_positive: bool = True,
) -> Estimate:
    """(1/Vol C_T) int_{C_T} <exp(-X_A) u, v> dA, jointly Monte-Carlo'd over A and the phase space.

    With ``lam`` (a purely imaginary coform) the integrand carries the
    twist exp(-lam(A)), which gives the equivariant measure at lam.
    """
    cone.validate(model)
    rng = np.random.default_rng(seed)
    A = cone.sample(n_samples, seed=seed)
    x, s = _lebesgue_points(model, n_samples, rng)
    vv = v(model, x, s)
    if check_positive and np.any(vv.real < -1e-12):
        raise ValueError("v must be non-negative")
    xt, st = model.flow(x, s, A, -1.0)
    vals = u(model, xt, st) * np.conj(vv)
    if lam is not None:
        lam = np.asarray(lam, dtype=complex)
        if np.any(np.abs(lam.real) > 0):
            raise ValueError("twisted averages need an imaginary coform")
        vals = vals * np.exp(-(A @ lam))
    return _batched(vals)


def _sum_of_bumps(profile: CutoffProfile, k: np.ndarray, rng) -> np.ndarray:
    """Sum of k[i] independent samples of the profile, for each i."""
    kmax = int(k.max(initial=0))
    if kmax == 0:
        return np.zeros(len(k))
    draws = profile.sample(rng, (len(k), kmax)).reshape(len(k), kmax)
    mask = np.arange(kmax)[None, :] < k[:, None]
    return (draws * mask).sum(axis=1)


def cesaro_r_approx(
    model: SuspensionModel,
    u: TrigPolynomial,
    v: TrigPolynomial,
    cone: ConeSpec,
    n_steps: int = 30,
    n_samples: int = 100_000,
    seed: int = 0,
) -> Estimate:
    """Weighted Cesaro average of <R_sigma^k u, v> over k <= n_steps and over sigma in a cone section.

    R_sigma averages exp(-t.X) against a product bump centered at sigma,
    so R_sigma^k averages against the k-fold convolution; the section
    weight q and the Cesaro weight omega(k/N) are smooth bumps.  Written in
    a basis (A_1, ..., A_kappa) of the action with A_1 the cone axis.
    """
    margin = cone.validate(model)
    rng = np.random.default_rng(seed)
    kappa = model.kappa
    a1 = cone.center()
    basis = np.linalg.qr(np.column_stack([a1, np.eye(kappa)[:, : kappa - 1]]))[0] if kappa > 1 else a1[:, None]
    basis[:, 0] = a1
    # cone section {a1 + tbar.basis}: a small ball that stays inside the cone
    half = 0.5 * np.min([np.linalg.norm(g - a1) for g in cone.generators]) if kappa > 1 else 0.0
    omega = CutoffProfile(center=0.5, width=1.0)
    ks = np.arange(1, n_steps + 1)
    w = omega.pdf(ks / n_steps)
    k = rng.choice(ks, size=n_samples, p=w / w.sum())
    psi = CutoffProfile(center=0.0, width=1.0)
    t = np.empty((n_samples, kappa))
    t[:, 0] = k + _sum_of_bumps(psi, k, rng)
    if kappa > 1:
        q = CutoffProfile(center=0.0, width=2 * half / np.sqrt(kappa - 1))
        tbar = q.sample(rng, (n_samples, kappa - 1)).reshape(n_samples, kappa - 1)
        for j in range(1, kappa):
            t[:, j] = k * tbar[:, j - 1] + _sum_of_bumps(psi, k, rng)
    A = t @ basis.T
    x, s = _lebesgue_points(model, n_samples, rng)
    xt, st = model.flow(x, s, A, -1.0)
    vals = u(model, xt, st) * np.conj(v(model, x, s))
    del margin
    return _batched(vals)


# ---------------------------------------------------------------- correlations and mixing


@dataclass
class CorrelationSeries:
    direction: np.ndarray
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_samples: int

    @property
    def c0(self) -> complex:
        return self.values[0]

    def decay_time(self, ratio: float = 0.1):
        """First time after which |C| stays below ratio |C(0)| (up to 3 standard errors); None if never."""
        bound = ratio * abs(self.c0) + 3 * self.stderr
        below = np.abs(self.values) < bound
        for i in range(len(self.times)):
            if below[i:].all():
                return float(self.times[i])
        return None

    def is_flat(self, ratio: float = 0.9) -> bool:
        return bool(np.all(np.abs(self.values) >= ratio * abs(self.c0) - 3 * self.stderr))

    def rows(self):
        return [[t, c.real, c.imag, e] for t, c, e in zip(self.times, self.values, self.stderr)]


def correlation(
    model: SuspensionModel,
    A,
    f: TrigPolynomial,
    g: TrigPolynomial,
    times,
    n_samples: int = 100_000,
    seed: int = 0,
) -> CorrelationSeries:
    """C(t) = E[conj(g) f o phi_{-tA}] - conj(E g) E f under the normalized volume."""
    A = np.asarray(A, dtype=float)
    times = np.asarray(times, dtype=float)
    rng = np.random.default_rng(seed)
    x, s = _lebesgue_points(model, n_samples, rng)
    gv = np.conj(g(model, x, s))
    f0 = f(model, x, s)
    Ef, Eg = f0.mean(), gv.mean()
    vals, errs = [], []
    xt, st, t_prev = x.copy(), s.copy(), 0.0
    for t in times:
        xt, st = model.flow(xt, st, A, -(t - t_prev))
        t_prev = t
        ft = f(model, xt, st)
        # centering with the sample means keeps the estimator exactly zero for constant f
        est = _batched((ft - Ef) * (gv - Eg))
        vals.append(est.value)
        errs.append(est.stderr)
    return CorrelationSeries(A, times, np.array(vals), np.array(errs), n_samples)


@dataclass
class MixingVerdict:
    verdict: str  # "mixing", "non-mixing" or "inconsistent"
    unique_measure: bool
    spectral_mixing: bool
    correlation_mixing: bool
    witnesses: list = field(default_factory=list)
    decay_times: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "uniqueMeasure": self.unique_measure,
            "spectralMixing": self.spectral_mixing,
            "correlationMixing": self.correlation_mixing,
            "witnesses": [[[z.real, z.imag] for z in w] for w in self.witnesses],
            "decayTimes": self.decay_times,
            "diagnostics": self.diagnostics,
        }


def mixing_classify(resonances, correlations, axis_tol: float = 1e-6, ratio: float = 0.1) -> MixingVerdict:
    """Mixing iff the only resonance on the imaginary axis is 0 with h_0 = 1; cross-checked against correlations."""
    on_axis = [r for r in resonances if np.all(np.abs(np.real(r.lam)) <= axis_tol)]
    zero = [r for r in on_axis if np.max(np.abs(r.lam)) <= axis_tol]
    witnesses = [np.asarray(r.lam) for r in on_axis if np.max(np.abs(r.lam)) > axis_tol]
    unique = len(zero) == 1 and bool(zero[0].dims) and zero[0].dims[0] == 1
    spectral = unique and not witnesses
    diag = []
    if not zero:
        diag.append("lambda = 0 was not detected")
    times = [c.decay_time(ratio) for c in correlations]
    decays = [t is not None for t in times]
    corr_mixing = bool(correlations) and all(decays)
    flat = [c.is_flat() for c in correlations]
    if spectral and corr_mixing:
        verdict = "mixing"
    elif not spectral and not all(decays):
        verdict = "non-mixing"
    else:
        verdict = "inconsistent"
        if spectral:
            diag.append("no imaginary-axis resonance besides 0, yet some correlation does not decay")
            diag += [f"direction {list(c.direction)} flat" for c, fl in zip(correlations, flat) if fl]
        else:
            diag.append("imaginary-axis resonances found, yet every correlation decays")
    return MixingVerdict(verdict, unique, spectral, corr_mixing, witnesses, times, diag)


def weyl_directions(model: SuspensionModel, n: int = 3, spread: float = 0.2, seed: int = 0) -> np.ndarray:
    """n directions of the Weyl chamber near the calibration direction (the first is A0 itself)."""
    rng = np.random.default_rng(seed)
    out = [model.A0 / np.linalg.norm(model.A0)]
    while len(out) < n:
        a = out[0] + spread * rng.normal(size=model.kappa)
        if model.weyl_chamber_test(a) and model.chamber_margin(a) > 0:
            out.append(a / np.linalg.norm(a))
    return np.array(out)


# ---------------------------------------------------------------- equivariant measures


@dataclass
class EquivarianceReport:
    defect: float
    stderr: float
    worst: dict
    ratios: list

    @property
    def z(self) -> float:
        return self.defect / self.stderr if self.stderr > 0 else np.inf


def equivariance_check(
    model: SuspensionModel,
    lam,
    n_samples: int = 100_000,
    seed: int = 0,
    times=(0.3, 0.75, 1.6),
    n_dirs: int = 3,
    tests=None,
) -> EquivarianceReport:
    """max |mu(f o phi_{tA}) - exp(-lam(A) t) mu(f)| for the density exp(lam . s) on the fundamental domain.

    ``lam`` is a purely imaginary coform.  The density is a smooth
    equivariant measure exactly when lam_j r_j lies in 2 pi i Z.
    """
    if not model.constant_roofs:
        raise ValueError("explicit equivariant densities need constant roofs")
    lam = np.asarray(lam, dtype=complex)
    if np.any(np.abs(lam.real) > 0):
        raise ValueError("lambda must be purely imaginary")
    rng = np.random.default_rng(seed)
    x, s = _lebesgue_points(model, n_samples, rng)
    rho = np.exp(s @ lam)
    if tests is None:
        tests = []
        for j in range(model.kappa):
            m = int(round(abs(lam[j].imag) / (2 * np.pi))) or 1
            base = TrigPolynomial.fiber_character(model, j, -int(np.sign(lam[j].imag) or 1) * m)
            tests.append(base)
            k = [0] * model.d
            k[list(model.factor_of(j).base)[0]] = 1
            mixed = dict(base.terms)
            mixed[(tuple(k), next(iter(base.terms))[1])] = 0.5
            tests.append(TrigPolynomial(mixed))
        tests.append(TrigPolynomial({((0,) * model.d, (0,) * model.kappa): 1.0}))
    dirs = weyl_directions(model, n_dirs, seed=seed)
    worst, best = None, (-1.0, 0.0)
    ratios = []
    for f in tests:
        f0 = f(model, x, s)
        for A in dirs:
            for t in times:
                xt, st = model.flow(x, s, A, t)
                phase = np.exp(-(A @ lam) * t)
                est = _batched((f(model, xt, st) - phase * f0) * rho)
                d = abs(est.value)
                ratios.append(d / est.stderr if est.stderr > 0 else np.inf)
                if d > best[0]:
                    best = (d, est.stderr)
                    worst = {"A": A.tolist(), "t": t, "terms": len(f.terms)}
    return EquivarianceReport(best[0], best[1], worst, ratios)


def equivariance_passes(rep: EquivarianceReport, k: float = 3.0, floor: float = 1e-12) -> bool:
    return rep.defect < k * rep.stderr + floor
