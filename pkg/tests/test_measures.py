import numpy as np
import pytest

from ruelle_taylor.measures import (
    ConeError,
    ConeSpec,
    CorrelationSeries,
    birkhoff_cone_average,
    cesaro_r_approx,
    correlation,
    default_cone,
    equivariance_check,
    equivariance_passes,
    mixing_classify,
    weyl_directions,
)
from ruelle_taylor.models import Roof, TrigPolynomial, arnold, arnold_product
from ruelle_taylor.parametrix import Resonance

N = 20000


def const(model, c=1.0):
    return TrigPolynomial({((0,) * model.d, (0,) * model.kappa): c})


@pytest.fixture(scope="module")
def product():
    return arnold_product()


@pytest.fixture(scope="module")
def cone(product):
    return default_cone(product)


# ------------------------------------------------------------ cones


def test_default_cone_is_proper(product, cone):
    assert cone.validate(product) > 0
    A = cone.sample(500, seed=1)
    assert np.all(np.linalg.norm(A, axis=1) <= cone.T + 1e-9)
    assert all(product.weyl_chamber_test(a) for a in A)


def test_improper_cone_rejected(product):
    with pytest.raises(ConeError):
        ConeSpec(np.array([[1.0, 0.2], [1.0, -0.2]])).validate(product)
    with pytest.raises(ConeError):
        ConeSpec(np.array([[1.0, 1.0]])).validate(product)
    with pytest.raises(ConeError):
        ConeSpec(np.array([[0.0, 0.0]]))


def test_rank_one_cone():
    m = arnold()
    c = default_cone(m, T=10)
    A = c.sample(1000, seed=0)
    assert A.shape == (1000, 1) and A.min() >= 0 and A.max() <= 10


# ------------------------------------------------------------ Birkhoff averages


def test_mass_of_constants(product, cone):
    est = birkhoff_cone_average(product, const(product), const(product), cone, N, seed=0)
    assert est.value == pytest.approx(1.0, abs=1e-14)
    assert est.stderr < 1e-14


def test_character_averages_to_zero(product, cone):
    u = TrigPolynomial({((1, 0, 0, 1), (0, 0)): 1.0})
    est = birkhoff_cone_average(product, u, const(product), cone, N, seed=1)
    assert est.within(0.0, 3)


def test_mass_equals_integral_of_density(product, cone, rng):
    v = TrigPolynomial.random_real(product, rng, positive=True)
    est = birkhoff_cone_average(product, const(product), v, cone, N, seed=2)
    assert est.within(np.conj(v.integral(product)), 3, floor=1e-12)


def test_negative_density_rejected(product, cone):
    with pytest.raises(ValueError, match="non-negative"):
        birkhoff_cone_average(product, const(product), const(product, -1.0), cone, 100, seed=0)


def test_linear_and_monotone_in_density(product, cone, rng):
    u = TrigPolynomial.random_real(product, rng, positive=True)
    v1 = TrigPolynomial.random_real(product, rng, positive=True)
    v2 = TrigPolynomial(dict(v1.terms))
    zero = ((0,) * 4, (0, 0))
    v2.terms[zero] += 1.0
    a = birkhoff_cone_average(product, u, v1, cone, N, seed=3)
    b = birkhoff_cone_average(product, u, v2, cone, N, seed=3)
    c = birkhoff_cone_average(product, u, const(product), cone, N, seed=3)
    # same seed: the estimator is exactly linear in v
    assert b.value == pytest.approx(a.value + c.value, abs=1e-12)
    assert b.value.real >= a.value.real - 3 * a.stderr


def test_twisted_average_bounded_by_untwisted(product, cone, rng):
    u = TrigPolynomial.random_real(product, rng)
    v = TrigPolynomial.random_real(product, rng, positive=True)
    twisted = birkhoff_cone_average(product, u, v, cone, N, seed=4, lam=[2j * np.pi, 0])
    x, s = product.sample_invariant(np.random.default_rng(5), N)
    bound = np.mean(np.abs(u(product, x, s)) * v(product, x, s).real)
    assert abs(twisted.value) <= bound + 3 * twisted.stderr
    with pytest.raises(ValueError):
        birkhoff_cone_average(product, u, v, cone, 10, lam=[0.1, 0])


def test_independent_of_cone(product, rng):
    u = TrigPolynomial.random_real(product, rng)
    v = TrigPolynomial.random_real(product, rng, positive=True)
    exact = u.integral(product) * np.conj(v.integral(product))
    # three comparisons at once, so 4 standard errors keeps the family-wise level near 3 sigma
    for half in (0.1, 0.2, 0.3):
        est = birkhoff_cone_average(product, u, v, default_cone(product, half), N, seed=6)
        assert est.within(exact, 4, floor=1e-12)


# ------------------------------------------------------------ Cesaro approximation


def test_cesaro_constants(product, cone, rng):
    v = TrigPolynomial.random_real(product, rng, positive=True)
    est = cesaro_r_approx(product, const(product), v, cone, 30, N, seed=7)
    assert est.within(np.conj(v.integral(product)), 3, floor=1e-12)


def test_cesaro_character_and_agreement(product, cone, rng):
    u = TrigPolynomial.random_real(product, rng)
    v = TrigPolynomial.random_real(product, rng, positive=True)
    c = cesaro_r_approx(product, u, v, cone, 30, N, seed=8)
    b = birkhoff_cone_average(product, u, v, cone, N, seed=9)
    assert abs(b.value - c.value) <= 2 * np.hypot(b.stderr, c.stderr) + 1e-12
    ch = TrigPolynomial.fiber_character(product, 0)
    assert cesaro_r_approx(product, ch, const(product), cone, 30, N, seed=10).within(0, 3)


# ------------------------------------------------------------ correlations


def test_constant_roof_character_correlation_is_flat():
    m = arnold()
    f = TrigPolynomial.fiber_character(m)
    c = correlation(m, [1.0], f, f, np.arange(0, 21, 2.0), N, seed=0)
    assert c.is_flat()
    assert np.allclose(np.abs(c.values), abs(c.c0), rtol=1e-9)
    assert c.decay_time() is None


def test_constant_observable_has_zero_correlation(product):
    g = TrigPolynomial.random_real(product, np.random.default_rng(0))
    c = correlation(product, [1.0, 1.0], const(product, 2.5), g, [0.0, 1.0, 5.0], 5000, seed=0)
    assert np.all(c.values == 0)


def test_correlation_at_zero_is_covariance(product, rng):
    f = TrigPolynomial.random_real(product, rng)
    g = TrigPolynomial.random_real(product, rng)
    c = correlation(product, [1.0, 1.0], f, g, [0.0], N, seed=1)
    # exact covariance: sum over matching modes of conj(g_k) f_k, constants removed
    zero = ((0,) * 4, (0, 0))
    exact = sum(np.conj(g.terms.get(k, 0)) * a for k, a in f.terms.items() if k != zero)
    assert abs(c.c0 - exact) < 4 * c.stderr[0] + 1e-3


def test_mixing_roof_correlation_decays():
    m = arnold(Roof.cosine(0.1))
    f = TrigPolynomial.fiber_character(m)
    c = correlation(m, [1.0], f, f, np.arange(0, 61, 4.0), N, seed=2)
    T = c.decay_time()
    assert T is not None and T < 60
    assert np.all(np.abs(c.values[c.times >= T]) < 0.1 * abs(c.c0) + 3 * c.stderr[c.times >= T])


def test_decay_time_definition():
    s = CorrelationSeries(np.ones(1), np.arange(5.0), np.array([1, 0.5, 0.05, 0.2, 0.01]), np.zeros(5), 1)
    assert s.decay_time(0.1) == 4.0
    assert s.decay_time(0.3) == 2.0


# ------------------------------------------------------------ classification


def _res(lam, dims=(1, 1)):
    return Resonance(np.atleast_1d(np.asarray(lam, dtype=complex)), 0.0, 0.0, "confirmed", 1, dims)


def _series(values):
    v = np.asarray(values, dtype=complex)
    return CorrelationSeries(np.ones(1), np.arange(len(v), dtype=float), v, np.zeros(len(v)), 1)


def test_classify_non_mixing():
    res = [_res(0), _res(2j * np.pi), _res(-2j * np.pi)]
    v = mixing_classify(res, [_series([1, 1, 1, 1])])
    assert v.verdict == "non-mixing"
    assert len(v.witnesses) == 2
    assert not v.spectral_mixing


def test_classify_mixing():
    res = [_res(0), _res(-0.1 + 6.28j)]
    v = mixing_classify(res, [_series([1, 0.5, 0.05, 0.01])] * 3)
    assert v.verdict == "mixing" and v.unique_measure
    assert v.to_json()["decayTimes"] == [2.0, 2.0, 2.0]


def test_classify_inconsistent_injected():
    v = mixing_classify([_res(0)], [_series([1, 1, 1, 1])])
    assert v.verdict == "inconsistent"
    assert any("does not decay" in d for d in v.diagnostics)
    v = mixing_classify([_res(0), _res(2j * np.pi)], [_series([1, 0.01, 0.0, 0.0])])
    assert v.verdict == "inconsistent"


def test_classify_needs_one_dimensional_zero():
    v = mixing_classify([_res(0, dims=(2, 2))], [_series([1, 0.0])])
    assert not v.unique_measure
    assert v.verdict == "inconsistent"


def test_weyl_directions(product):
    D = weyl_directions(product, 3, seed=4)
    assert D.shape == (3, 2)
    assert all(product.weyl_chamber_test(a) for a in D)
    assert np.allclose(np.linalg.norm(D, axis=1), 1)


# ------------------------------------------------------------ equivariance


def test_invariant_measure_is_equivariant(product):
    rep = equivariance_check(product, [0, 0], N, seed=0)
    assert rep.defect < 1e-12 or equivariance_passes(rep)


def test_equivariance_on_lattice_and_off(product):
    good = equivariance_check(product, [2j * np.pi, 0], N, seed=1)
    bad = equivariance_check(product, [1j * np.pi, 0], N, seed=1)
    assert equivariance_passes(good)
    assert bad.defect > 10 * bad.stderr


def test_equivariance_preconditions():
    with pytest.raises(ValueError, match="constant roofs"):
        equivariance_check(arnold(Roof.cosine(0.1)), [2j * np.pi], 100)
    with pytest.raises(ValueError, match="imaginary"):
        equivariance_check(arnold(), [0.5], 100)
