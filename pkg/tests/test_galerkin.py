import numpy as np
import pytest
from scipy.special import iv

from periodic_orbits import DynamicalDeterminant
from ruelle_taylor.galerkin import (
    EscapeError,
    _sphere,
    build_escape,
    build_truncation,
    calibrate_window,
    k_ceiling,
    lattice_ball,
    refined_K,
    resonances_in_window,
    verify_escape,
)
from ruelle_taylor.models import Roof, arnold, arnold_product, cartan_t3, make_model

# Zero of the periodic-orbit dynamical determinant of the cat map with roof
# 1 + 0.1 cos(2 pi x_1), orbits up to period 11 (period 10 agrees to 1e-11).
EPS_RESONANCE = -0.10151318699847 + 6.27873338862056j


@pytest.fixture(scope="module")
def arnold_escape():
    return build_escape(arnold())


# ------------------------------------------------------------ escape functions


@pytest.mark.parametrize("factory", [arnold, arnold_product, cartan_t3])
def test_escape_function_valid(factory):
    m = factory()
    esc = build_escape(m)
    rep = verify_escape(m, esc)
    assert rep.monotone and rep.range_ok
    assert esc.c_X > 0
    assert rep.worst_increase <= 1e-6


def test_arnold_escape_constant(arnold_escape):
    assert arnold_escape.c_X > 0.1


def test_order_function_range(arnold_escape):
    S = _sphere(2, 10000)
    for b in arnold_escape.blocks:
        m = b.order(S)
        assert m.min() >= -0.5 and m.max() <= 8
        Vi = np.linalg.inv(b.V)
        assert np.all(b.order(Vi[b.expanding]) <= -0.25 + 1e-12)
        assert np.all(b.order(Vi[~b.expanding]) >= 4 - 1e-12)


def test_order_decreases_along_dual_dynamics(arnold_escape):
    S = _sphere(2, 10000)
    b = arnold_escape.blocks[0]
    T = b.transports[0]
    assert np.all(b.order(S @ T.T) <= b.order(S) + 1e-6)


def test_escape_G_small_frequencies(arnold_escape):
    assert np.allclose(arnold_escape.G(np.zeros((1, 2))), 1.0)
    big = np.array([[300.0, -185.0]])
    assert abs(arnold_escape.G(big)[0]) > 1


def test_swapped_roles_rejected():
    with pytest.raises(EscapeError):
        build_escape(arnold(), swap=True)


def test_isotropic_order_rejected(arnold_escape):
    import copy

    esc = copy.deepcopy(arnold_escape)
    for b in esc.blocks:
        b.order_override = lambda xi: np.ones(len(xi))
    rep = verify_escape(arnold(), esc)
    assert not rep.range_ok


# ------------------------------------------------------------ truncation


def test_lattice_ball():
    ball = lattice_ball(2, 2)
    assert len(ball) == 13
    assert np.all((ball**2).sum(axis=1) <= 4)
    assert len(lattice_ball(3, 1)) == 7


def test_ceiling():
    assert k_ceiling(arnold()) == 48
    assert k_ceiling(cartan_t3()) == 48
    assert refined_K(arnold_product(), 32) == 40
    assert refined_K(arnold_product(), 44) == 36
    with pytest.raises(ValueError, match="ceiling"):
        build_truncation(arnold(), 64, 1)


def test_constant_roof_zero_mode(arnold_escape):
    tg = build_truncation(arnold(), 8, 2.0, arnold_escape)
    ft = tg.factors[0]
    i0 = ft.index.lookup(np.zeros((1, 2), dtype=int))[0]
    lam = 0.3 - 1.7j
    L = ft.matrix(0, lam).toarray()
    assert L[i0, i0] == pytest.approx(np.exp(-lam))
    assert np.count_nonzero(L[i0]) == 1


def test_constant_roof_permutation_structure(arnold_escape):
    tg = build_truncation(arnold(), 10, 0.0, arnold_escape)
    ft = tg.factors[0]
    L = ft.matrix(0, 0.0).toarray()
    M = np.array([[2, 1], [1, 1]])
    for r, k in enumerate(ft.modes):
        target = M.T @ k
        c = ft.index.lookup(target[None, :])[0]
        if c < 0:
            assert not L[r].any()
        else:
            assert L[r, c] == 1 and np.count_nonzero(L[r]) == 1
    assert tg.comm_defect == 0


def test_weights_conjugate_the_operator(arnold_escape):
    a = build_truncation(arnold(), 8, 0.0, arnold_escape).factors[0]
    b = build_truncation(arnold(), 8, 1.5, arnold_escape).factors[0]
    W = np.diag(np.exp(b.weights_log))
    La, Lb = a.matrix(0, 0.2j).toarray(), b.matrix(0, 0.2j).toarray()
    assert np.allclose(Lb, W @ La @ np.linalg.inv(W))


def test_variable_roof_entries_are_bessel_coefficients(arnold_escape):
    # exp(-lam (1 + eps cos 2 pi x)) has Fourier coefficients exp(-lam) I_n(-lam eps)
    eps, lam = 0.1, 0.7 - 2.3j
    ft = build_truncation(arnold(Roof.cosine(eps)), 8, 0.0, arnold_escape).factors[0]
    L = ft.matrix(0, lam).toarray()
    M = np.array([[2, 1], [1, 1]])
    checked = 0
    for r, k in enumerate(ft.modes):
        for c in np.flatnonzero(L[r]):
            n = M.T @ k - ft.modes[c]
            assert n[1] == 0
            assert L[r, c] == pytest.approx(np.exp(-lam) * iv(n[0], -lam * eps), abs=1e-14)
            checked += 1
    assert checked > len(ft.modes)


def test_roof_perturbation_only_widens_bandwidth(arnold_escape):
    lam = 0.4 + 1.1j
    flat = build_truncation(arnold(), 8, 2.0, arnold_escape).factors[0].matrix(0, lam).toarray()
    wavy = build_truncation(arnold(Roof.cosine(0.1)), 8, 2.0, arnold_escape).factors[0].matrix(0, lam).toarray()
    assert np.all(wavy[flat != 0] != 0)
    M = np.array([[2, 1], [1, 1]])
    modes = lattice_ball(2, 8)
    rows, cols = np.nonzero(wavy)
    offsets = modes[rows] @ M - modes[cols]
    assert np.all(offsets[:, 1] == 0)
    assert np.abs(offsets[:, 0]).max() > 0
    # at lam = 0 the multiplier is 1 and the two truncations coincide
    flat0 = build_truncation(arnold(), 8, 2.0, arnold_escape).factors[0].matrix(0, 0).toarray()
    wavy0 = build_truncation(arnold(Roof.cosine(0.1)), 8, 2.0, arnold_escape).factors[0].matrix(0, 0).toarray()
    assert np.allclose(flat0, wavy0, atol=1e-14)


# ------------------------------------------------------------ windows


def test_window_at_N_zero(arnold_escape):
    win = calibrate_window(arnold(), 16, 0, escape=arnold_escape)
    assert win.boundary == 0.0
    assert win.c_l2 == 0.0
    assert win.contains([0.0])
    assert not win.contains([-0.01])


def test_window_widens_with_N(arnold_escape):
    b = [calibrate_window(arnold(), 16, N, escape=arnold_escape).boundary for N in (0, 1, 2, 3)]
    assert all(x >= y for x, y in zip(b, b[1:]))
    assert b[-1] < 0


def test_window_rejects_direction_outside_chamber():
    with pytest.raises(ValueError, match="chamber"):
        calibrate_window(arnold_product(), 16, 1, A0=[1.0, -1.0])


# ------------------------------------------------------------ resonances


def test_arnold_lattice(arnold_escape):
    res, win = resonances_in_window(arnold(), 16, 2, escape=arnold_escape, omega=13)
    lams = sorted((r.lam[0] for r in res), key=lambda z: z.imag)
    want = [2j * np.pi * k for k in range(-2, 3)]
    assert len(lams) == len(want)
    assert np.allclose(lams, want, atol=1e-6)
    assert all(r.alg_mult == 1 and r.dims == (1, 1) for r in res)


def test_cartan_lattice():
    m = cartan_t3()
    res, win = resonances_in_window(m, 16, 2, omega=7)
    got = {tuple(np.round(r.lam.imag / (2 * np.pi)).astype(int)) for r in res}
    assert got == {(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)}
    for r in res:
        assert np.allclose(r.lam.real, 0, atol=1e-6)
        assert r.dims == (1, 2, 1)


def test_periodic_orbit_oracle_reproduces_frozen_value():
    z = DynamicalDeterminant(0.1, n_max=11).zero_near(-0.1 + 6.28j)
    assert abs(z - EPS_RESONANCE) < 1e-12


def test_variable_roof_resonances():
    m = make_model("arnold", eps=0.1)
    res, win = resonances_in_window(m, 24, 2, omega=7)
    zero = [r for r in res if abs(r.lam[0]) < 1e-8]
    assert len(zero) == 1 and zero[0].dims == (1, 1)
    others = [r.lam[0] for r in res if abs(r.lam[0]) >= 1e-8]
    assert others and max(z.real for z in others) < -0.05
    top = min(others, key=lambda z: abs(z - EPS_RESONANCE))
    assert abs(top - EPS_RESONANCE) < 1e-8
    assert any(abs(z - np.conj(EPS_RESONANCE)) < 1e-8 for z in others)


def test_resonances_invariant_under_cone_angles():
    m = arnold()
    a, _ = resonances_in_window(m, 16, 2, escape=build_escape(m, (0.3, 0.3)), omega=7)
    b, _ = resonances_in_window(m, 16, 2, escape=build_escape(m, (0.2, 0.25)), omega=7)
    assert len(a) == len(b)
    for r, s in zip(a, b):
        assert np.max(np.abs(r.lam - s.lam)) < 1e-5
