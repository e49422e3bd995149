import numpy as np
import pytest

from paracalc.droplet import (ConditioningError, DropletState, ParaConfig, area, curvature_symmetry_defect,
                              dn_oracle, dn_para, dn_solve, dn_symbols, dn_symmetry_defect, dn_values,
                              good_unknown, good_unknown_inverse, h2_closed_form, h_symbol,
                              lambda_tilde_series, mean_curvature, mean_curvature_values, rhs_full,
                              transport_fields, transport_values)
from paracalc.sphere import (SphereFunction, field_derivative_values, make_sphere_grid, pad_cols,
                             quantize_t3)
from paracalc.wigner import DomainError


def Y(L, l, m, a=1.0):
    return SphereFunction.real_harmonic(L, l, m, a)


@pytest.fixture(scope="module")
def gs():
    return make_sphere_grid(8)


@pytest.fixture(scope="module")
def shapes():
    L = 6
    return L, Y(L, 2, 0) + Y(L, 3, 1, 0.5), Y(L, 2, 1) + Y(L, 3, 0, 0.7)


# ------------------------------------------------------------------ oracle

def test_dn_at_rest_is_degree_multiplier():
    L = 6
    for n in range(7):
        for m in (0, n // 2, -n):
            st = DropletState(SphereFunction.zeros(L), SphereFunction.harmonic(L, n, m))
            d = dn_oracle(st, 12)
            assert np.abs(d.c - n * st.phi.c).max() < 1e-9


def test_dn_of_constant_vanishes(rng):
    z = SphereFunction.random(3, rng, decay=2) * 0.02
    st = DropletState(z, SphereFunction.harmonic(3, 0, 0, 1.7))
    assert dn_oracle(st, 12).norm() < 1e-9


def test_dn_self_convergence():
    z = Y(4, 2, 0, 0.05)
    p = Y(4, 3, 1)
    a = dn_oracle(DropletState(z, p), 12, L_out=12)
    b = dn_oracle(DropletState(z, p), 18, L_out=12)
    assert np.abs(a.c - b.c).max() < 1e-6


def test_dn_domain_and_conditioning_errors():
    with pytest.raises(DomainError):
        DropletState(Y(2, 0, 0, 3.0), Y(2, 1, 0)).check()
    st = DropletState(Y(4, 2, 0, 0.1), Y(4, 3, 0))
    with pytest.raises(ConditioningError):
        dn_solve(st, 12, max_cond=1.5)


def test_dn_symmetric_and_positive(rng):
    z = SphereFunction.random(4, rng, decay=2) * 0.02
    f = SphereFunction.random(5, rng, decay=2)
    g = SphereFunction.random(5, rng, decay=2)
    assert dn_symmetry_defect(z, f, g) < 1e-8
    grid = make_sphere_grid(30)
    rho = 1 + z.values(grid).real
    df, _ = dn_values(DropletState(z, f), grid, 16)
    assert grid.integrate(rho ** 2 * df.real * f.values(grid).real) > 0


# ---------------------------------------------------------- transport

def test_transport_at_rest(rng):
    p = SphereFunction.random(4, rng)
    st = DropletState(SphereFunction.zeros(4), p)
    dn = dn_oracle(st, 12)
    b, v = transport_fields(st, dn)
    assert np.abs(b.c - dn.c).max() < 1e-12
    grid = make_sphere_grid(10)
    gp = np.stack([field_derivative_values(p.values(grid), grid, j, 4) for j in (1, 2, 3)])
    assert max(np.abs(v[j].values(grid) - gp[j]).max() for j in range(3)) < 1e-12


def test_transport_b_is_radial_derivative(rng):
    z = SphereFunction.random(3, rng, decay=2) * 0.03
    p = SphereFunction.random(4, rng, decay=2)
    st = DropletState(z, p)
    grid = make_sphere_grid(24)
    dn, (Phi_r, _, _) = dn_values(st, grid, 16)
    b, _ = transport_values(st, dn, grid)
    assert np.abs(b - Phi_r).max() < 1e-10


def test_shape_derivative_of_dn():
    # on the sphere the chart factor rho^2 adds -2 b zeta_1 to the flat-space formula
    L = 6
    phi = Y(L, 2, 1) + Y(L, 3, 0, 0.5)
    z1 = Y(L, 2, 0) + Y(L, 1, 1, 0.3)
    eps = 1e-5
    g = make_sphere_grid(2 * L + 16)
    dp, _ = dn_values(DropletState(z1 * eps, phi), g, 16)
    dm, _ = dn_values(DropletState(z1 * -eps, phi), g, 16)
    fd = SphereFunction.from_values((dp - dm) / (2 * eps), g, 2 * L)
    st0 = DropletState(SphereFunction.zeros(L), phi)
    b, v = transport_values(st0, dn_oracle(st0, 16).values(g), g)
    zv = z1.values(g).real
    bz = SphereFunction.from_values(b * zv, g, 2 * L)
    D_bz = SphereFunction.from_cols(np.arange(2 * L + 1)[:, None] * bz.to_cols())
    div = sum(field_derivative_values(v[j] * zv, g, j + 1, 2 * L) for j in range(3))
    expect = SphereFunction.from_values(-D_bz.values(g) - div - 2 * b * zv, g, 2 * L)
    assert (fd - expect).norm() < 1e-7 * fd.norm()


# ----------------------------------------------------------- symbols

def test_dn_symbols_at_rest(gs):
    d = dn_symbols(SphereFunction.zeros(4), gs)
    assert np.allclose(d.beta1, 1) and np.allclose(d.beta3, 2)
    for n in range(5):
        l2 = 2 * n
        assert np.abs(d.beta2.level(l2)).max() == 0
        assert np.abs(d.lambda1.level(l2) - np.sqrt(n * (n + 1)) * np.eye(l2 + 1)).max() < 1e-12
    for n in range(2, 7):
        lam = d.lam.level(2 * n)[0, 0].diagonal().real
        assert np.allclose(lam, np.sqrt(n * (n + 1)) - 0.5, atol=1e-12)
        assert np.all(np.abs(lam - n) <= 0.5)


def test_lambda_tilde_series_matches_square_root(gs, rng):
    z = SphereFunction.random(4, rng, decay=2) * 0.01
    d = dn_symbols(z, gs)
    for n in (3, 6):
        assert np.abs(lambda_tilde_series(z, gs, 2 * n) - d.lambda_tilde.level(2 * n)).max() < 1e-8


def test_symbols_reject_collapsed_chart(gs):
    # beta_1 = rho^2 + |grad zeta|^2 only degenerates with the chart itself
    with pytest.raises(DomainError):
        dn_symbols(SphereFunction.harmonic(2, 0, 0, -1.2 * np.sqrt(4 * np.pi)), gs)


def test_h2_identities(gs, rng):
    z = SphereFunction.random(4, rng, decay=2) * 0.03
    h2, _ = h_symbol(z, gs)
    d = dn_symbols(z, gs)
    fac = d.rho ** 3 * d.beta1 ** -1.5
    for n in (2, 5):
        l2 = 2 * n
        assert np.abs(h2.level(l2) - h2_closed_form(z, gs).level(l2)).max() < 1e-10
        lam1 = d.lambda1.level(l2)
        assert np.abs(h2.level(l2) - fac[..., None, None] * lam1 @ lam1).max() < 1e-10
        assert np.abs(h2.level(l2) @ lam1 - lam1 @ h2.level(l2)).max() < 1e-10


def test_h_symbol_at_rest(gs):
    h2, h1 = h_symbol(SphereFunction.zeros(4), gs)
    for n in range(4):
        assert np.allclose(h2.level(2 * n), n * (n + 1) * np.eye(2 * n + 1))
        assert np.allclose(h1.level(2 * n), -2 * np.eye(2 * n + 1))


def test_h_paralinearization_is_quadratic(gs, shapes):
    L, zs, _ = shapes
    go = make_sphere_grid(3 * L + 6)
    r = []
    for e in (0.02, 0.04, 0.08):
        z = zs * e
        h2, h1 = h_symbol(z, gs)
        dH = SphereFunction.from_values(mean_curvature_values(z, go) - 2, go, L)
        op = SphereFunction.from_cols(quantize_t3(h2 + h1, pad_cols(z.to_cols(), L), go, None, L))
        r.append((dH - op).norm())
    ratios = np.array(r[1:]) / np.array(r[:-1])
    assert np.all((ratios > 2) & (ratios < 8))


# ------------------------------------------------------- para-linearisation

def test_dn_para_at_rest_and_zero_phi():
    L = 6
    p = Y(L, 4, 1)
    st = DropletState(SphereFunction.zeros(L), p)
    out = dn_para(st, dn_oracle(st, 16))
    assert (out - p * (np.sqrt(20) - 0.5)).norm() < 1e-10
    st = DropletState(Y(L, 2, 0, 0.05), SphereFunction.zeros(L))
    assert dn_para(st, dn_oracle(st, 16)).norm() < 1e-13


def test_dn_para_defect_is_quadratic(shapes):
    L, zs, ps = shapes
    r = []
    for e in (0.02, 0.04, 0.08):
        st = DropletState(zs * e, ps * e)
        o = dn_oracle(st, 16, L_out=L)
        r.append((o - dn_para(st, o)).sobolev_norm(3.5))
    ratios = np.array(r[1:]) / np.array(r[:-1])
    assert np.all((ratios > 2) & (ratios < 8))


def test_good_unknown(shapes):
    L, zs, ps = shapes
    st = DropletState(SphereFunction.zeros(L), ps)
    assert (good_unknown(st, dn_oracle(st, 16), Lout=L) - ps).norm() < 1e-13
    # without a cut-off the low-degree paraproduct is not trivially zero
    cfg = ParaConfig(cutoff="none")
    st = DropletState(zs * 0.05, ps)
    w = good_unknown(st, dn_oracle(st, 16), cfg, Lout=L)
    assert (w - ps).norm() > 1e-3
    assert (good_unknown_inverse(st.zeta, w, cfg) - ps).norm() < 1e-10


# -------------------------------------------------------- mean curvature

def test_mean_curvature_rest_and_round_sphere():
    g = make_sphere_grid(10)
    assert np.abs(mean_curvature_values(SphereFunction.zeros(4), g) - 2).max() < 1e-13
    c = 0.1
    zc = SphereFunction.harmonic(4, 0, 0, c * np.sqrt(4 * np.pi))
    assert np.abs(mean_curvature_values(zc, g) - 2 / (1 + c)).max() < 1e-13
    assert np.abs(mean_curvature(zc).c[0, 4] - 2 / (1 + c) * np.sqrt(4 * np.pi)) < 1e-12


def test_mean_curvature_linearization_multiplier():
    L = 8
    g = make_sphere_grid(2 * L + 4)
    eps = 1e-5
    for n in range(1, 7):
        Hn = SphereFunction.from_values(mean_curvature_values(Y(L, n, 0, eps), g) - 2, g, L)
        assert Hn.c[n, L] / eps == pytest.approx((n - 1) * (n + 2), abs=1e-4)


def test_curvature_linearization_symmetric(rng):
    z = SphereFunction.random(5, rng, decay=2) * 0.03
    u = SphereFunction.random(5, rng, decay=2)
    v = SphereFunction.random(5, rng, decay=2)
    assert curvature_symmetry_defect(z, u, v) < 1e-8


def test_area_first_variation(rng):
    g = make_sphere_grid(24)
    z0 = SphereFunction.random(6, rng, decay=2) * 0.03
    u = SphereFunction.random(6, rng, decay=2)
    h = 1e-5
    dA = (area(z0 + u * h, g) - area(z0 - u * h, g)) / (2 * h)
    rho = 1 + z0.values(g).real
    expect = g.integrate(rho ** 2 * mean_curvature_values(z0, g) * u.values(g).real).real
    assert dA == pytest.approx(expect, rel=1e-7)


# ------------------------------------------------------------- full system

def test_rhs_full_static_and_kinetic():
    a, b = rhs_full(DropletState.rest(8), L_solve=16)
    assert a.norm() < 1e-13 and b.norm() < 1e-12
    st = DropletState(SphereFunction.zeros(8), Y(8, 3, 0))
    a, _ = rhs_full(st, L_solve=16)
    assert np.abs(a.c - 3 * st.phi.c).max() < 1e-10


def test_state_json_roundtrip(rng):
    st = DropletState(SphereFunction.random(3, rng) * 0.01, SphereFunction.random(4, rng))
    back = DropletState.from_json(st.to_json())
    assert back.L == 4
    assert np.abs(back.zeta.c - st.zeta.c).max() == 0 and np.abs(back.phi.c - st.phi.c).max() == 0
