import numpy as np
import pytest

from paracalc import harmonic as H
from paracalc.harmonic import GridFunction, SpectralCoeffs, forward, inverse, wigner_entry_coeffs
from paracalc.symcalc import (MU, Symbol, adjoint, bony_paralinearize, calibrate_taylor, compose,
                              difference, difference_multiplier, difference_oracle, grid_derivative,
                              hard_cutoff, laplacian_via_fields, left_derivative, level_probe,
                              paraproduct, paraproduct_cutoff, quantize, regularize, sigma,
                              taylor_closed_form_right)
from paracalc.wigner import make_grid, wigner_matrix


@pytest.fixture(scope="module")
def grid():
    return make_grid(4)


@pytest.fixture(scope="module")
def smooth(grid):
    T = wigner_matrix(1, grid.mesh())
    a = (1 + 0.3 * T[..., 1, 1]).real
    b = (0.5 + 0.4 * T[..., 0, 2].real)
    return a, b


def close(s: Symbol, t: Symbol, top: int = 0) -> float:
    n = len(s.data) - top
    return max(float(np.abs(x - y).max()) for x, y in zip(s.data[:n], t.data[:n]))


def test_sigma_examples():
    assert np.allclose(sigma("0", 2), np.diag([-1, 0, 1]))
    assert np.all(sigma("+", 0) == 0) and sigma("+", 0).shape == (1, 1)


def test_difference_of_sigma_is_kronecker():
    for mu in MU:
        for nu in MU:
            d = difference_multiplier([sigma(nu, l2) for l2 in range(10)], mu)
            for l2 in range(9):
                assert np.abs(d[l2] - (mu == nu) * np.eye(l2 + 1)).max() < 1e-13


def test_difference_of_constant(grid):
    c = Symbol.identity(grid) * 2.5
    for mu in MU:
        d = difference(c, mu)
        assert max(np.abs(b).max() for b in d.data[:-1]) < 1e-13


def test_difference_matches_physical_oracle(grid, rng):
    a = [rng.standard_normal((l2 + 1, l2 + 1)) + 1j * rng.standard_normal((l2 + 1, l2 + 1)) for l2 in range(7)]
    for mu in MU:
        d = difference_multiplier(a, mu)
        o = difference_oracle(a, mu, grid)
        # the top level references l + 1/2 and is excluded
        for l2 in range(6):
            assert np.abs(d[l2] - o[l2]).max() < 1e-10


def test_quantize_identity(grid, rng):
    f = SpectralCoeffs.random(4, rng)
    assert np.abs(quantize(Symbol.identity(grid), f).values - inverse(f, grid).values).max() < 1e-11


def test_quantize_sigma0_convention(grid):
    # i d/dpsi of exp(-i m psi) gives m: sigma_0 multiplies the column index
    for l2 in range(5):
        l = l2 / 2
        for i in range(l2 + 1):
            for j in range(l2 + 1):
                n, m = -l + i, -l + j
                f = wigner_entry_coeffs(4, l, n, m)
                out = quantize(Symbol.sigma(grid, "0"), f).values
                expect = m * wigner_matrix(l, grid.mesh())[..., i, j]
                assert np.abs(out - expect).max() < 1e-11


def test_quantize_scalar_symbol(grid, smooth, rng):
    a, _ = smooth
    f = SpectralCoeffs.random(4, rng)
    out = quantize(Symbol.scalar(grid, a), f).values
    assert np.abs(out - a * inverse(f, grid).values).max() < 1e-11


def test_quantize_dimension_check(rng):
    g = make_grid(2)
    with pytest.raises(H.DimensionError):
        quantize(Symbol.identity(g), SpectralCoeffs.random(3, rng))


def test_left_derivative_laplacian_and_constants():
    for l2 in range(6):
        l = l2 / 2
        for i in range(l2 + 1):
            e = wigner_entry_coeffs(3, l, -l + i, -l)
            assert (laplacian_via_fields(e) - e * (-l * (l + 1))).max_abs() < 1e-12
    one = wigner_entry_coeffs(3, 0, 0, 0)
    for mu in MU:
        assert left_derivative(one, mu).max_abs() == 0


def test_quantized_sigma_is_left_derivative(grid, rng):
    f = SpectralCoeffs.random(4, rng)
    for mu in MU:
        lhs = quantize(Symbol.sigma(grid, mu), f).values
        rhs = inverse(left_derivative(f, mu), grid).values
        assert np.abs(lhs - rhs).max() < 1e-10


def test_taylor_calibration_matches_closed_form(rng):
    cal = calibrate_taylor(rng)
    assert len(cal) == 10
    err = max(np.abs(cal[a][l2] - taylor_closed_form_right(a, l2)).max() for a in cal for l2 in range(5))
    assert err < 1e-9


def test_compose_with_identity(grid, smooth):
    a, _ = smooth
    A = Symbol.scalar(grid, a).matmul(Symbol.sigma(grid, "+"))
    I = Symbol.identity(grid)
    assert close(compose(A, I, 2), A) < 1e-13
    # D of the identity vanishes except at the zero-extended band edge
    assert close(compose(I, A, 2), A, top=1) < 1e-13


def test_compose_scalar_then_derivative(grid, smooth, rng):
    a, _ = smooth
    C = compose(Symbol.scalar(grid, a), Symbol.sigma(grid, "+"), 2)
    f = SpectralCoeffs.random(3, rng)
    direct = a * inverse(left_derivative(f, "+"), grid).values
    assert np.abs(quantize(C, f).values - direct).max() < 1e-9


def test_commutator_of_vector_fields(grid, smooth, rng):
    a, b = smooth
    A = Symbol.scalar(grid, a).matmul(Symbol.sigma(grid, "+"))
    B = Symbol.scalar(grid, b).matmul(Symbol.sigma(grid, "-"))
    comm = compose(A, B, 2) - compose(B, A, 2)
    expect = (Symbol.scalar(grid, 2 * a * b).matmul(Symbol.sigma(grid, "0"))
              + Symbol.scalar(grid, a * grid_derivative(b, grid, "+")).matmul(Symbol.sigma(grid, "-"))
              - Symbol.scalar(grid, b * grid_derivative(a, grid, "-")).matmul(Symbol.sigma(grid, "+")))
    assert close(comm, expect, top=2) < 1e-12
    # and against the operators applied one after the other
    f = SpectralCoeffs.random(3, rng)
    Y = lambda c: a * inverse(left_derivative(c, "+"), grid).values
    Z = lambda c: b * inverse(left_derivative(c, "-"), grid).values
    direct = (a * inverse(left_derivative(forward(GridFunction(grid, Z(f))), "+"), grid).values
              - b * inverse(left_derivative(forward(GridFunction(grid, Y(f))), "-"), grid).values)
    assert np.abs(quantize(comm, f).values - direct).max() < 1e-10 * np.abs(direct).max()


def test_composition_remainder_vanishes_at_second_order(rng):
    # for sigma_+ and g sigma_-, all second differences of sigma_+ vanish
    grid = make_grid(5)
    T = wigner_matrix(1, grid.mesh())
    g = (1 + 0.3 * T[..., 1, 1] + 0.2 * T[..., 0, 2]).real
    A = Symbol.sigma(grid, "+")
    B = Symbol.scalar(grid, g).matmul(Symbol.sigma(grid, "-"))
    res = {}
    for N in (1, 2):
        C = compose(A, B, N)
        for l in (2, 4):
            f = level_probe(grid.L2, 2 * l, rng)
            lhs = quantize(A, forward(quantize(B, f))).values
            rhs = quantize(C, f).values
            res[N, l] = np.sqrt(np.mean(np.abs(lhs - rhs) ** 2)) / np.sqrt(np.mean(np.abs(lhs) ** 2))
    assert res[2, 2] < 1e-12 and res[2, 4] < 1e-12
    assert res[1, 2] > 1e-2 and res[1, 4] > 1e-2


def test_adjoint_of_hermitian_multiplier(grid):
    S = Symbol.sigma(grid, "0")
    assert close(adjoint(S, 2), S) == 0


@pytest.mark.parametrize("kind", ["scalar", "sigma+", "field"])
def test_adjoint_pairing(grid, smooth, rng, kind):
    a, _ = smooth
    S = {"scalar": Symbol.scalar(grid, a), "sigma+": Symbol.sigma(grid, "+"),
         "field": Symbol.scalar(grid, a).matmul(Symbol.sigma(grid, "+"))}[kind]
    f, g = SpectralCoeffs.random(3, rng), SpectralCoeffs.random(3, rng)
    p1 = forward(quantize(S, f), L=3).inner(g)
    p2 = f.inner(forward(quantize(adjoint(S, 2), g), L=3))
    assert abs(p1 - p2) < 1e-9 * max(1.0, abs(p1))


def test_regularize_multiplier_unchanged(grid):
    S = Symbol.sigma(grid, "+")
    assert close(regularize(S), S) == 0


def test_regularize_kills_unresolved_level(grid):
    # x-frequency sqrt(6) exceeds delta <l> at every level of this grid
    T2 = wigner_matrix(2, grid.mesh())[..., 2, 2]
    assert 0.25 * H.japanese(grid.L2 / 2) < np.sqrt(6)
    assert regularize(Symbol.scalar(grid, T2), 0.25).max_abs() < 1e-13


def test_hard_cutoff_idempotent(grid, smooth):
    a, _ = smooth
    T2 = wigner_matrix(2, grid.mesh())[..., 2, 2]
    chi = hard_cutoff(0.6)
    r1 = regularize(Symbol.scalar(grid, a + T2), chi=chi)
    r2 = regularize(r1, chi=chi)
    assert close(r1, r2) < 1e-13
    assert close(r1, Symbol.scalar(grid, a + T2)) > 0.1


def test_paraproduct_of_one(grid, rng):
    u = SpectralCoeffs.random(4, rng)
    pp = paraproduct(GridFunction(grid, np.ones(grid.shape)), u, grid=grid).values
    blocks = sum((H.lp_block(u, j) for j in range(H.n_blocks(u.L) + 1)), SpectralCoeffs.zeros(4))
    assert np.abs(pp - inverse(blocks, grid).values).max() < 1e-12


@pytest.mark.parametrize("gap", [0, 1, 10])
def test_paraproduct_is_quantized_regularized_symbol(grid, smooth, rng, gap):
    a, _ = smooth
    u = SpectralCoeffs.random(2, rng)
    pp = paraproduct(GridFunction(grid, a + 0j), u, grid=grid, gap=gap).values
    q = quantize(regularize(Symbol.scalar(grid, a), chi=paraproduct_cutoff(gap)), u).values
    assert np.abs(pp - q).max() < 1e-9


def test_spectral_localization_of_products():
    grid = make_grid(4)
    lo = []
    for p2, q2 in [(2, 6), (3, 5), (4, 4), (1, 6)]:
        Tp = wigner_matrix(p2 / 2, grid.mesh())[..., 0, p2]
        Tq = wigner_matrix(q2 / 2, grid.mesh())[..., q2 // 2, 1]
        c = forward(GridFunction(grid, Tp * Tq))
        present = [l2 for l2, b in enumerate(c.blocks) if np.abs(b).max() > 1e-12]
        assert max(present) <= p2 + q2
        assert min(present) >= abs(p2 - q2)
        lo.append(min(present) / max(abs(p2 - q2), 1))
    # empirical constant c in [c |p - q|, p + q]
    assert min(lo) >= 1.0


def test_bony_identity_has_no_remainder(grid, rng):
    u = SpectralCoeffs.random(4, rng)
    Fu, R = bony_paralinearize(lambda v: v, np.ones_like, u, grid)
    assert np.abs(Fu.values - inverse(u, grid).values).max() < 1e-12
    assert np.abs(R.values).max() < 1e-11


def test_bony_cubic_is_homogeneous(grid, rng):
    u = SpectralCoeffs.random(4, rng)
    r = []
    for eps in (0.01, 0.02):
        _, R = bony_paralinearize(lambda v: v ** 3, lambda v: 3 * v ** 2, u * eps, grid)
        r.append(np.abs(R.values).max())
    assert r[1] / r[0] == pytest.approx(8.0, rel=1e-9)
