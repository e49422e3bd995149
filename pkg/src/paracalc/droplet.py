"""Geometry and operators of a distorted sphere r = 1 + zeta(x).

Everything geometric is computed in the orthonormal frame X_1, X_2, X_3 of
left-invariant fields acting on lifts; for a lifted function the frame
components of its gradient reproduce the round-sphere gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import sph_harm_y

from . import symcalc
from .sphere import (SphereFunction, SphereGrid, T3Symbol, apply_field, compose_t3, eig_function,
                     make_sphere_grid, pad_cols, quantize_t3, laplacian_cols)
from .symcalc import MU, sigma_x
from .wigner import DomainError


class ConditioningError(ArithmeticError):
    """The collocation system of the Dirichlet-Neumann oracle is ill-conditioned."""


# ------------------------------------------------------------------ state

@dataclass
class DropletState:
    zeta: SphereFunction
    phi: SphereFunction

    @property
    def L(self) -> int:
        return max(self.zeta.L, self.phi.L)

    def check(self, grid: SphereGrid | None = None) -> float:
        """Return sup|zeta| on a grid, raising when the graph leaves the chart."""
        grid = make_sphere_grid(2 * self.zeta.L + 2) if grid is None else grid
        sup = float(np.abs(self.zeta.values(grid)).max())
        if not sup < 0.5:
            raise DomainError(f"|zeta|_inf = {sup:.3f} >= 1/2")
        return sup

    def to_json(self) -> dict:
        return {"L": self.L, "zeta": self.zeta.to_json(), "phi": self.phi.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "DropletState":
        return cls(SphereFunction.from_json(obj["zeta"]), SphereFunction.from_json(obj["phi"]))

    @classmethod
    def rest(cls, L: int) -> "DropletState":
        return cls(SphereFunction.zeros(L), SphereFunction.zeros(L))


@dataclass
class Geometry:
    """Pointwise geometric data of zeta on a grid."""

    grid: SphereGrid
    rho: np.ndarray
    grad: np.ndarray  # (3, nt, np) frame components
    gsq: np.ndarray
    lap: np.ndarray
    hess: np.ndarray  # (3, 3, nt, np) symmetrised frame Hessian

    @property
    def beta(self) -> np.ndarray:
        return self.rho ** 2 + self.gsq

    @property
    def hess_gg(self) -> np.ndarray:
        return np.einsum("ij...,i...,j...->...", self.hess, self.grad, self.grad)


def geometry(zeta: SphereFunction, grid: SphereGrid) -> Geometry:
    cols = pad_cols(zeta.to_cols(), zeta.L)
    first = [apply_field(cols, j) for j in (1, 2, 3)]
    grad = np.stack([grid.synth(c) for c in first]).real
    hess = np.empty((3, 3) + grid.shape)
    for i in range(3):
        for j in range(i, 3):
            v = 0.5 * (apply_field(first[j], i + 1) + apply_field(first[i], j + 1))
            hess[i, j] = hess[j, i] = grid.synth(v).real
    rho = 1.0 + grid.synth(cols).real
    lap = grid.synth(laplacian_cols(cols)).real
    return Geometry(grid, rho, grad, np.einsum("j...,j...->...", grad, grad), lap, hess)


def frame_gradient(f: SphereFunction, grid: SphereGrid) -> np.ndarray:
    cols = pad_cols(f.to_cols(), f.L)
    return np.stack([grid.synth(apply_field(cols, j)) for j in (1, 2, 3)])


def ambient_gradient(frame: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """Convert frame components of a tangent vector to Cartesian R^3 components."""
    # gradient of the coordinate functions x_k, computed once per grid
    key = ("coord_grad",)
    if key not in grid._cache:
        pts = grid.points()
        g = np.empty((3, 3) + grid.shape)
        for k in range(3):
            xk = SphereFunction.from_values(pts[..., k], grid, 1)
            g[k] = frame_gradient(xk, grid).real
        grid._cache[key] = g
    return np.einsum("kj...,j...->k...", grid._cache[key], frame)


# ------------------------------------------------------ mean curvature

def _curvature_parts(g: Geometry):
    """H and its partial derivatives with respect to (rho, |grad|^2, lap, hess_gg)."""
    rho, s, lap, K = g.rho, g.gsq, g.lap, g.hess_gg
    b = rho ** 2 + s
    b12, b32, b52 = np.sqrt(b), b ** 1.5, b ** 2.5
    Hval = 2 / b12 + s / b32 - lap / (rho * b12) + K / (rho * b32)
    F_b = -1 / b32 - 1.5 * s / b52 + 0.5 * lap / (rho * b32) - 1.5 * K / (rho * b52)
    F_rho = lap / (rho ** 2 * b12) - K / (rho ** 2 * b32) + 2 * rho * F_b
    F_s = 1 / b32 + F_b
    F_lap = -1 / (rho * b12)
    F_K = 1 / (rho * b32)
    return Hval, F_rho, F_s, F_lap, F_K


def mean_curvature_values(zeta: SphereFunction, grid: SphereGrid) -> np.ndarray:
    return _curvature_parts(geometry(zeta, grid))[0]


def mean_curvature(zeta: SphereFunction, grid: SphereGrid | None = None, L: int | None = None) -> SphereFunction:
    """Mean curvature (sum of principal curvatures, outward normal) of r = 1 + zeta.

    Equals 2 on the unit sphere and 2/(1+c) on the sphere of radius 1+c.
    """
    L = zeta.L if L is None else L
    grid = make_sphere_grid(2 * zeta.L + 4) if grid is None else grid
    return SphereFunction.from_values(mean_curvature_values(zeta, grid), grid, L)


def area(zeta: SphereFunction, grid: SphereGrid | None = None) -> float:
    grid = make_sphere_grid(2 * zeta.L + 4) if grid is None else grid
    g = geometry(zeta, grid)
    return float(grid.integrate(g.rho * np.sqrt(g.beta)).real)


@dataclass
class CurvatureLinearization:
    """H'(zeta) u = sum c2[i,j] X_i X_j u + sum c1[i] X_i u + c0 u (pointwise coefficients)."""

    grid: SphereGrid
    c2: np.ndarray
    c1: np.ndarray
    c0: np.ndarray

    def apply(self, u: SphereFunction) -> np.ndarray:
        cols = pad_cols(u.to_cols(), u.L)
        first = [apply_field(cols, j) for j in (1, 2, 3)]
        out = self.c0 * self.grid.synth(cols)
        for i in range(3):
            out = out + self.c1[i] * self.grid.synth(first[i])
            for j in range(3):
                out = out + self.c2[i, j] * self.grid.synth(apply_field(first[j], i + 1))
        return out

    def symbol(self, Lx: int | None = None) -> tuple[T3Symbol, T3Symbol]:
        """(h2, h1): second-order part and the rest of the symbol of H'."""
        g, c2, c1, c0 = self.grid, self.c2, self.c1, self.c0

        def second(l2):
            return sum(c2[i, j][..., None, None] * (sigma_x(i + 1, l2) @ sigma_x(j + 1, l2))
                       for i in range(3) for j in range(3))

        def rest(l2):
            out = c0[..., None, None] * np.eye(l2 + 1)
            return out + sum(c1[i][..., None, None] * sigma_x(i + 1, l2) for i in range(3))

        return T3Symbol(g, second, 2.0, Lx, "h2"), T3Symbol(g, rest, 1.0, Lx, "h1")


def curvature_linearization(zeta: SphereFunction, grid: SphereGrid) -> CurvatureLinearization:
    g = geometry(zeta, grid)
    _, F_rho, F_s, F_lap, F_K = _curvature_parts(g)
    gi = g.grad
    c2 = F_lap * np.eye(3)[:, :, None, None] + F_K * np.einsum("i...,j...->ij...", gi, gi)
    # d|grad|^2 = 2 g.grad u ; d hess_gg = S(u)(g,g) + 2 S(zeta)(g, grad u)
    c1 = 2 * F_s * gi + 2 * F_K * np.einsum("ij...,i...->j...", g.hess, gi)
    c0 = F_rho
    return CurvatureLinearization(grid, c2, c1, c0)


def h_symbol(zeta: SphereFunction, grid: SphereGrid, Lx: int | None = None) -> tuple[T3Symbol, T3Symbol]:
    """Symbols (h2, h1) with H'(zeta) = Op(h2 + h1) exactly (before any cut-off)."""
    return curvature_linearization(zeta, grid).symbol(Lx)


def h2_closed_form(zeta: SphereFunction, grid: SphereGrid) -> T3Symbol:
    """h2 = (beta_2^2 + beta_1 l(l+1)) / (rho beta_1^{3/2})."""
    g = geometry(zeta, grid)
    beta2 = T3Symbol.vector_field(grid, g.grad)
    b = g.beta
    fac = 1.0 / (g.rho * b ** 1.5)

    def fn(l2):
        l = l2 / 2
        B = beta2.level(l2)
        return fac[..., None, None] * (B @ B + (b * l * (l + 1))[..., None, None] * np.eye(l2 + 1))
    return T3Symbol(grid, fn, 2.0)


# ----------------------------------------------------- Dirichlet-Neumann

def fibonacci_sphere(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Polar and azimuthal angles of n nearly uniform points."""
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    theta = np.arccos(z)
    psi = (np.pi * (1 + 5 ** 0.5) * k) % (2 * np.pi)
    return theta, psi


@lru_cache(maxsize=32)
def _ytable(L: int, theta: tuple, psi: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Y_l^m at the given points for all (l, m) with l <= L; columns ordered by (l, m)."""
    th, ps = np.array(theta), np.array(psi)
    ls, ms = [], []
    for l in range(L + 1):
        for m in range(-l, l + 1):
            ls.append(l)
            ms.append(m)
    ls, ms = np.array(ls), np.array(ms)
    Y = sph_harm_y(ls[None, :], ms[None, :], th[:, None], ps[:, None])
    Y.setflags(write=False)
    return Y, ls, ms


@lru_cache(maxsize=16)
def _zonal_table(L: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Y_l^0 on n Gauss-Legendre meridian nodes, and sqrt of the quadrature weights."""
    x, w = np.polynomial.legendre.leggauss(n)
    Y = sph_harm_y(np.arange(L + 1)[None, :], 0, np.arccos(x)[:, None], 0.0).real
    Y.setflags(write=False)
    return Y, np.sqrt(w)


def _dn_solve_zonal(state: DropletState, L_solve: int, oversample: int, max_cond: float):
    Lz = max(state.zeta.L, state.phi.L, L_solve)
    Y, sw = _zonal_table(Lz, oversample * (L_solve + 1))
    zeta = Y[:, :state.zeta.L + 1] @ state.zeta.c[:, state.zeta.L].real
    if not np.abs(zeta).max() < 0.5:
        raise DomainError(f"|zeta|_inf = {np.abs(zeta).max():.3f} >= 1/2")
    phi = Y[:, :state.phi.L + 1] @ state.phi.c[:, state.phi.L]
    rho = 1.0 + zeta
    bl = np.arange(L_solve + 1)
    A = Y[:, :L_solve + 1] * rho[:, None] ** bl[None, :] * sw[:, None]
    rhs = phi * sw
    scale = np.linalg.norm(A, axis=0)
    coef, _, _, sv = np.linalg.lstsq(A / scale, rhs, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if cond > max_cond:
        raise ConditioningError(f"collocation condition number {cond:.2e} exceeds {max_cond:.1e}")
    coef = coef / scale
    resid = float(np.linalg.norm(A @ coef - rhs) / max(np.linalg.norm(rhs), 1e-300))
    return coef, (bl, np.zeros_like(bl)), resid, cond


def _flat(f: SphereFunction, L: int) -> np.ndarray:
    c = pad_cols(f.c, L)  # same padded layout as lift vectors
    return np.concatenate([c[l, L - l:L + l + 1] for l in range(L + 1)])


@dataclass
class DNResult:
    dn: SphereFunction
    residual: float
    cond: float
    coeffs: np.ndarray = field(repr=False)
    basis: tuple = field(repr=False)


def _is_zonal(f: SphereFunction, tol: float = 0.0) -> bool:
    c = f.c.copy()
    c[:, f.L] = 0
    return bool(np.abs(c).max() <= tol)


def dn_solve(state: DropletState, L_solve: int = 16, oversample: int = 4, max_cond: float = 1e10):
    """Fit the interior harmonic expansion Phi = sum a_lm r^l Y_l^m to the boundary data.

    Returns (coefficients, basis (ls, ms), boundary residual, condition number).
    Zonal states are fitted on meridian nodes with the m = 0 basis only.
    """
    if _is_zonal(state.zeta) and _is_zonal(state.phi):
        return _dn_solve_zonal(state, L_solve, oversample, max_cond)
    n = oversample * (L_solve + 1) ** 2
    th, ps = fibonacci_sphere(n)
    Lz = max(state.zeta.L, state.phi.L, L_solve)
    Y, ls, ms = _ytable(Lz, tuple(th), tuple(ps))
    zeta = (Y[:, :(state.zeta.L + 1) ** 2] @ _flat(state.zeta, state.zeta.L)).real
    if not np.abs(zeta).max() < 0.5:
        raise DomainError(f"|zeta|_inf = {np.abs(zeta).max():.3f} >= 1/2")
    phi = Y[:, :(state.phi.L + 1) ** 2] @ _flat(state.phi, state.phi.L)
    rho = 1.0 + zeta
    sel = ls <= L_solve
    if _is_zonal(state.zeta):
        present = {m for m in range(-state.phi.L, state.phi.L + 1)
                   if np.any(state.phi.c[:, m + state.phi.L] != 0)}
        sel &= np.isin(ms, sorted(present) if present else [0])
    bl, bm = ls[sel], ms[sel]
    A = Y[:, sel] * rho[:, None] ** bl[None, :]
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    An = A / scale
    coef, _, rank, sv = np.linalg.lstsq(An, phi, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if cond > max_cond:
        raise ConditioningError(f"collocation condition number {cond:.2e} exceeds {max_cond:.1e}")
    coef = coef / scale
    resid = float(np.linalg.norm(A @ coef - phi) / max(np.linalg.norm(phi), 1e-300))
    return coef, (bl, bm), resid, cond


def dn_values(state: DropletState, grid: SphereGrid, L_solve: int = 16, geo: Geometry | None = None,
              **kw) -> tuple[np.ndarray, tuple]:
    """D[zeta]phi at the grid nodes, plus (Phi_r, residual, cond)."""
    coef, (bl, bm), resid, cond = dn_solve(state, L_solve, **kw)
    geo = geometry(state.zeta, grid) if geo is None else geo
    t, p = grid.mesh()
    key = ("Y", L_solve, tuple(bl), tuple(bm))
    if key not in grid._cache:
        grid._cache[key] = sph_harm_y(bl[None, :], bm[None, :], t.ravel()[:, None], p.ravel()[:, None])
    Yg = grid._cache[key]
    rho = geo.rho.ravel()
    Phi_r = (Yg * (bl * rho[:, None] ** np.maximum(bl - 1, 0))[...]) @ coef
    Phi_r = Phi_r.reshape(grid.shape)
    gphi = frame_gradient(state.phi, grid)
    if np.isrealobj(state.phi.c) or state.phi.is_real():
        gphi = gphi.real
        Phi_r = Phi_r.real if state.phi.is_real() else Phi_r
    r2 = geo.rho ** 2
    dn = (1 + geo.gsq / r2) * Phi_r - np.einsum("j...,j...->...", geo.grad, gphi) / r2
    return dn, (Phi_r, resid, cond)


def dn_oracle(state: DropletState, L_solve: int = 16, L_out: int | None = None,
              grid: SphereGrid | None = None, info: bool = False, **kw):
    """Brute-force Dirichlet-Neumann operator from the interior harmonic expansion."""
    L_out = state.L if L_out is None else L_out
    if grid is None:
        grid = make_sphere_grid(max(L_out, L_solve) + L_out + 2)
    vals, (Phi_r, resid, cond) = dn_values(state, grid, L_solve, **kw)
    out = SphereFunction.from_values(vals, grid, L_out)
    if state.phi.is_real() and state.zeta.is_real():
        out = out.realpart()
    if info:
        return DNResult(out, resid, cond, np.empty(0), ())
    return out


def transport_values(state: DropletState, dn_vals: np.ndarray, grid: SphereGrid,
                     geo: Geometry | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(b, v) at the nodes; v in frame components, shape (3, nt, np)."""
    geo = geometry(state.zeta, grid) if geo is None else geo
    gphi = frame_gradient(state.phi, grid)
    if state.phi.is_real():
        gphi = gphi.real
    r2 = geo.rho ** 2
    b = (dn_vals + np.einsum("j...,j...->...", geo.grad, gphi) / r2) / (1 + geo.gsq / r2)
    v = (gphi - b * geo.grad) / r2
    return b, v


def transport_fields(state: DropletState, dn: SphereFunction, grid: SphereGrid | None = None,
                     L: int | None = None) -> tuple[SphereFunction, list[SphereFunction]]:
    L = state.L if L is None else L
    grid = make_sphere_grid(2 * max(L, dn.L) + 2) if grid is None else grid
    b, v = transport_values(state, dn.values(grid), grid)
    return (SphereFunction.from_values(b, grid, L),
            [SphereFunction.from_values(v[j], grid, L) for j in range(3)])


# --------------------------------------------------------- DN symbols

def _pinv_pow(p: float):
    def f(w):
        out = np.zeros_like(w)
        pos = w > 1e-12 * max(1.0, float(np.abs(w).max()) if w.size else 1.0)
        out[pos] = w[pos] ** p
        return out
    return f


@dataclass
class DNSymbols:
    grid: SphereGrid
    rho: np.ndarray
    beta1: np.ndarray
    beta3: np.ndarray
    beta2: T3Symbol
    M: T3Symbol  # beta2^2 + beta1 l(l+1)
    lambda_tilde: T3Symbol
    a1: T3Symbol
    A1: T3Symbol
    a0: T3Symbol
    A0: T3Symbol
    lambda1: T3Symbol
    lambda0: T3Symbol

    @cached_property
    def lam(self) -> T3Symbol:
        return (self.lambda1 + self.lambda0).cached()

    def M_power(self, p: float, order: float) -> T3Symbol:
        return eig_function(self.M, _pinv_pow(p), order)


def dn_symbols(zeta: SphereFunction, grid: SphereGrid, Lx: int | None = None) -> DNSymbols:
    """Symbols of the factorisation at the boundary; see the module notes for A0."""
    geo = geometry(zeta, grid)
    rho, b1 = geo.rho, geo.beta
    if np.any(b1 <= 0) or np.any(rho <= 0):
        raise DomainError("beta_1 and rho must be positive")
    b3 = -geo.lap + 2 * rho
    beta2 = T3Symbol.vector_field(grid, geo.grad)
    beta2.Lx = grid.L if Lx is None else Lx
    Lx = beta2.Lx

    def M_fn(l2):
        l = l2 / 2
        B = beta2.level(l2)
        return B @ B + (b1 * l * (l + 1))[..., None, None] * np.eye(l2 + 1)
    M = T3Symbol(grid, M_fn, 2.0, Lx, "M")
    sqrtM = eig_function(M, _pinv_pow(0.5), 1.0)
    isqrtM = eig_function(M, _pinv_pow(-0.5), -1.0)
    inv_b1 = 1.0 / b1
    lam_t = sqrtM.times_function(inv_b1)
    lam_t_inv = isqrtM.times_function(b1)
    b2_over_b1 = beta2.times_function(inv_b1)
    a1 = (b2_over_b1 - lam_t).cached()
    A1 = (b2_over_b1 + lam_t).cached()
    a1.order = A1.order = 1.0

    # d/dy at y = 0: d beta1 = 2 rho, d beta3 = 2, d M = 2 rho l(l+1)
    def dyA1_fn(l2):
        l = l2 / 2
        B = beta2.level(l2)
        t1 = (-2 * rho * inv_b1 ** 2)[..., None, None] * B
        t2 = (rho * l * (l + 1) * inv_b1)[..., None, None] * isqrtM.level(l2)
        t3 = (-2 * rho * inv_b1 ** 2)[..., None, None] * sqrtM.level(l2)
        return t1 + t2 + t3
    dyA1 = T3Symbol(grid, dyA1_fn, 1.0, Lx, "dyA1")
    R = dyA1
    for mu in MU:
        R = R - a1.difference(mu).matmul(A1.x_derivative(mu))
    # a1 A0 + A1 a0 = R, a0 + A0 = -beta3/beta1  =>  A0 = -(1/2) lam_t^{-1} (R + A1 beta3/beta1)
    A0 = ((lam_t_inv.matmul(R + A1.times_function(b3 * inv_b1))) * (-0.5)).cached()
    A0.order = 0.0
    minus_b3 = T3Symbol.scalar(grid, -b3 * inv_b1)
    a0 = minus_b3 - A0
    lambda1 = sqrtM.times_function(1.0 / rho ** 2)
    lambda1.order = 1.0
    lambda0 = A0.times_function(b1 / rho ** 2)
    lambda0.order = 0.0
    return DNSymbols(grid, rho, b1, b3, beta2, M, lam_t, a1, A1, a0, A0, lambda1, lambda0)


def lambda_tilde_series(zeta: SphereFunction, grid: SphereGrid, l2: int, kmax: int = 40) -> np.ndarray:
    """sqrt(l(l+1)/beta1) sum_k binom(1/2, k) (beta2^2 / (beta1 l(l+1)))^k at one level."""
    from scipy.special import binom
    geo = geometry(zeta, grid)
    l = l2 / 2
    B = T3Symbol.vector_field(grid, geo.grad).level(l2)
    X = (B @ B) / (geo.beta * l * (l + 1))[..., None, None]
    term = np.broadcast_to(np.eye(l2 + 1, dtype=complex), X.shape).copy()
    total = np.zeros_like(X)
    for k in range(kmax + 1):
        total += binom(0.5, k) * term
        term = term @ X
    return np.sqrt(l * (l + 1) / geo.beta)[..., None, None] * total


# ---------------------------------------------------- para-linearisation

@dataclass
class ParaConfig:
    """Discretisation of the para-differential operators."""

    L_sym: int = 12  # degree of the symbol grid
    delta: float = 0.25  # admissible cut-off parameter
    cutoff: str = "admissible"  # or "none"

    def chi(self):
        if self.cutoff == "none":
            return None
        return symcalc.admissible_cutoff(self.delta)


def para_apply(sym: T3Symbol, cols: np.ndarray, out: SphereGrid, cfg: ParaConfig, Lout: int) -> np.ndarray:
    return quantize_t3(sym, cols, out, cfg.chi(), Lout)


def para_product(a_vals: np.ndarray, u: SphereFunction | np.ndarray, grid: SphereGrid, out: SphereGrid,
                 cfg: ParaConfig, Lout: int) -> np.ndarray:
    """T_a u for a function a given on the symbol grid."""
    sym = T3Symbol.scalar(grid, a_vals)
    cols = u.to_cols() if isinstance(u, SphereFunction) else u
    return para_apply(sym, cols, out, cfg, Lout)


def para_transport(v_vals: np.ndarray, u: SphereFunction | np.ndarray, grid: SphereGrid, out: SphereGrid,
                   cfg: ParaConfig, Lout: int) -> np.ndarray:
    """T_v . nabla u = sum_j T_{v_j} X_j u."""
    cols = u.to_cols() if isinstance(u, SphereFunction) else u
    acc = np.zeros((Lout + 1, 2 * Lout + 1), dtype=complex)
    for j in range(3):
        acc += para_product(v_vals[j], apply_field(cols, j + 1), grid, out, cfg, Lout)
    return acc


@dataclass
class ParaContext:
    """Symbol grid, output grid and the ingredients shared by the para operators."""

    state: DropletState
    cfg: ParaConfig
    gs: SphereGrid
    go: SphereGrid
    Lout: int
    dns: DNSymbols
    b: np.ndarray
    v: np.ndarray


def para_context(state: DropletState, dn_for_fields: SphereFunction, cfg: ParaConfig | None = None,
                 Lout: int | None = None) -> ParaContext:
    cfg = ParaConfig() if cfg is None else cfg
    Lout = max(state.L, dn_for_fields.L) if Lout is None else Lout
    gs = make_sphere_grid(cfg.L_sym)
    go = make_sphere_grid(Lout + cfg.L_sym + 2)
    dns = dn_symbols(state.zeta, gs)
    b, v = transport_values(state, dn_for_fields.values(gs), gs)
    if state.phi.is_real():
        b, v = b.real, v.real
    return ParaContext(state, cfg, gs, go, Lout, dns, b, v)


def good_unknown(state: DropletState, dn: SphereFunction, cfg: ParaConfig | None = None,
                 Lout: int | None = None, ctx: ParaContext | None = None) -> SphereFunction:
    """w = phi - T_b zeta."""
    ctx = para_context(state, dn, cfg, Lout) if ctx is None else ctx
    Tb = para_product(ctx.b, pad_cols(state.zeta.to_cols(), ctx.Lout), ctx.gs, ctx.go, ctx.cfg, ctx.Lout)
    return SphereFunction.from_cols(pad_cols(state.phi.to_cols(), ctx.Lout) - Tb)


def good_unknown_inverse(zeta: SphereFunction, w: SphereFunction, cfg: ParaConfig | None = None,
                         L_solve: int = 16, tol: float = 1e-13, maxiter: int = 60) -> SphereFunction:
    """Recover phi from (zeta, w) by the fixed-point iteration phi = w + T_{b(phi)} zeta."""
    phi = w.copy()
    for _ in range(maxiter):
        st = DropletState(zeta, phi)
        dn = dn_oracle(st, L_solve, L_out=w.L)
        new = w + (phi - good_unknown(st, dn, cfg, Lout=w.L))
        step = (new - phi).norm()
        phi = new.realpart() if w.is_real() and zeta.is_real() else new
        if step <= tol * max(1.0, w.norm()):
            break
    return phi


def dn_para(state: DropletState, dn_for_fields: SphereFunction, cfg: ParaConfig | None = None,
            Lout: int | None = None, ctx: ParaContext | None = None) -> SphereFunction:
    """T_lambda (phi - T_b zeta) - T_v . nabla zeta."""
    ctx = para_context(state, dn_for_fields, cfg, Lout) if ctx is None else ctx
    w = good_unknown(state, dn_for_fields, ctx=ctx)
    out = para_apply(ctx.dns.lam, pad_cols(w.to_cols(), ctx.Lout), ctx.go, ctx.cfg, ctx.Lout)
    out = out - para_transport(ctx.v, pad_cols(state.zeta.to_cols(), ctx.Lout), ctx.gs, ctx.go, ctx.cfg, ctx.Lout)
    f = SphereFunction.from_cols(out)
    return f.realpart() if state.phi.is_real() and state.zeta.is_real() else f


def dn_symmetry_defect(zeta: SphereFunction, f: SphereFunction, g: SphereFunction, L_solve: int = 16,
                       grid: SphereGrid | None = None) -> float:
    """|<rho^2 D f, g> - <f, rho^2 D g>| / (|f| |g|); D is symmetric for this weight."""
    grid = make_sphere_grid(2 * max(zeta.L, f.L, g.L) + L_solve + 4) if grid is None else grid
    rho = 1.0 + zeta.values(grid).real
    df, _ = dn_values(DropletState(zeta, f), grid, L_solve)
    dg, _ = dn_values(DropletState(zeta, g), grid, L_solve)
    a = grid.integrate(rho ** 2 * df * np.conj(g.values(grid)))
    b = grid.integrate(rho ** 2 * f.values(grid) * np.conj(dg))
    return float(abs(a - b) / (f.norm() * g.norm()))


def curvature_symmetry_defect(zeta: SphereFunction, u: SphereFunction, v: SphereFunction,
                              grid: SphereGrid | None = None) -> float:
    """Same defect for rho^2 H'(zeta), the Hessian of the area."""
    grid = make_sphere_grid(3 * max(zeta.L, u.L, v.L) + 6) if grid is None else grid
    rho2 = (1.0 + zeta.values(grid).real) ** 2
    lin = curvature_linearization(zeta, grid)
    a = grid.integrate(rho2 * lin.apply(u) * np.conj(v.values(grid)))
    b = grid.integrate(rho2 * u.values(grid) * np.conj(lin.apply(v)))
    return float(abs(a - b) / (u.norm() * v.norm()))


# ---------------------------------------------------------- full system

def rhs_values(state: DropletState, grid: SphereGrid, L_solve: int = 16):
    """Right-hand sides of the evolution at the grid nodes.

    zeta_t = D phi and
    phi_t = -|grad phi|^2 / (2 rho^2) + (rho^2 D phi + grad zeta . grad phi)^2 / (2 beta rho^2) + 2 - H,
    H being the geometric mean curvature (2 at rest).
    """
    geo = geometry(state.zeta, grid)
    dn, _ = dn_values(state, grid, L_solve, geo=geo)
    gphi = frame_gradient(state.phi, grid).real
    r2 = geo.rho ** 2
    dot = np.einsum("j...,j...->...", geo.grad, gphi)
    gp2 = np.einsum("j...,j...->...", gphi, gphi)
    Hval = _curvature_parts(geo)[0]
    dphi = -gp2 / (2 * r2) + (r2 * dn + dot) ** 2 / (2 * geo.beta * r2) + 2.0 - Hval
    return dn.real, dphi


def rhs_full(state: DropletState, grid: SphereGrid | None = None, L_solve: int = 16,
             L: int | None = None) -> tuple[SphereFunction, SphereFunction]:
    """(zeta_t, phi_t) truncated at degree L; products formed on a dealiased grid."""
    L = state.L if L is None else L
    if grid is None:
        from .sphere import dealiased_grid
        grid = dealiased_grid(L)
    dz, dp = rhs_values(state, grid, L_solve)
    return (SphereFunction.from_values(dz, grid, L).realpart(),
            SphereFunction.from_values(dp, grid, L).realpart())
