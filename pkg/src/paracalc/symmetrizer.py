"""Symbols gamma, p, q that bring the para-linearised system to antisymmetric form.

With h the symbol of H'(zeta) and lambda the para-linearised DN symbol we look for

    T_p T_lambda = T_gamma T_q,    T_q T_h = T_gamma T_p

modulo operators of order 0 and 0.5. Two variants of p are offered:

``"complete"``
    p^(0.5) = q lambda1^{-1} gamma^(1.5) and p^(-0.5) keeps every order 0.5
    term of p #_1 lambda, so the first identity holds to order 0.
``"displayed"``
    p^(0.5) = rho^1.5 beta1^-0.75 sqrt(lambda1) and
    p^(-0.5) = lambda1^{-1} (gamma^(0.5) q + sum D gamma^(1.5) d q); the
    identity then only holds to order 0.5 (see the probes in the tests).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .droplet import (DNSymbols, DropletState, ParaConfig, dn_oracle, dn_symbols, geometry, good_unknown,
                      good_unknown_inverse, h_symbol, para_apply, para_context, para_transport, rhs_full)
from .sphere import (SphereFunction, SphereGrid, T3Symbol, adjoint_t3, compose_t3, eig_function,
                     make_sphere_grid, pad_cols)
from .symcalc import MU


def _pinv_pow(p: float):
    def f(w):
        out = np.zeros_like(w)
        pos = w > 1e-12 * max(1.0, float(np.abs(w).max()) if w.size else 1.0)
        out[pos] = w[pos] ** p
        return out
    return f


@dataclass
class SymmetrizerSymbols:
    gamma15: T3Symbol
    gamma05: T3Symbol
    p05: T3Symbol
    pm05: T3Symbol
    q: np.ndarray  # values on the symbol grid
    variant: str = "complete"

    @cached_property
    def gamma(self) -> T3Symbol:
        return (self.gamma15 + self.gamma05).cached()

    @cached_property
    def p(self) -> T3Symbol:
        return (self.p05 + self.pm05).cached()

    @property
    def q_symbol(self) -> T3Symbol:
        return T3Symbol.scalar(self.gamma15.grid, self.q)

    def hermitian_defect(self, l2: int) -> float:
        g = self.gamma15.level(l2)
        return float(np.abs(g - np.conj(np.swapaxes(g, -1, -2))).max())


def q_function(zeta: SphereFunction, grid: SphereGrid) -> np.ndarray:
    """q = rho^{1/3} sqrt(rho^2 + |grad zeta|^2)."""
    geo = geometry(zeta, grid)
    return geo.rho ** (1.0 / 3.0) * np.sqrt(geo.beta)


def build_symmetrizer(dns: DNSymbols, h2: T3Symbol, h1: T3Symbol, zeta: SphereFunction,
                      variant: str = "complete") -> SymmetrizerSymbols:
    if variant not in ("complete", "displayed"):
        raise ValueError(f"unknown variant {variant!r}")
    grid = dns.grid
    rho, b1 = dns.rho, dns.beta1
    lam1, lam0 = dns.lambda1, dns.lambda0
    lam = lam1 + lam0
    h = (h2 + h1).cached()
    h.order = 2.0

    lh = lam1.matmul(h2).cached()
    gamma15 = eig_function(lh, _pinv_pow(0.5), 1.5, herm_tol=1e-8)
    inv_sqrt_lh = eig_function(lh, _pinv_pow(-0.5), -1.5, herm_tol=1e-8)

    target = (compose_t3(h, lam) + compose_t3(adjoint_t3(lam), adjoint_t3(h))) * 0.5 - lh
    for mu in MU:
        target = target - gamma15.difference(mu).matmul(gamma15.x_derivative(mu))
    gamma05 = (inv_sqrt_lh.matmul(target.cached()) * 0.5).cached()
    gamma05.order = 0.5

    q = q_function(zeta, grid)
    Q = T3Symbol.scalar(grid, q)
    inv_lam1 = eig_function(lam1, _pinv_pow(-1.0), -1.0)
    sqrt_lam1 = eig_function(lam1, _pinv_pow(0.5), 0.5)
    if variant == "complete":
        p05 = inv_lam1.matmul(gamma15).times_function(q)
    else:
        p05 = sqrt_lam1.times_function(rho ** 1.5 * b1 ** -0.75)
    p05 = p05.cached()
    p05.order = 0.5

    gq = compose_t3(gamma15, Q) - gamma15.times_function(q) + gamma05.times_function(q)
    if variant == "complete":
        rhs = gq - p05.matmul(lam0)
        for mu in MU:
            rhs = rhs - p05.difference(mu).matmul(lam1.x_derivative(mu))
        pm05 = rhs.matmul(inv_lam1)
    else:
        pm05 = inv_lam1.matmul(gq)
    pm05 = pm05.cached()
    pm05.order = -0.5
    return SymmetrizerSymbols(gamma15, gamma05, p05, pm05, q, variant)


def symmetrizer_for(zeta: SphereFunction, grid: SphereGrid, variant: str = "complete"
                    ) -> tuple[SymmetrizerSymbols, DNSymbols, T3Symbol, T3Symbol]:
    dns = dn_symbols(zeta, grid)
    h2, h1 = h_symbol(zeta, grid)
    return build_symmetrizer(dns, h2, h1, zeta, variant), dns, h2, h1


# ------------------------------------------------------------ probes

def level_probe(l: int, rng: np.random.Generator) -> SphereFunction:
    """Random function with all its content at degree l, unit L2 norm."""
    f = SphereFunction.zeros(l)
    f.c[l, :] = rng.standard_normal(2 * l + 1) + 1j * rng.standard_normal(2 * l + 1)
    return f * (1.0 / f.norm())


def _apply(sym: T3Symbol, f_cols: np.ndarray, cfg: ParaConfig, Lout: int) -> np.ndarray:
    out = make_sphere_grid(Lout + 2)
    return para_apply(sym, pad_cols(f_cols, f_cols.shape[0] - 1), out, cfg, Lout)


def residual_norms(sym: SymmetrizerSymbols, dns: DNSymbols, h2: T3Symbol, h1: T3Symbol,
                   f: SphereFunction, cfg: ParaConfig | None = None) -> tuple[float, float]:
    """L2 norms of (T_p T_lambda - T_gamma T_q) f and (-T_q T_h + T_gamma T_p) f."""
    cfg = ParaConfig() if cfg is None else cfg
    Lx = sym.gamma15.Lx
    L1, L2 = f.L + Lx, f.L + 2 * Lx
    cols = f.to_cols()
    lam, h = dns.lam, (h2 + h1).cached()
    first = (pad_cols(_apply(sym.p, _apply(lam, cols, cfg, L1), cfg, L2), L2)
             - pad_cols(_apply(sym.gamma, _apply(sym.q_symbol, cols, cfg, L1), cfg, L2), L2))
    second = (pad_cols(_apply(sym.gamma, _apply(sym.p, cols, cfg, L1), cfg, L2), L2)
              - pad_cols(_apply(sym.q_symbol, _apply(h, cols, cfg, L1), cfg, L2), L2))
    nrm = lambda c: SphereFunction.from_cols(c).norm()
    return nrm(first), nrm(second)


def growth_exponent(levels, norms) -> float:
    """Least-squares slope of log(norm) against log(level)."""
    x, y = np.log(np.asarray(levels, float)), np.log(np.asarray(norms, float))
    return float(np.polyfit(x, y, 1)[0])


# ------------------------------------------------------- symmetrised system

@dataclass
class SymmetrizedRHS:
    """d/dt (T_p zeta, T_q w) split into its antisymmetric, transport and remainder parts."""

    U: SphereFunction  # T_p zeta
    V: SphereFunction  # T_q w
    dU: SphereFunction
    dV: SphereFunction
    skew: tuple[SphereFunction, SphereFunction]
    transport: tuple[SphereFunction, SphereFunction]
    f3: tuple[SphereFunction, SphereFunction]


def symmetrized_rhs(state: DropletState, dns: DNSymbols | None = None, sym: SymmetrizerSymbols | None = None,
                    cfg: ParaConfig | None = None, L_solve: int = 16, dt_fd: float = 1e-6,
                    variant: str = "complete", Lc: int | None = None) -> SymmetrizedRHS:
    """Right side of the symmetrised system at ``state``.

    The remainder f3 is assembled term by term: the two symmetriser defects,
    the time derivatives of p and q (centred differences along the flow),
    the transport commutators and T_p f1, T_q f2 with f1, f2 the remainders of
    the para-linearised system. All outputs are truncated at degree ``Lc``.
    """
    cfg = ParaConfig() if cfg is None else cfg
    L = state.L
    Lc = 2 * L if Lc is None else Lc
    gs = make_sphere_grid(cfg.L_sym)
    if sym is None or dns is None:
        sym, dns, h2, h1 = symmetrizer_for(state.zeta, gs, variant)
    else:
        h2, h1 = h_symbol(state.zeta, gs)
    real = state.zeta.is_real() and state.phi.is_real()
    out = make_sphere_grid(Lc + 2)

    def op(s: T3Symbol, c: np.ndarray) -> np.ndarray:
        return para_apply(s, pad_cols(c, Lc), out, cfg, Lc)

    def scal(g: np.ndarray) -> T3Symbol:
        return T3Symbol.scalar(gs, g)

    zeta, phi = state.zeta, state.phi
    dn = dn_oracle(state, L_solve, L_out=L)
    ctx = para_context(state, dn, cfg, Lout=L)

    def tr(c: np.ndarray) -> np.ndarray:
        return para_transport(ctx.v, pad_cols(c, Lc), gs, out, cfg, Lc)

    zc, pc = pad_cols(zeta.to_cols(), Lc), pad_cols(phi.to_cols(), Lc)
    zt, pt = rhs_full(state, L_solve=L_solve, L=L)
    ztc, ptc = pad_cols(zt.to_cols(), Lc), pad_cols(pt.to_cols(), Lc)
    lam, h, Q, p, gam = dns.lam, h2 + h1, sym.q_symbol, sym.p, sym.gamma
    wc = pc - op(scal(ctx.b), zc)

    def b_at(s: float) -> np.ndarray:
        st = DropletState(zeta + zt * s, phi + pt * s)
        return para_context(st, dn_oracle(st, L_solve, L_out=L), cfg, Lout=L).b

    def sym_at(s: float) -> SymmetrizerSymbols:
        z = zeta + zt * s
        a2, a1 = h_symbol(z, gs)
        return build_symmetrizer(dn_symbols(z, gs), a2, a1, z, sym.variant)

    k = 1.0 / (2 * dt_fd)
    bt = (b_at(dt_fd) - b_at(-dt_fd)) * k
    sp, sm = sym_at(dt_fd), sym_at(-dt_fd)
    p_t = (sp.p - sm.p) * k
    q_t = (sp.q - sm.q) * k

    wtc = ptc - op(scal(ctx.b), ztc) - op(scal(bt), zc)
    # remainders of zeta_t = T_lam w - T_v.grad zeta + f1 and w_t = -T_h zeta - T_v.grad w + f2
    f1 = ztc - op(lam, wc) + tr(zc)
    f2 = wtc + op(h, zc) + tr(wc)

    U, V = op(p, zc), op(Q, wc)
    dU = op(p, ztc) + op(p_t, zc)
    dV = op(Q, wtc) + op(scal(q_t), wc)
    skew = (op(gam, V), -op(gam, U))
    transport = (-tr(U), -tr(V))
    f3U = ((op(p, op(lam, wc)) - op(gam, op(Q, wc))) + op(p_t, zc)
           + (tr(op(p, zc)) - op(p, tr(zc))) + op(p, f1))
    f3V = ((op(gam, op(p, zc)) - op(Q, op(h, zc))) + op(scal(q_t), wc)
           + (tr(op(Q, wc)) - op(Q, tr(wc))) + op(Q, f2))

    def wrap(c: np.ndarray) -> SphereFunction:
        f = SphereFunction.from_cols(c)
        return f.realpart() if real else f
    return SymmetrizedRHS(wrap(U), wrap(V), wrap(dU), wrap(dV), (wrap(skew[0]), wrap(skew[1])),
                          (wrap(transport[0]), wrap(transport[1])), (wrap(f3U), wrap(f3V)))


# ------------------------------------------------- symmetrised time stepping

def rest_multipliers(L: int, grid: SphereGrid, variant: str = "complete") -> tuple[np.ndarray, np.ndarray]:
    """Per-degree values of p and gamma for the round sphere, degrees 0..L."""
    zero = SphereFunction.zeros(1)
    sym, _, _, _ = symmetrizer_for(zero, grid, variant)
    p = np.array([sym.p.level(2 * l)[..., 0, 0].flat[0].real for l in range(L + 1)])
    g = np.array([sym.gamma.level(2 * l)[..., 0, 0].flat[0].real for l in range(L + 1)])
    return p, g


def _times(f: SphereFunction, m: np.ndarray) -> SphereFunction:
    return SphereFunction(f.L, f.c * m[: f.L + 1, None])


class _Frozen:
    """Symbols, transport field and grids of one state, reused across RK stages."""

    def __init__(self, state: DropletState, para: ParaConfig, L: int, L_solve: int, variant: str):
        self.L, self.para = L, para
        self.real = state.zeta.is_real() and state.phi.is_real()
        self.dn = dn_oracle(state, L_solve, L_out=L)
        self.ctx = para_context(state, self.dn, para, Lout=L)
        h2, h1 = h_symbol(state.zeta, self.ctx.gs)
        self.sym = build_symmetrizer(self.ctx.dns, h2, h1, state.zeta, variant)
        self.Q = self.sym.q_symbol

    def _wrap(self, c: np.ndarray) -> SphereFunction:
        f = SphereFunction.from_cols(c)
        return f.realpart() if self.real else f

    def op(self, s: T3Symbol, f: SphereFunction) -> SphereFunction:
        return self._wrap(para_apply(s, pad_cols(f.to_cols(), self.L), self.ctx.go, self.para, self.L))

    def tr(self, f: SphereFunction) -> SphereFunction:
        return self._wrap(para_transport(self.ctx.v, pad_cols(f.to_cols(), self.L), self.ctx.gs,
                                         self.ctx.go, self.para, self.L))


def symmetrized_variables(state: DropletState, para: ParaConfig | None = None, L_solve: int = 16,
                          variant: str = "complete", frozen: _Frozen | None = None
                          ) -> tuple[SphereFunction, SphereFunction]:
    """(T_p zeta, T_q w) with w the good unknown, truncated at the state's degree."""
    para = ParaConfig(L_sym=8) if para is None else para
    fr = _Frozen(state, para, state.L, L_solve, variant) if frozen is None else frozen
    w = good_unknown(state, fr.dn, ctx=fr.ctx)
    return fr.op(fr.sym.p, state.zeta), fr.op(fr.Q, w)


def _invert(fr: _Frozen, s: T3Symbol, target: SphereFunction, guess: SphereFunction, diag: np.ndarray,
            tol: float = 1e-13, maxiter: int = 50) -> SphereFunction:
    """Solve T_s x = target by x <- x + (target - T_s x) / diag, levels with diag = 0 kept from the guess."""
    inv = np.zeros_like(diag)
    inv[diag > 0] = 1.0 / diag[diag > 0]
    x = guess.copy()
    for _ in range(maxiter):
        r = target - fr.op(s, x)
        x = x + _times(r, inv)
        if (_times(r, inv)).norm() <= tol * max(1.0, target.norm()):
            break
    return x


def simulate_symmetrized(state0: DropletState, cfg, variant: str = "complete"):
    """RK4 for (U, V) = (T_p zeta, T_q w) with symbols frozen over each step.

    The right side is T_gamma V - T_v.grad U, -T_gamma U - T_v.grad V plus the
    degree-wise correction that makes the linearisation at the round sphere
    exact; the quadratic part of the remainder is dropped, so trajectories
    agree with the full system to second order in the amplitude. After each
    step (zeta, phi) is recovered by fixed-point inversion of T_p, T_q and the
    good unknown.
    """
    from .sim import Trajectory, diagnostics, project_volume, _check

    L, dt = cfg.L, cfg.dt
    para = ParaConfig(L_sym=cfg.L_sym)
    p0, g0 = rest_multipliers(L, make_sphere_grid(cfg.L_sym), variant)
    n = np.arange(L + 1, dtype=float)
    safe = np.where(p0 > 0, p0, 1.0)
    cU = np.where(n > 0, p0 * n - g0, 0.0)
    cV = np.where(n > 0, g0 - (n - 1) * (n + 2) / safe, 0.0)

    state = state0
    traj = Trajectory()
    traj.record(0.0, state, diagnostics(state, cfg) if cfg.diagnostics else None)
    nsteps = int(round(cfg.t_end / dt))
    for k in range(1, nsteps + 1):
        _check(state, cfg)
        fr = _Frozen(state, para, L, cfg.L_solve, variant)
        U, V = symmetrized_variables(state, para, cfg.L_solve, variant, frozen=fr)
        gam = fr.sym.gamma

        def F(u, v):
            return (fr.op(gam, v) - fr.tr(u) + _times(v, cU),
                    fr.op(gam, u) * -1.0 - fr.tr(v) + _times(u, cV))

        k1 = F(U, V)
        k2 = F(U + k1[0] * (dt / 2), V + k1[1] * (dt / 2))
        k3 = F(U + k2[0] * (dt / 2), V + k2[1] * (dt / 2))
        k4 = F(U + k3[0] * dt, V + k3[1] * dt)
        U = U + (k1[0] + k2[0] * 2 + k3[0] * 2 + k4[0]) * (dt / 6)
        V = V + (k1[1] + k2[1] * 2 + k3[1] * 2 + k4[1]) * (dt / 6)

        zeta = _invert(fr, fr.sym.p, U, state.zeta, p0)
        w0 = good_unknown(state, fr.dn, ctx=fr.ctx)
        w = _invert(fr, fr.Q, V, w0, np.ones(L + 1))
        phi = good_unknown_inverse(zeta, w, para, cfg.L_solve, tol=1e-12)
        phi.c[0, phi.L] = 0.0
        state = DropletState(zeta, phi)
        if cfg.volume_project:
            state = project_volume(state)
        if k % cfg.record_every == 0 or k == nsteps:
            traj.record(k * dt, state, diagnostics(state, cfg) if cfg.diagnostics else None)
    return traj
