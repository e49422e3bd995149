"""Symbols on SU(2) and their calculus.

A symbol assigns to every grid node x and level l a (2l+1)x(2l+1) matrix
a(x, l). It acts by

    Op(a) f(x) = sum_l (2l+1) Tr(a(x, l) fhat(l) T^l(x)),

so a(x, l) multiplies the coefficient matrix from the left, the same side as
the derivative symbols sigma_mu.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from . import harmonic as H
from .harmonic import GridFunction, SpectralCoeffs, DimensionError
from .wigner import EulerGrid, index_values, twice

MU = ("+", "-", "0")


# ------------------------------------------------------------ sigma matrices

@lru_cache(maxsize=None)
def sigma(mu: str, l2: int) -> np.ndarray:
    """Symbol of the creation (+), annihilation (-) or neutral (0) field at level l."""
    lab = index_values(l2)
    l = l2 / 2
    d = l2 + 1
    out = np.zeros((d, d))
    if mu == "0":
        np.fill_diagonal(out, lab)
    elif mu == "+":
        # row m = n + 1
        n = lab[:-1]
        out[np.arange(1, d), np.arange(d - 1)] = -np.sqrt((l - n) * (l + n + 1))
    elif mu == "-":
        n = lab[1:]
        out[np.arange(d - 1), np.arange(1, d)] = -np.sqrt((l + n) * (l - n + 1))
    else:
        raise ValueError(f"unknown direction {mu!r}")
    out.setflags(write=False)
    return out


def deriv_symbols(l) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    l2 = twice(l)
    return sigma("+", l2), sigma("-", l2), sigma("0", l2)


@lru_cache(maxsize=None)
def sigma_x(j: int, l2: int) -> np.ndarray:
    """Symbols of the orthonormal fields X1, X2, X3."""
    sp, sm, s0 = sigma("+", l2), sigma("-", l2), sigma("0", l2)
    if j == 1:
        out = -0.5j * (sp + sm)
    elif j == 2:
        out = 0.5 * (sm - sp)
    elif j == 3:
        out = -1j * s0
    else:
        raise ValueError("j must be 1, 2 or 3")
    out.setflags(write=False)
    return out


def left_derivative(f: SpectralCoeffs, mu: str) -> SpectralCoeffs:
    """Coefficients of the left-invariant derivative: sigma_mu(l) fhat(l)."""
    return f.map_levels(lambda l2, b: sigma(mu, l2) @ b)


def laplacian_via_fields(f: SpectralCoeffs) -> SpectralCoeffs:
    """-(1/2)(d- d+ + d+ d-) - d0^2 applied spectrally."""
    def lvl(l2, b):
        sp, sm, s0 = sigma("+", l2), sigma("-", l2), sigma("0", l2)
        return (-0.5 * (sm @ sp + sp @ sm) - s0 @ s0) @ b
    return f.map_levels(lvl)


# ----------------------------------------------------- difference operators

def _coef(l2: int, fn) -> np.ndarray:
    lab = index_values(l2)
    l = l2 / 2
    n, m = np.meshgrid(lab, lab, indexing="ij")
    v = np.clip(fn(l, n, m), 0.0, None)
    return np.sqrt(v) / (l2 + 1)


def _shifted(a_lp: np.ndarray | None, l2p: int, l2: int, dn2: int, dm2: int) -> np.ndarray:
    """Matrix of size (l2+1)^2 with entries a(l')[n + dn, m + dm] (zero outside range)."""
    shape = (a_lp.shape[:-2] if a_lp is not None else ()) + (l2 + 1, l2 + 1)
    out = np.zeros(shape, dtype=complex)
    if a_lp is None or l2p < 0:
        return out
    # index n of level l2 maps to position k + off of level l2p
    offr, offc = (dn2 + l2p - l2) // 2, (dm2 + l2p - l2) // 2
    r0, r1 = max(0, -offr), min(l2 + 1, l2p + 1 - offr)
    c0, c1 = max(0, -offc), min(l2 + 1, l2p + 1 - offc)
    if r1 > r0 and c1 > c0:
        out[..., r0:r1, c0:c1] = a_lp[..., r0 + offr:r1 + offr, c0 + offc:c1 + offc]
    return out


# (coefficient, level shift, row shift, column shift, sign) in doubled units
_DIFF_RULES = {
    "+": [(lambda l, n, m: (l + m) * (l - n), -1, +1, -1, +1),
          (lambda l, n, m: (l - m + 1) * (l + n + 1), +1, +1, -1, -1)],
    "-": [(lambda l, n, m: (l - m) * (l + n), -1, -1, +1, +1),
          (lambda l, n, m: (l + m + 1) * (l - n + 1), +1, -1, +1, -1)],
    "0": [(lambda l, n, m: (l - m) * (l - n), -1, +1, +1, +1),
          (lambda l, n, m: (l + m + 1) * (l + n + 1), +1, +1, +1, +1),
          (lambda l, n, m: (l + m) * (l + n), -1, -1, -1, -1),
          (lambda l, n, m: (l - m + 1) * (l - n + 1), +1, -1, -1, -1)],
}


@lru_cache(maxsize=None)
def _diff_coefs(mu: str, l2: int) -> tuple:
    return tuple(_coef(l2, fn) for fn, *_ in _DIFF_RULES[mu])


def difference_level(get: Callable[[int], np.ndarray | None], mu: str, l2: int) -> np.ndarray:
    """(D_mu a)(l) from a level accessor ``get(l2')`` (None beyond the band)."""
    out = None
    for (fn, dl, dn, dm, sgn), c in zip(_DIFF_RULES[mu], _diff_coefs(mu, l2)):
        l2p = l2 + dl
        term = sgn * c * _shifted(get(l2p) if l2p >= 0 else None, l2p, l2, dn, dm)
        out = term if out is None else out + term
    return out


def difference_multiplier(a: list[np.ndarray], mu: str) -> list[np.ndarray]:
    """D_mu of a Fourier multiplier given as a list of per-level matrices."""
    L2 = len(a) - 1
    get = lambda k: a[k] if 0 <= k <= L2 else None
    return [difference_level(get, mu, l2) for l2 in range(L2 + 1)]


def q_functions(grid: EulerGrid) -> dict[str, np.ndarray]:
    """Q+ = -conj(x2), Q- = x2, Q0 = x1 - conj(x1) on the grid nodes."""
    from .wigner import euler_to_su2
    P, Th, S = grid.mesh()
    x = euler_to_su2(P, Th, S)
    x1, x2 = x[..., 0, 0], x[..., 0, 1]
    return {"+": -np.conj(x2), "-": x2, "0": x1 - np.conj(x1)}


def difference_oracle(a: list[np.ndarray], mu: str, grid: EulerGrid) -> list[np.ndarray]:
    """(q_mu kappa)^ where kappa has coefficients a: the defining identity, via the grid."""
    L2 = len(a) - 1
    kappa = H.inverse(SpectralCoeffs(L2, [np.asarray(b, dtype=complex) for b in a]), grid)
    q = q_functions(grid)[mu]
    return H.forward(GridFunction(grid, q * kappa.values), L=min(grid.L2, L2 + 1) / 2).blocks


# -------------------------------------------------------- batched transforms

def forward_batch(vals: np.ndarray, grid: EulerGrid, L2: int | None = None) -> list[np.ndarray]:
    """Forward transform of functions stacked on trailing axes; blocks [m, n, *batch]."""
    L2 = grid.L2 if L2 is None else L2
    ephi, epsi = grid.exp_tables()
    F = np.einsum("na,akb...,mb->nkm...", ephi, vals, epsi, optimize=True) / (grid.shape[0] * grid.shape[2])
    w = grid.theta_weights
    out = []
    for l2 in range(L2 + 1):
        sl = slice(grid.L2 - l2, grid.L2 + l2 + 1, 2)
        P = grid.ptable(l2)
        out.append(np.einsum("nkm...,nmk,k->mn...", F[sl, :, sl], P.conj(), w, optimize=True))
    return out


def inverse_batch(blocks: list[np.ndarray], grid: EulerGrid) -> np.ndarray:
    ephi, epsi = grid.exp_tables()
    N = 2 * grid.L2 + 1
    batch = blocks[0].shape[2:]
    G = np.zeros((N, grid.shape[1], N) + batch, dtype=complex)
    for l2, b in enumerate(blocks):
        sl = slice(grid.L2 - l2, grid.L2 + l2 + 1, 2)
        G[sl, :, sl] += (l2 + 1) * np.einsum("mn...,nmk->nkm...", b, grid.ptable(l2))
    return np.einsum("na,nkm...,mb->akb...", ephi.conj(), G, epsi.conj(), optimize=True)


def grid_derivative(vals: np.ndarray, grid: EulerGrid, mu: str) -> np.ndarray:
    """Left-invariant derivative of grid functions (batched on trailing axes)."""
    blocks = forward_batch(vals, grid)
    blocks = [np.einsum("ij,jn...->in...", sigma(mu, l2), b) for l2, b in enumerate(blocks)]
    return inverse_batch(blocks, grid)


# ------------------------------------------------------------------- symbols

@dataclass
class Symbol:
    """Dense symbol on an Euler grid.

    ``data[l2]`` has shape (*nodes, d, d) where nodes is either the grid shape
    or (1, 1, 1) for x-independent symbols (Fourier multipliers).
    """

    grid: EulerGrid
    data: list[np.ndarray]
    order: float = 0.0
    edge: int = 0  # number of top half-levels contaminated by zero-extension

    @property
    def L2(self) -> int:
        return len(self.data) - 1

    @property
    def valid_L2(self) -> int:
        """Highest level (doubled) unaffected by the band-edge truncation."""
        return self.L2 - self.edge

    @property
    def is_multiplier(self) -> bool:
        return all(b.shape[:3] == (1, 1, 1) for b in self.data)

    def level(self, l2: int) -> np.ndarray | None:
        return self.data[l2] if 0 <= l2 <= self.L2 else None

    def full(self, l2: int) -> np.ndarray:
        b = self.data[l2]
        return np.broadcast_to(b, self.grid.shape + b.shape[-2:])

    @classmethod
    def multiplier(cls, grid: EulerGrid, mats: Iterable[np.ndarray], order: float = 0.0) -> "Symbol":
        return cls(grid, [np.asarray(m, dtype=complex).reshape((1, 1, 1) + np.shape(m)) for m in mats], order)

    @classmethod
    def identity(cls, grid: EulerGrid, L2: int | None = None) -> "Symbol":
        L2 = grid.L2 if L2 is None else L2
        return cls.multiplier(grid, [np.eye(l2 + 1) for l2 in range(L2 + 1)])

    @classmethod
    def sigma(cls, grid: EulerGrid, mu: str, L2: int | None = None) -> "Symbol":
        L2 = grid.L2 if L2 is None else L2
        return cls.multiplier(grid, [sigma(mu, l2) for l2 in range(L2 + 1)], order=1.0)

    @classmethod
    def scalar(cls, grid: EulerGrid, g: np.ndarray, L2: int | None = None) -> "Symbol":
        """g(x) times the identity."""
        L2 = grid.L2 if L2 is None else L2
        g = np.asarray(g, dtype=complex)
        return cls(grid, [g[..., None, None] * np.eye(l2 + 1) for l2 in range(L2 + 1)])

    def times_function(self, g: np.ndarray) -> "Symbol":
        g = np.asarray(g)[..., None, None]
        return Symbol(self.grid, [g * b for b in self.data], self.order, self.edge)

    def matmul(self, other: "Symbol") -> "Symbol":
        """Pointwise product a(x,l) b(x,l)."""
        return Symbol(self.grid, [a @ b for a, b in zip(self.data, other.data)],
                      self.order + other.order, max(self.edge, other.edge))

    def __add__(self, other: "Symbol") -> "Symbol":
        return Symbol(self.grid, [a + b for a, b in zip(self.data, other.data)],
                      max(self.order, other.order), max(self.edge, other.edge))

    def __sub__(self, other: "Symbol") -> "Symbol":
        return Symbol(self.grid, [a - b for a, b in zip(self.data, other.data)],
                      max(self.order, other.order), max(self.edge, other.edge))

    def __mul__(self, s: complex) -> "Symbol":
        return Symbol(self.grid, [s * b for b in self.data], self.order, self.edge)

    __rmul__ = __mul__

    def conj_transpose(self) -> "Symbol":
        return Symbol(self.grid, [np.conj(np.swapaxes(b, -1, -2)) for b in self.data], self.order, self.edge)

    def max_abs(self) -> float:
        return max(float(np.abs(b).max()) for b in self.data)

    def to_json(self) -> dict:
        return {"L": self.L2 / 2, "order": self.order, "levels": [
            {"l2": l2, "shape": list(b.shape), "re": b.real.ravel().tolist(), "im": b.imag.ravel().tolist()}
            for l2, b in enumerate(self.data)]}


def quantize(a: Symbol, f: SpectralCoeffs) -> GridFunction:
    """Op(a)f on the grid nodes."""
    if f.L2 > a.L2:
        raise DimensionError("symbol does not cover the coefficient band")
    grid = a.grid
    ephi, epsi = grid.exp_tables()
    N = 2 * grid.L2 + 1
    out = np.zeros(grid.shape, dtype=complex)
    for l2 in range(f.L2 + 1):
        fb = f.blocks[l2]
        if not np.any(fb):
            continue
        M = a.data[l2] @ fb  # (*nodes, m, n)
        sl = slice(grid.L2 - l2, grid.L2 + l2 + 1, 2)
        P = grid.ptable(l2)  # [n, m, k]
        eph, eps = ephi[sl].conj(), epsi[sl].conj()
        if M.shape[:3] == (1, 1, 1):
            out += (l2 + 1) * np.einsum("mn,nmk,na,mb->akb", M[0, 0, 0], P, eph, eps, optimize=True)
        else:
            # Tr(M T) = sum_{m,n} M[m,n] e^{-i n phi} P[n,m] e^{-i m psi}
            out += (l2 + 1) * np.einsum("akbmn,nmk,na,mb->akb", M, P, eph, eps, optimize=True)
    return GridFunction(grid, out)


def difference(a: Symbol, mu: str) -> Symbol:
    """D_mu applied level-wise at every node, zero-extended beyond the band."""
    return Symbol(a.grid, [difference_level(a.level, mu, l2) for l2 in range(a.L2 + 1)], a.order - 1, a.edge + 1)


def x_derivative(a: Symbol, mu: str) -> Symbol:
    """Entrywise left-invariant derivative of the x-dependence."""
    if a.is_multiplier:
        return Symbol(a.grid, [np.zeros_like(b) for b in a.data], a.order, a.edge)
    return Symbol(a.grid, [grid_derivative(a.full(l2), a.grid, mu) for l2 in range(a.L2 + 1)], a.order, a.edge)


# ---------------------------------------------------------- Taylor operators

def _multi_indices(order: int) -> list[tuple[int, int, int]]:
    return [(i, j, k) for i in range(order + 1) for j in range(order + 1) for k in range(order + 1)
            if i + j + k == order]


def taylor_word(alpha: tuple[int, int, int]) -> list[tuple[float, tuple[str, ...]]]:
    """The operator d^(alpha) as a weighted sum of words in d+, d-, d0.

    In exponential coordinates y = exp(Y) the functions q_mu(y^{-1}) agree
    with the linear coordinates of Y up to third order, so for |alpha| <= 2
    the Taylor operators are the symmetrised products divided by alpha!.
    """
    letters = [m for m, k in zip(MU, alpha) for _ in range(k)]
    if len(letters) == 0:
        return [(1.0, ())]
    if len(letters) == 1:
        return [(1.0, (letters[0],))]
    if len(letters) == 2:
        a, b = letters
        if a == b:
            return [(0.5, (a, a))]
        return [(0.5, (a, b)), (0.5, (b, a))]
    raise NotImplementedError("Taylor operators are provided for |alpha| <= 2")


def apply_taylor(alpha, f: SpectralCoeffs) -> SpectralCoeffs:
    """d^(alpha) f on coefficients (a per-level matrix factor on the left)."""
    out = SpectralCoeffs.zeros(f.L2 / 2)
    for w, word in taylor_word(alpha):
        g = f
        for mu in reversed(word):
            g = left_derivative(g, mu)
        out = out + w * g
    return out


def taylor_x(alpha, a: Symbol) -> Symbol:
    """d^(alpha) applied entrywise to the x-dependence of a symbol."""
    out = None
    for w, word in taylor_word(alpha):
        g = a
        for mu in reversed(word):
            g = x_derivative(g, mu)
        out = g * w if out is None else out + g * w
    return out


def calibrate_taylor(rng: np.random.Generator, radius: float = 0.1, npts: int = 600, lmax: int = 2,
                     fit_order: int = 7):
    """Least-squares fit of the second-order Taylor operators.

    For f in the entries of T^l, l <= lmax, fits coefficient matrices C_alpha
    (acting on T^l from the right) in f(xy) = sum_alpha q^alpha(y^{-1}) (f C_alpha)(x)
    over y near the identity. Monomials up to ``fit_order`` enter the design so
    that the truncation error does not leak into the low-order coefficients;
    only |alpha| <= 2 is returned, as {alpha: [C_alpha(l) for l]}.
    """
    from scipy.linalg import expm
    from .wigner import wigner_matrix_su2
    alphas = [a for k in range(fit_order + 1) for a in _multi_indices(k)]
    ys = []
    for _ in range(npts):
        t = rng.standard_normal(3)
        t *= radius * rng.uniform(0.2, 1.0) / np.linalg.norm(t)
        Y = 0.5 * np.array([[1j * t[2], 1j * t[0] - t[1]], [1j * t[0] + t[1], -1j * t[2]]])
        ys.append(expm(Y))
    ys = np.array(ys)
    yinv = np.conj(np.swapaxes(ys, -1, -2))
    qv = {"+": -np.conj(yinv[:, 0, 1]), "-": yinv[:, 0, 1], "0": yinv[:, 0, 0] - np.conj(yinv[:, 0, 0])}
    design = np.stack([qv["+"] ** a[0] * qv["-"] ** a[1] * qv["0"] ** a[2] for a in alphas], axis=1)
    out = {a: [] for a in alphas if sum(a) <= 2}
    for l2 in range(2 * lmax + 1):
        # T(xy) = T(x) T(y): the coefficient acting on the right is T(y) expanded
        Ty = wigner_matrix_su2(l2 / 2, ys).reshape(npts, -1)
        coef, *_ = np.linalg.lstsq(design, Ty, rcond=None)
        for i, a in enumerate(alphas):
            if a in out:
                out[a].append(coef[i].reshape(l2 + 1, l2 + 1))
    return out


def taylor_closed_form_right(alpha, l2: int) -> np.ndarray:
    """Right factor R with d^(alpha) T^l = T^l R (for comparison with calibration)."""
    d = l2 + 1
    out = np.zeros((d, d), dtype=complex)
    for w, word in taylor_word(alpha):
        m = np.eye(d, dtype=complex)
        for mu in word:
            m = m @ sigma(mu, l2)
        out += w * m
    return out


# ------------------------------------------------- composition and adjoint

def _d_alpha(a: Symbol, alpha) -> Symbol:
    out = a
    for mu, k in zip(MU, alpha):
        for _ in range(k):
            out = difference(out, mu)
    return out


def compose(a: Symbol, b: Symbol, N: int = 2) -> Symbol:
    """sum_{|alpha| < N} D^alpha a * d^(alpha) b."""
    if not 1 <= N <= 3:
        raise ValueError("N must be 1, 2 or 3")
    out = a.matmul(b)
    for k in range(1, N):
        for alpha in _multi_indices(k):
            da = _d_alpha(a, alpha)
            if b.is_multiplier:
                continue
            out = out + da.matmul(taylor_x(alpha, b))
    out.order = a.order + b.order
    return out


def adjoint(a: Symbol, N: int = 2) -> Symbol:
    """sum_{|alpha| < N} D^alpha d^(alpha) a^*."""
    if not 1 <= N <= 3:
        raise ValueError("N must be 1, 2 or 3")
    astar = a.conj_transpose()
    out = astar
    if not a.is_multiplier:
        for k in range(1, N):
            for alpha in _multi_indices(k):
                out = out + _d_alpha(taylor_x(alpha, astar), alpha)
    out.order = a.order
    return out


# ------------------------------------------------ cut-offs and para-products

def admissible_cutoff(delta: float = 0.25) -> Callable[[float, float], float]:
    """chi(mu, lam) = phi(2 mu / (delta <lam>)) with mu, lam the x- and l-frequencies."""
    def chi(mu: float, l: float) -> float:
        return float(H.lp_phi(2.0 * mu / (delta * H.japanese(l))))
    return chi


def hard_cutoff(delta: float = 0.25) -> Callable[[float, float], float]:
    def chi(mu: float, l: float) -> float:
        return 1.0 if mu < delta * H.japanese(l) else 0.0
    return chi


def paraproduct_cutoff(gap: int = 10, L=None) -> Callable[[float, float], float]:
    """The cut-off implicit in the dyadic para-product with the given gap."""
    def chi(mu: float, l: float) -> float:
        lam = H.frequency(l)
        tot = 0.0
        for j in range(0, 64):
            hj = float(H.lp_h(lam / 2.0 ** j))
            if hj:
                tot += float(H.lp_phi(mu / 2.0 ** (j - gap))) * hj
            if 2.0 ** (j - 1) > lam:
                break
        return tot
    return chi


def regularize(a: Symbol, delta: float = 0.25, chi: Callable[[float, float], float] | None = None) -> Symbol:
    """Damp the x-frequency content eta of every entry by chi(sqrt(eta(eta+1)), l)."""
    chi = admissible_cutoff(delta) if chi is None else chi
    if a.is_multiplier:
        return Symbol(a.grid, [b.copy() for b in a.data], a.order, a.edge)
    grid = a.grid
    out = []
    for l2 in range(a.L2 + 1):
        blocks = forward_batch(a.full(l2), grid)
        l = l2 / 2
        blocks = [chi(H.frequency(e2 / 2), l) * b for e2, b in enumerate(blocks)]
        out.append(inverse_batch(blocks, grid))
    return Symbol(grid, out, a.order, a.edge)


def paraproduct(a: GridFunction | np.ndarray, u: SpectralCoeffs, gap: int = 10,
                grid: EulerGrid | None = None) -> GridFunction:
    """T_a u = sum_j lowpass_{2^{j-gap}}(a) * Delta_j u, on the grid."""
    if isinstance(a, GridFunction):
        grid, avals = a.grid, a.values
    else:
        avals = np.asarray(a)
    ahat = H.forward(GridFunction(grid, avals))
    out = np.zeros(grid.shape, dtype=complex)
    for j in range(H.n_blocks(u.L) + 1):
        blk = H.lp_block(u, j)
        if blk.max_abs() == 0:
            continue
        low = H.inverse(H.lp_lowpass(ahat, 2.0 ** (j - gap)), grid).values
        out += low * H.inverse(blk.truncate(grid.L), grid).values
    return GridFunction(grid, out)


def bony_paralinearize(F: Callable[[np.ndarray], np.ndarray], dF: Callable[[np.ndarray], np.ndarray],
                       u: SpectralCoeffs, grid: EulerGrid, gap: int = 10) -> tuple[GridFunction, GridFunction]:
    """(F(u), F(u) - T_{F'(u)} u - F(u_low)) on the grid; u_low is the low-pass part."""
    uv = H.inverse(u, grid).values
    Fu = F(uv)
    Tu = paraproduct(GridFunction(grid, dF(uv)), u, gap=gap, grid=grid).values
    ulow = H.inverse(H.lp_lowpass(u), grid).values
    return GridFunction(grid, Fu), GridFunction(grid, Fu - Tu - F(ulow))


def level_probe(L2: int, l2: int, rng: np.random.Generator) -> SpectralCoeffs:
    """Unit-norm coefficients concentrated at a single level."""
    c = SpectralCoeffs.zeros(L2 / 2)
    b = rng.standard_normal((l2 + 1, l2 + 1)) + 1j * rng.standard_normal((l2 + 1, l2 + 1))
    c.blocks[l2][...] = b
    return c * (1.0 / c.norm())
