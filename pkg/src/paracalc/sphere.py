"""Functions and symbols on the 2-sphere through their SU(2) lifts.

A function f on S^2 lifts to f#(phi, theta, psi) = f(sin t cos p, sin t sin p, cos t)
with (t, p) = (theta, psi). Its SU(2) coefficients vanish on half-integer
levels and, on integer levels, live in the column n = 0 of fhat(l). We call
that column the *lift vector* v_l and store all of them in a padded array
``cols[l, m + L]``.

The lift phase was fixed by comparison with scipy's spherical harmonics:

    T^l_{0m}(theta, psi) = i^m sqrt(4 pi / (2l + 1)) Y_l^{-m}(theta, psi).
"""
from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import sph_harm_y

from . import harmonic as H
from .harmonic import SpectralCoeffs, DimensionError
from .symcalc import MU, difference_level, sigma, sigma_x
from .wigner import DomainError, wigner_p_table


class InvarianceError(ValueError):
    """Raised when coefficients are not the lift of a function on S^2."""


# ----------------------------------------------------------------- grids

@lru_cache(maxsize=16)
def _p0_table(L: int, ct: tuple) -> np.ndarray:
    """P^l_{0m}(cos theta) padded to shape (L+1, 2L+1, ntheta).

    Row n = 0 of the Wigner table is a rescaled spherical harmonic,
    P^l_{0m}(cos t) = i^m sqrt(4 pi / (2l+1)) Y_l^{-m}(t, 0), which scipy
    evaluates stably; the exact table is kept as a cross-check in the tests.
    """
    th = np.arccos(np.clip(np.array(ct), -1.0, 1.0))
    l = np.arange(L + 1)[:, None, None]
    m = np.arange(-L, L + 1)[None, :, None]
    ok = np.abs(m) <= l
    Y = sph_harm_y(l, np.where(ok, -m, 0), th[None, None, :], 0.0)
    out = np.where(ok, (1j ** (m % 4)) * np.sqrt(4 * np.pi / (2 * l + 1)) * Y, 0.0)
    out.setflags(write=False)
    return out


def p0_table_exact(L: int, z: np.ndarray) -> np.ndarray:
    """Same table from the exact Wigner polynomials (slow)."""
    z = np.asarray(z, dtype=float)
    out = np.zeros((L + 1, 2 * L + 1, z.size), dtype=complex)
    for l in range(L + 1):
        out[l, L - l:L + l + 1] = wigner_p_table(l, z)[l]
    return out


@dataclass(frozen=True)
class SphereGrid:
    """Gauss-Legendre in cos(theta) times uniform psi in [0, 2pi).

    ``L`` is the largest degree the grid analyses. With ``axisymmetric`` the
    psi axis collapses to the single meridian psi = 0 and only m = 0 is
    analysed; this is exact for zonal functions and much cheaper.
    """

    L: int
    theta: np.ndarray
    psi: np.ndarray
    wtheta: np.ndarray  # normalised: sums to 1
    axisymmetric: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.theta.size, self.psi.size)

    @property
    def area_weights(self) -> np.ndarray:
        """Weights for the standard area measure (total 4 pi)."""
        return np.broadcast_to(4 * np.pi * self.wtheta[:, None] / self.psi.size, self.shape)

    def integrate(self, values: np.ndarray) -> complex | np.ndarray:
        """Integral against the standard measure over the first two axes."""
        v = np.asarray(values)
        return 4 * np.pi * np.einsum("tp...,t->...", v, self.wtheta) / self.psi.size

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.theta, self.psi, indexing="ij")

    def points(self) -> np.ndarray:
        t, p = self.mesh()
        return np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1)

    def ptable(self, L: int | None = None) -> np.ndarray:
        L = self.L if L is None else L
        return _p0_table(L, tuple(np.cos(self.theta)))

    def etable(self, L: int | None = None) -> np.ndarray:
        """exp(-i m psi) with shape (2L+1, npsi)."""
        L = self.L if L is None else L
        key = ("E", L)
        if key not in self._cache:
            m = np.arange(-L, L + 1)
            self._cache[key] = np.exp(-1j * m[:, None] * self.psi[None, :])
        return self._cache[key]

    def _wtable(self, L: int) -> np.ndarray:
        """P table with the (2l+1) synthesis weight folded in."""
        key = ("W", L)
        if key not in self._cache:
            self._cache[key] = self.ptable(L) * (2.0 * np.arange(L + 1) + 1)[:, None, None]
        return self._cache[key]

    # values have shape (ntheta, npsi, *batch); cols (L+1, 2L+1, *batch)
    def synth(self, cols: np.ndarray) -> np.ndarray:
        L = cols.shape[0] - 1
        W = self._wtable(L)
        if self.axisymmetric:
            # psi = 0 only, where every exp(-i m psi) is 1; zonal data has m = 0 alone
            F = np.einsum("lm...,lmt->t...", cols, W)
            return F[:, None]
        F = np.einsum("lm...,lmt->mt...", cols, W)
        return np.einsum("mt...,mp->tp...", F, self.etable(L))

    def analyze(self, values: np.ndarray, L: int | None = None) -> np.ndarray:
        L = self.L if L is None else L
        values = np.asarray(values)
        P = self.ptable(L)
        if self.axisymmetric:
            cols = np.zeros((L + 1, 2 * L + 1) + values.shape[2:], dtype=complex)
            cols[:, L] = np.einsum("t...,lt->l...", values[:, 0] * self.wtheta.reshape((-1,) + (1,) * (values.ndim - 2)),
                                   P[:, L].conj())
            return cols
        E = self.etable(L)
        G = np.einsum("tp...,mp->mt...", values, E.conj()) / self.psi.size
        G = G * self.wtheta.reshape((1, -1) + (1,) * (G.ndim - 2))
        return np.einsum("mt...,lmt->lm...", G, P.conj())


def make_sphere_grid(L: int, axisymmetric: bool = False) -> SphereGrid:
    """Grid that integrates products of two degree-L functions exactly."""
    if L < 0:
        raise DomainError("L must be non-negative")
    nth = L + 2
    x, w = np.polynomial.legendre.leggauss(nth)
    order = np.argsort(-x)
    theta = np.arccos(x[order])
    npsi = 1 if axisymmetric else 2 * L + 3
    psi = 2 * np.pi * np.arange(npsi) / npsi
    return SphereGrid(L, theta, psi, w[order] / 2.0, axisymmetric)


def dealiased_grid(L: int, axisymmetric: bool = False) -> SphereGrid:
    """Grid for quadratic products of degree-L data (three-halves rule)."""
    g = make_sphere_grid((3 * L + 1) // 2, axisymmetric)
    return g


def pad_cols(cols: np.ndarray, L: int) -> np.ndarray:
    """Truncate or zero-pad lift vectors to degree L."""
    L0 = cols.shape[0] - 1
    out = np.zeros((L + 1, 2 * L + 1) + cols.shape[2:], dtype=complex)
    k = min(L, L0)
    out[:k + 1, L - k:L + k + 1] = cols[:k + 1, L0 - k:L0 + k + 1]
    return out


def degree_mask(L: int) -> np.ndarray:
    l = np.arange(L + 1)[:, None]
    m = np.arange(-L, L + 1)[None, :]
    return np.abs(m) <= l


# ---------------------------------------------------------- sphere functions

def _kappa(L: int) -> np.ndarray:
    """Factor c_{l,-m} = kappa[l, m] v_l[m] between lift vectors and SH coefficients."""
    l = np.arange(L + 1)[:, None]
    m = np.arange(-L, L + 1)[None, :]
    return np.sqrt(4 * np.pi * (2 * l + 1)) * (1j ** (m % 4)) * (np.abs(m) <= l)


@dataclass
class SphereFunction:
    """f = sum c[l, m] Y_l^m with standard complex spherical harmonics; c stored as c[l, m + L]."""

    L: int
    c: np.ndarray

    @classmethod
    def zeros(cls, L: int) -> "SphereFunction":
        return cls(L, np.zeros((L + 1, 2 * L + 1), dtype=complex))

    @classmethod
    def harmonic(cls, L: int, l: int, m: int, amp: complex = 1.0) -> "SphereFunction":
        if abs(m) > l or l > L:
            raise DomainError(f"(l={l}, m={m}) not available at L={L}")
        f = cls.zeros(L)
        f.c[l, m + L] = amp
        return f

    @classmethod
    def real_harmonic(cls, L: int, l: int, m: int, amp: float = 1.0) -> "SphereFunction":
        """Real orthonormal harmonic: sqrt2 Re/Im of Y_l^|m| with the usual (-1)^m."""
        f = cls.zeros(L)
        if m == 0:
            f.c[l, L] = amp
        elif m > 0:
            f.c[l, L + m] = amp / np.sqrt(2)
            f.c[l, L - m] = amp * (-1) ** m / np.sqrt(2)
        else:
            k = -m
            f.c[l, L + k] = amp / (np.sqrt(2) * 1j)
            f.c[l, L - k] = -amp * (-1) ** k / (np.sqrt(2) * 1j)
        return f

    @classmethod
    def random(cls, L: int, rng: np.random.Generator, real: bool = True, decay: float = 0.0,
               lmin: int = 0) -> "SphereFunction":
        f = cls.zeros(L)
        for l in range(lmin, L + 1):
            for m in range(-l, l + 1):
                f.c[l, m + L] = (rng.standard_normal() + 1j * rng.standard_normal()) / (1 + l) ** decay
        return f.realpart() if real else f

    def realpart(self) -> "SphereFunction":
        """Coefficients of Re f via c_{l,-m} = (-1)^m conj(c_{l,m})."""
        L = self.L
        m = np.arange(-L, L + 1)
        flipped = ((-1.0) ** m)[None, :] * np.conj(self.c[:, ::-1])
        return SphereFunction(L, 0.5 * (self.c + flipped))

    def is_real(self, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.c - self.realpart().c).max() <= tol * max(1.0, np.abs(self.c).max()))

    def copy(self) -> "SphereFunction":
        return SphereFunction(self.L, self.c.copy())

    def __add__(self, o: "SphereFunction") -> "SphereFunction":
        L = max(self.L, o.L)
        return SphereFunction(L, self.truncate(L).c + o.truncate(L).c)

    def __sub__(self, o: "SphereFunction") -> "SphereFunction":
        return self + o * (-1.0)

    def __mul__(self, s: complex) -> "SphereFunction":
        return SphereFunction(self.L, s * self.c)

    __rmul__ = __mul__

    def truncate(self, L: int) -> "SphereFunction":
        return SphereFunction(L, pad_cols(self.c, L))

    def coeff(self, l: int, m: int) -> complex:
        return complex(self.c[l, m + self.L]) if l <= self.L else 0.0

    # lift vectors
    def to_cols(self) -> np.ndarray:
        L = self.L
        k = _kappa(L)
        cols = np.zeros_like(self.c)
        # c_{l,-m} = k[l,m] v_l[m]  ->  v_l[m] = c[l, -m] / k[l, m]
        ok = k != 0
        cols[ok] = self.c[:, ::-1][ok] / k[ok]
        return cols

    @classmethod
    def from_cols(cls, cols: np.ndarray) -> "SphereFunction":
        L = cols.shape[0] - 1
        return cls(L, (_kappa(L) * cols)[:, ::-1].copy())

    def values(self, grid: SphereGrid) -> np.ndarray:
        return grid.synth(pad_cols(self.to_cols(), self.L))

    @classmethod
    def from_values(cls, values: np.ndarray, grid: SphereGrid, L: int | None = None) -> "SphereFunction":
        return cls.from_cols(grid.analyze(values, L))

    # norms use the probability measure mu_0 / 4 pi, so lifting is an isometry
    def norm(self) -> float:
        return self.sobolev_norm(0.0)

    def sobolev_norm(self, s: float) -> float:
        l = np.arange(self.L + 1)
        w = (1.0 + l * (l + 1)) ** s
        return float(np.sqrt((w[:, None] * np.abs(self.c) ** 2).sum() / (4 * np.pi)))

    def degree_projection(self, n: int) -> "SphereFunction":
        f = SphereFunction.zeros(self.L)
        if n <= self.L:
            f.c[n] = self.c[n]
        return f

    def to_json(self) -> dict:
        out = []
        for l in range(self.L + 1):
            for m in range(-l, l + 1):
                v = self.c[l, m + self.L]
                out.append({"l": l, "m": m, "re": float(v.real), "im": float(v.imag)})
        return {"L": self.L, "coeffs": out}

    @classmethod
    def from_json(cls, obj: dict) -> "SphereFunction":
        try:
            f = cls.zeros(int(obj["L"]))
            for e in obj["coeffs"]:
                l, m = int(e["l"]), int(e["m"])
                if l > f.L or abs(m) > l:
                    raise DimensionError(f"coefficient (l={l}, m={m}) outside L={f.L}")
                f.c[l, m + f.L] = float(e["re"]) + 1j * float(e.get("im", 0.0))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DimensionError):
                raise
            raise DimensionError(f"malformed sphere function: {exc}") from exc
        return f

    def to_real(self) -> dict[tuple[int, int], float]:
        """Coefficients in the real orthonormal basis of :meth:`real_harmonic`."""
        out = {}
        L = self.L
        for l in range(L + 1):
            out[(l, 0)] = float(self.c[l, L].real)
            for m in range(1, l + 1):
                out[(l, m)] = float(np.sqrt(2) * self.c[l, L + m].real)
                out[(l, -m)] = float(-np.sqrt(2) * self.c[l, L + m].imag)
        return out

    @classmethod
    def from_real(cls, L: int, coeffs: dict[tuple[int, int], float]) -> "SphereFunction":
        f = cls.zeros(L)
        for (l, m), a in coeffs.items():
            f = f + cls.real_harmonic(L, l, m, a)
        return f


def sph_values(f: SphereFunction, theta: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Direct evaluation with scipy's spherical harmonics (independent of the lift)."""
    from scipy.special import sph_harm_y
    theta, psi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(psi, float))
    out = np.zeros(theta.shape, dtype=complex)
    for l in range(f.L + 1):
        for m in range(-l, l + 1):
            c = f.c[l, m + f.L]
            if c != 0:
                out += c * sph_harm_y(l, m, theta, psi)
    return out


# ------------------------------------------------------------ lift / project

def lift(f: SphereFunction, L: float | None = None) -> SpectralCoeffs:
    """SU(2) coefficients of the lift (column n = 0 of integer levels)."""
    L2 = 2 * f.L if L is None else int(round(2 * L))
    out = SpectralCoeffs.zeros(L2 / 2)
    cols = f.to_cols()
    for l in range(min(f.L, L2 // 2) + 1):
        out.blocks[2 * l][:, l] = cols[l, f.L - l:f.L + l + 1]
    return out


def t3_defect(c: SpectralCoeffs) -> float:
    """Largest coefficient outside the admissible slots."""
    worst = 0.0
    for l2, b in enumerate(c.blocks):
        if l2 % 2:
            worst = max(worst, float(np.abs(b).max()))
        else:
            l = l2 // 2
            mask = np.ones(b.shape, dtype=bool)
            mask[:, l] = False
            if mask.any():
                worst = max(worst, float(np.abs(b[mask]).max()))
    return worst


def is_t3_invariant(c: SpectralCoeffs, tol: float = 1e-12) -> tuple[bool, float]:
    d = t3_defect(c)
    scale = max(1.0, c.max_abs())
    return d <= tol * scale, d


def project(c: SpectralCoeffs, tol: float = 1e-10) -> SphereFunction:
    ok, d = is_t3_invariant(c, tol)
    if not ok:
        raise InvarianceError(f"T3-invariance defect {d:.3e} exceeds {tol:.1e}")
    L = c.L2 // 2
    cols = np.zeros((L + 1, 2 * L + 1), dtype=complex)
    for l in range(L + 1):
        cols[l, L - l:L + l + 1] = c.blocks[2 * l][:, l]
    return SphereFunction.from_cols(cols)


# -------------------------------------------------- surface differentiation

@lru_cache(maxsize=None)
def _field_ops(L: int) -> np.ndarray:
    """sigma[X_j] on padded lift vectors: shape (3, L+1, 2L+1, 2L+1)."""
    out = np.zeros((3, L + 1, 2 * L + 1, 2 * L + 1), dtype=complex)
    for j in range(3):
        for l in range(L + 1):
            out[j, l, L - l:L + l + 1, L - l:L + l + 1] = sigma_x(j + 1, 2 * l)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _mu_ops(L: int) -> np.ndarray:
    out = np.zeros((3, L + 1, 2 * L + 1, 2 * L + 1))
    for j, mu in enumerate(MU):
        for l in range(L + 1):
            out[j, l, L - l:L + l + 1, L - l:L + l + 1] = sigma(mu, 2 * l)
    out.setflags(write=False)
    return out


def apply_field(cols: np.ndarray, j: int) -> np.ndarray:
    """X_j (j = 1, 2, 3) on lift vectors; batch axes trail."""
    L = cols.shape[0] - 1
    return np.einsum("lmk,lk...->lm...", _field_ops(L)[j - 1], cols)


def apply_mu(cols: np.ndarray, mu: str) -> np.ndarray:
    L = cols.shape[0] - 1
    return np.einsum("lmk,lk...->lm...", _mu_ops(L)[MU.index(mu)], cols)


def laplacian_cols(cols: np.ndarray) -> np.ndarray:
    L = cols.shape[0] - 1
    l = np.arange(L + 1)
    return -(l * (l + 1)).reshape((-1,) + (1,) * (cols.ndim - 1)) * cols


def surface_gradient(f: SphereFunction, grid: SphereGrid) -> np.ndarray:
    """Frame components (X_1 f, X_2 f, X_3 f) on the grid, shape (3, nt, np)."""
    cols = pad_cols(f.to_cols(), f.L)
    return np.stack([grid.synth(apply_field(cols, j)) for j in (1, 2, 3)])


def grad_sq(f: SphereFunction, grid: SphereGrid) -> np.ndarray:
    g = surface_gradient(f, grid)
    return np.einsum("j...,j...->...", g, g)


def surface_hessian(f: SphereFunction, grid: SphereGrid) -> np.ndarray:
    """Symmetric frame Hessian (X_i X_j + X_j X_i) f / 2 on the grid, shape (3, 3, nt, np)."""
    cols = pad_cols(f.to_cols(), f.L)
    first = [apply_field(cols, j) for j in (1, 2, 3)]
    out = np.empty((3, 3) + grid.shape, dtype=complex)
    for i in range(3):
        for j in range(i, 3):
            v = 0.5 * (apply_field(first[j], i + 1) + apply_field(first[i], j + 1))
            out[i, j] = out[j, i] = grid.synth(v)
    return out


def laplace_beltrami(f: SphereFunction) -> SphereFunction:
    return SphereFunction.from_cols(laplacian_cols(f.to_cols()))


def laplace_via_fields(f: SphereFunction) -> SphereFunction:
    cols = f.to_cols()
    out = sum(apply_field(apply_field(cols, j), j) for j in (1, 2, 3))
    return SphereFunction.from_cols(out)


def field_derivative_values(values: np.ndarray, grid: SphereGrid, j: int, L: int | None = None) -> np.ndarray:
    """X_j applied to (batched) grid functions of degree <= L."""
    cols = grid.analyze(values, L)
    return grid.synth(apply_field(cols, j))


def mu_derivative_values(values: np.ndarray, grid: SphereGrid, mu: str, L: int | None = None) -> np.ndarray:
    cols = grid.analyze(values, L)
    return grid.synth(apply_mu(cols, mu))


# ----------------------------------------------------------- T3 symbols

class T3Symbol:
    """A T3-invariant symbol stored on the nodes of a sphere grid.

    ``fn(l2)`` returns an array of shape (nt, np, d, d) or (d, d) (x-independent)
    with d = l2 + 1. Levels are produced lazily and cached, so derived symbols
    (products, differences, derivatives) cost nothing until a level is asked for.
    """

    max_cached_levels = 4  # per symbol; levels are usually visited in increasing order

    def __init__(self, grid: SphereGrid, fn: Callable[[int], np.ndarray], order: float = 0.0,
                 Lx: int | None = None, name: str = "", cache: bool = True):
        self.grid = grid
        self._fn = fn
        self.order = order
        self.Lx = grid.L if Lx is None else Lx  # degree used for x-derivatives
        self.name = name
        self.cache = cache
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()

    def level(self, l2: int) -> np.ndarray | None:
        if l2 < 0:
            return None
        if not self.cache:
            return np.asarray(self._fn(l2))
        if l2 in self._cache:
            self._cache.move_to_end(l2)
            return self._cache[l2]
        val = np.asarray(self._fn(l2))
        self._cache[l2] = val
        while len(self._cache) > self.max_cached_levels:
            self._cache.popitem(last=False)
        return val

    def full(self, l2: int) -> np.ndarray:
        b = self.level(l2)
        return np.broadcast_to(b, self.grid.shape + b.shape[-2:])

    def _derive(self, fn, order=None, name="", cache=True) -> "T3Symbol":
        return T3Symbol(self.grid, fn, self.order if order is None else order, self.Lx, name, cache)

    # algebra; cheap entrywise operations are recomputed rather than cached
    def __add__(self, o) -> "T3Symbol":
        if not isinstance(o, T3Symbol):
            return NotImplemented
        return self._derive(lambda l2: self.level(l2) + o.level(l2), max(self.order, o.order), cache=False)

    def __sub__(self, o) -> "T3Symbol":
        return self._derive(lambda l2: self.level(l2) - o.level(l2), max(self.order, o.order), cache=False)

    def __mul__(self, s) -> "T3Symbol":
        if isinstance(s, T3Symbol):
            return self.matmul(s)
        return self._derive(lambda l2: s * self.level(l2), cache=False)

    __rmul__ = __mul__

    def __neg__(self) -> "T3Symbol":
        return self * (-1.0)

    def matmul(self, o: "T3Symbol") -> "T3Symbol":
        return self._derive(lambda l2: self.level(l2) @ o.level(l2), self.order + o.order, cache=False)

    def cached(self) -> "T3Symbol":
        """A caching view, for symbols that are read at several neighbouring levels."""
        return self if self.cache else self._derive(self.level, name=self.name, cache=True)

    def times_function(self, g: np.ndarray) -> "T3Symbol":
        g = np.asarray(g)[..., None, None]
        return self._derive(lambda l2: g * self.level(l2), cache=False)

    def conj_transpose(self) -> "T3Symbol":
        return self._derive(lambda l2: np.conj(np.swapaxes(self.level(l2), -1, -2)), cache=False)

    def map(self, fn: Callable[[np.ndarray, int], np.ndarray], order: float | None = None) -> "T3Symbol":
        return self._derive(lambda l2: fn(self.level(l2), l2), order)

    # calculus
    def difference(self, mu: str) -> "T3Symbol":
        src = self.cached()
        return self._derive(lambda l2: difference_level(src.level, mu, l2), self.order - 1, cache=False)

    def x_coefficients(self) -> "T3Symbol":
        """Per level, the entrywise spherical-harmonic analysis of a(., l) at degree Lx (cached)."""
        if getattr(self, "_xcoef", None) is None:
            def fn(l2):
                b = self.level(l2)
                return b if b.ndim == 2 else self.grid.analyze(b, self.Lx)
            self._xcoef = self._derive(fn)
        return self._xcoef

    def x_derivative(self, mu: str) -> "T3Symbol":
        """Entrywise left-invariant derivative d_mu of the x-dependence."""
        coef = self.x_coefficients()

        def fn(l2):
            c = coef.level(l2)
            if c.ndim == 2:
                return np.zeros_like(c, dtype=complex)
            return self.grid.synth(apply_mu(c, mu))
        return self._derive(fn)

    def max_abs(self, l2: int) -> float:
        return float(np.abs(self.level(l2)).max())

    # constructors
    @classmethod
    def multiplier(cls, grid: SphereGrid, fn: Callable[[int], np.ndarray], order: float = 0.0) -> "T3Symbol":
        return cls(grid, fn, order)

    @classmethod
    def scalar(cls, grid: SphereGrid, g: np.ndarray) -> "T3Symbol":
        g = np.asarray(g, dtype=complex)
        return cls(grid, lambda l2: g[..., None, None] * np.eye(l2 + 1), 0.0, cache=False)

    @classmethod
    def identity(cls, grid: SphereGrid) -> "T3Symbol":
        return cls(grid, lambda l2: np.eye(l2 + 1, dtype=complex), 0.0)

    @classmethod
    def sigma(cls, grid: SphereGrid, mu: str) -> "T3Symbol":
        return cls(grid, lambda l2: sigma(mu, l2).astype(complex), 1.0)

    @classmethod
    def vector_field(cls, grid: SphereGrid, comps: np.ndarray) -> "T3Symbol":
        """Symbol sum_j b_j(x) sigma[X_j](l) of the field sum_j b_j X_j."""
        comps = np.asarray(comps)
        return cls(grid, lambda l2: sum(comps[j][..., None, None] * sigma_x(j + 1, l2) for j in range(3)), 1.0)


def compose_t3(a: T3Symbol, b: T3Symbol, r: int = 1) -> T3Symbol:
    """a #_r b = sum_{|alpha| <= r} D^alpha a . d^(alpha) b for r <= 1."""
    if r not in (0, 1):
        raise ValueError("only r = 0, 1 are provided for T3 symbols")
    out = a.matmul(b)
    if r == 1:
        for mu in MU:
            out = out + a.difference(mu).matmul(b.x_derivative(mu))
    out.order = a.order + b.order
    return out


def adjoint_t3(a: T3Symbol, r: int = 1) -> T3Symbol:
    """a^{bullet; r} = sum_{|alpha| <= r} D^alpha d^(alpha) a^*."""
    s = a.conj_transpose()
    out = s
    if r == 1:
        for mu in MU:
            out = out + s.x_derivative(mu).difference(mu)
    out.order = a.order
    return out


def eig_function(a: T3Symbol, f: Callable[[np.ndarray], np.ndarray], order: float,
                 herm_tol: float = 1e-8) -> T3Symbol:
    """f applied to a Hermitian symbol through its per-node eigendecomposition."""
    def fn(l2):
        M = a.level(l2)
        defect = np.abs(M - np.conj(np.swapaxes(M, -1, -2))).max()
        scale = max(1.0, np.abs(M).max())
        if defect > herm_tol * scale:
            raise ArithmeticError(f"symbol not Hermitian at l={l2 / 2}: defect {defect:.2e}")
        w, V = np.linalg.eigh(0.5 * (M + np.conj(np.swapaxes(M, -1, -2))))
        return (V * f(w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    return a._derive(fn, order)


# ------------------------------------------------------ T3 quantization

def _chi_weights(chi: Callable[[float, float], float] | None, Lx: int, l: float) -> np.ndarray:
    if chi is None:
        return np.ones(Lx + 1)
    return np.array([chi(H.frequency(e), l) for e in range(Lx + 1)])


def quantize_t3(a: T3Symbol, f: np.ndarray | SphereFunction, out: SphereGrid | None = None,
                chi: Callable[[float, float], float] | None = None, Lout: int | None = None,
                skip_tol: float = 1e-14) -> np.ndarray:
    """Op(a^chi) f for lifted f; returns lift vectors of degree ``Lout``.

    Without ``chi`` the symbol is used as is and the product is formed on the
    symbol grid. With ``chi`` every column a(x, l) v_l is filtered in x by
    chi(sqrt(eta(eta+1)), l) before being multiplied by T^l(x) on ``out``.
    """
    cols = f.to_cols() if isinstance(f, SphereFunction) else np.asarray(f)
    Lf = cols.shape[0] - 1
    g = a.grid
    out = g if out is None else out
    Lout = out.L if Lout is None else Lout
    acc = np.zeros(out.shape, dtype=complex)
    Pout = out.ptable(Lf)
    Eout = out.etable(Lf)
    floor = skip_tol * float(np.abs(cols).max()) if cols.size else 0.0
    for l in range(Lf + 1):
        v = cols[l, Lf - l:Lf + l + 1]
        if not np.any(np.abs(v) > floor):
            continue
        w = a.level(2 * l) @ v  # (nt, np, d) or (d,)
        if w.ndim == 1:
            w = np.broadcast_to(w, g.shape + w.shape)
        if chi is not None or out is not g:
            wc = g.analyze(w, a.Lx)
            wc = wc * _chi_weights(chi, a.Lx, l)[:, None, None]
            w = out.synth(wc)
        # Op(a)f = sum_l (2l+1) sum_m' T^l_{0m'}(x) w_m'(x)
        T = Pout[l, Lf - l:Lf + l + 1][:, :, None] * Eout[Lf - l:Lf + l + 1][:, None, :]  # (d, nt, np)
        acc += (2 * l + 1) * np.einsum("dtp,tpd->tp", T, w)
    return out.analyze(acc, Lout)


def para_vector_field(comps: np.ndarray, f_cols: np.ndarray, grid: SphereGrid, out: SphereGrid,
                      chi: Callable[[float, float], float] | None, Lx: int, Lout: int) -> np.ndarray:
    """T_b . nabla f = sum_j T_{b_j} X_j f with each T_{b_j} a para-product-by-symbol."""
    total = np.zeros((Lout + 1, 2 * Lout + 1), dtype=complex)
    for j in range(3):
        sym = T3Symbol.scalar(grid, comps[j])
        sym.Lx = Lx
        total += quantize_t3(sym, apply_field(f_cols, j + 1), out, chi, Lout)
    return total
