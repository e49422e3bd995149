"""Matrix-valued Fourier analysis on SU(2).

Coefficients follow ``fhat(l)[m, n] = integral f * conj(T^l_{nm})`` so that the
inverse transform is ``f(x) = sum_l (2l+1) Tr(fhat(l) T^l(x))``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .wigner import EulerGrid, DomainError, twice


class DimensionError(ValueError):
    pass


@dataclass
class SpectralCoeffs:
    """Per-level coefficient matrices; ``blocks[l2]`` has shape (l2+1, l2+1)."""

    L2: int
    blocks: list[np.ndarray]

    @property
    def L(self) -> float:
        return self.L2 / 2

    @classmethod
    def zeros(cls, L) -> "SpectralCoeffs":
        L2 = twice(L)
        return cls(L2, [np.zeros((l2 + 1, l2 + 1), dtype=complex) for l2 in range(L2 + 1)])

    @classmethod
    def random(cls, L, rng: np.random.Generator, integer_only: bool = False) -> "SpectralCoeffs":
        c = cls.zeros(L)
        for l2, b in enumerate(c.blocks):
            if integer_only and l2 % 2:
                continue
            b[...] = rng.standard_normal(b.shape) + 1j * rng.standard_normal(b.shape)
            b /= np.sqrt(l2 + 1)
        return c

    def copy(self) -> "SpectralCoeffs":
        return SpectralCoeffs(self.L2, [b.copy() for b in self.blocks])

    def __add__(self, other: "SpectralCoeffs") -> "SpectralCoeffs":
        _check(self, other)
        return SpectralCoeffs(self.L2, [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other: "SpectralCoeffs") -> "SpectralCoeffs":
        _check(self, other)
        return SpectralCoeffs(self.L2, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __mul__(self, s: complex) -> "SpectralCoeffs":
        return SpectralCoeffs(self.L2, [s * b for b in self.blocks])

    __rmul__ = __mul__

    def map_levels(self, fn: Callable[[int, np.ndarray], np.ndarray]) -> "SpectralCoeffs":
        return SpectralCoeffs(self.L2, [fn(l2, b) for l2, b in enumerate(self.blocks)])

    def inner(self, other: "SpectralCoeffs") -> complex:
        """sum (2l+1) <a(l), b(l)>_HS, the L2 pairing on the group."""
        _check(self, other)
        return sum((l2 + 1) * np.vdot(b, a) for l2, (a, b) in enumerate(zip(self.blocks, other.blocks)))

    def norm(self) -> float:
        return float(np.sqrt(abs(self.inner(self))))

    def max_abs(self) -> float:
        return max(float(np.abs(b).max()) for b in self.blocks)

    def truncate(self, L) -> "SpectralCoeffs":
        L2 = twice(L)
        out = SpectralCoeffs.zeros(L2 / 2)
        for l2 in range(min(L2, self.L2) + 1):
            out.blocks[l2][...] = self.blocks[l2]
        return out

    def to_json(self) -> dict:
        return {"L": self.L, "levels": [
            {"l2": l2, "re": b.real.tolist(), "im": b.imag.tolist()} for l2, b in enumerate(self.blocks)]}

    @classmethod
    def from_json(cls, obj: dict) -> "SpectralCoeffs":
        try:
            c = cls.zeros(obj["L"])
            for lev in obj["levels"]:
                l2 = int(lev["l2"])
                b = np.asarray(lev["re"], dtype=float) + 1j * np.asarray(lev["im"], dtype=float)
                if b.shape != (l2 + 1, l2 + 1):
                    raise DimensionError(f"level l2={l2} has shape {b.shape}")
                c.blocks[l2][...] = b
        except (KeyError, TypeError, IndexError) as exc:
            raise DimensionError(f"malformed coefficient object: {exc}") from exc
        return c


def _check(a: SpectralCoeffs, b: SpectralCoeffs) -> None:
    if a.L2 != b.L2:
        raise DimensionError(f"band limits differ: {a.L} vs {b.L}")


@dataclass
class GridFunction:
    grid: EulerGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise DimensionError(f"values shape {self.values.shape} != grid {self.grid.shape}")

    def integrate(self) -> complex:
        return self.grid.integrate(self.values)

    def l2_norm(self) -> float:
        return float(np.sqrt(abs(self.grid.integrate(np.abs(self.values) ** 2))))


# ------------------------------------------------------------------ transforms

def forward(f: GridFunction | np.ndarray, grid: EulerGrid | None = None, L=None) -> SpectralCoeffs:
    """Fourier coefficients up to level L (default: the grid's band limit)."""
    if isinstance(f, GridFunction):
        grid, vals = f.grid, f.values
    else:
        vals = np.asarray(f)
        if grid is None or vals.shape != grid.shape:
            raise DimensionError("grid mismatch")
    L2 = grid.L2 if L is None else twice(L)
    if L2 > grid.L2:
        raise DimensionError("requested band limit exceeds the grid's")
    ephi, epsi = grid.exp_tables()
    # F[n, k, m] = mean_a mean_b f e^{i n phi} e^{i m psi}
    F = np.einsum("na,akb,mb->nkm", ephi, vals, epsi, optimize=True) / (grid.shape[0] * grid.shape[2])
    w = grid.theta_weights
    out = SpectralCoeffs.zeros(L2 / 2)
    for l2 in range(L2 + 1):
        sl = slice(grid.L2 - l2, grid.L2 + l2 + 1, 2)
        P = grid.ptable(l2)  # [n, m, k]
        # fhat[m, n] = sum_k w_k F[n, k, m] conj(P[n, m, k])
        out.blocks[l2][...] = np.einsum("nkm,nmk,k->mn", F[sl, :, sl], P.conj(), w)
    return out


def inverse(c: SpectralCoeffs, grid: EulerGrid) -> GridFunction:
    """Pointwise sum_l (2l+1) Tr(fhat(l) T^l(x)) on the grid nodes."""
    if c.L2 > grid.L2:
        raise DimensionError("coefficients exceed the grid band limit")
    ephi, epsi = grid.exp_tables()
    N = 2 * grid.L2 + 1
    G = np.zeros((N, grid.shape[1], N), dtype=complex)
    for l2, b in enumerate(c.blocks):
        sl = slice(grid.L2 - l2, grid.L2 + l2 + 1, 2)
        P = grid.ptable(l2)
        G[sl, :, sl] += (l2 + 1) * np.einsum("mn,nmk->nkm", b, P)
    vals = np.einsum("na,nkm,mb->akb", ephi.conj(), G, epsi.conj(), optimize=True)
    return GridFunction(grid, vals)


def direct_inverse(c: SpectralCoeffs, angles) -> np.ndarray:
    """Inverse transform at arbitrary Euler angles by explicit matrix evaluation."""
    from .wigner import wigner_matrix
    phi, theta, psi = (np.atleast_1d(np.asarray(a, dtype=float)) for a in angles)
    out = np.zeros(np.broadcast(phi, theta, psi).shape, dtype=complex)
    for l2, b in enumerate(c.blocks):
        T = wigner_matrix(l2 / 2, (phi, theta, psi))
        out += (l2 + 1) * np.einsum("mn,...nm->...", b, T)
    return out


def wigner_entry_coeffs(L, l, n, m) -> SpectralCoeffs:
    """Coefficients of the single function T^l_{nm}."""
    c = SpectralCoeffs.zeros(L)
    l2 = twice(l)
    i, j = (twice(n) + l2) // 2, (twice(m) + l2) // 2
    c.blocks[l2][j, i] = 1.0 / (l2 + 1)
    return c


# ------------------------------------------------------------ multipliers

def laplacian_symbol(l: float) -> float:
    return -l * (l + 1)


def japanese(l: float) -> float:
    """<l> = sqrt(1 + l(l+1))."""
    return float(np.sqrt(1.0 + l * (l + 1)))


def apply_multiplier(c: SpectralCoeffs, m: Callable[[float], complex]) -> SpectralCoeffs:
    """Scale every level by the scalar m(l)."""
    return c.map_levels(lambda l2, b: m(l2 / 2) * b)


def sobolev_norm(c: SpectralCoeffs, s: float) -> float:
    tot = 0.0
    for l2, b in enumerate(c.blocks):
        l = l2 / 2
        tot += (l2 + 1) * japanese(l) ** (2 * s) * float(np.vdot(b, b).real)
    return float(np.sqrt(tot))


def convolve(f: SpectralCoeffs, g: SpectralCoeffs) -> SpectralCoeffs:
    """Coefficients of f * g, i.e. ghat(l) fhat(l) per level."""
    _check(f, g)
    return SpectralCoeffs(f.L2, [gb @ fb for fb, gb in zip(f.blocks, g.blocks)])


# ------------------------------------------------------- Littlewood-Paley

def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    def e(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out
    a, b = e(t), e(1.0 - t)
    return a / (a + b)


def lp_phi(lam) -> np.ndarray:
    """Low-pass bump: 1 on |lam| <= 1/2, 0 on |lam| >= 1."""
    lam = np.abs(np.asarray(lam, dtype=float))
    return 1.0 - _smooth_step(2.0 * lam - 1.0)


def lp_phi_prime(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    t = 2.0 * np.abs(lam) - 1.0
    out = np.zeros_like(t)
    inside = (t > 0) & (t < 1)
    u = t[inside]
    a, b = np.exp(-1.0 / u), np.exp(-1.0 / (1.0 - u))
    da, db = a / u ** 2, -b / (1.0 - u) ** 2
    ds = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    out[inside] = -2.0 * ds * np.sign(lam[inside])
    return out


def lp_psi(lam) -> np.ndarray:
    """psi(lam) = -lam phi'(lam); supported in 1/2 <= |lam| <= 1."""
    lam = np.asarray(lam, dtype=float)
    return -lam * lp_phi_prime(lam)


def lp_h(lam) -> np.ndarray:
    """Dyadic block profile h(lam) = phi(lam/2) - phi(lam); supported in [1/2, 2]."""
    lam = np.asarray(lam, dtype=float)
    return lp_phi(lam / 2.0) - lp_phi(lam)


def frequency(l: float) -> float:
    """|nabla| symbol sqrt(l(l+1))."""
    return float(np.sqrt(l * (l + 1)))


def lp_lowpass(c: SpectralCoeffs, scale: float = 1.0) -> SpectralCoeffs:
    """phi(|nabla| / scale)."""
    return apply_multiplier(c, lambda l: float(lp_phi(frequency(l) / scale)))


def lp_block(c: SpectralCoeffs, j: int) -> SpectralCoeffs:
    """The j-th dyadic block h(|nabla| / 2^j); low-pass plus all blocks is the identity."""
    if j < 0:
        raise DomainError("block index must be >= 0")
    return apply_multiplier(c, lambda l: float(lp_h(frequency(l) / 2.0 ** j)))


def n_blocks(L) -> int:
    """Number of dyadic blocks needed to exhaust levels up to L."""
    top = frequency(twice(L) / 2)
    return max(1, int(np.ceil(np.log2(max(top, 1.0)))) + 2)
