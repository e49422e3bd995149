"""Irreducible representations of SU(2) in Euler angles and quadrature grids.

Levels are half-integers. Internally every level ``l`` is carried as the
integer ``l2 = 2l`` so that dense arrays can be addressed without floats.
Matrix indices run over ``-l, ..., l`` in ascending order; rows are labelled
by ``n`` and columns by ``m``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial, isqrt
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when an index or level is outside its admissible range."""


class GridSelfTestError(RuntimeError):
    """Raised when a grid fails its discrete orthogonality check."""


def twice(l) -> int:
    """Return ``2l`` as an int, rejecting values that are not half-integers."""
    if isinstance(l, (int, np.integer)):
        return 2 * int(l)
    v = Fraction(l).limit_denominator(4) if not isinstance(l, Fraction) else l
    t = 2 * v
    if t.denominator != 1 or abs(float(t) - 2 * float(l)) > 1e-12:
        raise DomainError(f"{l!r} is not a half-integer")
    return int(t)


def levels(L) -> list[int]:
    """All ``l2`` values 0, 1, ..., 2L."""
    return list(range(twice(L) + 1))


def index_values(l2: int) -> np.ndarray:
    """The index labels -l, ..., l as floats."""
    return (np.arange(l2 + 1) * 2 - l2) / 2.0


# ---------------------------------------------------------------- SU(2) group

def omega1(t):
    c, s = np.cos(np.asarray(t) / 2), np.sin(np.asarray(t) / 2)
    return np.array([[c, 1j * s], [1j * s, c]], dtype=complex)


def omega2(t):
    c, s = np.cos(np.asarray(t) / 2), np.sin(np.asarray(t) / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def omega3(t):
    e = np.exp(0.5j * np.asarray(t))
    return np.array([[e, 0 * e], [0 * e, np.conj(e)]], dtype=complex)


@dataclass(frozen=True)
class EulerAngles:
    phi: float
    theta: float
    psi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= np.pi):
            raise DomainError(f"theta={self.theta} outside [0, pi]")

    def matrix(self) -> np.ndarray:
        """The element as a 2x2 unitary matrix."""
        return euler_to_su2(self.phi, self.theta, self.psi)


def euler_to_su2(phi, theta, psi) -> np.ndarray:
    """Omega(phi, theta, psi) = w3(phi) w1(theta) w3(psi); broadcasts, matrix axes last."""
    phi, theta, psi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (phi, theta, psi)))
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    ep = np.exp(0.5j * (phi + psi))
    em = np.exp(0.5j * (phi - psi))
    out = np.empty(phi.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = ep * c
    out[..., 0, 1] = 1j * em * s
    out[..., 1, 0] = 1j * np.conj(em) * s
    out[..., 1, 1] = np.conj(ep) * c
    return out


def su2_to_euler(x: np.ndarray) -> EulerAngles:
    """Inverse of :func:`euler_to_su2` with psi in [0, 4pi)."""
    x1, x2 = complex(x[0, 0]), complex(x[0, 1])
    theta = 2 * np.arctan2(abs(x2), abs(x1))
    if abs(x1) < 1e-300:
        # theta = pi: only phi - psi is determined
        a = np.angle(x2 / 1j) * 2
        return EulerAngles(0.0, float(theta), float((-a) % (4 * np.pi)))
    if abs(x2) < 1e-300:
        a = np.angle(x1) * 2
        return EulerAngles(0.0, float(theta), float(a % (4 * np.pi)))
    sp = np.angle(x1) * 2  # phi + psi mod 4pi
    dm = np.angle(x2 / 1j) * 2  # phi - psi mod 4pi
    phi = 0.5 * (sp + dm)
    psi = 0.5 * (sp - dm)
    # (phi, psi) and (phi + 2pi, psi + 2pi) are the same element; keep phi in [0, 2pi)
    k = np.floor(phi / (2 * np.pi))
    phi -= 2 * np.pi * k
    psi -= 2 * np.pi * k
    return EulerAngles(float(phi), float(theta), float(psi % (4 * np.pi)))


def haar_random(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-distributed SU(2) elements (unit quaternions)."""
    shape = (4,) if size is None else (size, 4)
    q = rng.standard_normal(shape)
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    a = q[..., 0] + 1j * q[..., 1]
    b = q[..., 2] + 1j * q[..., 3]
    out = np.empty(q.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = a
    out[..., 0, 1] = b
    out[..., 1, 0] = -np.conj(b)
    out[..., 1, 1] = np.conj(a)
    return out


# ------------------------------------------------------------ matrix entries

@lru_cache(maxsize=None)
def _p_terms(l2: int):
    """Half-angle expansion of every P^l_{nm}.

    P^l_{nm}(cos t) = phase_{nm} * sum_j coef_{nmj} sin(t/2)^{sp_{nmj}} cos(t/2)^{cp_{nmj}}
    with real coefficients. Coefficients are formed exactly and rounded once.
    """
    d = l2 + 1
    nterm = d
    coef = np.zeros((d, d, nterm), dtype=np.longdouble)
    spow = np.zeros((d, d, nterm), dtype=np.int64)
    cpow = np.zeros((d, d, nterm), dtype=np.int64)
    phase = np.zeros((d, d), dtype=complex)
    for i in range(d):
        n2 = 2 * i - l2
        for k_ in range(d):
            m2 = 2 * k_ - l2
            a = (l2 - m2) // 2  # l - m
            b = (l2 + m2) // 2  # l + m
            k = (l2 - n2) // 2  # l - n
            lpn = (l2 + n2) // 2
            # (-1)^{l-m} i^{m-n}
            phase[i, k_] = (-1) ** a * (1j) ** ((m2 - n2) // 2 % 4)
            norm = Fraction(factorial(lpn), factorial(k) * factorial(a) * factorial(b))
            for t, j in enumerate(range(max(0, k - b), min(k, a) + 1)):
                c = comb(k, j) * (-1) ** j * (factorial(a) // factorial(a - j)) * (
                    factorial(b) // factorial(b - k + j))
                sq = Fraction(c * c) * norm
                coef[i, k_, t] = np.sign(c) * _sqrt_fraction(sq)
                spow[i, k_, t] = l2 - (m2 + n2) // 2 - 2 * j
                cpow[i, k_, t] = (m2 + n2) // 2 + 2 * j
    return coef, spow, cpow, phase


def _sqrt_fraction(q: Fraction) -> np.longdouble:
    """sqrt of a positive rational with huge parts, rounded once to extended precision."""
    if q == 0:
        return np.longdouble(0)
    num, den = q.numerator, q.denominator
    # scale so the integer sqrt carries at least ~70 significant bits
    shift = max(0, 160 - (num.bit_length() - den.bit_length()))
    shift += shift % 2
    r = isqrt((num << shift) // den)
    drop = max(0, r.bit_length() - 64)
    return np.ldexp(np.longdouble(r >> drop), drop - shift // 2)


def wigner_p_table(l, z) -> np.ndarray:
    """All P^l_{nm}(z) as an array of shape (2l+1, 2l+1, *z.shape), indexed [n, m]."""
    l2 = twice(l)
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) > 1 + 1e-14):
        raise DomainError("z must lie in [-1, 1]")
    zf = np.clip(z.ravel(), -1.0, 1.0)
    # extended precision absorbs the cancellation in the alternating sum
    zl = zf.astype(np.longdouble)
    s = np.sqrt((1 - zl) / 2)
    c = np.sqrt((1 + zl) / 2)
    coef, spow, cpow, phase = _p_terms(l2)
    # powers tables: (maxpow+1, nz)
    maxp = l2 + 1
    ps = s[None, :] ** np.arange(maxp)[:, None]
    pc = c[None, :] ** np.arange(maxp)[:, None]
    vals = np.einsum("nmj,nmjz->nmz", coef, ps[spow] * pc[cpow]).astype(float)
    out = phase[:, :, None] * vals
    return out.reshape((l2 + 1, l2 + 1) + z.shape)


def wigner_p(l, n, m, z):
    """P^l_{nm}(z) for a single index pair."""
    l2 = twice(l)
    n2, m2 = twice(n), twice(m)
    if abs(n2) > l2 or abs(m2) > l2 or (l2 - n2) % 2 or (l2 - m2) % 2:
        raise DomainError(f"indices (n={n}, m={m}) invalid for l={l}")
    tab = wigner_p_table(l, np.atleast_1d(z))
    val = tab[(n2 + l2) // 2, (m2 + l2) // 2]
    return val if np.ndim(z) else complex(val[0])


def wigner_matrix(l, x) -> np.ndarray:
    """T^l evaluated at Euler angles ``x`` (EulerAngles or a (phi, theta, psi) triple).

    Array-valued angles broadcast; the matrix axes come last.
    """
    if isinstance(x, EulerAngles):
        phi, theta, psi = x.phi, x.theta, x.psi
    else:
        phi, theta, psi = x
    phi, theta, psi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (phi, theta, psi)))
    l2 = twice(l)
    idx = index_values(l2)
    P = wigner_p_table(l, np.cos(theta))  # (d, d, *shape)
    P = np.moveaxis(P, (0, 1), (-2, -1))
    e = np.exp(-1j * (idx[:, None] * phi[..., None, None] + idx[None, :] * psi[..., None, None]))
    return e * P


def wigner_matrix_su2(l, x: np.ndarray) -> np.ndarray:
    """T^l of a 2x2 SU(2) matrix (or stack) via the homogeneous-polynomial model.

    Independent of the Euler-angle formula and used to check it. The action
    f(z) -> f(xz) is expanded in the orthonormal monomial basis; the matrix
    read off this way is the transpose of T^l(x).
    """
    l2 = twice(l)
    x = np.asarray(x, dtype=complex)
    stack = x.reshape(-1, 2, 2)
    d = l2 + 1
    out = np.zeros((stack.shape[0], d, d), dtype=complex)
    fact = [factorial(i) for i in range(l2 + 1)]
    for s_, g in enumerate(stack):
        a, b, c, dd = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
        for col in range(d):
            p = l2 - col  # power of z1 in basis element col (k = col - l)
            q = col
            # f(xz) with (xz)_1 = a z1 + b z2, (xz)_2 = c z1 + dd z2
            # expand (a z1 + b z2)^p (c z1 + dd z2)^q
            poly = np.zeros(l2 + 1, dtype=complex)  # coefficient of z1^{l2-r} z2^{r}
            for i in range(p + 1):
                ci = comb(p, i) * a ** (p - i) * b ** i
                for j in range(q + 1):
                    cj = comb(q, j) * c ** (q - j) * dd ** j
                    poly[i + j] += ci * cj
            for row in range(d):
                out[s_, row, col] = poly[row] * np.sqrt(fact[l2 - row] * fact[row] / (fact[p] * fact[q]))
    out = np.swapaxes(out, -1, -2)
    return out.reshape(x.shape[:-2] + (d, d))


# ----------------------------------------------------------------------- grid

@dataclass(frozen=True)
class EulerGrid:
    """Product quadrature on SU(2): uniform phi, psi and Gauss-Legendre in cos(theta)."""

    L2: int
    phi: np.ndarray
    theta: np.ndarray
    psi: np.ndarray
    theta_weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def L(self) -> float:
        return self.L2 / 2

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.phi.size, self.theta.size, self.psi.size)

    @property
    def weights(self) -> np.ndarray:
        """Node weights with the (phi, theta, psi) layout; they sum to one."""
        nphi, _, npsi = self.shape
        return np.broadcast_to(self.theta_weights[None, :, None] / (nphi * npsi), self.shape)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.phi, self.theta, self.psi, indexing="ij")

    def integrate(self, values: np.ndarray) -> complex:
        v = np.asarray(values)
        return np.einsum("akb,k->", v, self.theta_weights) / (self.shape[0] * self.shape[2])

    def ptable(self, l2: int) -> np.ndarray:
        """P^l_{nm}(cos theta_k) cached, shape (d, d, n_theta)."""
        key = ("P", l2)
        if key not in self._cache:
            self._cache[key] = wigner_p_table(l2 / 2, np.cos(self.theta))
        return self._cache[key]

    def exp_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """exp(i n phi_a) and exp(i m psi_b) for 2n, 2m in [-2L, 2L]."""
        key = ("E",)
        if key not in self._cache:
            k = np.arange(-self.L2, self.L2 + 1) / 2.0
            self._cache[key] = (np.exp(1j * k[:, None] * self.phi[None, :]),
                                np.exp(1j * k[:, None] * self.psi[None, :]))
        return self._cache[key]

    def self_test(self, tol: float = 1e-12) -> float:
        """Discrete Schur orthogonality of all entries with l <= L; returns the worst defect."""
        worst, where = 0.0, None
        L2 = self.L2
        ks = np.arange(-2 * L2, 2 * L2 + 1)
        ephi = np.exp(0.5j * ks[:, None] * self.phi[None, :]).mean(axis=1)
        epsi = np.exp(0.5j * ks[:, None] * self.psi[None, :]).mean(axis=1)
        # angular sums for index differences of matching parity
        for i, kp in enumerate(ks):
            for j, kq in enumerate(ks):
                if (kp - kq) % 2:
                    continue
                val = ephi[i] * epsi[j]
                target = 1.0 if (kp == 0 and kq == 0) else 0.0
                err = abs(val - target)
                if err > worst:
                    worst, where = err, ("angular", kp / 2, kq / 2)
        # theta Gram for each fixed (n, m)
        tabs = {l2: self.ptable(l2) for l2 in range(L2 + 1)}
        for n2 in range(-L2, L2 + 1):
            for m2 in range(-L2, L2 + 1):
                if (n2 - m2) % 2:
                    continue
                lo = max(abs(n2), abs(m2))
                ls = [l2 for l2 in range(lo, L2 + 1) if (l2 - n2) % 2 == 0]
                if not ls:
                    continue
                rows = np.array([tabs[l2][(n2 + l2) // 2, (m2 + l2) // 2] for l2 in ls])
                gram = (rows * self.theta_weights) @ rows.conj().T
                target = np.diag([1.0 / (l2 + 1) for l2 in ls])
                err = np.abs(gram - target).max()
                if err > worst:
                    worst, where = err, ("theta", n2 / 2, m2 / 2, ls)
        if worst > tol:
            raise GridSelfTestError(f"orthogonality defect {worst:.3e} at {where}")
        return worst


def make_grid(L, self_test: bool = True) -> EulerGrid:
    """Quadrature grid exact for products of entries with l <= L."""
    L2 = twice(L)
    if L2 < 0:
        raise DomainError("L must be non-negative")
    nang = L2 * 2 + 4  # ceil(4L) + 4
    nth = L2 + 2  # ceil(2L) + 2
    phi = 2 * np.pi * np.arange(nang) / nang
    psi = 4 * np.pi * np.arange(nang) / nang
    x, w = np.polynomial.legendre.leggauss(nth)
    order = np.argsort(-x)  # theta ascending
    theta = np.arccos(x[order])
    grid = EulerGrid(L2, phi, theta, psi, w[order] / 2.0)
    if self_test:
        grid.self_test()
    return grid


def group_product_angles(x: Sequence[float], y: Sequence[float]) -> EulerAngles:
    """Euler angles of the product of two elements given by Euler angles."""
    return su2_to_euler(euler_to_su2(*x) @ euler_to_su2(*y))
