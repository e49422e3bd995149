"""Time integration of the droplet system and its diagnostics."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, curve_fit

from .droplet import (DropletState, ParaConfig, _is_zonal, area, dn_oracle, dn_values, geometry, frame_gradient,
                      ambient_gradient, rhs_values)
from .sphere import SphereFunction, SphereGrid, dealiased_grid, make_sphere_grid
from .wigner import DomainError


class BlowUpError(DomainError):
    """The graph left the chart |zeta| < 1/2 during a run."""


class NonOscillatoryError(RuntimeError):
    """A frequency fit found no restoring oscillation."""


@dataclass
class SimConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    L: int = 16
    L_solve: int = 16
    dealias: bool = True
    integrator: str = "rk4"
    system: str = "full"  # or "symmetrized"
    volume_project: bool = True
    axisymmetric: bool = False  # use the one-meridian grid; exact for zonal data
    record_every: int = 1
    diagnostics: bool = True
    L_sym: int = 8  # symbol grid degree for the symmetrized system

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= self.dt:
            raise ValueError("t_end must be at least dt")
        if self.integrator != "rk4":
            raise ValueError("only the rk4 integrator is available")
        if self.system not in ("full", "symmetrized"):
            raise ValueError(f"unknown system {self.system!r}")

    @classmethod
    def from_json(cls, obj: dict) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**obj)


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[DropletState] = field(default_factory=list)
    diagnostics: dict[str, list] = field(default_factory=dict)

    def record(self, t: float, state: DropletState, diag: dict | None) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError("times must increase")
        self.times.append(float(t))
        self.states.append(state)
        for k, v in (diag or {}).items():
            self.diagnostics.setdefault(k, []).append(v)

    def series(self, key: str) -> np.ndarray:
        return np.asarray(self.diagnostics[key])

    def to_json(self) -> dict:
        return {"times": self.times, "states": [s.to_json() for s in self.states],
                "diagnostics": {k: np.asarray(v).tolist() for k, v in self.diagnostics.items()}}

    def write_csv(self, path: str, s: float = 3.0) -> None:
        cols = ["t", "volume", "hamiltonian", "|momentum|", "|center|",
                f"H^{s + 0.5:g}(zeta)", f"H^{s:g}(phi)", "oracle_residual"]
        d = self.diagnostics
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i, t in enumerate(self.times):
                w.writerow([repr(float(t)), repr(d["volume"][i]), repr(d["hamiltonian"][i]),
                            repr(float(np.linalg.norm(d["momentum"][i]))),
                            repr(float(np.linalg.norm(d["center"][i]))),
                            repr(d["sobolev_zeta"][i]), repr(d["sobolev_phi"][i]), repr(d["oracle_residual"][i])])

    def write_dir(self, path: str) -> None:
        os.makedirs(path, exist_ok=True)
        with open(os.path.join(path, "trajectory.json"), "w") as fh:
            json.dump(self.to_json(), fh)


# ----------------------------------------------------------- conserved

def _grid_for(state: DropletState, grid: SphereGrid | None) -> SphereGrid:
    return make_sphere_grid(2 * state.L + 4) if grid is None else grid


def volume(state: DropletState, grid: SphereGrid | None = None) -> float:
    """(1/3) int (1 + zeta)^3 dmu0."""
    grid = _grid_for(state, grid)
    rho = 1.0 + state.zeta.values(grid).real
    return float(grid.integrate(rho ** 3).real / 3.0)


def kinetic_energy(state: DropletState, grid: SphereGrid | None = None, L_solve: int = 16,
                   literal_weight: bool = False) -> float:
    """(1/2) int phi D phi rho^2 dmu0, i.e. half the flux of Phi dPhi/dn over the surface.

    ``literal_weight`` divides by N0.N instead of multiplying, which gives the
    weight beta = rho^2 + |grad zeta|^2 in place of rho^2.
    """
    grid = _grid_for(state, grid)
    if not np.any(state.phi.c):
        return 0.0
    geo = geometry(state.zeta, grid)
    dn, _ = dn_values(state, grid, L_solve, geo=geo)
    w = geo.beta if literal_weight else geo.rho ** 2
    return float(0.5 * grid.integrate(w * state.phi.values(grid).real * dn.real).real)


def hamiltonian(state: DropletState, grid: SphereGrid | None = None, L_solve: int = 16,
                literal_weight: bool = False) -> float:
    grid = _grid_for(state, grid)
    return area(state.zeta, grid) + kinetic_energy(state, grid, L_solve, literal_weight)


def momentum(state: DropletState, grid: SphereGrid | None = None) -> np.ndarray:
    """int phi N dmu(iota) = int phi rho (rho N0 - grad zeta) dmu0 as a vector in R^3."""
    grid = _grid_for(state, grid)
    geo = geometry(state.zeta, grid)
    amb = ambient_gradient(geo.grad, grid)
    N0 = np.moveaxis(grid.points(), -1, 0)
    phi = state.phi.values(grid).real
    return np.real(grid.integrate(np.moveaxis(phi * geo.rho * (geo.rho * N0 - amb), 0, -1)))


def center_integral(state: DropletState, grid: SphereGrid | None = None) -> np.ndarray:
    """int (1 + zeta)^4 N0 dmu0 (four times the centroid moment of the enclosed body)."""
    grid = _grid_for(state, grid)
    rho = 1.0 + state.zeta.values(grid).real
    return np.real(grid.integrate(rho[..., None] ** 4 * grid.points()))


def project_volume(state: DropletState, grid: SphereGrid | None = None, tol: float = 1e-14) -> DropletState:
    """Shift the l = 0 mode of zeta so that the enclosed volume is 4 pi / 3."""
    grid = _grid_for(state, grid)
    target = 4 * np.pi / 3
    y00 = 1.0 / np.sqrt(4 * np.pi)
    base = state.zeta.copy()
    c0 = base.c[0, base.L].real
    base.c[0, base.L] = 0.0
    zv = base.values(grid).real

    def vol(c: float) -> float:
        return float(grid.integrate((1.0 + zv + c * y00) ** 3).real / 3.0) - target

    lo, hi = -0.5 / y00 + 1e-9, 0.5 / y00 - 1e-9
    lo = max(lo, (-0.5 - zv.min()) / y00)
    hi = min(hi, (0.5 - zv.max()) / y00)
    if not lo < hi or vol(lo) * vol(hi) > 0:
        raise DomainError("no volume-preserving l = 0 shift keeps |zeta| < 1/2")
    c = brentq(vol, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(c - c0) < 1e-15:
        c = c0
    base.c[0, base.L] = c
    return DropletState(base, state.phi.copy())


def project_center(state: DropletState, grid: SphereGrid | None = None, iters: int = 8) -> DropletState:
    """Adjust the l = 1 modes of zeta (Newton) so that the centre integral vanishes."""
    grid = _grid_for(state, grid)
    z = state.zeta.copy()
    L = z.L
    # zonal shapes keep their symmetry: only the axial component can be nonzero
    axes = [2] if _is_zonal(z) else [0, 1, 2]
    basis = [SphereFunction.real_harmonic(L, 1, m) for m in (1, -1, 0)]
    basis = [basis[a] for a in axes]
    for _ in range(iters):
        c = center_integral(DropletState(z, state.phi), grid)
        if np.linalg.norm(c) < 1e-15:
            break
        rho = 1.0 + z.values(grid).real
        pts = grid.points()[..., axes]
        J = np.stack([np.real(grid.integrate(4 * rho[..., None] ** 3 * b.values(grid).real[..., None] * pts))
                      for b in basis], axis=1)
        step = np.linalg.solve(J, -c[axes])
        for s, b in zip(step, basis):
            z = z + b * s
    return DropletState(z, state.phi.copy())


# ----------------------------------------------------------- stepping

def _grid(cfg: SimConfig) -> SphereGrid:
    key = (cfg.L, cfg.dealias, cfg.axisymmetric)
    if key not in _GRIDS:
        _GRIDS[key] = (dealiased_grid(cfg.L, cfg.axisymmetric) if cfg.dealias
                       else make_sphere_grid(cfg.L + 2, cfg.axisymmetric))
    return _GRIDS[key]


_GRIDS: dict = {}


def _rhs(state: DropletState, cfg: SimConfig) -> tuple[SphereFunction, SphereFunction]:
    grid = _grid(cfg)
    dz, dp = rhs_values(state, grid, cfg.L_solve)
    return (SphereFunction.from_values(dz, grid, cfg.L).realpart(),
            SphereFunction.from_values(dp, grid, cfg.L).realpart())


def _check(state: DropletState, cfg: SimConfig) -> None:
    sup = float(np.abs(state.zeta.values(_grid(cfg))).max())
    if not (np.isfinite(sup) and sup < 0.5):
        raise BlowUpError(f"|zeta|_inf = {sup:.4g} left the chart")


def step(state: DropletState, cfg: SimConfig) -> DropletState:
    """One classical RK4 step of the full system with truncation at degree L after each stage."""
    if cfg.system == "symmetrized":
        raise ValueError("use simulate() for the symmetrized system")
    _check(state, cfg)
    dt = cfg.dt
    z0, p0 = state.zeta.truncate(cfg.L), state.phi.truncate(cfg.L)

    def stage(zk, pk):
        return _rhs(DropletState(zk, pk), cfg)

    k1 = stage(z0, p0)
    k2 = stage(z0 + k1[0] * (dt / 2), p0 + k1[1] * (dt / 2))
    k3 = stage(z0 + k2[0] * (dt / 2), p0 + k2[1] * (dt / 2))
    k4 = stage(z0 + k3[0] * dt, p0 + k3[1] * dt)
    z = z0 + (k1[0] + k2[0] * 2 + k3[0] * 2 + k4[0]) * (dt / 6)
    p = p0 + (k1[1] + k2[1] * 2 + k3[1] * 2 + k4[1]) * (dt / 6)
    p.c[0, p.L] = 0.0  # gauge: phi has zero mean
    out = DropletState(z, p)
    _check(out, cfg)
    return out


def diagnostics(state: DropletState, cfg: SimConfig, s: float = 3.0) -> dict:
    grid = make_sphere_grid(2 * cfg.L + 4)
    kin_res = 0.0
    if np.any(state.phi.c):
        kin_res = dn_oracle(state, cfg.L_solve, L_out=cfg.L, info=True).residual
    return {"volume": volume(state, grid), "hamiltonian": hamiltonian(state, grid, cfg.L_solve),
            "momentum": momentum(state, grid).tolist(), "center": center_integral(state, grid).tolist(),
            "sobolev_zeta": state.zeta.sobolev_norm(s + 0.5), "sobolev_phi": state.phi.sobolev_norm(s),
            "oracle_residual": kin_res}


def simulate(state0: DropletState, cfg: SimConfig, callback=None) -> Trajectory:
    """Integrate from t = 0 to t_end, recording every ``record_every`` steps."""
    state = DropletState(state0.zeta.truncate(cfg.L), state0.phi.truncate(cfg.L))
    if cfg.volume_project:
        state = project_volume(state)
    if cfg.system == "symmetrized":
        from .symmetrizer import simulate_symmetrized
        return simulate_symmetrized(state, cfg)
    traj = Trajectory()
    traj.record(0.0, state, diagnostics(state, cfg) if cfg.diagnostics else None)
    nsteps = int(round(cfg.t_end / cfg.dt))
    for k in range(1, nsteps + 1):
        state = step(state, cfg)
        if k % cfg.record_every == 0 or k == nsteps:
            traj.record(k * cfg.dt, state, diagnostics(state, cfg) if cfg.diagnostics else None)
        if callback is not None:
            callback(k, state)
    return traj


# ---------------------------------------------------------- dispersion

def linear_frequency(n: int) -> float:
    return math.sqrt(max(n * (n - 1) * (n + 2), 0))


@dataclass
class FrequencyFit:
    n: int
    frequency: float
    target: float
    amplitude: float
    periods: float
    rel_error: float


def fit_frequency(t: np.ndarray, y: np.ndarray, guess: float, scale: float) -> tuple[float, float]:
    """Fit y = a cos(w t) + b sin(w t) + c and return (w, sqrt(a^2 + b^2))."""
    y = np.asarray(y, float)
    if float(np.std(y)) < 1e-3 * scale:
        raise NonOscillatoryError(f"signal std {np.std(y):.3e} shows no oscillation")
    # refine the guess with a periodogram peak before the nonlinear fit
    ws = np.linspace(0.25 * guess, 2.0 * guess, 800) if guess > 0 else np.linspace(0.1, 20, 800)
    yc = y - y.mean()
    power = [abs(np.sum(yc * np.exp(-1j * w * t))) for w in ws]
    w0 = ws[int(np.argmax(power))]
    f = lambda tt, w, a, b, c: a * np.cos(w * tt) + b * np.sin(w * tt) + c
    popt, _ = curve_fit(f, t, y, p0=[w0, y[0] - y.mean(), 0.0, y.mean()], maxfev=20000)
    w, a, b, _ = popt
    if not np.isfinite(w) or w <= 0:
        raise NonOscillatoryError("frequency fit did not converge")
    return float(abs(w)), float(np.hypot(a, b))


def dispersion_probe(n: int, eps: float, cfg: SimConfig, periods: float = 3.0) -> FrequencyFit:
    """Evolve zeta0 = eps Y_n^0, phi0 = 0 and fit the frequency of the Y_n^0 coefficient."""
    if n > cfg.L // 2 and n > 1:
        raise DomainError("n must not exceed L/2")
    target = linear_frequency(n)
    T = periods * 2 * np.pi / target if target > 0 else periods * 2 * np.pi / linear_frequency(2)
    run = SimConfig(**{**asdict(cfg), "t_end": max(T, cfg.dt), "axisymmetric": True,
                       "diagnostics": False, "record_every": 1})
    z = SphereFunction.real_harmonic(cfg.L, n, 0, eps)
    state = DropletState(z, SphereFunction.zeros(cfg.L))
    if cfg.volume_project:
        state = project_volume(state)
    t, y = [0.0], [state.zeta.c[n, cfg.L].real]
    nsteps = int(math.ceil(run.t_end / run.dt))
    for k in range(1, nsteps + 1):
        state = step(state, run)
        t.append(k * run.dt)
        y.append(state.zeta.c[n, cfg.L].real)
    t, y = np.asarray(t), np.asarray(y)
    w, amp = fit_frequency(t, y, target, eps)
    return FrequencyFit(n, w, target, amp, float(t[-1] * w / (2 * np.pi)),
                        abs(w - target) / target if target > 0 else float("inf"))
