"""Command-line entry point: transforms, verification suites, DN evaluation, simulation, probes.

Exit codes: 0 success, 1 validation error, 2 a verification check out of tolerance.
Every failure writes a single JSON line to stderr.
"""
from __future__ import annotations

import json
import math
import os
import sys

import click
import numpy as np

from . import harmonic as H
from . import symcalc, wigner
from .droplet import (DropletState, curvature_symmetry_defect, dn_oracle, dn_para,
                      dn_symmetry_defect)
from .sim import NonOscillatoryError, SimConfig, dispersion_probe, simulate
from .sphere import SphereFunction, make_sphere_grid


class ValidationError(Exception):
    pass


class AcceptanceFailure(Exception):
    def __init__(self, report: dict):
        super().__init__(f"suite {report['suite']} failed: "
                         + ", ".join(c["name"] for c in report["checks"] if not c["passed"]))
        self.report = report


# ----------------------------------------------------------------- JSON I/O

def _canon(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ",".join(json.dumps(str(k)) + ":" + _canon(v) for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canon(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(str(x))
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def canonical_json(obj) -> str:
    """JSON with insertion-ordered keys, no whitespace and 17 significant digits."""
    return _canon(obj) + "\n"


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(obj))


def read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from exc
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc


def _record(kind: str, code: int, message: str) -> None:
    sys.stderr.write(json.dumps({"status": "error", "kind": kind, "exit": code, "message": message}) + "\n")


# ------------------------------------------------------------------ suites

def _check(name: str, value: float, tol: float) -> dict:
    return {"name": name, "value": float(value), "tol": tol, "passed": bool(value <= tol)}


def suite_wigner(L: float, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    grid = wigner.make_grid(L, self_test=False)
    out = [_check("schur_orthogonality", grid.self_test(tol=np.inf), 1e-12)]
    unit = model = hom = 0.0
    for _ in range(4):
        x, y = wigner.haar_random(rng), wigner.haar_random(rng)
        ex, ey, exy = wigner.su2_to_euler(x), wigner.su2_to_euler(y), wigner.su2_to_euler(x @ y)
        for l2 in range(wigner.twice(L) + 1):
            l = l2 / 2
            Tx, Ty, Txy = (wigner.wigner_matrix(l, e) for e in (ex, ey, exy))
            unit = max(unit, float(np.abs(Tx @ Tx.conj().T - np.eye(l2 + 1)).max()))
            model = max(model, float(np.abs(Tx - wigner.wigner_matrix_su2(l, x)).max()))
            hom = max(hom, float(np.abs(Txy - Tx @ Ty).max()))
    return out + [_check("unitarity", unit, 1e-12), _check("polynomial_model", model, 1e-10),
                  _check("homomorphism", hom, 1e-10)]


def suite_fourier(L: float, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    grid = wigner.make_grid(L)
    c = H.SpectralCoeffs.random(L, rng)
    f = H.inverse(c, grid)
    back = H.forward(f)
    rt = (back - c).norm() / c.norm()
    planch = abs(f.l2_norm() ** 2 - c.norm() ** 2) / c.norm() ** 2
    lap = 0.0
    for l2 in range(wigner.twice(L) + 1):
        l = l2 / 2
        e = H.wigner_entry_coeffs(L, l, -l, l)
        d = symcalc.laplacian_via_fields(e) - e * H.laplacian_symbol(l)
        lap = max(lap, d.max_abs() * (l2 + 1))
    return [_check("roundtrip", rt, 1e-10), _check("plancherel", planch, 1e-10),
            _check("laplacian_eigenvalue", lap, 1e-10)]


def suite_symcalc(L: float, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    L2 = wigner.twice(L)
    ident = 0.0
    for mu in symcalc.MU:
        for nu in symcalc.MU:
            d = symcalc.difference_multiplier([symcalc.sigma(nu, l2) for l2 in range(L2 + 2)], mu)
            for l2 in range(L2 + 1):
                ident = max(ident, float(np.abs(d[l2] - (mu == nu) * np.eye(l2 + 1)).max()))
    grid = wigner.make_grid(L + 1, self_test=False)
    orc = 0.0
    for _ in range(20):
        a = H.SpectralCoeffs.random(L, rng).blocks
        for mu in symcalc.MU:
            d = symcalc.difference_multiplier(a, mu)
            o = symcalc.difference_oracle(a, mu, grid)
            orc = max(orc, max(float(np.abs(x - y).max()) for x, y in zip(d, o)))
    return [_check("difference_of_sigma", ident, 1e-12), _check("difference_oracle", orc, 1e-10)]


def suite_dn(L: float, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    L = int(L)
    worst = 0.0
    for n in range(1, min(L, 8) + 1):
        m = int(rng.integers(-n, n + 1))
        phi = SphereFunction.harmonic(L, n, m)
        out = dn_oracle(DropletState(SphereFunction.zeros(L), phi), 16)
        worst = max(worst, (out - phi * n).norm() / (n * phi.norm()))
    Ls = min(L, 5)
    z = SphereFunction.random(Ls, rng, decay=2.0) * 0.02
    f, g = SphereFunction.random(Ls, rng, decay=2.0), SphereFunction.random(Ls, rng, decay=2.0)
    return [_check("rest_multiplier", worst, 1e-8),
            _check("dn_weighted_symmetry", dn_symmetry_defect(z, f, g, 20), 1e-8),
            _check("curvature_weighted_symmetry", curvature_symmetry_defect(z, f, g), 1e-8)]


def suite_symmetrizer(L: float, seed: int) -> list[dict]:
    from .symmetrizer import symmetrizer_for
    rng = np.random.default_rng(seed)
    L = int(L)
    gs = make_sphere_grid(6)
    sym, _, _, _ = symmetrizer_for(SphereFunction.zeros(2), gs)
    rest = 0.0
    for l in range(1, L + 1):
        k = l * (l + 1.0)
        g = sym.gamma15.level(2 * l)
        p = sym.p05.level(2 * l)
        eye = np.eye(2 * l + 1)
        rest = max(rest, float(np.abs(g - k ** 0.75 * eye).max()) / k ** 0.75,
                   float(np.abs(p - k ** 0.25 * eye).max()) / k ** 0.25)
    rest = max(rest, float(np.abs(sym.q - 1.0).max()))
    z = SphereFunction.random(3, rng, decay=2.0) * 0.03
    sym, _, _, _ = symmetrizer_for(z, gs)
    herm = max(sym.hermitian_defect(2 * l) for l in range(1, L + 1))
    return [_check("rest_values", rest, 1e-12), _check("gamma15_hermitian", herm, 1e-10),
            _check("q_positive", 0.0 if float(sym.q.min()) > 0 else 1.0, 0.0)]


SUITES = {"wigner": suite_wigner, "fourier": suite_fourier, "symcalc": suite_symcalc,
          "dn": suite_dn, "symmetrizer": suite_symmetrizer}


# ---------------------------------------------------------------- commands

def _state(path: str) -> DropletState:
    try:
        return DropletState.from_json(read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{path}: not a state object ({exc})") from exc


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """Harmonic analysis and droplet simulation tools."""


@cli.command()
@click.option("--in", "inp", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--inverse", is_flag=True, help="coefficients -> grid values")
def transform(inp, out, inverse):
    """Forward (grid values -> coefficients) or inverse transform on the group grid."""
    obj = read_json(inp)
    if inverse:
        try:
            c = H.SpectralCoeffs.from_json(obj)
        except H.DimensionError as exc:
            raise ValidationError(str(exc)) from exc
        grid = wigner.make_grid(c.L)
        v = H.inverse(c, grid).values
        write_json(out, {"L": c.L, "shape": list(v.shape), "re": v.real.ravel(), "im": v.imag.ravel()})
        return
    try:
        L = float(obj["L"])
        grid = wigner.make_grid(L)
        v = np.asarray(obj["re"], float) + 1j * np.asarray(obj.get("im", np.zeros(len(obj["re"]))), float)
        v = v.reshape(grid.shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{inp}: expected {{L, re, im}} grid values ({exc})") from exc
    write_json(out, H.forward(v, grid).to_json())


@cli.command()
@click.option("--suite", required=True, type=click.Choice(sorted(SUITES)))
@click.option("--L", "L", default=4.0, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False))
def verify(suite, L, seed, report):
    """Run a verification suite; exit 2 if a check is out of tolerance."""
    if L < 0 or (suite in ("dn", "symmetrizer") and L != int(L)):
        raise ValidationError(f"--L {L} is not valid for suite {suite}")
    checks = SUITES[suite](L, seed)
    rep = {"suite": suite, "L": L, "seed": seed, "checks": checks, "passed": all(c["passed"] for c in checks)}
    if report:
        write_json(report, rep)
    for c in checks:
        click.echo(f"{'PASS' if c['passed'] else 'FAIL'} {suite}.{c['name']} value={c['value']:.3e} tol={c['tol']:.0e}")
    if not rep["passed"]:
        raise AcceptanceFailure(rep)


@cli.command()
@click.option("--state", "state_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--method", default="oracle", type=click.Choice(["oracle", "para"]), show_default=True)
@click.option("--Lsolve", "L_solve", default=16, type=click.IntRange(1), show_default=True)
def dn(state_path, out, method, L_solve):
    """Dirichlet-Neumann operator of a state; diagnostics go to a sidecar file."""
    state = _state(state_path)
    res = dn_oracle(state, L_solve, info=True)
    result = res.dn if method == "oracle" else dn_para(state, res.dn)
    write_json(out, result.to_json())
    root, ext = os.path.splitext(out)
    write_json(root + ".diag" + (ext or ".json"),
               {"method": method, "L_solve": L_solve, "fit_residual": res.residual, "condition": res.cond})


@cli.command(name="simulate")
@click.option("--state", "state_path", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False))
def simulate_cmd(state_path, config_path, out, csv_path):
    """Integrate a state; writes the trajectory JSON and optionally the diagnostics CSV."""
    state = _state(state_path)
    try:
        cfg = SimConfig.from_json(read_json(config_path))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{config_path}: {exc}") from exc
    traj = simulate(state, cfg)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "trajectory.json"), "w") as fh:
        fh.write(canonical_json(traj.to_json()))
    if csv_path:
        if not cfg.diagnostics:
            raise ValidationError("--csv needs diagnostics enabled in the config")
        traj.write_csv(csv_path)


@cli.command()
@click.option("--n", "n", required=True, type=click.IntRange(1))
@click.option("--eps", default=1e-3, type=click.FloatRange(0, 0.1, min_open=True), show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--L", "L", default=16, type=click.IntRange(2), show_default=True)
@click.option("--dt", default=1e-3, type=click.FloatRange(0, min_open=True), show_default=True)
@click.option("--periods", default=3.0, type=click.FloatRange(1.0), show_default=True)
def probe(n, eps, out, L, dt, periods):
    """Measure the oscillation frequency of the degree-n mode."""
    if n > L // 2:
        raise ValidationError(f"--n {n} exceeds L/2 = {L // 2}")
    cfg = SimConfig(L=L, dt=dt, diagnostics=False)
    target = math.sqrt(n * (n - 1) * (n + 2))
    try:
        fit = dispersion_probe(n, eps, cfg, periods)
    except NonOscillatoryError as exc:
        write_json(out, {"n": n, "eps": eps, "target": target, "measured": None, "oscillatory": False,
                         "note": str(exc)})
        return
    write_json(out, {"n": n, "eps": eps, "target": target, "measured": fit.frequency, "oscillatory": True,
                     "rel_error": fit.rel_error, "amplitude": fit.amplitude, "periods": fit.periods})


def run(argv: list[str] | None = None) -> int:
    """Execute one command and return its exit code."""
    try:
        cli.main(args=argv, prog_name="paracalc", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        _record("usage", 1, exc.format_message())
        return 1
    except click.Abort:
        _record("aborted", 1, "aborted")
        return 1
    except AcceptanceFailure as exc:
        _record("acceptance", 2, str(exc))
        return 2
    except (ValidationError, wigner.DomainError, H.DimensionError, ValueError) as exc:
        _record("validation", 1, f"{type(exc).__name__}: {exc}")
        return 1
    except Exception as exc:  # keep the one-line stderr contract
        _record("internal", 1, f"{type(exc).__name__}: {exc}")
        return 1
    return 0


def main() -> None:
    sys.exit(run())
