"""Measure oscillation frequencies of single zonal modes and compare with the linear law.

    python scripts/dispersion.py --modes 2 3 4 --L 16 --dt 1e-3 --out dispersion.json
"""
import argparse
import json
import time

from paracalc.sim import NonOscillatoryError, SimConfig, dispersion_probe, linear_frequency


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--modes", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--L", type=int, default=16)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--periods", type=float, default=3.0)
    ap.add_argument("--out")
    args = ap.parse_args()

    cfg = SimConfig(L=args.L, L_solve=max(16, args.L), dt=args.dt, diagnostics=False)
    rows = []
    for n in args.modes:
        t0 = time.perf_counter()
        try:
            fit = dispersion_probe(n, args.eps, cfg, args.periods)
            row = {"n": n, "target": linear_frequency(n), "measured": fit.frequency, "rel_error": fit.rel_error}
        except NonOscillatoryError as exc:
            row = {"n": n, "target": linear_frequency(n), "measured": None, "note": str(exc)}
        row["seconds"] = round(time.perf_counter() - t0, 1)
        rows.append(row)
        print(json.dumps(row), flush=True)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
