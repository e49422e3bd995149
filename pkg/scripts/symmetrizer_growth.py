"""Norm of the symmetrizer residual T_p T_lambda - T_gamma T_q on level-l probes.

Peak memory is about 2 GB at l = 24 with the default grid.
"""
import argparse
import time

import numpy as np

from paracalc.droplet import ParaConfig
from paracalc.sphere import SphereFunction, make_sphere_grid
from paracalc.symmetrizer import growth_exponent, level_probe, residual_norms, symmetrizer_for


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", type=int, nargs="+", default=[8, 16, 24])
    ap.add_argument("--grid", type=int, default=6, help="band limit of the symbol grid")
    ap.add_argument("--amp", type=float, default=0.05)
    ap.add_argument("--cutoff", default="none", choices=["none", "admissible"])
    ap.add_argument("--variant", default="complete", choices=["complete", "displayed"])
    args = ap.parse_args()

    gs = make_sphere_grid(args.grid)
    z = (SphereFunction.real_harmonic(4, 2, 0) + SphereFunction.real_harmonic(4, 3, 1, 0.5)) * args.amp
    s, d, h2, h1 = symmetrizer_for(z, gs, args.variant)
    cfg = ParaConfig(cutoff=args.cutoff)
    norms = []
    for l in args.levels:
        t0 = time.perf_counter()
        norms.append(residual_norms(s, d, h2, h1, level_probe(l, np.random.default_rng(l)), cfg)[0])
        print(f"l={l:3d} residual={norms[-1]:.4e} ({time.perf_counter() - t0:.0f}s)", flush=True)
    print(f"growth exponent {growth_exponent(args.levels, norms):.3f}")


if __name__ == "__main__":
    main()
