"""Compare the symmetrized and the full evolution in symmetrized variables.

The difference should scale like eps^2, so doubling eps multiplies it by about 4.
"""
import argparse
import dataclasses

import numpy as np

from paracalc.droplet import DropletState, ParaConfig
from paracalc.sim import SimConfig, linear_frequency, project_volume, simulate
from paracalc.sphere import SphereFunction
from paracalc.symmetrizer import symmetrized_variables


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--eps", type=float, nargs="+", default=[2e-3, 4e-3, 8e-3])
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--L", type=int, default=8)
    args = ap.parse_args()

    T = 2 * np.pi / linear_frequency(3)
    dt = T / 50
    para = ParaConfig(L_sym=6)
    prev = None
    for eps in args.eps:
        z = (SphereFunction.real_harmonic(args.L, 3, 0) + SphereFunction.real_harmonic(args.L, 2, 0, 0.5)) * eps
        st = project_volume(DropletState(z, SphereFunction.zeros(args.L)))
        cfg = SimConfig(L=args.L, L_solve=12, dt=dt, t_end=args.steps * dt, L_sym=6, diagnostics=False)
        a = simulate(st, dataclasses.replace(cfg, system="symmetrized")).states[-1]
        b = simulate(st, cfg).states[-1]
        Ua, Va = symmetrized_variables(a, para, 12)
        Ub, Vb = symmetrized_variables(b, para, 12)
        diff = float(np.hypot((Ua - Ub).norm(), (Va - Vb).norm()))
        ratio = "" if prev is None else f" ratio={diff / prev:.3f}"
        print(f"eps={eps:.0e} diff={diff:.4e}{ratio}", flush=True)
        prev = diff


if __name__ == "__main__":
    main()
