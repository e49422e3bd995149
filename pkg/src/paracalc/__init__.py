"""Harmonic analysis and para-differential calculus on SU(2) and the 2-sphere."""
import os as _os

# PARACALC_THREADS caps BLAS/OpenMP threads; it must be set before numpy loads
if _os.environ.get("PARACALC_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ[_var] = _os.environ["PARACALC_THREADS"]

from . import wigner, harmonic, symcalc, sphere, droplet, symmetrizer, sim  # noqa: E402

__all__ = ["wigner", "harmonic", "symcalc", "sphere", "droplet", "symmetrizer", "sim"]
__version__ = "0.1.0"
