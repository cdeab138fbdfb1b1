"""foldlab: a numerical laboratory for oscillatory integral operators.

Modules:
    geometry - Heisenberg group arithmetic and symplectic forms
    phase    - phase-function catalog, mixed Hessians, determinant formulas
    canrel   - singular variety and fold-condition checks
    cutoffs  - smooth dyadic cutoffs and partitions of unity
    opnorm   - matrix-free oscillatory operators and norm-decay sweeps
    decomp   - dyadic decomposition, key-estimate / orthogonality sweeps
    cli      - experiment runner
"""

from .opnorm import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
