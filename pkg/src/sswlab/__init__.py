"""Numerical laboratory for blow-up profiles of the focusing complex
semilinear wave equation in one space dimension.

The package works in self-similar variables on the backward light cone,
where blow-up profiles become stationary states of a degenerate wave
equation on (-1,1).  Modules:

- wspace: weighted collocation grids, inner products, norms
- stationary: the soliton family, its boost transform, ODE characterization
- spectral: the degenerate second-order operator, eigenbasis, quadratic forms
- linop: linearized operators, dual frames, spectral projections
- evolve: self-similar and physical-space time integration
- modulation: parameter extraction, decomposition, trapping diagnostics
- labcli: experiment runner and persistence
"""

__version__ = "0.1.0"

__all__ = [
    "wspace",
    "stationary",
    "spectral",
    "linop",
    "evolve",
    "modulation",
    "labcli",
]
