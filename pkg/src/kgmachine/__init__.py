"""Numerical laboratory for linear Klein-Gordon equations with moving wells.

The package builds, evolves and cross-checks the linear objects attached to

    d^2 u/dt^2 = Lap u - u - sum_j V_j(t, x) u + F,

where each well V_j is a Lorentz-boosted profile carried along a trajectory
y_j(t) at velocity beta_j(t).  Everything is discretized on a periodic grid
with spectral derivatives, at desk scale: the point is not production PDE
solving but verifying the identities the continuum objects satisfy
(eigenrelations of traveling bound states, resolvent block formulas,
exponential dichotomies, Duhamel operator identities, scattering profiles
and wave operators) with explicit tolerances.

Modules
-------
grid        periodic grids, fields, state pairs, spectral multipliers, norms
potentials  well profiles, Lorentz boosts, trajectories and their reduction
spectrum    scalar eigenvalue solver, threshold screening, decay-rate fits
modes       traveling bound-state pairs, duals, biorthogonal projections
resolvent   matrix resolvent applies, scaling relation, absorption sweeps
evolution   time stepping, Duhamel operators, operator-identity checks
scattering  mode-amplitude transport, scattering profiles, wave operators
cli         scenario configs, experiment dispatch, CSV/JSON output
"""

from . import grid, potentials, spectrum, modes, resolvent, evolution, scattering

__all__ = [
    "grid",
    "potentials",
    "spectrum",
    "modes",
    "resolvent",
    "evolution",
    "scattering",
]

__version__ = "0.1.0"
