"""Viscosity-solution toolkit for fully nonlinear subelliptic PDE on the Heisenberg group.

Layout:

- ``core``        group arithmetic, gauge metric, horizontal calculus
- ``fields``      analytic scalar fields (parsed expressions with exact jets) and grid fields
- ``operators``   the nonlinear operator family, conformal variants, structural checks
- ``cones``       admissible eigenvalue cones and membership classification
- ``envelopes``   gauge-quartic sup/inf convolutions with witnesses
- ``viscosity``   pointwise sub/supersolution tagging and perturbation certificates
- ``comparison``  strictness perturbations and the touching-point harness
- ``perron``      monotone clamped iteration between sub- and supersolution data
- ``gridio``      CSV grid interchange and problem JSON loading
- ``suites``      packaged seeded verification suites
- ``cli``         command-line front end
"""

from . import (
    core,
    fields,
    operators,
    cones,
    envelopes,
    viscosity,
    comparison,
    perron,
    gridio,
    suites,
    cli,
)

__all__ = [
    "core",
    "fields",
    "operators",
    "cones",
    "envelopes",
    "viscosity",
    "comparison",
    "perron",
    "gridio",
    "suites",
    "cli",
]

__version__ = "0.1.0"
