"""Survival probability of a doorway state coupled to random-matrix backgrounds.

Modules
-------
ensembles   background spectra and coupling vectors with counter-based seeding
arrowhead   exact finite-N eigen-decomposition through the secular equation
montecarlo  ensemble averages with standard errors
analytic    large-N closed forms and their integral reference forms
kernels     characteristic-polynomial averages, E1 and Pfaffians
quadrature  tanh-sinh integration
cli         command-line front end
"""

from .errors import DoorwayError, InvalidArgumentError, NumericalFailureError

__version__ = "0.1.0"

__all__ = ["DoorwayError", "InvalidArgumentError", "NumericalFailureError", "__version__"]
