"""Stein-Malliavin numerical toolkit.

Target measures that arise as invariant laws of one-dimensional diffusions,
the associated Stein equation and its factor bounds, a finite-dimensional
second-Wiener-chaos algebra, Monte Carlo estimators for the Malliavin terms
of the joint-law Wasserstein bound, exact empirical transport distances, and
a CLI reproducing the reference experiments.
"""

__version__ = "0.1.0"
