"""Differential connectivity analysis for Gaussian graphical models.

Given samples from two populations, the central question answered here
is qualitative, node by node: does variable ``j`` have the same set of
neighbors in both underlying conditional independence graphs?  The
pipeline first estimates the common neighborhood of each node with two
penalized regressions, then tests the remaining variables for residual
association in either population.

Subpackage map:

- :mod:`dcanet.numerics` - linear algebra, sampling, partial correlations
- :mod:`dcanet.graphs` - graph generation and precision matrix pairs
- :mod:`dcanet.lasso` - coordinate-descent solver, population variant, CV
- :mod:`dcanet.inference` - p-values and multiplicity control
- :mod:`dcanet.dca` - the two-step node-wise pipeline
- :mod:`dcanet.comparators` - a quantitative permutation test baseline
- :mod:`dcanet.conditions` - diagnostics for the coverage assumptions
- :mod:`dcanet.experiments` - simulation study and its metrics
- :mod:`dcanet.cli` - the ``dca`` command line
"""

__version__ = "0.1.0"
