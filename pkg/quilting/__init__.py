"""
quilting - nonparanormal graph quilting.

Estimate Gaussian-copula graphical models when the correlation matrix is
only observed on partially overlapping blocks of variables.
"""

__version__ = "0.1.0"
