"""Generalized-function toolkit for wave equations on singular and low-regularity spacetimes.

Nets of numbers, vectors and matrices indexed by a smoothing width eps are
classified by their asymptotics as eps -> 0; regularized metrics are checked
against growth hypotheses and wave equations are solved for each eps.
"""
__version__ = "0.1.0"
