"""Numerical companion for the anisotropic (2,p) split equation.

Modules: ``params`` (exponents), ``field`` (grids and file format), ``geometry``
(polydiscs and the quasi-metric), ``solver`` (energy minimization),
``regularity`` (estimate checks), ``kscover`` (point/radius selection) and
``cli``.
"""
__version__ = "0.1.0"
