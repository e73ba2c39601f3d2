"""Multi-curve HJM toolkit.

Exact quasi-exponential curve algebra, multi-curve term structures with
multiplicative spreads, HJM simulation, finite-dimensional realizations of
Hull-White-type models, consistency/invariance diagnostics, and a two-stage
calibration of the three-curve Hull-White specification.
"""

__version__ = "0.1.0"
