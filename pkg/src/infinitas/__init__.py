"""infinitas: numerical asymptotic regularity toolkit for polynomial families.

Computes Rabier numbers, generalized critical values, fiber-transport flows,
links at infinity, Grassmannian-averaged Euler characteristics, curvature
densities at infinity, and checks the Gauss-Bonnet-at-infinity identities
relating them, with a parameter-continuity scanner on top.
"""

__version__ = "0.1.0"
