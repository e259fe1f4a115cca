"""Hausdorff dimension of random covering sets: dyadic geometry, energies,
contents and a covering simulator."""

__version__ = "0.1.0"
