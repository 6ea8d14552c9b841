"""Bridge modal identification from distributed strain-sensor arrays.

Stochastic subspace identification recovers natural frequencies and strain
mode shapes; a multi-span beam shape function fitted to each strain shape is
integrated analytically to displacement mode shapes.
"""
__version__ = "0.1.0"
