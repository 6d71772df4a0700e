"""Equivariant harmonic-map energies for surface groups acting on
hyperbolic space: Fuchsian representations from pants gluings, equivariant
meshes, discrete energy minimization, and properness / degeneration probes.
"""

__version__ = "0.1.0"
