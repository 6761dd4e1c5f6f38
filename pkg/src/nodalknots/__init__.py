"""Harmonic-oscillator eigenfunctions with knotted and linked nodal sets.

Pipeline: a Milnor-type seed is fitted by an even Fourier-Bessel field
(:mod:`nodalknots.helmholtz`), lifted to an oscillator eigenfunction
(:mod:`nodalknots.oscillator`), whose nodal curves are traced
(:mod:`nodalknots.nodal`) and classified (:mod:`nodalknots.topology`).
"""
from . import helmholtz, nodal, oscillator, specfun, topology

__version__ = "0.1.0"

__all__ = ["helmholtz", "nodal", "oscillator", "specfun", "topology", "__version__"]
